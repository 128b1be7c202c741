use super::SimilarityError;

/// Outcome of aligning two action sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct DtwResult {
    /// Accumulated cost of the optimal warping path.
    pub distance: f64,
    /// Number of cells on the warping path.
    pub path_length: usize,
    /// `path_length / max(len_a, len_b)`.
    pub normalized_path: f64,
    /// `distance * normalized_path`.
    pub dissimilarity: f64,
    /// Aligned index pairs from `(0, 0)` to `(len_a - 1, len_b - 1)`.
    pub path: Vec<(usize, usize)>,
}

fn cost(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Classic dynamic time warping with unit steps (diagonal, advance `a`,
/// advance `b`) and Euclidean per-step cost over the three action channels.
///
/// On equal accumulated costs the backtrack prefers the diagonal, then the
/// step that advances `a`, then the step that advances `b`.
pub fn dtw(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<DtwResult, SimilarityError> {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Err(SimilarityError::EmptySequence);
    }
    let mut acc = vec![0.0f64; n * m];
    for i in 0..n {
        for j in 0..m {
            let c = cost(&a[i], &b[j]);
            let prev = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => acc[j - 1],
                (_, 0) => acc[(i - 1) * m],
                _ => acc[(i - 1) * m + j - 1]
                    .min(acc[(i - 1) * m + j])
                    .min(acc[i * m + j - 1]),
            };
            acc[i * m + j] = c + prev;
        }
    }

    let (mut i, mut j) = (n - 1, m - 1);
    let mut path = vec![(i, j)];
    while (i, j) != (0, 0) {
        (i, j) = match (i, j) {
            (0, _) => (0, j - 1),
            (_, 0) => (i - 1, 0),
            _ => {
                let diag = acc[(i - 1) * m + j - 1];
                let adv_a = acc[(i - 1) * m + j];
                let adv_b = acc[i * m + j - 1];
                if diag <= adv_a && diag <= adv_b {
                    (i - 1, j - 1)
                } else if adv_a <= adv_b {
                    (i - 1, j)
                } else {
                    (i, j - 1)
                }
            }
        };
        path.push((i, j));
    }
    path.reverse();

    let distance = acc[n * m - 1];
    let path_length = path.len();
    let normalized_path = path_length as f64 / n.max(m) as f64;
    Ok(DtwResult {
        distance,
        path_length,
        normalized_path,
        dissimilarity: distance * normalized_path,
        path,
    })
}

/// Action similarity relative to the largest dissimilarity in the route
/// class: `1 - d / d_max`, and 1 for a class whose members are identical.
pub fn trajectory_similarity(d: f64, d_max: f64) -> Result<f64, SimilarityError> {
    if !(d >= 0.0 && d_max >= 0.0) {
        return Err(SimilarityError::InvalidInput(format!(
            "dissimilarities must be nonnegative, got d = {d}, d_max = {d_max}"
        )));
    }
    if d_max == 0.0 {
        return Ok(1.0);
    }
    if d > d_max {
        return Err(SimilarityError::ExceedsClassMaximum { d, d_max });
    }
    Ok(1.0 - d / d_max)
}
