use super::EvalError;

/// Angle terms of one query against a point set. Points at zero distance
/// from the query are dropped.
struct QueryTerms {
    /// Indices of the kept points.
    kept: Vec<usize>,
    /// Row-major `kept.len()` squared matrix of
    /// `<y - q, z - q> / (|y - q|^2 |z - q|^2)`.
    terms: Vec<f64>,
}

impl QueryTerms {
    fn new(points: &[Vec<f64>], q: &[f64]) -> Self {
        let mut kept = Vec::new();
        let mut diffs = Vec::new();
        let mut norms = Vec::new();
        for (i, p) in points.iter().enumerate() {
            let d: Vec<f64> = p.iter().zip(q).map(|(a, b)| a - b).collect();
            let n: f64 = d.iter().map(|x| x * x).sum();
            if n > 0.0 {
                kept.push(i);
                diffs.push(d);
                norms.push(n);
            }
        }
        let k = kept.len();
        let mut terms = vec![0.0; k * k];
        for a in 0..k {
            for b in a + 1..k {
                let dot: f64 = diffs[a].iter().zip(&diffs[b]).map(|(x, y)| x * y).sum();
                let v = dot / (norms[a] * norms[b]);
                terms[a * k + b] = v;
                terms[b * k + a] = v;
            }
        }
        Self { kept, terms }
    }

    /// Population variance over unordered pairs of kept points allowed by
    /// `include`; `None` if no pair remains.
    fn variance(&self, include: &[bool]) -> Option<f64> {
        let k = self.kept.len();
        let idx: Vec<usize> = (0..k).filter(|&a| include[self.kept[a]]).collect();
        let pairs = idx.len() * idx.len().saturating_sub(1) / 2;
        if pairs == 0 {
            return None;
        }
        let mut sum = 0.0;
        for (n, &a) in idx.iter().enumerate() {
            for &b in &idx[n + 1..] {
                sum += self.terms[a * k + b];
            }
        }
        let mean = sum / pairs as f64;
        let mut var = 0.0;
        for (n, &a) in idx.iter().enumerate() {
            for &b in &idx[n + 1..] {
                let d = self.terms[a * k + b] - mean;
                var += d * d;
            }
        }
        Some(var / pairs as f64)
    }
}

fn check_dims(sets: &[&[Vec<f64>]]) -> Result<usize, EvalError> {
    let dim = sets
        .iter()
        .flat_map(|s| s.first())
        .map(|v| v.len())
        .next()
        .unwrap_or(0);
    for s in sets {
        if let Some(v) = s.iter().find(|v| v.len() != dim) {
            return Err(EvalError::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
    }
    Ok(dim)
}

/// Exact angle-based outlier scores: the negated variance of the weighted
/// angle terms over all base pairs. Higher means more novel.
pub fn abod_scores(base: &[Vec<f64>], queries: &[Vec<f64>]) -> Result<Vec<f64>, EvalError> {
    if base.len() < 3 {
        return Err(EvalError::TooFewPoints {
            needed: 3,
            found: base.len(),
        });
    }
    check_dims(&[base, queries])?;
    let include = vec![true; base.len()];
    queries
        .iter()
        .enumerate()
        .map(|(qi, q)| {
            QueryTerms::new(base, q)
                .variance(&include)
                .map(|v| -v)
                .ok_or(EvalError::NoValidPairs(qi))
        })
        .collect()
}

/// Scores of every point against several bases, each given as an inclusion
/// mask over the same point set. Returns `scores[base][point]`.
pub(crate) fn abod_scores_masked(points: &[Vec<f64>], bases: &[Vec<bool>]) -> Result<Vec<Vec<f64>>, EvalError> {
    check_dims(&[points])?;
    let mut out = vec![vec![0.0; points.len()]; bases.len()];
    for (qi, q) in points.iter().enumerate() {
        let terms = QueryTerms::new(points, q);
        for (b, mask) in bases.iter().enumerate() {
            out[b][qi] = -terms.variance(mask).ok_or(EvalError::NoValidPairs(qi))?;
        }
    }
    Ok(out)
}

/// Mann-Whitney AUC of scores for positives against negatives; ties count
/// one half.
pub fn auc(scores: &[f64], positive: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != positive.len() {
        return Err(EvalError::LengthMismatch(scores.len(), positive.len()));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(EvalError::NonFinite(*s));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks, 1-based
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}
