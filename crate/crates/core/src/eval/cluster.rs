use super::EvalError;

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Average-linkage agglomerative clustering down to `k` clusters. Among
/// equally close cluster pairs the one whose smallest member ids form the
/// lexicographically smallest pair merges first. Labels are numbered by the
/// smallest member of each cluster.
pub fn agglomerative_cluster(points: &[Vec<f64>], k: usize) -> Result<Vec<usize>, EvalError> {
    let m = points.len();
    if k == 0 || k > m {
        return Err(EvalError::ClusterCount { k, m });
    }
    // sum of pairwise point distances between live clusters
    let mut sums = vec![0.0; m * m];
    for i in 0..m {
        for j in i + 1..m {
            let d = euclidean(&points[i], &points[j]);
            sums[i * m + j] = d;
            sums[j * m + i] = d;
        }
    }
    // clusters are keyed by their smallest member, which stays stable under merges
    let mut size = vec![1usize; m];
    let mut alive = vec![true; m];
    let mut owner: Vec<usize> = (0..m).collect();
    let mut live = m;
    while live > k {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in (0..m).filter(|&a| alive[a]) {
            for b in (a + 1..m).filter(|&b| alive[b]) {
                let d = sums[a * m + b] / (size[a] * size[b]) as f64;
                // strict comparison keeps the first pair in (a, b) order on ties
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let (_, a, b) = best.expect("at least two live clusters");
        for c in (0..m).filter(|&c| alive[c] && c != a && c != b) {
            let s = sums[a * m + c] + sums[b * m + c];
            sums[a * m + c] = s;
            sums[c * m + a] = s;
        }
        size[a] += size[b];
        alive[b] = false;
        owner.iter_mut().filter(|o| **o == b).for_each(|o| *o = a);
        live -= 1;
    }
    let mut label_of = vec![usize::MAX; m];
    let mut next = 0;
    Ok(owner
        .iter()
        .map(|&o| {
            if label_of[o] == usize::MAX {
                label_of[o] = next;
                next += 1;
            }
            label_of[o]
        })
        .collect())
}

/// Minimum-cost perfect assignment on a square matrix; returns the column
/// assigned to each row.
pub fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    // potentials and matching with a virtual column 0, 1-based internally
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Fraction of points whose predicted cluster maps to their true group under
/// the best one-to-one mapping.
pub fn clustering_accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64, EvalError> {
    if predicted.len() != truth.len() {
        return Err(EvalError::LengthMismatch(predicted.len(), truth.len()));
    }
    if predicted.is_empty() {
        return Err(EvalError::Empty);
    }
    let rows = predicted.iter().max().unwrap() + 1;
    let cols = truth.iter().max().unwrap() + 1;
    let n = rows.max(cols);
    let mut counts = vec![vec![0i64; n]; n];
    for (&p, &t) in predicted.iter().zip(truth) {
        counts[p][t] += 1;
    }
    let max = counts.iter().flatten().copied().max().unwrap();
    let cost: Vec<Vec<i64>> = counts.iter().map(|r| r.iter().map(|c| max - c).collect()).collect();
    let matched: i64 = hungarian(&cost)
        .iter()
        .enumerate()
        .map(|(r, &c)| counts[r][c])
        .sum();
    Ok(matched as f64 / predicted.len() as f64)
}
