use nalgebra::{DMatrix, SymmetricEigen};

use super::EvalError;

/// Coordinates on the two leading principal axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    /// Set when the data has no variance and all coordinates are zero.
    pub degenerate: bool,
}

/// Relative eigenvalue below which an axis counts as empty.
const RANK_TOL: f64 = 1e-12;

/// Principal-component projection onto the top two eigenvectors of the
/// covariance. Each axis is oriented so its largest-magnitude loading is
/// positive; axes without variance give zero coordinates.
pub fn project_2d(points: &[Vec<f64>]) -> Result<Projection, EvalError> {
    let m = points.len();
    if m < 2 {
        return Err(EvalError::TooFewPoints { needed: 2, found: m });
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(EvalError::DimensionMismatch {
            expected: dim,
            found: p.len(),
        });
    }
    let mean: Vec<f64> = (0..dim)
        .map(|d| points.iter().map(|p| p[d]).sum::<f64>() / m as f64)
        .collect();
    let x = DMatrix::from_fn(m, dim, |i, d| points[i][d] - mean[d]);
    let cov = x.transpose() * &x / (m - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = order.first().map_or(0.0, |&i| eig.eigenvalues[i]);
    if !(top > 0.0) {
        return Ok(Projection {
            coords: vec![[0.0; 2]; m],
            degenerate: true,
        });
    }
    let mut coords = vec![[0.0; 2]; m];
    for (axis, &e) in order.iter().take(2).enumerate() {
        if eig.eigenvalues[e] <= RANK_TOL * top {
            continue;
        }
        let mut v = eig.eigenvectors.column(e).into_owned();
        let lead = (0..dim)
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
            .expect("nonempty");
        if v[lead] < 0.0 {
            v = -v;
        }
        let proj = &x * v;
        for (c, p) in coords.iter_mut().zip(proj.iter()) {
            c[axis] = *p;
        }
    }
    Ok(Projection {
        coords,
        degenerate: false,
    })
}
