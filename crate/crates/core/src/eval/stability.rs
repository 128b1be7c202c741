use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::scenario::geometry::{wrap_angle, Point};
use crate::scenario::Dataset;

/// Mean feature differences between scenarios and their latent neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stability {
    pub d_i: f64,
    pub d_t: f64,
    pub d_v: f64,
    pub d_a_lon: f64,
    pub d_a_lat: f64,
    pub d_psi: f64,
}

struct Features<'a> {
    pixels: &'a [f64],
    positions: Vec<Point>,
    speed: f64,
    a_lon: f64,
    a_lat: f64,
    heading: f64,
}

/// Indices of the `k` nearest other points, closest first, ties by index.
pub fn nearest_neighbors(points: &[Vec<f64>], i: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, p)| (p.iter().zip(&points[i]).map(|(a, b)| (a - b) * (a - b)).sum(), j))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Linear resampling of a polyline's samples to `n` evenly spaced indices.
pub fn resample(points: &[Point], n: usize) -> Vec<Point> {
    if points.len() == n {
        return points.to_vec();
    }
    let last = (points.len() - 1) as f64;
    (0..n)
        .map(|k| {
            let u = if n == 1 { 0.0 } else { k as f64 * last / (n - 1) as f64 };
            let i = (u.floor() as usize).min(points.len() - 2);
            let f = u - i as f64;
            let (a, b) = (points[i], points[i + 1]);
            [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
        })
        .collect()
}

/// Mean pointwise distance after resampling both to the longer length.
pub fn average_displacement(a: &[Point], b: &[Point]) -> f64 {
    let n = a.len().max(b.len());
    let (ra, rb) = (resample(a, n), resample(b, n));
    ra.iter()
        .zip(&rb)
        .map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
        .sum::<f64>()
        / n as f64
}

fn differences(a: &Features, b: &Features) -> [f64; 6] {
    let d_i = a.pixels.iter().zip(b.pixels).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.pixels.len() as f64 * 100.0;
    [
        d_i,
        average_displacement(&a.positions, &b.positions),
        (a.speed - b.speed).abs(),
        (a.a_lon - b.a_lon).abs(),
        (a.a_lat - b.a_lat).abs(),
        wrap_angle(a.heading - b.heading).abs(),
    ]
}

/// Mean over scenarios of the mean feature difference to their `k` nearest
/// latent neighbors.
pub fn feature_stability(embeddings: &[Vec<f64>], dataset: &Dataset, k: usize) -> Result<Stability, EvalError> {
    let m = dataset.len();
    if embeddings.len() != m {
        return Err(EvalError::LengthMismatch(embeddings.len(), m));
    }
    if m <= k || k == 0 {
        return Err(EvalError::TooFewPoints { needed: k + 1, found: m });
    }
    let features = dataset
        .entries()
        .iter()
        .map(|s| {
            let a = s.actions()?;
            Ok(Features {
                pixels: s.image.pixels(),
                positions: s.trajectory.positions().collect(),
                speed: a.mean_speed(),
                a_lon: a.mean_lon_accel(),
                a_lat: a.mean_lat_accel(),
                heading: a.mean_heading(),
            })
        })
        .collect::<Result<Vec<_>, crate::scenario::ScenarioError>>()
        .map_err(|e| EvalError::Scenario(e.to_string()))?;

    let per_point: Vec<[f64; 6]> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut acc = [0.0; 6];
            for j in nearest_neighbors(embeddings, i, k) {
                let d = differences(&features[i], &features[j]);
                acc.iter_mut().zip(d).for_each(|(a, d)| *a += d);
            }
            acc.map(|a| a / k as f64)
        })
        .collect();
    let mut total = [0.0; 6];
    for p in &per_point {
        total.iter_mut().zip(p).for_each(|(t, v)| *t += v);
    }
    let [d_i, d_t, d_v, d_a_lon, d_a_lat, d_psi] = total.map(|t| t / m as f64);
    Ok(Stability {
        d_i,
        d_t,
        d_v,
        d_a_lon,
        d_a_lat,
        d_psi,
    })
}
