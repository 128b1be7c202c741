use super::geometry::wrap_angle;
use super::{ScenarioError, Trajectory};

/// Below this speed the heading is undefined and the last valid heading is held.
const STANDSTILL_SPEED: f64 = 1e-6;

/// Per-timestep ego actions on the interior trajectory samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSequence {
    /// `[a_lat, a_lon, speed]` per interior sample.
    pub rows: Vec<[f64; 3]>,
    /// Heading in radians per interior sample.
    pub headings: Vec<f64>,
}

impl ActionSequence {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn mean_speed(&self) -> f64 {
        mean(self.rows.iter().map(|r| r[2]))
    }

    pub fn mean_lon_accel(&self) -> f64 {
        mean(self.rows.iter().map(|r| r[1]))
    }

    pub fn mean_lat_accel(&self) -> f64 {
        mean(self.rows.iter().map(|r| r[0]))
    }

    /// Circular mean of the headings.
    pub fn mean_heading(&self) -> f64 {
        let (s, c) = self
            .headings
            .iter()
            .fold((0.0, 0.0), |(s, c), h| (s + h.sin(), c + h.cos()));
        s.atan2(c)
    }
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

/// Three-point Lagrange derivative weights for samples at `t0 < t1 < t2`,
/// evaluated at sample `at` (0, 1 or 2).
fn lagrange_weights(t0: f64, t1: f64, t2: f64, at: usize) -> [f64; 3] {
    let (h1, h2) = (t1 - t0, t2 - t1);
    match at {
        0 => [
            -(2.0 * h1 + h2) / (h1 * (h1 + h2)),
            (h1 + h2) / (h1 * h2),
            -h1 / (h2 * (h1 + h2)),
        ],
        1 => [
            -h2 / (h1 * (h1 + h2)),
            (h2 - h1) / (h1 * h2),
            h1 / (h2 * (h1 + h2)),
        ],
        _ => [
            h2 / (h1 * (h1 + h2)),
            -(h1 + h2) / (h1 * h2),
            (h1 + 2.0 * h2) / (h2 * (h1 + h2)),
        ],
    }
}

/// Second-order finite-difference derivative at every sample: central at the
/// interior, one-sided at both ends.
fn derivative(ts: &[f64], fs: &[f64]) -> Vec<f64> {
    let n = ts.len();
    (0..n)
        .map(|i| {
            let (base, at) = match i {
                0 => (0, 0),
                i if i == n - 1 => (n - 3, 2),
                i => (i - 1, 1),
            };
            let w = lagrange_weights(ts[base], ts[base + 1], ts[base + 2], at);
            w[0] * fs[base] + w[1] * fs[base + 1] + w[2] * fs[base + 2]
        })
        .collect()
}

/// Lateral/longitudinal acceleration and speed per interior timestamp.
///
/// Velocity is differentiated from positions, speed and heading follow from
/// it, `a_lon` is the central difference of speed and `a_lat` is speed times
/// the central difference of the (locally unwrapped) heading. The first and
/// last samples are trimmed, so the output has `N - 2` rows.
pub fn derive_action_sequence(traj: &Trajectory) -> Result<ActionSequence, ScenarioError> {
    let pts = traj.points();
    let n = pts.len();
    if n < 3 {
        return Err(ScenarioError::TrajectoryTooShort(n));
    }
    if let Some(i) = (1..n).find(|&i| pts[i].t <= pts[i - 1].t) {
        return Err(ScenarioError::NonMonotonicTime(i));
    }
    let ts: Vec<f64> = pts.iter().map(|p| p.t).collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.y).collect();
    let vx = derivative(&ts, &xs);
    let vy = derivative(&ts, &ys);
    let speed: Vec<f64> = vx.iter().zip(&vy).map(|(a, b)| a.hypot(*b)).collect();

    let mut heading: Vec<Option<f64>> = (0..n)
        .map(|i| (speed[i] > STANDSTILL_SPEED).then(|| vy[i].atan2(vx[i])))
        .collect();
    // hold the last valid heading through standstill, back-fill a leading one
    let first_valid = heading.iter().flatten().next().copied().unwrap_or(0.0);
    let mut last = first_valid;
    for h in heading.iter_mut() {
        match h {
            Some(v) => last = *v,
            None => *h = Some(last),
        }
    }
    let heading: Vec<f64> = heading.into_iter().map(|h| h.unwrap()).collect();

    let mut rows = Vec::with_capacity(n - 2);
    let mut headings = Vec::with_capacity(n - 2);
    for i in 1..n - 1 {
        let w = lagrange_weights(ts[i - 1], ts[i], ts[i + 1], 1);
        let a_lon = w[0] * speed[i - 1] + w[1] * speed[i] + w[2] * speed[i + 1];
        let prev = heading[i] + wrap_angle(heading[i - 1] - heading[i]);
        let next = heading[i] + wrap_angle(heading[i + 1] - heading[i]);
        let yaw_rate = w[0] * prev + w[1] * heading[i] + w[2] * next;
        rows.push([speed[i] * yaw_rate, a_lon, speed[i]]);
        headings.push(heading[i]);
    }
    Ok(ActionSequence { rows, headings })
}
