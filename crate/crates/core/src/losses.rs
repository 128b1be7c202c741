//! Metric and reconstruction losses with analytic gradients. Gradients are
//! taken with respect to the squared latent distances and the predicted
//! pixels, which is where the network's reverse pass picks them up.
//!
//! At hinge and absolute-value kinks the subgradient is 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::ReconstructionTarget;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("distances must be nonnegative and finite, got {0:?}")]
    NegativeDistance(Vec<f64>),
    #[error("action similarity {0} outside [0, 1]")]
    SimilarityRange(f64),
    #[error("shape mismatch: expected {expected} values, got {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarginParams {
    pub alpha_g: f64,
    pub alpha_r: f64,
    pub alpha_t: f64,
}

impl Default for MarginParams {
    fn default() -> Self {
        Self {
            alpha_g: 1.0,
            alpha_r: 1.0,
            alpha_t: 1.0,
        }
    }
}

fn check_nonnegative(name: &str, values: &[f64]) -> Result<(), LossError> {
    if values.iter().all(|v| v.is_finite() && *v >= 0.0) {
        Ok(())
    } else {
        Err(LossError::InvalidParameter(format!("{name} must be nonnegative and finite: {values:?}")))
    }
}

impl MarginParams {
    pub fn validate(&self) -> Result<(), LossError> {
        check_nonnegative("margins", &[self.alpha_g, self.alpha_r, self.alpha_t])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub beta_m: f64,
    pub beta_g: f64,
    pub beta_r: f64,
    pub beta_t: f64,
    pub beta_rec: f64,
    pub gamma_i: f64,
    pub gamma_i_bar: f64,
    pub gamma_t: f64,
    pub gamma_t_bar: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            beta_m: 1.0,
            beta_g: 1.0,
            beta_r: 1.0,
            beta_t: 1.0,
            beta_rec: 10.0,
            gamma_i: 5.0,
            gamma_i_bar: 10.0,
            gamma_t: 5.0,
            gamma_t_bar: 20.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        check_nonnegative(
            "loss weights",
            &[
                self.beta_m,
                self.beta_g,
                self.beta_r,
                self.beta_t,
                self.beta_rec,
                self.gamma_i,
                self.gamma_i_bar,
                self.gamma_t,
                self.gamma_t_bar,
            ],
        )
    }
}

/// Squared latent distances from the anchor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuadrupletDistances {
    pub d_pp: f64,
    pub d_pn: f64,
    pub d_nn: f64,
}

/// The three metric terms and their gradients with respect to
/// `(d_pp, d_pn, d_nn)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricLosses {
    pub l_g: f64,
    pub l_r: f64,
    pub l_t: f64,
    pub grad_g: [f64; 3],
    pub grad_r: [f64; 3],
    pub grad_t: [f64; 3],
}

fn check_distances(d: &[f64]) -> Result<(), LossError> {
    if d.iter().all(|v| v.is_finite() && *v >= 0.0) {
        Ok(())
    } else {
        Err(LossError::NegativeDistance(d.to_vec()))
    }
}

/// `max(alpha + d_ap - d_an, 0)` and its gradient with respect to
/// `(d_ap, d_an)`.
pub fn triplet_loss(d_ap: f64, d_an: f64, alpha: f64) -> Result<(f64, [f64; 2]), LossError> {
    check_distances(&[d_ap, d_an])?;
    let v = alpha + (d_ap - d_an);
    if v > 0.0 {
        Ok((v, [1.0, -1.0]))
    } else {
        Ok((0.0, [0.0, 0.0]))
    }
}

pub fn metric_losses(
    dist: QuadrupletDistances,
    s_t: f64,
    m: &MarginParams,
) -> Result<MetricLosses, LossError> {
    let QuadrupletDistances { d_pp, d_pn, d_nn } = dist;
    check_distances(&[d_pp, d_pn, d_nn])?;
    if !(0.0..=1.0).contains(&s_t) {
        return Err(LossError::SimilarityRange(s_t));
    }
    let mut out = MetricLosses::default();

    let g = m.alpha_g + d_pn - d_nn;
    if g > 0.0 {
        out.l_g = g;
        out.grad_g = [0.0, 1.0, -1.0];
    }

    // the inner max keeps alpha_t on ties, so d_pp gets no gradient there
    let (inner, inner_grad) = if d_pp > m.alpha_t { (d_pp, 1.0) } else { (m.alpha_t, 0.0) };
    let r = m.alpha_r + inner - d_pn;
    if r > 0.0 {
        out.l_r = r;
        out.grad_r = [inner_grad, -1.0, 0.0];
    }

    let t = (1.0 - s_t) * m.alpha_t - d_pp;
    out.l_t = t.abs();
    if t != 0.0 {
        out.grad_t = [-t.signum(), 0.0, 0.0];
    }
    Ok(out)
}

/// Value and gradient with respect to the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionLoss {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Weighted sparse reconstruction over the four pixel subsets: nonzero and
/// zero target cells of the infrastructure channel, and likewise of the
/// trajectory channel. Each subset's squared error is averaged over its own
/// size; an empty subset contributes nothing. `pred` uses the target's
/// channel-major layout.
pub fn sparse_reconstruction_loss(
    target: &ReconstructionTarget,
    pred: &[f64],
    w: &LossWeights,
) -> Result<ReconstructionLoss, LossError> {
    let data = target.data();
    if pred.len() != data.len() {
        return Err(LossError::ShapeMismatch {
            expected: data.len(),
            found: pred.len(),
        });
    }
    let plane = data.len() / 2;
    let mut grad = vec![0.0; pred.len()];
    let mut value = 0.0;
    for (c, (g_on, g_off)) in [(w.gamma_i, w.gamma_i_bar), (w.gamma_t, w.gamma_t_bar)]
        .into_iter()
        .enumerate()
    {
        let range = c * plane..(c + 1) * plane;
        let on = data[range.clone()].iter().filter(|&&x| x != 0.0).count();
        let off = plane - on;
        for i in range {
            let (gamma, count) = if data[i] != 0.0 { (g_on, on) } else { (g_off, off) };
            let e = pred[i] - data[i];
            value += gamma * e * e / count as f64;
            grad[i] = 2.0 * gamma * e / count as f64;
        }
    }
    Ok(ReconstructionLoss { value, grad })
}

/// Plain mean squared error over all values.
pub fn reconstruction_mse(target: &[f64], pred: &[f64]) -> Result<ReconstructionLoss, LossError> {
    if pred.len() != target.len() || target.is_empty() {
        return Err(LossError::ShapeMismatch {
            expected: target.len(),
            found: pred.len(),
        });
    }
    let n = target.len() as f64;
    let value = target.iter().zip(pred).map(|(t, p)| (p - t) * (p - t)).sum::<f64>() / n;
    let grad = target.iter().zip(pred).map(|(t, p)| 2.0 * (p - t) / n).collect();
    Ok(ReconstructionLoss { value, grad })
}

/// Triplet loss plus plain reconstruction, the image-only objective that the
/// quadruplet loss extends.
pub fn base_loss(
    d_ap: f64,
    d_an: f64,
    alpha: f64,
    target: &[f64],
    pred: &[f64],
) -> Result<f64, LossError> {
    Ok(triplet_loss(d_ap, d_an, alpha)?.0 + reconstruction_mse(target, pred)?.value)
}

pub fn total_loss(l_g: f64, l_r: f64, l_t: f64, l_rec: f64, w: &LossWeights) -> f64 {
    w.beta_m * (w.beta_g * l_g + w.beta_r * l_r + w.beta_t * l_t) + w.beta_rec * l_rec
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn triplet_cases() {
        assert_eq!(triplet_loss(0.5, 2.0, 1.0).unwrap().0, 0.0);
        assert_eq!(triplet_loss(1.3, 1.3, 1.0).unwrap().0, 1.0);
        let (v, g) = triplet_loss(1.2, 1.5, 1.0).unwrap();
        assert_abs_diff_eq!(v, 0.7, epsilon = 1e-12);
        assert_eq!(g, [1.0, -1.0]);
        assert!(triplet_loss(-0.1, 1.0, 1.0).is_err());
    }

    #[test]
    fn metric_cases() {
        let m = MarginParams::default();
        let z = metric_losses(QuadrupletDistances { d_pp: 0.0, d_pn: 2.0, d_nn: 3.0 }, 1.0, &m).unwrap();
        assert_eq!((z.l_g, z.l_r, z.l_t), (0.0, 0.0, 0.0));
        let l = metric_losses(QuadrupletDistances { d_pp: 0.5, d_pn: 1.5, d_nn: 2.0 }, 0.25, &m).unwrap();
        assert_abs_diff_eq!(l.l_g, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(l.l_r, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(l.l_t, 0.25, epsilon = 1e-12);
        assert!(matches!(
            metric_losses(QuadrupletDistances::default(), 1.5, &m),
            Err(LossError::SimilarityRange(_))
        ));
    }

    #[test]
    fn inner_max_tie_sends_no_gradient_to_d_pp() {
        let m = MarginParams::default();
        let l = metric_losses(QuadrupletDistances { d_pp: 1.0, d_pn: 1.5, d_nn: 5.0 }, 0.0, &m).unwrap();
        assert_eq!(l.grad_r, [0.0, -1.0, 0.0]);
    }

    #[test]
    fn single_hot_pixel() {
        let target = ReconstructionTarget::new(2, vec![0.0; 8]).unwrap();
        let mut pred = vec![0.0; 8];
        pred[1] = 1.0;
        let l = sparse_reconstruction_loss(&target, &pred, &LossWeights::default()).unwrap();
        assert_abs_diff_eq!(l.value, 2.5, epsilon = 1e-12);
        let same = sparse_reconstruction_loss(&target, target.data(), &LossWeights::default()).unwrap();
        assert_eq!(same.value, 0.0);
    }

    #[test]
    fn totals() {
        let zero = LossWeights {
            beta_m: 0.0,
            beta_g: 0.0,
            beta_r: 0.0,
            beta_t: 0.0,
            beta_rec: 0.0,
            ..LossWeights::default()
        };
        assert_eq!(total_loss(0.5, 0.5, 0.25, 0.1, &zero), 0.0);
        assert_abs_diff_eq!(total_loss(0.5, 0.5, 0.25, 0.1, &LossWeights::default()), 2.25, epsilon = 1e-12);
        let ae = LossWeights {
            beta_m: 0.0,
            ..LossWeights::default()
        };
        assert_abs_diff_eq!(total_loss(3.0, 2.0, 1.0, 0.1, &ae), 1.0, epsilon = 1e-12);
    }
}
