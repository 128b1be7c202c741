use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{encode_input, prepare_input, Bound, ModelState, NetworkConfig, ScenarioInput};
use super::tape::{Tape, Tensor};
use super::NnError;
use crate::losses::{
    metric_losses, sparse_reconstruction_loss, total_loss, LossWeights, MarginParams, QuadrupletDistances,
};
use crate::mining::{build_index, mine_epoch, NegativeStrategy, Quadruplet};
use crate::scenario::{Dataset, ReconstructionTarget};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

const STREAM_MINING: u64 = 1;
const STREAM_PROBE: u64 = 2;

/// Network inputs and reconstruction targets of a whole dataset.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub inputs: Vec<ScenarioInput>,
    pub targets: Vec<ReconstructionTarget>,
}

impl PreparedData {
    pub fn new(config: &NetworkConfig, dataset: &Dataset) -> Result<Self, crate::Error> {
        let inputs = dataset
            .entries()
            .iter()
            .map(|s| prepare_input(config, s))
            .collect::<Result<Vec<_>, _>>()?;
        let targets = dataset
            .entries()
            .iter()
            .map(|s| s.reconstruction_target())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Loss terms of one quadruplet.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_g: f64,
    pub l_r: f64,
    pub l_t: f64,
    pub l_rec: f64,
    pub total: f64,
    pub d_pp: f64,
    pub d_pn: f64,
    pub d_nn: f64,
}

fn divergence(step: u64, detail: String) -> NnError {
    NnError::Divergence {
        epoch: None,
        step,
        detail,
        last_good: None,
    }
}

/// Total loss of one quadruplet and its gradient for every parameter.
pub fn objective(
    state: &ModelState,
    quad: &Quadruplet,
    data: &PreparedData,
    margins: &MarginParams,
    weights: &LossWeights,
) -> Result<(LossBreakdown, Vec<Tensor>), crate::Error> {
    for i in [quad.anchor, quad.pp, quad.pn, quad.nn] {
        if i >= data.len() {
            return Err(NnError::Shape(format!("scenario {i} outside dataset of {}", data.len())).into());
        }
    }
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, state);
    let (za, _, _) = bound.encode(&mut tape, &data.inputs[quad.anchor]);
    let (zpp, _, _) = bound.encode(&mut tape, &data.inputs[quad.pp]);
    let (zpn, _, _) = bound.encode(&mut tape, &data.inputs[quad.pn]);
    let (znn, _, _) = bound.encode(&mut tape, &data.inputs[quad.nn]);
    let dv = [
        tape.sq_dist(za, zpp),
        tape.sq_dist(za, zpn),
        tape.sq_dist(za, znn),
    ];
    let pred = bound.decode(&mut tape, za);

    let d = dv.map(|v| tape.value(v).data[0]);
    let pred_values = &tape.value(pred).data;
    if d.iter().chain(pred_values).any(|x| !x.is_finite()) {
        return Err(divergence(state.step, format!("non-finite forward pass, distances {d:?}")).into());
    }
    let dist = QuadrupletDistances {
        d_pp: d[0],
        d_pn: d[1],
        d_nn: d[2],
    };
    let m = metric_losses(dist, quad.s_t, margins)?;
    let rec = sparse_reconstruction_loss(&data.targets[quad.anchor], pred_values, weights)?;
    let total = total_loss(m.l_g, m.l_r, m.l_t, rec.value, weights);
    if !total.is_finite() {
        return Err(divergence(state.step, format!("non-finite total loss {total}")).into());
    }

    let w = weights;
    let mut seeds: Vec<_> = (0..3)
        .map(|k| {
            let g = w.beta_m * (w.beta_g * m.grad_g[k] + w.beta_r * m.grad_r[k] + w.beta_t * m.grad_t[k]);
            (dv[k], Tensor::new(vec![1, 1], vec![g]))
        })
        .collect();
    let pred_shape = tape.value(pred).shape.clone();
    let rec_grad = rec.grad.iter().map(|g| w.beta_rec * g).collect();
    seeds.push((pred, Tensor::new(pred_shape, rec_grad)));
    let mut grads = tape.backward(&seeds);
    let param_grads = bound
        .vars
        .iter()
        .zip(&state.params)
        .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.value.shape.clone())))
        .collect();
    Ok((
        LossBreakdown {
            l_g: m.l_g,
            l_r: m.l_r,
            l_t: m.l_t,
            l_rec: rec.value,
            total,
            d_pp: d[0],
            d_pn: d[1],
            d_nn: d[2],
        },
        param_grads,
    ))
}

/// Bias-corrected Adam step for the given gradients, without applying it.
pub fn adam_direction(state: &ModelState, grads: &[Tensor]) -> (Vec<Tensor>, Vec<Tensor>, Vec<Tensor>) {
    let t = state.step as i32 + 1;
    let (c1, c2) = (1.0 - ADAM_BETA1.powi(t), 1.0 - ADAM_BETA2.powi(t));
    let mut m_out = Vec::with_capacity(grads.len());
    let mut v_out = Vec::with_capacity(grads.len());
    let mut dir = Vec::with_capacity(grads.len());
    for ((g, m), v) in grads.iter().zip(&state.moment1).zip(&state.moment2) {
        let m: Vec<f64> = m.data.iter().zip(&g.data).map(|(m, g)| ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g).collect();
        let v: Vec<f64> = v.data.iter().zip(&g.data).map(|(v, g)| ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g).collect();
        let u = m.iter().zip(&v).map(|(m, v)| -(m / c1) / ((v / c2).sqrt() + ADAM_EPS)).collect();
        dir.push(Tensor::new(g.shape.clone(), u));
        m_out.push(Tensor::new(g.shape.clone(), m));
        v_out.push(Tensor::new(g.shape.clone(), v));
    }
    (dir, m_out, v_out)
}

/// One Adam update on a single quadruplet. On error the state is unchanged.
pub fn train_step(
    state: &mut ModelState,
    quad: &Quadruplet,
    data: &PreparedData,
    margins: &MarginParams,
    weights: &LossWeights,
    lr: f64,
) -> Result<LossBreakdown, crate::Error> {
    let (loss, grads) = objective(state, quad, data, margins, weights)?;
    if let Some(p) = grads.iter().zip(&state.params).find(|(g, _)| g.data.iter().any(|x| !x.is_finite())) {
        return Err(divergence(state.step, format!("non-finite gradient for {}", p.1.name)).into());
    }
    let (dir, m, v) = adam_direction(state, &grads);
    let updated: Vec<Tensor> = state
        .params
        .iter()
        .zip(&dir)
        .map(|(p, u)| {
            let data = p.value.data.iter().zip(&u.data).map(|(x, u)| x + lr * u).collect();
            Tensor::new(u.shape.clone(), data)
        })
        .collect();
    if updated.iter().any(|t| t.data.iter().any(|x| !x.is_finite())) {
        return Err(divergence(state.step, "non-finite parameters after update".into()).into());
    }
    for (p, t) in state.params.iter_mut().zip(updated) {
        p.value = t;
    }
    state.moment1 = m;
    state.moment2 = v;
    state.step += 1;
    Ok(loss)
}

/// Learning rate over the course of training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    Constant,
    /// Half-cosine decay from the base rate to zero over all steps.
    #[default]
    Cosine,
}

impl LrSchedule {
    /// Rate at `progress` in [0, 1) of the run.
    pub fn rate(self, base: f64, progress: f64) -> f64 {
        match self {
            Self::Constant => base,
            Self::Cosine => 0.5 * base * (1.0 + (std::f64::consts::PI * progress).cos()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub strategy: NegativeStrategy,
    pub seed: u64,
    pub margins: MarginParams,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 1e-3,
            lr_schedule: LrSchedule::Cosine,
            strategy: NegativeStrategy::Random,
            seed: 0,
            margins: MarginParams::default(),
            weights: LossWeights::default(),
        }
    }
}

/// Mean loss terms of one epoch and the ordering rate on held-out
/// quadruplets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub l_g: f64,
    pub l_r: f64,
    pub l_t: f64,
    pub l_rec: f64,
    pub total: f64,
    pub ordering: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: ModelState,
    pub log: Vec<EpochMetrics>,
}

/// Latent vectors of all scenarios, one row each.
pub fn embed_prepared(state: &ModelState, data: &PreparedData) -> Vec<Vec<f64>> {
    data.inputs.par_iter().map(|input| encode_input(state, input).z).collect()
}

pub fn embed_dataset(state: &ModelState, dataset: &Dataset) -> Result<Vec<Vec<f64>>, crate::Error> {
    let inputs = dataset
        .entries()
        .iter()
        .map(|s| prepare_input(&state.config, s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(inputs.par_iter().map(|input| encode_input(state, input).z).collect())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Fraction of quadruplets with `d_pp < d_pn < d_nn` under the embeddings.
pub fn ordering_satisfaction(embeddings: &[Vec<f64>], quads: &[Quadruplet]) -> f64 {
    if quads.is_empty() {
        return 0.0;
    }
    let ok = quads
        .iter()
        .filter(|q| {
            let a = &embeddings[q.anchor];
            let (pp, pn, nn) = (
                sq_dist(a, &embeddings[q.pp]),
                sq_dist(a, &embeddings[q.pn]),
                sq_dist(a, &embeddings[q.nn]),
            );
            pp < pn && pn < nn
        })
        .count();
    ok as f64 / quads.len() as f64
}

pub fn train(dataset: &Dataset, net: &NetworkConfig, config: &TrainConfig) -> Result<TrainOutcome, crate::Error> {
    train_with(dataset, net, config, |_| {})
}

/// Training with a callback after every epoch. Each epoch re-mines one
/// quadruplet per eligible anchor; the ordering rate is measured on a fixed
/// set mined from an independent stream.
pub fn train_with(
    dataset: &Dataset,
    net: &NetworkConfig,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome, crate::Error> {
    config.margins.validate()?;
    config.weights.validate()?;
    if !(config.lr.is_finite() && config.lr > 0.0) {
        return Err(NnError::InvalidConfig(format!("learning rate {} must be positive", config.lr)).into());
    }
    let mut state = ModelState::init(net)?;
    let mut log = Vec::with_capacity(config.epochs);
    if config.epochs == 0 {
        return Ok(TrainOutcome { state, log });
    }
    let data = PreparedData::new(net, dataset)?;
    let index = build_index(dataset)?;
    let mut mining_rng = ChaCha8Rng::seed_from_u64(config.seed);
    mining_rng.set_stream(STREAM_MINING);
    let mut probe_rng = ChaCha8Rng::seed_from_u64(config.seed);
    probe_rng.set_stream(STREAM_PROBE);
    let probe = mine_epoch(&index, config.strategy, &mut probe_rng)?.quadruplets;

    for epoch in 0..config.epochs {
        let quads = mine_epoch(&index, config.strategy, &mut mining_rng)?.quadruplets;
        let mut sum = LossBreakdown::default();
        for (i, q) in quads.iter().enumerate() {
            let progress = (epoch as f64 + i as f64 / quads.len() as f64) / config.epochs as f64;
            let lr = config.lr_schedule.rate(config.lr, progress);
            match train_step(&mut state, q, &data, &config.margins, &config.weights, lr) {
                Ok(l) => {
                    sum.l_g += l.l_g;
                    sum.l_r += l.l_r;
                    sum.l_t += l.l_t;
                    sum.l_rec += l.l_rec;
                    sum.total += l.total;
                }
                Err(crate::Error::Nn(NnError::Divergence { step, detail, .. })) => {
                    // a failed step leaves the state untouched
                    return Err(NnError::Divergence {
                        epoch: Some(epoch),
                        step,
                        detail,
                        last_good: Some(Box::new(state)),
                    }
                    .into());
                }
                Err(e) => return Err(e),
            }
        }
        let n = quads.len() as f64;
        let embeddings = embed_prepared(&state, &data);
        let metrics = EpochMetrics {
            epoch: epoch + 1,
            l_g: sum.l_g / n,
            l_r: sum.l_r / n,
            l_t: sum.l_t / n,
            l_rec: sum.l_rec / n,
            total: sum.total / n,
            ordering: ordering_satisfaction(&embeddings, &probe),
        };
        on_epoch(&metrics);
        log.push(metrics);
    }
    Ok(TrainOutcome { state, log })
}
