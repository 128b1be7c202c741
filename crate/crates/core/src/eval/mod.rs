//! Evaluation of embedding matrices: n-vs-1 novelty detection with angle
//! based outlier scores, average-linkage clustering accuracy, latent
//! neighborhood feature stability and a 2-D principal-component projection.

mod abod;
mod cluster;
mod project;
mod stability;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{Dataset, GroupLevel};

pub use abod::{abod_scores, auc};
pub use cluster::{agglomerative_cluster, clustering_accuracy, hungarian};
pub use project::{project_2d, Projection};
pub use stability::{average_displacement, feature_stability, nearest_neighbors, resample, Stability};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("need at least {needed} points, got {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("all pairs skipped for query {0}")]
    NoValidPairs(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("AUC needs both positive and negative samples")]
    SingleClass,
    #[error("non-finite score {0}")]
    NonFinite(f64),
    #[error("single group at level {0}")]
    SingleGroup(&'static str),
    #[error("cluster count {k} outside [1, {m}]")]
    ClusterCount { k: usize, m: usize },
    #[error("empty input")]
    Empty,
    #[error("scenario features: {0}")]
    Scenario(String),
}

/// AUC of each left-out group and their unweighted mean.
#[derive(Debug, Clone, PartialEq)]
pub struct NoveltyResult {
    pub per_group: Vec<f64>,
    pub mean: f64,
}

/// Leaves each group out of the base in turn and scores every scenario
/// against the rest; members of the left-out group are the positives.
pub fn novelty_by_labels(embeddings: &[Vec<f64>], labels: &[usize]) -> Result<NoveltyResult, EvalError> {
    if embeddings.len() != labels.len() {
        return Err(EvalError::LengthMismatch(embeddings.len(), labels.len()));
    }
    let groups = labels.iter().max().map_or(0, |g| g + 1);
    let bases: Vec<Vec<bool>> = (0..groups)
        .map(|g| labels.iter().map(|&l| l != g).collect())
        .collect();
    for b in &bases {
        let n = b.iter().filter(|&&x| x).count();
        if n < 3 {
            return Err(EvalError::TooFewPoints { needed: 3, found: n });
        }
    }
    let scores = abod::abod_scores_masked(embeddings, &bases)?;
    let per_group = scores
        .iter()
        .zip(&bases)
        .map(|(s, base)| {
            let novel: Vec<bool> = base.iter().map(|b| !b).collect();
            auc(s, &novel)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mean = per_group.iter().sum::<f64>() / per_group.len() as f64;
    Ok(NoveltyResult { per_group, mean })
}

pub fn novelty_experiment(
    embeddings: &[Vec<f64>],
    dataset: &Dataset,
    level: GroupLevel,
) -> Result<NoveltyResult, EvalError> {
    if dataset.groups().group_count(level) < 2 {
        return Err(EvalError::SingleGroup(level.tag()));
    }
    novelty_by_labels(embeddings, dataset.groups().level(level))
}

/// Clustering accuracy at a level with the true group count as `k`.
pub fn clustering_experiment(embeddings: &[Vec<f64>], dataset: &Dataset, level: GroupLevel) -> Result<f64, EvalError> {
    let truth = dataset.groups().level(level);
    if embeddings.len() != truth.len() {
        return Err(EvalError::LengthMismatch(embeddings.len(), truth.len()));
    }
    let k = dataset.groups().group_count(level);
    let predicted = agglomerative_cluster(embeddings, k)?;
    clustering_accuracy(&predicted, truth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub levels: Vec<GroupLevel>,
    pub k_neighbors: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            levels: GroupLevel::ALL.to_vec(),
            k_neighbors: 15,
        }
    }
}

/// Aggregates per group level plus neighborhood stability. Levels that were
/// not evaluated are absent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "auc_C", skip_serializing_if = "Option::is_none")]
    pub auc_c: Option<f64>,
    #[serde(rename = "auc_G", skip_serializing_if = "Option::is_none")]
    pub auc_g: Option<f64>,
    #[serde(rename = "auc_R", skip_serializing_if = "Option::is_none")]
    pub auc_r: Option<f64>,
    #[serde(rename = "acc_C", skip_serializing_if = "Option::is_none")]
    pub acc_c: Option<f64>,
    #[serde(rename = "acc_G", skip_serializing_if = "Option::is_none")]
    pub acc_g: Option<f64>,
    #[serde(rename = "acc_R", skip_serializing_if = "Option::is_none")]
    pub acc_r: Option<f64>,
    pub d_i: f64,
    pub d_t: f64,
    pub d_v: f64,
    pub d_a_lon: f64,
    pub d_a_lat: f64,
    pub d_psi: f64,
}

impl EvalReport {
    pub fn auc(&self, level: GroupLevel) -> Option<f64> {
        match level {
            GroupLevel::Category => self.auc_c,
            GroupLevel::Graph => self.auc_g,
            GroupLevel::Route => self.auc_r,
        }
    }

    pub fn acc(&self, level: GroupLevel) -> Option<f64> {
        match level {
            GroupLevel::Category => self.acc_c,
            GroupLevel::Graph => self.acc_g,
            GroupLevel::Route => self.acc_r,
        }
    }
}

pub fn evaluate(embeddings: &[Vec<f64>], dataset: &Dataset, config: &EvalConfig) -> Result<EvalReport, EvalError> {
    let s = feature_stability(embeddings, dataset, config.k_neighbors)?;
    let mut report = EvalReport {
        d_i: s.d_i,
        d_t: s.d_t,
        d_v: s.d_v,
        d_a_lon: s.d_a_lon,
        d_a_lat: s.d_a_lat,
        d_psi: s.d_psi,
        ..EvalReport::default()
    };
    for &level in &config.levels {
        let auc = Some(novelty_experiment(embeddings, dataset, level)?.mean);
        let acc = Some(clustering_experiment(embeddings, dataset, level)?);
        match level {
            GroupLevel::Category => (report.auc_c, report.acc_c) = (auc, acc),
            GroupLevel::Graph => (report.auc_g, report.acc_g) = (auc, acc),
            GroupLevel::Route => (report.auc_r, report.acc_r) = (auc, acc),
        }
    }
    Ok(report)
}
