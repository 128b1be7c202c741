//! Expert-knowledge aided metric learning for traffic scenarios.
//!
//! Scenarios (infrastructure image plus ego trajectory) are embedded so that
//! latent distances respect a hierarchy derived from lane topology graphs and
//! routes: same graph and route closest, same graph but different route
//! farther, different graph farthest. The crate covers the data model, a
//! procedural scenario generator, the similarity measures and quadruplet
//! mining, the loss stack, a small reverse-mode network and the evaluation
//! protocols (novelty detection, clustering, feature stability).

pub mod eval;
pub mod losses;
pub mod mining;
pub mod nn;
pub mod scenario;
pub mod similarity;
pub mod synthgen;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Scenario(#[from] scenario::ScenarioError),
    #[error(transparent)]
    Storage(#[from] scenario::StorageError),
    #[error(transparent)]
    Similarity(#[from] similarity::SimilarityError),
    #[error(transparent)]
    Loss(#[from] losses::LossError),
    #[error(transparent)]
    Mining(#[from] mining::MiningError),
    #[error(transparent)]
    Synth(#[from] synthgen::SynthError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Nn(#[from] nn::NnError),
}
