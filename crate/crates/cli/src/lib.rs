//! Pipeline subcommands behind the `trafficmetric` binary: generate a
//! dataset, train the embedding network, evaluate it, project it to 2-D and
//! dump mined quadruplets.

pub mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;
use trafficmetric::eval::{evaluate, project_2d, EvalReport};
use trafficmetric::mining::{build_index, mine_epoch, Quadruplet};
use trafficmetric::nn::{embed_dataset, load_checkpoint, save_checkpoint, train_with, EpochMetrics, ModelState, NnError};
use trafficmetric::scenario::{load_dataset, save_dataset, Dataset, GroupLevel};
use trafficmetric::synthgen::generate;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or invalid config, mismatched inputs.
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<trafficmetric::Error> for CliError {
    fn from(e: trafficmetric::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn csv_bytes<R: serde::Serialize>(header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Runtime(format!("csv: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(format!("csv: {e}")))
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, CliError> {
    load_dataset(dir).map_err(|e| CliError::Runtime(format!("dataset {}: {e}", dir.display())))
}

pub fn read_checkpoint_file(path: &Path) -> Result<ModelState, CliError> {
    load_checkpoint(path).map_err(|e| io_err(path, e))
}

fn check_image_size(network: usize, dataset: &Dataset) -> Result<(), CliError> {
    if network != dataset.image_size() {
        return Err(CliError::Config(format!(
            "network expects {network} px images, dataset has {} px",
            dataset.image_size()
        )));
    }
    Ok(())
}

/// Writes the dataset and returns the group count per level.
pub fn cmd_gen(config: &RunConfig, out: &Path) -> Result<Vec<(GroupLevel, usize)>, CliError> {
    let dataset = generate(&config.generator)?;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    save_dataset(&dataset, out).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(GroupLevel::ALL
        .iter()
        .map(|&l| (l, dataset.groups().group_count(l)))
        .collect())
}

/// Path of the per-epoch metrics CSV written next to a checkpoint.
pub fn metrics_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("metrics.csv")
}

pub const METRICS_HEADER: [&str; 7] = ["epoch", "L_G", "L_R", "L_T", "L_Rec", "total", "ordering"];

fn metrics_csv(log: &[EpochMetrics]) -> Result<Vec<u8>, CliError> {
    csv_bytes(
        &METRICS_HEADER,
        log.iter().map(|m| (m.epoch, m.l_g, m.l_r, m.l_t, m.l_rec, m.total, m.ordering)),
    )
}

/// Trains on the dataset and writes the checkpoint plus its metrics CSV. On
/// divergence the last good parameters are still written before failing.
pub fn cmd_train(
    config: &RunConfig,
    dataset_dir: &Path,
    out: &Path,
    mut progress: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>, CliError> {
    let dataset = read_dataset(dataset_dir)?;
    check_image_size(config.network.image_size, &dataset)?;
    let mut log = Vec::new();
    let result = train_with(&dataset, &config.network, &config.train_config(), |m| {
        log.push(*m);
        progress(m);
    });
    match result {
        Ok(outcome) => {
            save_checkpoint(&outcome.state, out).map_err(|e| io_err(out, e))?;
            write_file(&metrics_path(out), &metrics_csv(&outcome.log)?)?;
            Ok(outcome.log)
        }
        Err(trafficmetric::Error::Nn(NnError::Divergence {
            epoch,
            step,
            detail,
            last_good,
        })) => {
            if let Some(state) = last_good {
                save_checkpoint(&state, out).map_err(|e| io_err(out, e))?;
            }
            write_file(&metrics_path(out), &metrics_csv(&log)?)?;
            let at = epoch.map_or(String::new(), |e| format!(" in epoch {e}"));
            Err(CliError::Runtime(format!(
                "training diverged{at} at step {step}: {detail}; last good checkpoint kept at {}",
                out.display()
            )))
        }
        Err(e) => Err(e.into()),
    }
}

fn embed(checkpoint: &Path, dataset_dir: &Path) -> Result<(Dataset, Vec<Vec<f64>>), CliError> {
    let state = read_checkpoint_file(checkpoint)?;
    let dataset = read_dataset(dataset_dir)?;
    check_image_size(state.config.image_size, &dataset)?;
    let emb = embed_dataset(&state, &dataset)?;
    Ok((dataset, emb))
}

pub fn cmd_eval(config: &RunConfig, checkpoint: &Path, dataset_dir: &Path, out: &Path) -> Result<EvalReport, CliError> {
    let (dataset, emb) = embed(checkpoint, dataset_dir)?;
    let report = evaluate(&emb, &dataset, &config.eval).map_err(trafficmetric::Error::from)?;
    let mut json = serde_json::to_vec_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    json.push(b'\n');
    write_file(out, &json)?;
    Ok(report)
}

pub const PROJECTION_HEADER: [&str; 6] = ["id", "x", "y", "category", "graph_class", "route_class"];

/// Writes one PCA row per scenario; returns whether the projection collapsed.
pub fn cmd_project(checkpoint: &Path, dataset_dir: &Path, out: &Path) -> Result<bool, CliError> {
    let (dataset, emb) = embed(checkpoint, dataset_dir)?;
    let proj = project_2d(&emb).map_err(trafficmetric::Error::from)?;
    let g = dataset.groups();
    let rows = dataset.entries().iter().enumerate().map(|(i, s)| {
        let [x, y] = proj.coords[i];
        (i, x, y, s.category.name(), g.graph[i], g.route[i])
    });
    write_file(out, &csv_bytes(&PROJECTION_HEADER, rows)?)?;
    Ok(proj.degenerate)
}

pub const MINE_HEADER: [&str; 5] = ["anchor_id", "pp_id", "pn_id", "nn_id", "s_t"];

/// One mining pass over all anchors; returns the quadruplets and the
/// anchors that had no full candidate set.
pub fn cmd_mine(config: &RunConfig, dataset_dir: &Path, out: &Path) -> Result<(Vec<Quadruplet>, Vec<usize>), CliError> {
    let dataset = read_dataset(dataset_dir)?;
    let index = build_index(&dataset)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.training.seed);
    let epoch = mine_epoch(&index, config.mining.strategy, &mut rng).map_err(trafficmetric::Error::from)?;
    let rows = epoch.quadruplets.iter().map(|q| (q.anchor, q.pp, q.pn, q.nn, q.s_t));
    write_file(out, &csv_bytes(&MINE_HEADER, rows)?)?;
    Ok((epoch.quadruplets, epoch.skipped))
}

/// Prints to stdout, ignoring a closed pipe.
pub fn say(line: impl std::fmt::Display) {
    let _ = writeln!(std::io::stdout(), "{line}");
}
