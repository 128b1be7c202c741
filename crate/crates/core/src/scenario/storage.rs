//! On-disk dataset layout: `manifest.json` plus one little-endian binary blob
//! per scenario (`scenario_<id>.bin`: `S*S` f32 image values row-major, a u32
//! point count `N`, then `N x 3` f32 `(x, y, t)` triples).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    Category, Dataset, GroupIndex, InfrastructureImage, RouteLabeling, Scenario, ScenarioError,
    TopologyGraph, Trajectory, TrajectoryPoint,
};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed manifest {path}: {message}")]
    MalformedManifest { path: PathBuf, message: String },
    #[error("version mismatch: manifest has version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("missing entry: scenario {id} expects {path}")]
    MissingEntry { id: usize, path: PathBuf },
    #[error("shape mismatch in {path}: {message}")]
    ShapeMismatch { path: PathBuf, message: String },
    #[error("invalid scenario {id}: {source}")]
    Scenario {
        id: usize,
        #[source]
        source: ScenarioError,
    },
    #[error(transparent)]
    Dataset(#[from] ScenarioError),
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    image_size: usize,
    meters_per_pixel: f64,
    entries: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    id: usize,
    category: Category,
    graph: TopologyGraph,
    route: Vec<u8>,
    groups: EntryGroups,
}

#[derive(Serialize, Deserialize)]
struct EntryGroups {
    category: usize,
    graph: usize,
    route: usize,
}

pub fn scenario_file_name(id: usize) -> String {
    format!("scenario_{id}.bin")
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StorageError + '_ {
    move |source| StorageError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn encode_blob(s: &Scenario) -> Vec<u8> {
    let pts = s.trajectory.points();
    let mut out = Vec::with_capacity(4 * (s.image.pixels().len() + 1 + 3 * pts.len()));
    for &p in s.image.pixels() {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    out.extend_from_slice(&(pts.len() as u32).to_le_bytes());
    for p in pts {
        for v in [p.x, p.y, p.t] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

fn read_f32s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect()
}

fn decode_blob(
    bytes: &[u8],
    size: usize,
    path: &Path,
) -> Result<(Vec<f64>, Vec<TrajectoryPoint>), StorageError> {
    let shape = |message: String| StorageError::ShapeMismatch {
        path: path.to_path_buf(),
        message,
    };
    let image_bytes = 4 * size * size;
    if bytes.len() < image_bytes + 4 {
        return Err(shape(format!(
            "{} bytes cannot hold a {size}x{size} image and a point count",
            bytes.len()
        )));
    }
    let n_bytes = &bytes[image_bytes..image_bytes + 4];
    let n = u32::from_le_bytes([n_bytes[0], n_bytes[1], n_bytes[2], n_bytes[3]]) as usize;
    let expected = image_bytes as u64 + 4 + 12 * n as u64;
    if bytes.len() as u64 != expected {
        return Err(shape(format!(
            "expected {expected} bytes for S = {size} and N = {n}, found {}",
            bytes.len()
        )));
    }
    let pixels = read_f32s(&bytes[..image_bytes]);
    let points = read_f32s(&bytes[image_bytes + 4..])
        .chunks_exact(3)
        .map(|c| TrajectoryPoint {
            x: c[0],
            y: c[1],
            t: c[2],
        })
        .collect();
    Ok((pixels, points))
}

/// Writes `manifest.json` and one blob per scenario into `dir`, creating it
/// if needed.
pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<(), StorageError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let groups = dataset.groups();
    let mut entries = Vec::with_capacity(dataset.len());
    for (id, s) in dataset.entries().iter().enumerate() {
        let path = dir.join(scenario_file_name(id));
        fs::write(&path, encode_blob(s)).map_err(io_err(&path))?;
        entries.push(ManifestEntry {
            id,
            category: s.category,
            graph: s.graph.clone(),
            route: s.route.labels().to_vec(),
            groups: EntryGroups {
                category: groups.category[id],
                graph: groups.graph[id],
                route: groups.route[id],
            },
        });
    }
    let manifest = Manifest {
        version: FORMAT_VERSION,
        image_size: dataset.image_size(),
        meters_per_pixel: dataset.meters_per_pixel(),
        entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(io_err(&path))
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset, StorageError> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    // check the version before the full schema so old layouts get a clear message
    let probe: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| StorageError::MalformedManifest {
            path: manifest_path.clone(),
            message: e.to_string(),
        })?;
    if let Some(found) = probe.get("version").and_then(|v| v.as_u64()) {
        if found != FORMAT_VERSION as u64 {
            return Err(StorageError::VersionMismatch {
                found: found as u32,
                expected: FORMAT_VERSION,
            });
        }
    }
    let manifest: Manifest =
        serde_json::from_value(probe).map_err(|e| StorageError::MalformedManifest {
            path: manifest_path.clone(),
            message: e.to_string(),
        })?;

    let mut entries = Vec::with_capacity(manifest.entries.len());
    let mut groups = GroupIndex::default();
    for (pos, e) in manifest.entries.into_iter().enumerate() {
        if e.id != pos {
            return Err(StorageError::MalformedManifest {
                path: manifest_path.clone(),
                message: format!("entry {pos} carries id {}", e.id),
            });
        }
        let path = dir.join(scenario_file_name(e.id));
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(err) if err.kind() == io::ErrorKind::NotFound => {
                return Err(StorageError::MissingEntry { id: e.id, path })
            }
            Err(err) => return Err(io_err(&path)(err)),
        };
        let (pixels, points) = decode_blob(&bytes, manifest.image_size, &path)?;
        let scenario = (|| {
            let image = InfrastructureImage::new(manifest.image_size, manifest.meters_per_pixel, pixels)?;
            let trajectory = Trajectory::new(points)?;
            let route = RouteLabeling::new(e.route, &e.graph)?;
            Scenario::new(image, trajectory, e.graph, route, e.category)
        })()
        .map_err(|source| StorageError::Scenario { id: e.id, source })?;
        entries.push(scenario);
        groups.category.push(e.groups.category);
        groups.graph.push(e.groups.graph);
        groups.route.push(e.groups.route);
    }
    Ok(Dataset::with_groups(entries, groups)?)
}
