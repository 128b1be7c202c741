//! Scenario data model: infrastructure image, ego trajectory, lane topology
//! graph and route labeling, plus the derived quantities used for mining and
//! training.

mod actions;
pub mod geometry;
mod raster;
mod route;
pub mod storage;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use actions::{derive_action_sequence, ActionSequence};
pub use raster::{
    build_reconstruction_target, rasterize_polyline_cells, render_lanes, ReconstructionTarget,
    DEFAULT_MASK_HALF_WIDTH_PX,
};
pub use route::{derive_route_labeling, map_point_to_vertex, DEFAULT_OFF_ROAD_THRESHOLD};
pub use storage::{load_dataset, save_dataset, StorageError};

use geometry::Point;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("trajectory too short: {0} points, at least 3 required")]
    TrajectoryTooShort(usize),
    #[error("non-monotonic time at point {0}")]
    NonMonotonicTime(usize),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid route labeling: {0}")]
    InvalidRoute(String),
    #[error("point off-road: ({x:.3}, {y:.3}) is {distance:.3} m from the nearest lane piece (threshold {threshold} m)")]
    OffRoad {
        x: f64,
        y: f64,
        distance: f64,
        threshold: f64,
    },
    #[error("trajectory out of frame: point {index} at ({x:.3}, {y:.3})")]
    OutOfFrame { index: usize, x: f64, y: f64 },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
}

/// Rounds to the nearest 32-bit float so that values survive the on-disk
/// format bit-exactly.
fn to_f32_precision(v: f64) -> f64 {
    v as f32 as f64
}

/// Square grayscale birds-eye view of the road infrastructure.
///
/// Pixel `(row, col)` covers `x in [col*m, (col+1)*m)` and
/// `y in [W-(row+1)*m, W-row*m)` with `W = S*m`, so row 0 is the top edge and
/// the world `y` axis points up.
#[derive(Debug, Clone, PartialEq)]
pub struct InfrastructureImage {
    size: usize,
    meters_per_pixel: f64,
    pixels: Vec<f64>,
}

impl InfrastructureImage {
    pub const MIN_SIZE: usize = 8;

    pub fn new(size: usize, meters_per_pixel: f64, pixels: Vec<f64>) -> Result<Self, ScenarioError> {
        if size < Self::MIN_SIZE {
            return Err(ScenarioError::InvalidImage(format!(
                "size {size} below minimum {}",
                Self::MIN_SIZE
            )));
        }
        if !(meters_per_pixel.is_finite() && meters_per_pixel > 0.0) {
            return Err(ScenarioError::InvalidImage(format!(
                "meters_per_pixel must be positive, got {meters_per_pixel}"
            )));
        }
        if pixels.len() != size * size {
            return Err(ScenarioError::InvalidImage(format!(
                "expected {} pixels for a {size}x{size} image, got {}",
                size * size,
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(ScenarioError::InvalidImage(format!(
                "pixel {i} has intensity {} outside [0, 1]",
                pixels[i]
            )));
        }
        let pixels = pixels.into_iter().map(to_f32_precision).collect();
        Ok(Self {
            size,
            meters_per_pixel,
            pixels,
        })
    }

    pub fn blank(size: usize, meters_per_pixel: f64) -> Result<Self, ScenarioError> {
        Self::new(size, meters_per_pixel, vec![0.0; size * size])
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn meters_per_pixel(&self) -> f64 {
        self.meters_per_pixel
    }

    /// Side length of the covered square in meters.
    pub fn extent(&self) -> f64 {
        self.size as f64 * self.meters_per_pixel
    }

    /// Row-major intensities.
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.size + col]
    }

    /// World coordinates of a pixel center.
    pub fn pixel_center(&self, row: usize, col: usize) -> Point {
        let m = self.meters_per_pixel;
        [(col as f64 + 0.5) * m, self.extent() - (row as f64 + 0.5) * m]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

/// Timestamped ego positions in meters and seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn new(points: Vec<TrajectoryPoint>) -> Result<Self, ScenarioError> {
        let points: Vec<_> = points
            .into_iter()
            .map(|p| TrajectoryPoint {
                x: to_f32_precision(p.x),
                y: to_f32_precision(p.y),
                t: to_f32_precision(p.t),
            })
            .collect();
        if points.len() < 2 {
            return Err(ScenarioError::InvalidTrajectory(format!(
                "{} points, at least 2 required",
                points.len()
            )));
        }
        if let Some(i) = points
            .iter()
            .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.t.is_finite()))
        {
            return Err(ScenarioError::InvalidTrajectory(format!("point {i} is not finite")));
        }
        if let Some(i) = (1..points.len()).find(|&i| points[i].t <= points[i - 1].t) {
            return Err(ScenarioError::NonMonotonicTime(i));
        }
        Ok(Self { points })
    }

    pub fn from_xyt(xyt: &[[f64; 3]]) -> Result<Self, ScenarioError> {
        Self::new(
            xyt.iter()
                .map(|&[x, y, t]| TrajectoryPoint { x, y, t })
                .collect(),
        )
    }

    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.points[self.points.len() - 1].t - self.points[0].t
    }

    pub fn start(&self) -> Point {
        [self.points[0].x, self.points[0].y]
    }

    pub fn positions(&self) -> impl Iterator<Item = Point> + '_ {
        self.points.iter().map(|p| [p.x, p.y])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    /// Longitudinal continuation from one lane piece into the next.
    Successor,
    /// Lateral lane-change relation between adjacent lane pieces.
    Neighbor,
}

impl EdgeKind {
    pub(crate) fn bit(self) -> u8 {
        match self {
            EdgeKind::Successor => 1,
            EdgeKind::Neighbor => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
}

/// A lane piece with its reference centerline in world meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanePiece {
    pub polyline: Vec<Point>,
}

/// Directed, edge-typed lane topology. Vertex ids are indices into
/// [`TopologyGraph::vertices`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct TopologyGraph {
    vertices: Vec<LanePiece>,
    edges: Vec<Edge>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    vertices: Vec<LanePiece>,
    edges: Vec<Edge>,
}

impl TryFrom<RawGraph> for TopologyGraph {
    type Error = ScenarioError;
    fn try_from(raw: RawGraph) -> Result<Self, Self::Error> {
        TopologyGraph::new(raw.vertices, raw.edges)
    }
}

impl From<TopologyGraph> for RawGraph {
    fn from(g: TopologyGraph) -> Self {
        RawGraph {
            vertices: g.vertices,
            edges: g.edges,
        }
    }
}

impl TopologyGraph {
    pub fn new(vertices: Vec<LanePiece>, edges: Vec<Edge>) -> Result<Self, ScenarioError> {
        if vertices.is_empty() {
            return Err(ScenarioError::InvalidGraph("graph has no vertices".into()));
        }
        let n = vertices.len();
        let mut seen = std::collections::HashSet::new();
        for e in &edges {
            if e.from >= n || e.to >= n {
                return Err(ScenarioError::InvalidGraph(format!(
                    "edge {} -> {} references a missing vertex (graph has {n})",
                    e.from, e.to
                )));
            }
            if e.from == e.to {
                return Err(ScenarioError::InvalidGraph(format!("self-loop on vertex {}", e.from)));
            }
            if !seen.insert(*e) {
                return Err(ScenarioError::InvalidGraph(format!(
                    "duplicate {:?} edge {} -> {}",
                    e.kind, e.from, e.to
                )));
            }
        }
        for (i, v) in vertices.iter().enumerate() {
            if v.polyline.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
                return Err(ScenarioError::InvalidGraph(format!(
                    "vertex {i} has a non-finite polyline point"
                )));
            }
        }
        Ok(Self { vertices, edges })
    }

    /// Graph without geometry, handy for pure topology checks.
    pub fn from_edges(n: usize, edges: &[(usize, usize, EdgeKind)]) -> Result<Self, ScenarioError> {
        Self::new(
            vec![LanePiece { polyline: Vec::new() }; n],
            edges
                .iter()
                .map(|&(from, to, kind)| Edge { from, to, kind })
                .collect(),
        )
    }

    pub fn vertices(&self) -> &[LanePiece] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// `n x n` matrix of edge-kind bitmasks, `adj[u * n + v]` for `u -> v`.
    pub fn adjacency(&self) -> Vec<u8> {
        let n = self.vertices.len();
        let mut adj = vec![0u8; n * n];
        for e in &self.edges {
            adj[e.from * n + e.to] |= e.kind.bit();
        }
        adj
    }
}

/// Per-vertex route labels: 2 = start piece, 1 = traversed, 0 = untouched.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RouteLabeling {
    labels: Vec<u8>,
}

impl RouteLabeling {
    pub fn new(labels: Vec<u8>, graph: &TopologyGraph) -> Result<Self, ScenarioError> {
        let n = graph.vertex_count();
        if labels.len() != n {
            return Err(ScenarioError::InvalidRoute(format!(
                "{} labels for a graph with {n} vertices",
                labels.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l > 2) {
            return Err(ScenarioError::InvalidRoute(format!(
                "vertex {i} has label {} outside {{0, 1, 2}}",
                labels[i]
            )));
        }
        let start: Vec<usize> = (0..n).filter(|&i| labels[i] == 2).collect();
        if start.is_empty() {
            return Err(ScenarioError::InvalidRoute("no start vertex labeled 2".into()));
        }
        // the start region must be weakly connected through edges among its members
        let mut reached = vec![false; n];
        let mut stack = vec![start[0]];
        reached[start[0]] = true;
        while let Some(u) = stack.pop() {
            for e in graph.edges() {
                let other = if e.from == u {
                    e.to
                } else if e.to == u {
                    e.from
                } else {
                    continue;
                };
                if labels[other] == 2 && !reached[other] {
                    reached[other] = true;
                    stack.push(other);
                }
            }
        }
        if start.iter().any(|&s| !reached[s]) {
            return Err(ScenarioError::InvalidRoute(
                "start region labeled 2 is not connected".into(),
            ));
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}

/// The eight coarse scenario categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    SingleLane,
    MultiLane,
    Intersection,
    IntersectionEntering,
    Roundabout,
    RoundaboutEntering,
    Highway,
    HighwayEntering,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::SingleLane,
        Category::MultiLane,
        Category::Intersection,
        Category::IntersectionEntering,
        Category::Roundabout,
        Category::RoundaboutEntering,
        Category::Highway,
        Category::HighwayEntering,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::SingleLane => "single-lane",
            Category::MultiLane => "multi-lane",
            Category::Intersection => "intersection",
            Category::IntersectionEntering => "intersection-entering",
            Category::Roundabout => "roundabout",
            Category::RoundaboutEntering => "roundabout-entering",
            Category::Highway => "highway",
            Category::HighwayEntering => "highway-entering",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown category '{s}'"))
    }
}

/// One traffic scenario: the network input (image, trajectory) together with
/// the mining side-information (graph, route) and its category tag.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub image: InfrastructureImage,
    pub trajectory: Trajectory,
    pub graph: TopologyGraph,
    pub route: RouteLabeling,
    pub category: Category,
}

impl Scenario {
    pub fn new(
        image: InfrastructureImage,
        trajectory: Trajectory,
        graph: TopologyGraph,
        route: RouteLabeling,
        category: Category,
    ) -> Result<Self, ScenarioError> {
        if route.labels().len() != graph.vertex_count() {
            return Err(ScenarioError::InvalidScenario(format!(
                "route has {} labels but graph has {} vertices",
                route.labels().len(),
                graph.vertex_count()
            )));
        }
        let [x, y] = trajectory.start();
        let start = map_point_to_vertex(&graph, x, y, f64::INFINITY)?;
        if route.labels()[start] != 2 {
            return Err(ScenarioError::InvalidScenario(format!(
                "trajectory starts on vertex {start} which is labeled {}",
                route.labels()[start]
            )));
        }
        Ok(Self {
            image,
            trajectory,
            graph,
            route,
            category,
        })
    }

    pub fn reconstruction_target(&self) -> Result<ReconstructionTarget, ScenarioError> {
        build_reconstruction_target(
            &self.image,
            &self.graph,
            &self.trajectory,
            DEFAULT_MASK_HALF_WIDTH_PX,
        )
    }

    pub fn actions(&self) -> Result<ActionSequence, ScenarioError> {
        derive_action_sequence(&self.trajectory)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupLevel {
    /// Scenario category.
    #[serde(rename = "C")]
    Category,
    /// Graph isomorphism class.
    #[serde(rename = "G")]
    Graph,
    /// Route class within a graph class.
    #[serde(rename = "R")]
    Route,
}

impl GroupLevel {
    pub const ALL: [GroupLevel; 3] = [GroupLevel::Category, GroupLevel::Graph, GroupLevel::Route];

    pub fn tag(self) -> &'static str {
        match self {
            GroupLevel::Category => "C",
            GroupLevel::Graph => "G",
            GroupLevel::Route => "R",
        }
    }
}

/// Dense group ids for every scenario at the three levels.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroupIndex {
    pub category: Vec<usize>,
    pub graph: Vec<usize>,
    pub route: Vec<usize>,
}

impl GroupIndex {
    pub fn level(&self, level: GroupLevel) -> &[usize] {
        match level {
            GroupLevel::Category => &self.category,
            GroupLevel::Graph => &self.graph,
            GroupLevel::Route => &self.route,
        }
    }

    pub fn group_count(&self, level: GroupLevel) -> usize {
        self.level(level).iter().max().map_or(0, |m| m + 1)
    }

    fn validate(&self, m: usize) -> Result<(), ScenarioError> {
        for level in GroupLevel::ALL {
            let ids = self.level(level);
            if ids.len() != m {
                return Err(ScenarioError::InvalidDataset(format!(
                    "level {} has {} group ids for {m} scenarios",
                    level.tag(),
                    ids.len()
                )));
            }
            let count = self.group_count(level);
            let mut used = vec![false; count];
            ids.iter().for_each(|&g| used[g] = true);
            if used.iter().any(|u| !u) {
                return Err(ScenarioError::InvalidDataset(format!(
                    "group ids at level {} are not dense in [0, {count})",
                    level.tag()
                )));
            }
        }
        Ok(())
    }
}

/// A collection of scenarios sharing one image geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    entries: Vec<Scenario>,
    groups: GroupIndex,
}

impl Dataset {
    /// Builds a dataset and assigns group ids. Category ids follow the
    /// category enumeration order; graph and route ids follow first
    /// appearance of each isomorphism class.
    pub fn new(entries: Vec<Scenario>) -> Result<Self, crate::Error> {
        Self::check_entries(&entries)?;
        let groups = crate::similarity::group_index(&entries)?;
        Ok(Self { entries, groups })
    }

    pub fn with_groups(entries: Vec<Scenario>, groups: GroupIndex) -> Result<Self, ScenarioError> {
        Self::check_entries(&entries)?;
        groups.validate(entries.len())?;
        Ok(Self { entries, groups })
    }

    fn check_entries(entries: &[Scenario]) -> Result<(), ScenarioError> {
        let first = entries
            .first()
            .ok_or_else(|| ScenarioError::InvalidDataset("dataset has no scenarios".into()))?;
        let (s, m) = (first.image.size(), first.image.meters_per_pixel());
        if let Some(i) = entries
            .iter()
            .position(|e| e.image.size() != s || e.image.meters_per_pixel() != m)
        {
            return Err(ScenarioError::InvalidDataset(format!(
                "scenario {i} has image geometry different from scenario 0"
            )));
        }
        Ok(())
    }

    pub fn entries(&self) -> &[Scenario] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn groups(&self) -> &GroupIndex {
        &self.groups
    }

    pub fn image_size(&self) -> usize {
        self.entries[0].image.size()
    }

    pub fn meters_per_pixel(&self) -> f64 {
        self.entries[0].image.meters_per_pixel()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph() -> TopologyGraph {
        TopologyGraph::from_edges(
            3,
            &[(0, 1, EdgeKind::Successor), (1, 2, EdgeKind::Successor)],
        )
        .unwrap()
    }

    #[test]
    fn image_invariants() {
        assert!(InfrastructureImage::blank(7, 1.0).is_err());
        assert!(InfrastructureImage::new(8, 1.0, vec![0.0; 63]).is_err());
        assert!(InfrastructureImage::new(8, 0.0, vec![0.0; 64]).is_err());
        let mut px = vec![0.0; 64];
        px[5] = 1.5;
        assert!(InfrastructureImage::new(8, 1.0, px).is_err());
        let img = InfrastructureImage::blank(8, 2.0).unwrap();
        assert_eq!(img.extent(), 16.0);
        assert_eq!(img.pixel_center(0, 0), [1.0, 15.0]);
    }

    #[test]
    fn trajectory_invariants() {
        assert!(Trajectory::from_xyt(&[[0.0, 0.0, 0.0]]).is_err());
        assert_eq!(
            Trajectory::from_xyt(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]),
            Err(ScenarioError::NonMonotonicTime(1))
        );
        let t = Trajectory::from_xyt(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.5]]).unwrap();
        assert_eq!(t.duration(), 0.5);
    }

    #[test]
    fn graph_invariants() {
        assert!(TopologyGraph::from_edges(0, &[]).is_err());
        assert!(TopologyGraph::from_edges(2, &[(0, 0, EdgeKind::Successor)]).is_err());
        assert!(TopologyGraph::from_edges(2, &[(0, 2, EdgeKind::Successor)]).is_err());
        assert!(TopologyGraph::from_edges(
            2,
            &[(0, 1, EdgeKind::Successor), (0, 1, EdgeKind::Successor)]
        )
        .is_err());
        // a successor and a neighbor edge between the same pair are distinct
        let g = TopologyGraph::from_edges(
            2,
            &[(0, 1, EdgeKind::Successor), (0, 1, EdgeKind::Neighbor)],
        )
        .unwrap();
        assert_eq!(g.adjacency(), vec![0, 3, 0, 0]);
    }

    #[test]
    fn route_invariants() {
        let g = path_graph();
        assert!(RouteLabeling::new(vec![2, 1], &g).is_err());
        assert!(RouteLabeling::new(vec![0, 1, 1], &g).is_err());
        assert!(RouteLabeling::new(vec![2, 3, 0], &g).is_err());
        assert!(RouteLabeling::new(vec![2, 0, 2], &g).is_err());
        assert!(RouteLabeling::new(vec![2, 2, 1], &g).is_ok());
    }

    #[test]
    fn category_names_round_trip() {
        for c in Category::ALL {
            assert_eq!(c.name().parse::<Category>().unwrap(), c);
            assert_eq!(
                serde_json::to_string(&c).unwrap(),
                format!("\"{}\"", c.name())
            );
        }
        assert!("motorway".parse::<Category>().is_err());
    }
}
