//! Expert similarity measures: infrastructure similarity via graph
//! isomorphism, route similarity via label-preserving isomorphism and action
//! similarity via normalized dynamic time warping.

mod canon;
mod dtw;
mod iso;

use std::collections::HashMap;

use thiserror::Error;

use crate::scenario::{Category, GroupIndex, RouteLabeling, Scenario, TopologyGraph};

pub use canon::CanonicalForm;
pub use dtw::{dtw, trajectory_similarity, DtwResult};
pub use iso::IsomorphismWitness;

/// Largest graph accepted by [`canonical_code`] unless configured otherwise.
pub const DEFAULT_CANONICAL_BOUND: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimilarityError {
    #[error("empty action sequence")]
    EmptySequence,
    #[error("dissimilarity exceeds class maximum: d = {d}, d_max = {d_max}")]
    ExceedsClassMaximum { d: f64, d_max: f64 },
    #[error("graph with {vertices} vertices exceeds the canonicalization bound of {bound}")]
    CanonicalBound { vertices: usize, bound: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Edge- and kind-preserving bijection from `g_i` onto `g_j`, if one exists.
pub fn find_isomorphism(g_i: &TopologyGraph, g_j: &TopologyGraph) -> Option<IsomorphismWitness> {
    iso::find(&iso::Colored::new(g_i, None), &iso::Colored::new(g_j, None))
        .map(|mapping| IsomorphismWitness { mapping })
}

/// Isomorphism that additionally carries every route label onto an equal one.
pub fn find_route_isomorphism(
    g_i: &TopologyGraph,
    r_i: &RouteLabeling,
    g_j: &TopologyGraph,
    r_j: &RouteLabeling,
) -> Option<IsomorphismWitness> {
    iso::find(
        &iso::Colored::new(g_i, Some(r_i.labels())),
        &iso::Colored::new(g_j, Some(r_j.labels())),
    )
    .map(|mapping| IsomorphismWitness { mapping })
}

/// Infrastructure similarity: true iff the two lane graphs are isomorphic.
pub fn infra_similarity(g_i: &TopologyGraph, g_j: &TopologyGraph) -> bool {
    find_isomorphism(g_i, g_j).is_some()
}

/// Route similarity: true iff some isomorphism maps one route labeling onto
/// the other.
pub fn route_similarity(
    g_i: &TopologyGraph,
    r_i: &RouteLabeling,
    g_j: &TopologyGraph,
    r_j: &RouteLabeling,
) -> bool {
    find_route_isomorphism(g_i, r_i, g_j, r_j).is_some()
}

/// Canonical code of a graph, label-aware when `labels` is given.
pub fn canonical_code(
    g: &TopologyGraph,
    labels: Option<&RouteLabeling>,
) -> Result<CanonicalForm, SimilarityError> {
    canonical_code_bounded(g, labels, DEFAULT_CANONICAL_BOUND)
}

pub fn canonical_code_bounded(
    g: &TopologyGraph,
    labels: Option<&RouteLabeling>,
    bound: usize,
) -> Result<CanonicalForm, SimilarityError> {
    if g.vertex_count() > bound {
        return Err(SimilarityError::CanonicalBound {
            vertices: g.vertex_count(),
            bound,
        });
    }
    let colored = iso::Colored::new(g, labels.map(RouteLabeling::labels));
    Ok(canon::canonical(&colored, labels.is_some()))
}

/// Graph-class and route-class ids per scenario, dense in order of first
/// appearance.
pub fn class_ids(entries: &[Scenario]) -> Result<(Vec<usize>, Vec<usize>), SimilarityError> {
    let mut graph_ids = HashMap::new();
    let mut route_ids = HashMap::new();
    let mut graph = Vec::with_capacity(entries.len());
    let mut route = Vec::with_capacity(entries.len());
    for s in entries {
        let g = canonical_code(&s.graph, None)?;
        let r = canonical_code(&s.graph, Some(&s.route))?;
        let next = graph_ids.len();
        graph.push(*graph_ids.entry(g).or_insert(next));
        let next = route_ids.len();
        route.push(*route_ids.entry(r).or_insert(next));
    }
    Ok((graph, route))
}

/// Group ids at all three levels. Category ids follow the category
/// enumeration order restricted to the categories present.
pub fn group_index(entries: &[Scenario]) -> Result<GroupIndex, SimilarityError> {
    let mut present: Vec<Category> = entries.iter().map(|s| s.category).collect();
    present.sort();
    present.dedup();
    let category = entries
        .iter()
        .map(|s| present.binary_search(&s.category).unwrap())
        .collect();
    let (graph, route) = class_ids(entries)?;
    Ok(GroupIndex {
        category,
        graph,
        route,
    })
}
