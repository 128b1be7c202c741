//! Quadruplet mining. For an anchor scenario this draws a positive with the
//! same graph and route (pp), a negative with the same graph but another
//! route (pn) and a negative from another graph class (nn).

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{Category, Dataset};
use crate::similarity::{class_ids, dtw, trajectory_similarity};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MiningError {
    #[error("empty {set} candidates for anchor {anchor}")]
    EmptyCandidates { set: &'static str, anchor: usize },
    #[error("anchor {anchor} out of range for {len} scenarios")]
    AnchorOutOfRange { anchor: usize, len: usize },
    #[error("no eligible anchors among {0} scenarios")]
    NoEligibleAnchors(usize),
    #[error("empty dataset")]
    EmptyDataset,
}

/// Where negatives from other graph classes may come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeStrategy {
    /// Any other graph class.
    #[default]
    Random,
    /// Other graph classes of the anchor's category.
    Group,
    /// Other graph classes outside the anchor's category.
    #[serde(alias = "random_excl")]
    RandomExcl,
}

impl NegativeStrategy {
    pub const ALL: [NegativeStrategy; 3] = [Self::Random, Self::Group, Self::RandomExcl];

    pub fn name(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Group => "group",
            Self::RandomExcl => "random-excl",
        }
    }
}

impl fmt::Display for NegativeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NegativeStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Self::Random),
            "group" => Ok(Self::Group),
            "random-excl" | "random_excl" => Ok(Self::RandomExcl),
            _ => Err(format!("unknown negative strategy '{s}'")),
        }
    }
}

/// Pairwise action dissimilarities of one route class.
#[derive(Debug, Clone)]
struct RouteClass {
    members: Vec<usize>,
    graph: usize,
    /// Row-major `members.len()` squared matrix.
    dissimilarity: Vec<f64>,
    d_max: f64,
}

/// Graph and route classes of a dataset plus the action dissimilarities
/// needed for s_t.
#[derive(Debug, Clone)]
pub struct ClassIndex {
    graph: Vec<usize>,
    route: Vec<usize>,
    category: Vec<Category>,
    /// Position of each scenario inside its route class.
    slot: Vec<usize>,
    graph_members: Vec<Vec<usize>>,
    routes: Vec<RouteClass>,
}

/// One training example: anchor, same-route positive, same-graph negative and
/// other-graph negative, with the anchor-pp action similarity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadruplet {
    pub anchor: usize,
    pub pp: usize,
    pub pn: usize,
    pub nn: usize,
    pub s_t: f64,
}

pub fn build_index(dataset: &Dataset) -> Result<ClassIndex, crate::Error> {
    let entries = dataset.entries();
    if entries.is_empty() {
        return Err(MiningError::EmptyDataset.into());
    }
    let (graph, route) = class_ids(entries)?;
    let actions = entries
        .iter()
        .map(|s| s.actions().map(|a| a.rows))
        .collect::<Result<Vec<_>, _>>()?;

    let n_graph = graph.iter().max().unwrap() + 1;
    let n_route = route.iter().max().unwrap() + 1;
    let mut graph_members = vec![Vec::new(); n_graph];
    let mut route_members = vec![Vec::new(); n_route];
    let mut slot = vec![0; entries.len()];
    for i in 0..entries.len() {
        graph_members[graph[i]].push(i);
        slot[i] = route_members[route[i]].len();
        route_members[route[i]].push(i);
    }

    let routes = route_members
        .into_par_iter()
        .map(|members| {
            let k = members.len();
            let mut dissimilarity = vec![0.0; k * k];
            for a in 0..k {
                for b in a + 1..k {
                    let d = dtw(&actions[members[a]], &actions[members[b]])?.dissimilarity;
                    dissimilarity[a * k + b] = d;
                    dissimilarity[b * k + a] = d;
                }
            }
            let d_max = dissimilarity.iter().copied().fold(0.0, f64::max);
            Ok(RouteClass {
                graph: graph[members[0]],
                members,
                dissimilarity,
                d_max,
            })
        })
        .collect::<Result<Vec<_>, crate::similarity::SimilarityError>>()?;

    Ok(ClassIndex {
        graph,
        route,
        category: entries.iter().map(|s| s.category).collect(),
        slot,
        graph_members,
        routes,
    })
}

impl ClassIndex {
    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    pub fn graph_class(&self, i: usize) -> usize {
        self.graph[i]
    }

    pub fn route_class(&self, i: usize) -> usize {
        self.route[i]
    }

    pub fn graph_class_count(&self) -> usize {
        self.graph_members.len()
    }

    pub fn route_class_count(&self) -> usize {
        self.routes.len()
    }

    pub fn graph_members(&self, class: usize) -> &[usize] {
        &self.graph_members[class]
    }

    pub fn route_members(&self, class: usize) -> &[usize] {
        &self.routes[class].members
    }

    /// Graph class that contains the given route class.
    pub fn graph_of_route(&self, class: usize) -> usize {
        self.routes[class].graph
    }

    /// Largest action dissimilarity within a route class.
    pub fn d_max(&self, class: usize) -> f64 {
        self.routes[class].d_max
    }

    /// Action dissimilarity of two scenarios of the same route class.
    pub fn dissimilarity(&self, a: usize, b: usize) -> Option<f64> {
        if self.route[a] != self.route[b] {
            return None;
        }
        let rc = &self.routes[self.route[a]];
        Some(rc.dissimilarity[self.slot[a] * rc.members.len() + self.slot[b]])
    }

    /// Action similarity s_t of two scenarios of the same route class.
    pub fn action_similarity(&self, a: usize, b: usize) -> Option<f64> {
        let d = self.dissimilarity(a, b)?;
        Some(trajectory_similarity(d, self.d_max(self.route[a])).expect("d is bounded by d_max"))
    }

    pub fn pp_candidates(&self, anchor: usize) -> Vec<usize> {
        self.route_members(self.route[anchor])
            .iter()
            .copied()
            .filter(|&j| j != anchor)
            .collect()
    }

    pub fn pn_candidates(&self, anchor: usize) -> Vec<usize> {
        self.graph_members(self.graph[anchor])
            .iter()
            .copied()
            .filter(|&j| self.route[j] != self.route[anchor])
            .collect()
    }

    pub fn nn_candidates(&self, anchor: usize, strategy: NegativeStrategy) -> Vec<usize> {
        let (g, c) = (self.graph[anchor], self.category[anchor]);
        (0..self.len())
            .filter(|&j| self.graph[j] != g)
            .filter(|&j| match strategy {
                NegativeStrategy::Random => true,
                NegativeStrategy::Group => self.category[j] == c,
                NegativeStrategy::RandomExcl => self.category[j] != c,
            })
            .collect()
    }
}

fn pick<R: Rng + ?Sized>(
    rng: &mut R,
    set: &'static str,
    anchor: usize,
    candidates: &[usize],
) -> Result<usize, MiningError> {
    candidates
        .choose(rng)
        .copied()
        .ok_or(MiningError::EmptyCandidates { set, anchor })
}

/// Draws pp, pn and nn uniformly from their candidate sets.
pub fn mine_quadruplet<R: Rng + ?Sized>(
    index: &ClassIndex,
    anchor: usize,
    strategy: NegativeStrategy,
    rng: &mut R,
) -> Result<Quadruplet, MiningError> {
    if anchor >= index.len() {
        return Err(MiningError::AnchorOutOfRange {
            anchor,
            len: index.len(),
        });
    }
    let pp = index.pp_candidates(anchor);
    let pn = index.pn_candidates(anchor);
    let nn = index.nn_candidates(anchor, strategy);
    // check all sets before drawing so an ineligible anchor consumes no randomness
    for (set, c) in [("pp", &pp), ("pn", &pn), ("nn", &nn)] {
        if c.is_empty() {
            return Err(MiningError::EmptyCandidates { set, anchor });
        }
    }
    let pp = pick(rng, "pp", anchor, &pp)?;
    let pn = pick(rng, "pn", anchor, &pn)?;
    let nn = pick(rng, "nn", anchor, &nn)?;
    Ok(Quadruplet {
        anchor,
        pp,
        pn,
        nn,
        s_t: index.action_similarity(anchor, pp).expect("pp shares the anchor's route class"),
    })
}

/// One pass over all anchors in shuffled order.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub quadruplets: Vec<Quadruplet>,
    /// Anchors without a full candidate set, ascending.
    pub skipped: Vec<usize>,
}

pub fn mine_epoch<R: Rng + ?Sized>(
    index: &ClassIndex,
    strategy: NegativeStrategy,
    rng: &mut R,
) -> Result<Epoch, MiningError> {
    let mut anchors: Vec<usize> = (0..index.len()).collect();
    anchors.shuffle(rng);
    let mut quadruplets = Vec::with_capacity(anchors.len());
    let mut skipped = Vec::new();
    for a in anchors {
        match mine_quadruplet(index, a, strategy, rng) {
            Ok(q) => quadruplets.push(q),
            Err(MiningError::EmptyCandidates { .. }) => skipped.push(a),
            Err(e) => return Err(e),
        }
    }
    if quadruplets.is_empty() {
        return Err(MiningError::NoEligibleAnchors(index.len()));
    }
    skipped.sort_unstable();
    Ok(Epoch { quadruplets, skipped })
}
