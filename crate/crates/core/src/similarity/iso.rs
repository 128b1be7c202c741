//! VF2-style backtracking isomorphism search over directed graphs whose edges
//! carry a kind bitmask and whose vertices optionally carry a color.

use crate::scenario::TopologyGraph;

/// A bijection from the vertices of the first graph onto the second:
/// `mapping[u]` is the image of vertex `u`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsomorphismWitness {
    pub mapping: Vec<usize>,
}

impl IsomorphismWitness {
    /// Checks bijectivity and edge/kind preservation in both directions, plus
    /// color preservation when colors are given.
    pub fn verify(
        &self,
        g1: &TopologyGraph,
        colors1: Option<&[u8]>,
        g2: &TopologyGraph,
        colors2: Option<&[u8]>,
    ) -> bool {
        let n = g1.vertex_count();
        if n != g2.vertex_count() || self.mapping.len() != n {
            return false;
        }
        let mut hit = vec![false; n];
        for &m in &self.mapping {
            if m >= n || std::mem::replace(&mut hit[m], true) {
                return false;
            }
        }
        if let (Some(c1), Some(c2)) = (colors1, colors2) {
            if (0..n).any(|u| c1[u] != c2[self.mapping[u]]) {
                return false;
            }
        }
        let (a1, a2) = (g1.adjacency(), g2.adjacency());
        (0..n).all(|u| {
            (0..n).all(|v| a1[u * n + v] == a2[self.mapping[u] * n + self.mapping[v]])
        })
    }
}

pub(crate) struct Colored {
    pub n: usize,
    pub adj: Vec<u8>,
    pub colors: Vec<u8>,
}

impl Colored {
    pub fn new(g: &TopologyGraph, colors: Option<&[u8]>) -> Self {
        let n = g.vertex_count();
        Self {
            n,
            adj: g.adjacency(),
            colors: colors.map_or_else(|| vec![0; n], <[u8]>::to_vec),
        }
    }

    #[inline]
    pub fn edge(&self, u: usize, v: usize) -> u8 {
        self.adj[u * self.n + v]
    }

    /// Color plus in/out degree per edge kind.
    fn signature(&self, u: usize) -> [u32; 5] {
        let mut sig = [self.colors[u] as u32, 0, 0, 0, 0];
        for v in 0..self.n {
            let (out, inc) = (self.edge(u, v), self.edge(v, u));
            sig[1] += (out & 1) as u32;
            sig[2] += (out >> 1 & 1) as u32;
            sig[3] += (inc & 1) as u32;
            sig[4] += (inc >> 1 & 1) as u32;
        }
        sig
    }
}

struct Matcher<'a> {
    g1: &'a Colored,
    g2: &'a Colored,
    order: Vec<usize>,
    candidates: Vec<Vec<usize>>,
    map12: Vec<usize>,
    used2: Vec<bool>,
}

const UNMAPPED: usize = usize::MAX;

impl Matcher<'_> {
    fn feasible(&self, u: usize, v: usize) -> bool {
        self.order.iter().all(|&w| {
            let mw = self.map12[w];
            mw == UNMAPPED
                || (self.g1.edge(u, w) == self.g2.edge(v, mw)
                    && self.g1.edge(w, u) == self.g2.edge(mw, v))
        })
    }

    fn search(&mut self, depth: usize) -> bool {
        if depth == self.order.len() {
            return true;
        }
        let u = self.order[depth];
        for k in 0..self.candidates[u].len() {
            let v = self.candidates[u][k];
            if self.used2[v] || !self.feasible(u, v) {
                continue;
            }
            self.map12[u] = v;
            self.used2[v] = true;
            if self.search(depth + 1) {
                return true;
            }
            self.map12[u] = UNMAPPED;
            self.used2[v] = false;
        }
        false
    }
}

pub(crate) fn find(g1: &Colored, g2: &Colored) -> Option<Vec<usize>> {
    let n = g1.n;
    if n != g2.n {
        return None;
    }
    let sig1: Vec<_> = (0..n).map(|u| g1.signature(u)).collect();
    let sig2: Vec<_> = (0..n).map(|u| g2.signature(u)).collect();
    let (mut s1, mut s2) = (sig1.clone(), sig2.clone());
    s1.sort_unstable();
    s2.sort_unstable();
    if s1 != s2 {
        return None;
    }
    let candidates: Vec<Vec<usize>> = (0..n)
        .map(|u| (0..n).filter(|&v| sig2[v] == sig1[u]).collect())
        .collect();

    // match order: most constrained first, then grow along edges to mapped vertices
    let mut order = Vec::with_capacity(n);
    let mut placed = vec![false; n];
    let mut links = vec![0usize; n];
    for _ in 0..n {
        let next = (0..n)
            .filter(|&u| !placed[u])
            .min_by_key(|&u| (std::cmp::Reverse(links[u]), candidates[u].len(), u))
            .unwrap();
        placed[next] = true;
        order.push(next);
        for w in 0..n {
            if g1.edge(next, w) != 0 || g1.edge(w, next) != 0 {
                links[w] += 1;
            }
        }
    }

    let mut m = Matcher {
        g1,
        g2,
        order,
        candidates,
        map12: vec![UNMAPPED; n],
        used2: vec![false; n],
    };
    m.search(0).then_some(m.map12)
}
