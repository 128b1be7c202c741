//! Canonical labeling by color refinement plus individualization search.
//! Two graphs get the same code exactly when they are isomorphic (with
//! matching vertex colors when colors are supplied).

use super::iso::Colored;

/// Opaque byte string identifying an isomorphism class. Stable within one
/// build of this crate only.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalForm {
    pub code: Vec<u8>,
}

/// Re-ranks arbitrary sortable keys into dense colors `0..k`, ordered by key.
fn rank<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let mut sorted = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter()
        .map(|k| sorted.binary_search(k).unwrap())
        .collect()
}

fn cell_count(colors: &[usize]) -> usize {
    colors.iter().max().map_or(0, |m| m + 1)
}

/// Iterated 1-dimensional refinement of a coloring until the partition is
/// stable. Color names are derived from sorted neighborhood signatures only,
/// so the result is invariant under vertex renaming.
fn refine(g: &Colored, mut colors: Vec<usize>) -> Vec<usize> {
    let n = g.n;
    loop {
        let before = cell_count(&colors);
        let keys: Vec<(usize, Vec<(usize, u8, u8)>)> = (0..n)
            .map(|u| {
                let mut nb: Vec<(usize, u8, u8)> = (0..n)
                    .filter(|&v| v != u && (g.edge(u, v) | g.edge(v, u)) != 0)
                    .map(|v| (colors[v], g.edge(u, v), g.edge(v, u)))
                    .collect();
                nb.sort_unstable();
                (colors[u], nb)
            })
            .collect();
        colors = rank(&keys);
        if cell_count(&colors) == before {
            return colors;
        }
    }
}

/// Vertices u, v are twins when swapping them is an automorphism, i.e. they
/// agree on color and on all edges to every other vertex.
fn twins(g: &Colored, u: usize, v: usize) -> bool {
    g.colors[u] == g.colors[v]
        && g.edge(u, v) == g.edge(v, u)
        && (0..g.n)
            .filter(|&w| w != u && w != v)
            .all(|w| g.edge(u, w) == g.edge(v, w) && g.edge(w, u) == g.edge(w, v))
}

fn leaf_code(g: &Colored, colors: &[usize], header: &[u8]) -> Vec<u8> {
    let n = g.n;
    let mut order = vec![0usize; n];
    for (v, &c) in colors.iter().enumerate() {
        order[c] = v;
    }
    let mut code = header.to_vec();
    code.extend(order.iter().map(|&v| g.colors[v]));
    for &u in &order {
        code.extend(order.iter().map(|&v| g.edge(u, v)));
    }
    code
}

fn search(g: &Colored, colors: Vec<usize>, header: &[u8], best: &mut Option<Vec<u8>>) {
    let n = g.n;
    if cell_count(&colors) == n {
        let code = leaf_code(g, &colors, header);
        if best.as_ref().is_none_or(|b| code < *b) {
            *best = Some(code);
        }
        return;
    }
    // first non-singleton cell by color
    let mut sizes = vec![0usize; n];
    colors.iter().for_each(|&c| sizes[c] += 1);
    let target = (0..n).find(|&c| sizes[c] > 1).unwrap();
    let cell: Vec<usize> = (0..n).filter(|&v| colors[v] == target).collect();
    let mut tried: Vec<usize> = Vec::new();
    for &v in &cell {
        if tried.iter().any(|&t| twins(g, t, v)) {
            continue;
        }
        tried.push(v);
        let keys: Vec<(usize, bool)> = (0..n).map(|u| (colors[u], u != v)).collect();
        search(g, refine(g, rank(&keys)), header, best);
    }
}

pub(crate) fn canonical(g: &Colored, labeled: bool) -> CanonicalForm {
    let n = g.n;
    let mut header = vec![labeled as u8];
    header.extend_from_slice(&(n as u32).to_le_bytes());
    let init: Vec<(u8, [u32; 4])> = (0..n)
        .map(|u| {
            let mut deg = [0u32; 4];
            for v in 0..n {
                let (out, inc) = (g.edge(u, v), g.edge(v, u));
                deg[0] += (out & 1) as u32;
                deg[1] += (out >> 1 & 1) as u32;
                deg[2] += (inc & 1) as u32;
                deg[3] += (inc >> 1 & 1) as u32;
            }
            (g.colors[u], deg)
        })
        .collect();
    let colors = refine(g, rank(&init));
    let mut best = None;
    search(g, colors, &header, &mut best);
    CanonicalForm {
        code: best.expect("search reaches at least one leaf"),
    }
}
