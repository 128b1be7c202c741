use proptest::prelude::*;
use trafficmetric::scenario::{EdgeKind, RouteLabeling, TopologyGraph};
use trafficmetric::similarity::{
    canonical_code, dtw, find_isomorphism, find_route_isomorphism, infra_similarity,
    route_similarity,
};

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                cur.push(v);
                rec(cur, used, out);
                cur.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

fn brute_iso(a: &TopologyGraph, la: Option<&[u8]>, b: &TopologyGraph, lb: Option<&[u8]>) -> bool {
    let n = a.vertex_count();
    if n != b.vertex_count() {
        return false;
    }
    let (aa, ab) = (a.adjacency(), b.adjacency());
    permutations(n).into_iter().any(|p| {
        if let (Some(la), Some(lb)) = (la, lb) {
            if (0..n).any(|u| la[u] != lb[p[u]]) {
                return false;
            }
        }
        (0..n).all(|u| (0..n).all(|v| aa[u * n + v] == ab[p[u] * n + p[v]]))
    })
}

fn graph_from_bits(n: usize, bits: &[u8]) -> TopologyGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u == v {
                continue;
            }
            let b = bits[u * 8 + v];
            if b & 1 != 0 {
                edges.push((u, v, EdgeKind::Successor));
            }
            if b & 2 != 0 {
                edges.push((u, v, EdgeKind::Neighbor));
            }
        }
    }
    TopologyGraph::from_edges(n, &edges).unwrap()
}

/// Sparse random graphs so that isomorphic pairs actually occur.
fn arb_graph() -> impl Strategy<Value = TopologyGraph> {
    (1usize..=8, prop::collection::vec(prop::sample::select(vec![0u8, 0, 0, 0, 0, 1, 2, 3]), 64))
        .prop_map(|(n, bits)| graph_from_bits(n, &bits))
}

/// A graph and a relabeled copy, so that roughly half the generated pairs are
/// isomorphic.
fn arb_pair() -> impl Strategy<Value = (TopologyGraph, TopologyGraph)> {
    (arb_graph(), arb_graph(), any::<bool>(), any::<u64>()).prop_map(|(a, b, same, seed)| {
        if !same {
            return (a, b);
        }
        let n = a.vertex_count();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let adj = a.adjacency();
        let mut bits = vec![0u8; 64];
        for u in 0..n {
            for v in 0..n {
                bits[perm[u] * 8 + perm[v]] = adj[u * n + v];
            }
        }
        let c = graph_from_bits(n, &bits);
        (a, c)
    })
}

fn labels_for(g: &TopologyGraph, seed: u8) -> Option<RouteLabeling> {
    let n = g.vertex_count();
    let labels: Vec<u8> = (0..n).map(|u| if u == 0 { 2 } else { ((seed as usize >> (u % 8)) & 1) as u8 }).collect();
    RouteLabeling::new(labels, g).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn isomorphism_agrees_with_exhaustive_search((a, b) in arb_pair()) {
        let expected = brute_iso(&a, None, &b, None);
        prop_assert_eq!(infra_similarity(&a, &b), expected);
        if let Some(w) = find_isomorphism(&a, &b) {
            prop_assert!(w.verify(&a, None, &b, None));
        }
        let same_code = canonical_code(&a, None).unwrap() == canonical_code(&b, None).unwrap();
        prop_assert_eq!(same_code, expected);
    }

    #[test]
    fn route_isomorphism_agrees_with_exhaustive_search((a, b) in arb_pair(), sa in any::<u8>(), sb in any::<u8>()) {
        let (Some(ra), Some(rb)) = (labels_for(&a, sa), labels_for(&b, sb)) else {
            return Ok(());
        };
        let expected = brute_iso(&a, Some(ra.labels()), &b, Some(rb.labels()));
        prop_assert_eq!(route_similarity(&a, &ra, &b, &rb), expected);
        if let Some(w) = find_route_isomorphism(&a, &ra, &b, &rb) {
            prop_assert!(w.verify(&a, Some(ra.labels()), &b, Some(rb.labels())));
        }
        let same_code = canonical_code(&a, Some(&ra)).unwrap() == canonical_code(&b, Some(&rb)).unwrap();
        prop_assert_eq!(same_code, expected);
    }

    #[test]
    fn similarity_is_symmetric((a, b) in arb_pair()) {
        prop_assert_eq!(infra_similarity(&a, &b), infra_similarity(&b, &a));
    }
}

/// Minimum cost and, among minimum-cost paths, the set of path lengths, over
/// every monotone warping path.
fn brute_dtw(a: &[[f64; 3]], b: &[[f64; 3]]) -> (f64, Vec<usize>) {
    fn cost(x: &[f64; 3], y: &[f64; 3]) -> f64 {
        ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt()
    }
    fn walk(a: &[[f64; 3]], b: &[[f64; 3]], i: usize, j: usize, acc: f64, len: usize, out: &mut Vec<(f64, usize)>) {
        let acc = acc + cost(&a[i], &b[j]);
        if i + 1 == a.len() && j + 1 == b.len() {
            out.push((acc, len));
            return;
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, acc, len + 1, out);
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, acc, len + 1, out);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, acc, len + 1, out);
        }
    }
    let mut all = Vec::new();
    walk(a, b, 0, 0, 0.0, 1, &mut all);
    let best = all.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let lens = all.iter().filter(|p| p.0 <= best + 1e-9).map(|p| p.1).collect();
    (best, lens)
}

fn arb_seq() -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec(prop::array::uniform3(-3.0f64..3.0), 1..=6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dtw_agrees_with_exhaustive_paths(a in arb_seq(), b in arb_seq()) {
        let r = dtw(&a, &b).unwrap();
        let (best, lens) = brute_dtw(&a, &b);
        prop_assert!((r.distance - best).abs() <= 1e-9 * (1.0 + best));
        prop_assert!(lens.contains(&r.path_length));
        prop_assert_eq!(r.path.first(), Some(&(0, 0)));
        prop_assert_eq!(r.path.last(), Some(&(a.len() - 1, b.len() - 1)));
        prop_assert!((r.normalized_path - r.path_length as f64 / a.len().max(b.len()) as f64).abs() < 1e-15);
    }

    #[test]
    fn dtw_is_symmetric_in_distance(a in arb_seq(), b in arb_seq()) {
        let (x, y) = (dtw(&a, &b).unwrap(), dtw(&b, &a).unwrap());
        prop_assert!((x.distance - y.distance).abs() < 1e-9);
    }
}
