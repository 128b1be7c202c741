use proptest::prelude::*;

use trafficmetric::eval::*;
use trafficmetric::scenario::{
    render_lanes, Category, Dataset, LanePiece, RouteLabeling, Scenario, TopologyGraph, Trajectory,
};

fn naive_abof(base: &[Vec<f64>], q: &[f64]) -> f64 {
    let mut values = Vec::new();
    for i in 0..base.len() {
        for j in i + 1..base.len() {
            let a: Vec<f64> = base[i].iter().zip(q).map(|(x, y)| x - y).collect();
            let b: Vec<f64> = base[j].iter().zip(q).map(|(x, y)| x - y).collect();
            let na: f64 = a.iter().map(|x| x * x).sum();
            let nb: f64 = b.iter().map(|x| x * x).sum();
            if na == 0.0 || nb == 0.0 {
                continue;
            }
            let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            values.push(dot / (na * nb));
        }
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64
}

fn naive_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &pi) in positive.iter().enumerate() {
        for (j, &pj) in positive.iter().enumerate() {
            if pi && !pj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn pts(v: &[&[f64]]) -> Vec<Vec<f64>> {
    v.iter().map(|p| p.to_vec()).collect()
}

#[test]
fn centroid_is_less_novel_than_far_point() {
    let base = pts(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
    let s = abod_scores(&base, &pts(&[&[0.5, 0.5], &[100.0, 100.0]])).unwrap();
    assert!(s[0] < s[1], "{s:?}");
}

#[test]
fn degenerate_abod_inputs_stay_finite() {
    let line = pts(&[&[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0], &[3.0, 0.0]]);
    let s = abod_scores(&line, &pts(&[&[5.0, 0.0]])).unwrap();
    assert!(s[0].is_finite());
    let dup = abod_scores(&line, &pts(&[&[1.0, 0.0]])).unwrap();
    assert!(dup[0].is_finite());
    assert!(abod_scores(&line[..2], &line).is_err());
    let same = pts(&[&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]]);
    assert_eq!(abod_scores(&same, &pts(&[&[1.0, 1.0]])), Err(EvalError::NoValidPairs(0)));
}

#[test]
fn auc_hand_cases() {
    let scores = [0.9, 0.8, 0.1, 0.2, 0.3, 0.15];
    let novel = [true, true, false, false, false, false];
    assert_eq!(auc(&scores, &novel).unwrap(), 1.0);
    assert_eq!(auc(&[0.4; 6], &novel).unwrap(), 0.5);
    assert_eq!(auc(&[0.1, 0.2], &[true, true]), Err(EvalError::SingleClass));
}

#[test]
fn translated_group_is_perfectly_novel() {
    let mut e = Vec::new();
    let mut labels = Vec::new();
    for i in 0..12 {
        let a = i as f64;
        e.push(vec![(a * 1.3).sin() * 0.1, (a * 0.7).cos() * 0.1]);
        labels.push(i % 3);
    }
    for p in e.iter_mut().zip(&labels).filter(|(_, &l)| l == 1).map(|(p, _)| p) {
        p[0] += 50.0;
    }
    let r = novelty_by_labels(&e, &labels).unwrap();
    assert_eq!(r.per_group[1], 1.0);
    assert!(novelty_by_labels(&e, &[0; 12]).is_err());
}

#[test]
fn linkage_hand_cases() {
    let line = pts(&[&[0.0], &[0.1], &[10.0], &[10.1]]);
    assert_eq!(agglomerative_cluster(&line, 2).unwrap(), vec![0, 0, 1, 1]);
    assert_eq!(agglomerative_cluster(&line, 4).unwrap(), vec![0, 1, 2, 3]);
    assert_eq!(agglomerative_cluster(&line, 1).unwrap(), vec![0; 4]);
    assert!(agglomerative_cluster(&line, 0).is_err());
    assert!(agglomerative_cluster(&line, 5).is_err());

    let dup = pts(&[&[0.0, 0.0], &[3.0, 1.0], &[0.0, 0.0], &[3.0, 1.0], &[7.0, -2.0]]);
    // once merges go past the duplicates every copy shares its cluster
    for k in 1..=3 {
        let l = agglomerative_cluster(&dup, k).unwrap();
        assert_eq!(l[0], l[2]);
        assert_eq!(l[1], l[3]);
    }
}

#[test]
fn accuracy_hand_cases() {
    // contingency [[2, 0], [1, 1]]
    assert_eq!(clustering_accuracy(&[0, 0, 1, 1], &[0, 0, 0, 1]).unwrap(), 0.75);
    assert_eq!(clustering_accuracy(&[2, 2, 0, 1], &[0, 0, 1, 2]).unwrap(), 1.0);
    let truth: Vec<usize> = (0..12).map(|i| i / 3).collect();
    assert_eq!(clustering_accuracy(&[0; 12], &truth).unwrap(), 0.25);
    assert_eq!(clustering_accuracy(&[], &[]), Err(EvalError::Empty));
}

/// Average linkage recomputed from the raw pairwise distances at every merge.
fn naive_linkage(points: &[Vec<f64>], k: usize) -> Vec<usize> {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
    while clusters.len() > k {
        let mut best = (f64::INFINITY, (usize::MAX, usize::MAX), 0, 0);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut sum = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        sum += dist(&points[i], &points[j]);
                    }
                }
                let d = sum / (clusters[a].len() * clusters[b].len()) as f64;
                let ka = clusters[a].iter().min().unwrap();
                let kb = clusters[b].iter().min().unwrap();
                let key = (*ka.min(kb), *ka.max(kb));
                if d < best.0 || (d == best.0 && key < best.1) {
                    best = (d, key, a, b);
                }
            }
        }
        let (_, _, a, b) = best;
        let merged = clusters.remove(b);
        clusters[a].extend(merged);
    }
    clusters.sort_by_key(|c| *c.iter().min().unwrap());
    let mut labels = vec![0; points.len()];
    for (l, c) in clusters.iter().enumerate() {
        for &i in c {
            labels[i] = l;
        }
    }
    labels
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..n {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn arb_points(max: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, dim), 3..=max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn abod_matches_triple_loop(base in arb_points(50, 3), queries in arb_points(6, 3)) {
        let mut queries = queries;
        queries.push(base[0].clone());
        let fast = abod_scores(&base, &queries).unwrap();
        for (q, s) in queries.iter().zip(&fast) {
            let naive = -naive_abof(&base, q);
            prop_assert!((s - naive).abs() <= 1e-9 * naive.abs().max(1e-300), "{s} vs {naive}");
        }
    }

    #[test]
    fn auc_matches_pair_counting(
        data in prop::collection::vec((0u8..6, any::<bool>()), 2..=20)
    ) {
        let scores: Vec<f64> = data.iter().map(|d| d.0 as f64 / 2.0).collect();
        let positive: Vec<bool> = data.iter().map(|d| d.1).collect();
        let n_pos = positive.iter().filter(|&&p| p).count();
        prop_assume!(n_pos > 0 && n_pos < positive.len());
        let a = auc(&scores, &positive).unwrap();
        prop_assert!((a - naive_auc(&scores, &positive)).abs() < 1e-12);
        let squashed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp()).collect();
        prop_assert!((auc(&squashed, &positive).unwrap() - a).abs() < 1e-12);
    }

    #[test]
    fn linkage_matches_recomputation(points in arb_points(8, 2), k in 1usize..8) {
        let k = k.min(points.len());
        prop_assert_eq!(agglomerative_cluster(&points, k).unwrap(), naive_linkage(&points, k));
    }

    #[test]
    fn accuracy_matches_enumeration(
        data in prop::collection::vec((0usize..4, 0usize..4), 1..30)
    ) {
        let pred: Vec<usize> = data.iter().map(|d| d.0).collect();
        let truth: Vec<usize> = data.iter().map(|d| d.1).collect();
        let best = permutations(4)
            .iter()
            .map(|perm| pred.iter().zip(&truth).filter(|(p, t)| perm[**p] == **t).count())
            .max()
            .unwrap();
        let acc = clustering_accuracy(&pred, &truth).unwrap();
        prop_assert!((acc - best as f64 / pred.len() as f64).abs() < 1e-12);
        let relabeled: Vec<usize> = pred.iter().map(|p| 3 - p).collect();
        prop_assert!((clustering_accuracy(&relabeled, &truth).unwrap() - acc).abs() < 1e-12);
    }

    #[test]
    fn projection_of_planar_points_is_isometric(
        uv in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..20)
    ) {
        let (e1, e2) = ([0.6, 0.0, 0.8], [0.0, 1.0, 0.0]);
        let points: Vec<Vec<f64>> = uv
            .iter()
            .map(|(u, v)| (0..3).map(|d| 1.0 + u * e1[d] + v * e2[d]).collect())
            .collect();
        let p = project_2d(&points).unwrap();
        for i in 0..points.len() {
            for j in 0..points.len() {
                let d3: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let (a, b) = (p.coords[i], p.coords[j]);
                let d2 = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                prop_assert!((d3 - d2).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn projection_edge_cases() {
    let rank1 = pts(&[&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0], &[-1.0, -2.0, -3.0]]);
    let p = project_2d(&rank1).unwrap();
    assert!(!p.degenerate);
    assert!(p.coords.iter().all(|c| c[1] == 0.0));
    let flat = project_2d(&pts(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap();
    assert!(flat.degenerate);
    assert!(flat.coords.iter().all(|c| *c == [0.0, 0.0]));
    assert_eq!(
        project_2d(&pts(&[&[3.0, 4.0], &[-3.0, -4.0]])).unwrap().coords,
        project_2d(&pts(&[&[3.0, 4.0], &[-3.0, -4.0]])).unwrap().coords
    );
}

/// Straight single-lane drive at constant speed, sampled every half second.
fn straight_drive(speed: f64) -> Scenario {
    let lane = vec![[0.0, 100.0], [200.0, 100.0]];
    let graph = TopologyGraph::new(vec![LanePiece { polyline: lane.clone() }], vec![]).unwrap();
    let route = RouteLabeling::new(vec![2], &graph).unwrap();
    let xyt: Vec<[f64; 3]> = (0..13)
        .map(|k| {
            let t = k as f64 * 0.5;
            [20.0 + speed * t, 100.0, t]
        })
        .collect();
    Scenario::new(
        render_lanes(16, 12.5, &[lane]).unwrap(),
        Trajectory::from_xyt(&xyt).unwrap(),
        graph,
        route,
        Category::SingleLane,
    )
    .unwrap()
}

#[test]
fn stability_on_duplicates_is_zero() {
    let dataset = Dataset::new(vec![straight_drive(12.0); 5]).unwrap();
    let e = pts(&[&[0.0], &[1.0], &[2.0], &[3.0], &[4.0]]);
    assert_eq!(feature_stability(&e, &dataset, 3).unwrap(), Stability::default());
    assert!(feature_stability(&e, &dataset, 5).is_err());
}

#[test]
fn stability_follows_the_neighborhoods() {
    let dataset = Dataset::new(vec![
        straight_drive(10.0),
        straight_drive(10.0),
        straight_drive(20.0),
        straight_drive(20.0),
    ])
    .unwrap();
    let blobs = pts(&[&[0.0, 0.0], &[0.0, 0.1], &[10.0, 0.0], &[10.0, 0.1]]);
    assert_eq!(feature_stability(&blobs, &dataset, 1).unwrap().d_v, 0.0);
    let interleaved = pts(&[&[0.0, 0.0], &[10.0, 0.0], &[0.0, 0.1], &[10.0, 0.1]]);
    let s = feature_stability(&interleaved, &dataset, 1).unwrap();
    assert_eq!(s.d_v, 10.0);
    assert_eq!(s.d_a_lon, 0.0);
    assert!(s.d_t > 0.0);
}

#[test]
fn displacement_resamples_to_equal_length() {
    let a = vec![[0.0, 0.0], [2.0, 0.0]];
    let b = vec![[0.0, 1.0], [1.0, 1.0], [2.0, 1.0]];
    assert_eq!(resample(&a, 3), vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
    assert_eq!(average_displacement(&a, &b), 1.0);
}

#[test]
fn nearest_neighbors_break_ties_by_index() {
    let p = pts(&[&[0.0], &[1.0], &[-1.0], &[2.0]]);
    assert_eq!(nearest_neighbors(&p, 0, 3), vec![1, 2, 3]);
}

#[test]
fn report_uses_level_keys() {
    let r = EvalReport {
        auc_c: Some(0.5),
        ..EvalReport::default()
    };
    let json = serde_json::to_string(&r).unwrap();
    assert!(json.contains("\"auc_C\":0.5"));
    assert!(!json.contains("auc_G"));
    assert!(json.contains("\"d_psi\""));
}
