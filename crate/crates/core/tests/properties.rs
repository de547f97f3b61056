use std::collections::BTreeSet;

use feastnet::coarsen::{reorder_features, restore_features, CoarseningHierarchy};
use feastnet::conv::{compute_assignments, forward, FeaStConvParams};
use feastnet::graph::{geodesic_distances, one_ring};
use feastnet::toy::{deform, icosphere};
use feastnet::{FeatureMatrix, Graph};
use proptest::prelude::*;

/// Random connected graph: a spanning path plus extra edges.
fn arb_graph(max_n: usize) -> impl Strategy<Value = Graph> {
    (2..max_n).prop_flat_map(|n| {
        let extra = prop::collection::vec((0..n, 0..n, 0.1f64..3.0), 0..3 * n);
        let path_w = prop::collection::vec(0.1f64..3.0, n - 1);
        (Just(n), path_w, extra).prop_map(|(n, pw, extra)| {
            let mut edges: Vec<_> = pw.iter().enumerate().map(|(i, &w)| (i, i + 1, w)).collect();
            edges.extend(extra.into_iter().filter(|(i, j, _)| i != j));
            Graph::from_weighted_edges(n, &edges).unwrap()
        })
    })
}

fn arb_matrix(rows: usize, cols: usize) -> impl Strategy<Value = FeatureMatrix<f64>> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |v| FeatureMatrix::from_vec(rows, cols, v).unwrap())
}

fn arb_conv(m: usize, d: usize, e: usize) -> impl Strategy<Value = FeaStConvParams<f64>> {
    (any::<u64>(), any::<bool>()).prop_map(move |(seed, ti)| {
        let mut p = FeaStConvParams::init(m, d, e, seed, ti);
        // larger steering parameters so assignments are far from uniform
        p.u_mut().iter_mut().for_each(|u| *u *= 5.0);
        p.c_mut().iter_mut().enumerate().for_each(|(k, c)| *c += k as f64 * 0.3);
        p
    })
}

fn neighborhood(g: &Graph, i: usize) -> BTreeSet<usize> {
    g.neighbors(i).iter().copied().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_is_symmetric_and_self_inclusive(g in arb_graph(40)) {
        for i in 0..g.n() {
            let nb = g.neighbors(i);
            prop_assert!(nb.contains(&i));
            prop_assert!(nb.windows(2).all(|w| w[0] < w[1]));
            for &j in nb {
                prop_assert_eq!(g.weight(i, j), g.weight(j, i));
            }
        }
        let degree_sum: f64 = g.degrees().iter().sum();
        let edge_sum: f64 = g.edges().map(|(_, _, w)| w).sum();
        prop_assert!((degree_sum - 2.0 * edge_sum).abs() < 1e-9);
    }

    #[test]
    fn ring_neighborhoods_grow_with_k(g in arb_graph(30), k in 1usize..4) {
        let small = g.ring_k(k).unwrap();
        let large = g.ring_k(k + 1).unwrap();
        for i in 0..g.n() {
            let a = neighborhood(&small, i);
            let b = neighborhood(&large, i);
            prop_assert!(a.is_subset(&b));
            for &j in &a {
                prop_assert!(neighborhood(&small, j).contains(&i), "k-ring is symmetric");
            }
        }
    }

    #[test]
    fn assignments_are_normalized(
        (g, x, p) in arb_graph(25).prop_flat_map(|g| {
            let n = g.n();
            (Just(g), arb_matrix(n, 3), (1usize..5).prop_flat_map(|m| arb_conv(m, 3, 2)))
        })
    ) {
        let q = compute_assignments(&p, &x, &g).unwrap();
        for (_, _, qm) in q.iter() {
            let s: f64 = qm.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
            prop_assert!(qm.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn convolution_is_permutation_equivariant(
        (g, x, p, perm) in arb_graph(25).prop_flat_map(|g| {
            let n = g.n();
            let perm = Just((0..n).collect::<Vec<_>>()).prop_shuffle();
            (Just(g), arb_matrix(n, 3), arb_conv(3, 3, 4), perm)
        })
    ) {
        let y = forward(&p, &x, &g).unwrap();
        let yp = forward(&p, &x.gather_rows(&perm), &g.permuted(&perm)).unwrap();
        prop_assert!(yp.max_abs_diff(&y.gather_rows(&perm)) <= 1e-12);
    }

    #[test]
    fn tree_reordering_round_trips(
        (g, levels, x) in arb_graph(60).prop_flat_map(|g| {
            let n = g.n();
            (Just(g), 1usize..3, arb_matrix(n, 2))
        })
    ) {
        prop_assume!(g.n() >= 4);
        let h = CoarseningHierarchy::build(&g, levels).unwrap();
        let tree = reorder_features(&x, h.ordering(0), h.fake_mask(0)).unwrap();
        prop_assert_eq!(tree.rows(), h.padded_count(0));
        prop_assert_eq!(tree.rows(), h.padded_count(levels) << levels);
        let back = restore_features(&tree, h.ordering(0), h.fake_mask(0)).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn coarsening_conserves_weight_and_matches_neighbors(g in arb_graph(80)) {
        prop_assume!(g.n() >= 4);
        let h = CoarseningHierarchy::build(&g, 2).unwrap();
        for l in 0..2 {
            let (fine, coarse) = (h.graph(l), h.graph(l + 1));
            prop_assert!((fine.total_weight() - coarse.total_weight()).abs() <= 1e-9 * fine.total_weight().max(1.0));
            let m = h.matching(l);
            prop_assert_eq!(m.n_clusters(), coarse.n());
            for (c, members) in m.members.iter().enumerate() {
                prop_assert!(matches!(members.len(), 1 | 2));
                if let [a, b] = members[..] {
                    prop_assert!(fine.weight(a, b).is_some_and(|w| w > 0.0));
                }
                for &v in members {
                    prop_assert_eq!(m.cluster_of[v], c);
                }
            }
            // pairs at positions 2p, 2p+1 are exactly the clusters at level l+1
            let (fo, co) = (h.ordering(l), h.ordering(l + 1));
            for (p, &c) in co.iter().enumerate() {
                let kids: Vec<usize> = [fo[2 * p], fo[2 * p + 1]].into_iter().filter(|&v| v < fine.n()).collect();
                if c < coarse.n() {
                    let mut want = m.members[c].clone();
                    want.sort_unstable();
                    prop_assert_eq!(kids, want);
                } else {
                    prop_assert!(kids.is_empty());
                }
            }
        }
    }

    #[test]
    fn geodesics_form_a_metric(seed in any::<u64>(), a in 0usize..42, b in 0usize..42, c in 0usize..42) {
        let mesh = deform(&icosphere::<f64>(1), 0.2, seed);
        prop_assert_eq!(mesh.n_vertices(), 42);
        let da = geodesic_distances(&mesh, a).unwrap();
        let db = geodesic_distances(&mesh, b).unwrap();
        prop_assert_eq!(da[a], 0.0);
        prop_assert!((da[b] - db[a]).abs() <= 1e-12);
        prop_assert!(da[c] <= da[b] + db[c] + 1e-12);
        for (i, j) in mesh.edges() {
            let di = geodesic_distances(&mesh, i).unwrap();
            prop_assert!(di[j] <= mesh.edge_length(i, j) + 1e-12);
        }
        prop_assert!(one_ring(&mesh).n() == 42);
    }
}
