mod oracles;

use adaptox::graph::{louvain, partition_modularity, Partition, WordGraph};
use proptest::prelude::*;

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("n{i:02}")).collect()
}

fn graph(n: usize, edges: &[(usize, usize, f64)]) -> WordGraph {
    let nodes = names(n);
    let named: Vec<(String, String, f64)> =
        edges.iter().map(|&(u, v, w)| (nodes[u].clone(), nodes[v].clone(), w)).collect();
    WordGraph::from_edges(&nodes, &named).unwrap()
}

fn assignment(p: &Partition, n: usize) -> Vec<usize> {
    names(n).iter().map(|t| p.assignment[t]).collect()
}

#[test]
fn two_triangles_match_the_exhaustive_optimum() {
    let mut e = vec![];
    for base in [0, 3] {
        e.extend([(base, base + 1, 1.0), (base, base + 2, 1.0), (base + 1, base + 2, 1.0)]);
    }
    e.push((2, 3, 0.76));
    let (best_q, optima) = oracles::best_partitions(6, &e, 1.0);
    assert_eq!(optima.len(), 1);
    assert!(oracles::same_grouping(&optima[0], &[0, 0, 0, 1, 1, 1]));
    let g = graph(6, &e);
    for seed in 0..20 {
        let p = louvain(&g, seed, 1.0);
        assert!(oracles::same_grouping(&assignment(&p, 6), &optima[0]));
        assert!((p.modularity - best_q).abs() < 1e-9);
    }
}

#[test]
fn complete_graph_is_one_community() {
    let n = 6;
    let mut e = vec![];
    for u in 0..n {
        for v in u + 1..n {
            e.push((u, v, 1.0));
        }
    }
    let whole = oracles::modularity(n, &e, &vec![0; n], 1.0);
    oracles::for_each_partition(n, &mut |p| {
        assert!(oracles::modularity(n, &e, p, 1.0) <= whole + 1e-12);
    });
    for seed in 0..10 {
        assert_eq!(louvain(&graph(n, &e), seed, 1.0).community_count(), 1);
    }
}

#[test]
fn isolated_nodes_stay_alone() {
    let g = graph(5, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]);
    let p = louvain(&g, 7, 1.0);
    let a = assignment(&p, 5);
    assert_ne!(a[3], a[4]);
    assert!(a[3] != a[0] && a[4] != a[0]);
}

#[test]
fn planted_blocks_are_recovered() {
    let truth: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
    let mut exact = 0;
    for seed in 0..100 {
        let e = oracles::planted_two_blocks(seed, 20, 0.9, 0.05);
        let g = graph(40, &e);
        let p = louvain(&g, seed, 1.0);
        let q = oracles::modularity(40, &e, &assignment(&p, 40), 1.0);
        assert!((q - p.modularity).abs() < 1e-9);
        exact += usize::from(oracles::same_grouping(&assignment(&p, 40), &truth));
    }
    assert!(exact >= 95, "recovered {exact}/100");
}

#[test]
fn same_seed_same_partition() {
    let e = oracles::planted_two_blocks(3, 15, 0.5, 0.2);
    let g = graph(30, &e);
    assert_eq!(louvain(&g, 42, 1.0), louvain(&g, 42, 1.0));
}

fn small_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>)> {
    (2usize..=8).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        let m = pairs.len();
        (
            Just(n),
            proptest::collection::vec(proptest::option::weighted(0.4, 0.1f64..2.0), m).prop_map(move |ws| {
                pairs
                    .iter()
                    .zip(ws)
                    .filter_map(|(&(u, v), w)| w.map(|w| (u, v, w)))
                    .collect::<Vec<_>>()
            }),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn modularity_is_consistent_and_bounded(
        (n, e) in small_graph(),
        seed in any::<u64>(),
        resolution in prop_oneof![Just(1.0), 0.5f64..1.5],
    ) {
        let g = graph(n, &e);
        let p = louvain(&g, seed, resolution);
        let recomputed = oracles::modularity(n, &e, &assignment(&p, n), resolution);
        prop_assert!((p.modularity - recomputed).abs() < 1e-9);
        prop_assert!((partition_modularity(&g, &p, resolution) - recomputed).abs() < 1e-9);
        let singles: Vec<usize> = (0..n).collect();
        prop_assert!(p.modularity >= oracles::modularity(n, &e, &singles, resolution) - 1e-12);
        let (best, _) = oracles::best_partitions(n, &e, resolution);
        prop_assert!(p.modularity <= best + 1e-9);
        prop_assert!(p.modularity >= -0.5 - 1e-12 && p.modularity <= 1.0);
        if resolution == 1.0 && !e.is_empty() {
            prop_assert!(p.modularity >= -1e-12);
        }
    }
}
