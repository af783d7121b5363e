mod common;

use exom::graphs::{augmented_graph, AugmentedGraph, CutStrategy};
use exom::scm::zoo;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{check_zoo_boundaries, d_separated_moral};

/// A DAG on `n` nodes: edges only go from lower to higher positions of a
/// random permutation.
fn dag_strategy() -> impl Strategy<Value = AugmentedGraph> {
    (2usize..=8)
        .prop_flat_map(|n| {
            let pairs = n * (n - 1) / 2;
            (
                Just(n),
                Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
                proptest::collection::vec(proptest::bool::weighted(0.35), pairs),
            )
        })
        .prop_map(|(n, perm, bits)| {
            let mut edges = Vec::new();
            let mut k = 0;
            for i in 0..n {
                for j in i + 1..n {
                    if bits[k] {
                        edges.push((perm[i], perm[j]));
                    }
                    k += 1;
                }
            }
            AugmentedGraph::dag(n, &edges)
        })
}

fn triple(n: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>, Vec<usize>)> {
    proptest::collection::vec(0u8..3, n).prop_filter_map("a and b non-empty", |roles| {
        let pick = |r: u8| -> Vec<usize> { (0..roles.len()).filter(|&i| roles[i] == r).collect() };
        let (a, b, z) = (pick(0), pick(1), pick(2));
        (!a.is_empty() && !b.is_empty()).then_some((a, b, z))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn bayes_ball_matches_moralization(
        (g, (a, b, z)) in dag_strategy().prop_flat_map(|g| { let n = g.n_nodes(); (Just(g), triple(n)) })
    ) {
        prop_assert!(g.is_acyclic());
        prop_assert_eq!(g.d_separated(&a, &b, &z), d_separated_moral(&g, &a, &b, &z));
    }

    #[test]
    fn d_separation_is_symmetric(
        (g, (a, b, z)) in dag_strategy().prop_flat_map(|g| { let n = g.n_nodes(); (Just(g), triple(n)) })
    ) {
        prop_assert_eq!(g.d_separated(&a, &b, &z), g.d_separated(&b, &a, &z));
    }

    #[test]
    fn mutilation_keeps_acyclicity_and_removes_only_incoming_edges(
        g in dag_strategy(), t in 0usize..8
    ) {
        let target = t % g.n_nodes();
        for s in [CutStrategy::AllCut, CutStrategy::NoCut, CutStrategy::EndoCut] {
            let m = g.mutilate(&[target], s).unwrap();
            prop_assert!(m.is_acyclic());
            for (a, b) in m.edges() {
                prop_assert!(g.has_edge(a, b));
            }
            for (a, b) in g.edges() {
                if b != target {
                    prop_assert!(m.has_edge(a, b));
                }
            }
        }
    }
}

#[test]
fn zoo_boundaries_are_minimal_and_united_per_submodel() {
    let checked = check_zoo_boundaries(&mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    assert!(checked > 0);
}

#[test]
fn intervened_variables_shield_their_ancestors_under_all_cut() {
    // V1 -> V2 -> V3 with U_i -> V_i; do(V2) removes every path from U1 to V3.
    let scm = zoo::load("CHAIN-LIN-3").unwrap();
    let graph = augmented_graph(&scm);
    let g = graph.mutilate(&[1], CutStrategy::AllCut).unwrap();
    assert!(d_separated_moral(&g, &[graph.exo_node(0)], &[2], &[]));
    assert!(g.d_separated(&[graph.exo_node(0)], &[2], &[]));
}
