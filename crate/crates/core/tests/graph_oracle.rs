mod common;

use common::{brute_force, random_graph};
use dbmc::analysis::validate_chain;
use dbmc::graph::{scale_graph, solve_shortest_paths};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_exhaustive_enumeration(seed in any::<u64>(), n in 2usize..=12, sources in 1usize..=2, p in 0.0f64..0.35) {
        let g = random_graph(seed, n, sources.min(n - 1), p);
        let sol = solve_shortest_paths(&g).unwrap();
        let brute = brute_force(&g);
        for i in 0..n {
            prop_assert!((sol.distances[i] - brute.distances[i]).abs() <= 1e-12);
        }
        prop_assert_eq!(&sol.true_parents, &brute.true_parents);
        prop_assert_eq!(sol.effective_diameter, brute.effective_diameter);
        match (sol.path_gap, brute.path_gap) {
            (None, None) => {}
            (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12),
            other => prop_assert!(false, "gap mismatch {:?}", other),
        }
    }

    #[test]
    fn parents_are_tight_and_competitors_lose_by_the_gap(seed in any::<u64>(), n in 2usize..=12) {
        let g = random_graph(seed, n, 1, 0.3);
        let sol = solve_shortest_paths(&g).unwrap();
        for i in g.non_sources() {
            for (_, e) in g.out_edges(i) {
                let slack = sol.distances[e.head] + e.weight - sol.distances[i];
                if sol.true_parents[i].contains(&e.head) {
                    prop_assert_eq!(slack, 0.0);
                } else {
                    prop_assert!(slack >= sol.path_gap.unwrap());
                }
            }
        }
    }

    #[test]
    fn chain_realizes_distance(seed in any::<u64>(), n in 2usize..=12, sources in 1usize..=3) {
        let g = random_graph(seed, n, sources.min(n - 1), 0.25);
        let sol = solve_shortest_paths(&g).unwrap();
        for i in g.non_sources() {
            let chain = sol.chain_to(i);
            prop_assert!(g.is_source(chain[0]));
            prop_assert_eq!(*chain.last().unwrap(), i);
            prop_assert!(chain.len() <= sol.effective_diameter);
            prop_assert!(validate_chain(&g, &sol, &chain).is_ok());
            let length: f64 = chain
                .windows(2)
                .map(|w| g.edges()[g.edge_index(w[1], w[0]).unwrap()].weight)
                .sum();
            prop_assert_eq!(length, sol.distances[i]);
        }
    }

    #[test]
    fn scaling_keeps_argmin_structure(seed in any::<u64>(), n in 2usize..=12, factor in 0.01f64..=1.0) {
        let g = random_graph(seed, n, 1, 0.3);
        let sol = solve_shortest_paths(&g).unwrap();
        let scaled = solve_shortest_paths(&scale_graph(&g, factor).unwrap()).unwrap();
        prop_assert_eq!(&scaled.true_parents, &sol.true_parents);
        prop_assert_eq!(scaled.effective_diameter, sol.effective_diameter);
        for i in 0..n {
            prop_assert!((scaled.distances[i] - factor * sol.distances[i]).abs() <= 1e-12 * sol.distances[i].max(1.0));
        }
    }
}
