use std::collections::HashSet;
use std::path::Path;

use linkpred::dataset::{classify_pair, sample_training_pairs, PairType};
use linkpred::graph::{EdgeEvent, TemporalGraph};
use proptest::prelude::*;

fn graph_strategy(max_nodes: usize, max_events: usize, max_day: u32) -> impl Strategy<Value = TemporalGraph> {
    (2..=max_nodes).prop_flat_map(move |n| {
        prop::collection::vec((0..n as u32, 0..n as u32, 0..=max_day), 0..=max_events).prop_map(move |raw| {
            let events = raw
                .into_iter()
                .filter(|(u, v, _)| u != v)
                .map(|(u, v, day)| EdgeEvent { u, v, day })
                .collect();
            TemporalGraph::new(n, events).unwrap()
        })
    })
}

fn sorted_events(g: &TemporalGraph) -> Vec<(u32, u32, u32)> {
    let mut e: Vec<_> = g.events().iter().map(|e| (e.u, e.v, e.day)).collect();
    e.sort_unstable();
    e
}

proptest! {
    #[test]
    fn snapshots_grow_with_cutoff(g in graph_strategy(15, 60, 40), a in 0u32..45, b in 0u32..45) {
        let (early, late) = (g.snapshot(a.min(b)), g.snapshot(a.max(b)));
        for (u, v) in early.edges() {
            prop_assert!(late.has_edge(u, v));
            prop_assert!(late.multiplicity(u, v) >= early.multiplicity(u, v));
        }
        prop_assert!(early.num_events() <= late.num_events());
    }

    #[test]
    fn adjacency_is_symmetric(g in graph_strategy(15, 60, 40), cutoff in 0u32..45) {
        let s = g.snapshot(cutoff);
        for u in 0..s.num_nodes() {
            for &w in s.neighbors(u).unwrap() {
                let w = w as usize;
                prop_assert!(s.has_edge(w, u));
                prop_assert!(s.neighbors(w).unwrap().contains(&(u as u32)));
                prop_assert_eq!(s.multiplicity(u, w), s.multiplicity(w, u));
            }
        }
    }

    #[test]
    fn handshake(g in graph_strategy(15, 60, 40), cutoff in 0u32..45) {
        let s = g.snapshot(cutoff);
        let degree_sum: usize = (0..s.num_nodes()).map(|u| s.degree(u).unwrap()).sum();
        let weighted_sum: usize = (0..s.num_nodes()).map(|u| s.weighted_degree(u).unwrap()).sum();
        prop_assert_eq!(degree_sum, 2 * s.num_edges());
        prop_assert_eq!(weighted_sum, 2 * s.num_events());
        let expected_events = g.events().iter().filter(|e| e.day <= cutoff).count();
        prop_assert_eq!(s.num_events(), expected_events);
        let distinct: HashSet<(u32, u32)> = g
            .events()
            .iter()
            .filter(|e| e.day <= cutoff)
            .map(|e| (e.u.min(e.v), e.u.max(e.v)))
            .collect();
        prop_assert_eq!(s.num_edges(), distinct.len());
    }

    #[test]
    fn text_round_trip(g in graph_strategy(15, 60, 40)) {
        let mut buf = Vec::new();
        g.write_to(&mut buf).unwrap();
        let (back, summary) = TemporalGraph::read_from(&buf[..], Path::new("mem")).unwrap();
        prop_assert_eq!(back.num_nodes(), g.num_nodes());
        prop_assert_eq!(summary.accepted, g.events().len());
        prop_assert_eq!(sorted_events(&back), sorted_events(&g));
    }

    #[test]
    fn training_pairs_are_sound(g in graph_strategy(25, 120, 20), n_pairs in 1usize..12, seed in any::<u64>()) {
        let (input, target) = (g.snapshot(9), g.snapshot(20));
        let sampled = sample_training_pairs(&input, &target, n_pairs, seed);
        prop_assume!(sampled.is_ok());
        let pairs = sampled.unwrap();
        prop_assert_eq!(pairs.len(), n_pairs);
        let positives = pairs.iter().filter(|p| p.label == 1).count();
        prop_assert_eq!(positives, n_pairs.div_ceil(2));
        let mut seen = HashSet::new();
        for p in &pairs {
            let (u, v) = (p.u as usize, p.v as usize);
            prop_assert!(u != v);
            prop_assert!(seen.insert((u.min(v), u.max(v))));
            prop_assert!(!input.has_edge(u, v));
            prop_assert_eq!(p.label == 1, target.has_edge(u, v));
            let t = classify_pair(&input, u, v).unwrap();
            prop_assert_eq!(t, p.pair_type);
            prop_assert_ne!(t, PairType::Isolated);
        }
        let again = sample_training_pairs(&input, &target, n_pairs, seed).unwrap();
        prop_assert_eq!(again, pairs);
    }
}
