use linkpred::dataset::{LabeledPair, PairType};
use linkpred::graph::{GraphSnapshot, TemporalGraph};
use linkpred::model::{predict_pairs, train, ArchitectureConfig, ConvStage, ModelParams, PredictConfig, TrainConfig};
use linkpred::nn::NadamConfig;
use linkpred::probe::{capture_sortpool_activations, export_activations, read_activations, ActivationRecord};
use linkpred::subgraph::{build_tensors, EnclosingSubgraph};

fn toy_config() -> ArchitectureConfig {
    ArchitectureConfig {
        gcn_channels: vec![8, 8, 1],
        sort_k: 6,
        conv_stack: vec![ConvStage::Conv { filters: 4 }, ConvStage::Conv { filters: 8 }, ConvStage::MaxPool],
        conv_kernel: 5,
        pool_window: 2,
        pool_stride: 2,
        dense_sizes: vec![16, 1],
        l_max: 4,
        hops: 1,
        keep_fraction: 1.0,
    }
}

/// Two cliques joined by one edge; pairs inside a clique share neighbors.
fn two_cliques() -> GraphSnapshot {
    let mut triples = Vec::new();
    for block in [0u32, 6] {
        for u in block..block + 6 {
            for v in u + 1..block + 6 {
                if (u + v) % 4 != 1 {
                    triples.push((u, v, 0));
                }
            }
        }
    }
    triples.push((5, 6, 0));
    triples.push((12, 13, 0));
    TemporalGraph::from_triples(16, &triples).unwrap().snapshot(0)
}

fn memorizable_pairs(snap: &GraphSnapshot) -> Vec<LabeledPair> {
    let positives = snap
        .edges()
        .filter(|&(u, v)| v < 12 && u / 6 == v / 6)
        .collect::<Vec<_>>();
    let mut pairs = Vec::new();
    // the caller removes these clique edges from the input graph
    for &(u, v) in positives.iter().take(5) {
        pairs.push(LabeledPair::classify(snap, u, v, 1).unwrap());
    }
    for (u, v) in [(0, 9), (1, 10), (2, 11), (3, 8), (4, 12)] {
        pairs.push(LabeledPair::classify(snap, u, v, 0).unwrap());
    }
    pairs
}

fn without_edges(snap: &GraphSnapshot, removed: &[LabeledPair]) -> GraphSnapshot {
    let triples: Vec<(u32, u32, u32)> = snap
        .edges()
        .filter(|&(u, v)| !removed.iter().any(|p| (p.u as usize, p.v as usize) == (u, v)))
        .map(|(u, v)| (u as u32, v as u32, 0))
        .collect();
    TemporalGraph::from_triples(snap.num_nodes(), &triples).unwrap().snapshot(0)
}

#[test]
fn loss_falls_on_memorizable_set() {
    let full = two_cliques();
    let pairs = memorizable_pairs(&full);
    let input = without_edges(&full, &pairs);
    let model = ModelParams::build(toy_config(), 1).unwrap();
    let config = TrainConfig {
        optimizer: NadamConfig {
            learning_rate: 1e-3,
            ..NadamConfig::default()
        },
        epochs: 200,
        validation_fraction: 0.0,
        seed: 4,
        ..TrainConfig::default()
    };
    let (trained, history) = train(&model, &pairs, &input, &config).unwrap();
    assert_eq!(history.epochs.len(), 200);
    let first = history.epochs[0].mean_loss;
    let last = history.epochs[199].mean_loss;
    assert!(last < 0.5 * first, "loss {first} -> {last}");

    let uv: Vec<(u32, u32)> = pairs.iter().map(|p| (p.u, p.v)).collect();
    let scores = predict_pairs(&trained, &input, &uv, &PredictConfig::default()).unwrap();
    for (p, s) in pairs.iter().zip(&scores) {
        assert_eq!(p.label == 1, *s > 0.5, "pair {p:?} scored {s}");
    }
}

#[test]
fn training_is_reproducible() {
    let full = two_cliques();
    let pairs = memorizable_pairs(&full);
    let input = without_edges(&full, &pairs);
    let model = ModelParams::build(toy_config(), 2).unwrap();
    let config = TrainConfig {
        epochs: 3,
        seed: 8,
        ..TrainConfig::default()
    };
    let a = train(&model, &pairs, &input, &config).unwrap();
    let b = train(&model, &pairs, &input, &config).unwrap();
    assert_eq!(a, b);
}

#[test]
fn parallel_prediction_matches_serial() {
    let snap = two_cliques();
    let model = ModelParams::build(ArchitectureConfig { keep_fraction: 0.5, ..toy_config() }, 3).unwrap();
    let pairs: Vec<(u32, u32)> = (0..16u32)
        .flat_map(|u| (u + 1..16).map(move |v| (u, v)))
        .filter(|&(u, v)| !snap.has_edge(u as usize, v as usize))
        .collect();
    let serial = predict_pairs(&model, &snap, &pairs, &PredictConfig::default()).unwrap();
    for workers in [2, 3, 7] {
        let config = PredictConfig {
            workers,
            ..PredictConfig::default()
        };
        assert_eq!(predict_pairs(&model, &snap, &pairs, &config).unwrap(), serial);
    }
    assert!(serial.iter().all(|&s| s > 0.0 && s < 1.0));

    let zeroed = PredictConfig {
        type2_zero: true,
        ..PredictConfig::default()
    };
    let two = [(14, 15), (0, 14)];
    let scores = predict_pairs(&model, &snap, &two, &zeroed).unwrap();
    let plain = predict_pairs(&model, &snap, &two, &PredictConfig::default()).unwrap();
    assert_eq!(scores[0], 0.0);
    assert!(plain[0] > 0.0);
    assert_eq!(scores[1], plain[1]);
}

#[test]
fn capture_agrees_with_forward() {
    let snap = two_cliques();
    let model = ModelParams::build(ArchitectureConfig::paper(30), 5).unwrap();
    let input = model.encode_pair(&snap, 0, 9, 1).unwrap();
    let before = model.forward(&input).unwrap();
    let captured = capture_sortpool_activations(&model, &input).unwrap();
    assert_eq!(captured, model.sortpool_activations(&input).unwrap());
    assert_eq!(captured.shape(), &[30, 513]);
    assert_eq!(model.forward(&input).unwrap().to_bits(), before.to_bits());

    let other = model.encode_pair(&snap, 0, 14, 1).unwrap();
    assert_ne!(capture_sortpool_activations(&model, &other).unwrap(), captured);
}

#[test]
fn isolated_pair_capture_is_mostly_padding() {
    let model = ModelParams::build(ArchitectureConfig::paper(30), 6).unwrap();
    let sub = EnclosingSubgraph {
        nodes: vec![0, 1],
        edges: vec![],
        drnl_labels: vec![1, 1],
        h: 1,
    };
    let m = capture_sortpool_activations(&model, &build_tensors(&sub, 10)).unwrap();
    let zero_rows = (0..m.rows()).filter(|&i| m.row(i).iter().all(|&x| x == 0.0)).count();
    assert!(zero_rows >= 30 - 2);
}

#[test]
fn export_five_examples_at_paper_size() {
    let snap = two_cliques();
    let model = ModelParams::build(ArchitectureConfig::paper(200), 7).unwrap();
    let records: Vec<ActivationRecord> = [(0u32, 9u32), (1, 10), (2, 11), (3, 8), (14, 15)]
        .into_iter()
        .enumerate()
        .map(|(i, (u, v))| {
            let input = model.encode_pair(&snap, u as usize, v as usize, i as u64).unwrap();
            ActivationRecord {
                u,
                v,
                label: (i % 2) as u8,
                pair_type: if u == 14 { PairType::Isolated } else { PairType::Connected },
                seed: i as u64,
                activations: capture_sortpool_activations(&model, &input).unwrap(),
            }
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("act.tsv");
    export_activations(&records, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.split("\n\n").count(), 1 + 5);
    for block in text.split("\n\n").skip(1) {
        assert_eq!(block.lines().count(), 1 + 200);
    }
    assert_eq!(read_activations(&path).unwrap(), records);
}
