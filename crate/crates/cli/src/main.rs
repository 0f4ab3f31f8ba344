mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use linkpred::baseline::{baseline_predict, baseline_train, compute_pair_features, BaselineParams, PairFeatures};
use linkpred::checkpoint::{load_checkpoint_for, save_checkpoint};
use linkpred::dataset::{
    classify_pair, load_eval_pairs, load_ground_truth, load_labeled_pairs, load_pair_types, make_split,
    sample_training_pairs, write_labeled_pairs, LabeledPair, PairType,
};
use linkpred::graph::{year_cutoff_day, GraphSnapshot, TemporalGraph};
use linkpred::metrics::{auc, evaluate};
use linkpred::model::{predict_pairs, train, ModelParams};
use linkpred::probe::{
    capture_sortpool_activations, export_activations, export_flattened, select_top_examples, ActivationRecord,
};
use linkpred::subgraph::pair_seed;
use linkpred::synthetic::generate;
use linkpred::{Error, Result};

use config::Config;

#[derive(Parser)]
#[command(name = "linkpred", version, about = "Enclosing-subgraph DGCNN link prediction")]
struct Cli {
    /// TOML config file with run settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set sort_k=30`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic temporal graph as a text edge list.
    Synthetic {
        #[arg(long)]
        output: PathBuf,
    },
    /// Parse an edge list, write the binary event cache and print a summary.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Sample a balanced labeled pair set.
    MakeTrainingSet {
        #[arg(long)]
        graph: PathBuf,
        /// Labeled `u v label` file, or the plain pair file with `--eval`.
        #[arg(long)]
        output: PathBuf,
        /// Sample on the evaluation horizon and write pairs, truth and types separately.
        #[arg(long, requires_all = ["truth", "types"])]
        eval: bool,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        types: Option<PathBuf>,
    },
    /// Train a DGCNN on a labeled pair file.
    Train {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        history: PathBuf,
    },
    /// Score a pair file with a checkpoint.
    Predict {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// AUC report from a score file and a truth file.
    Evaluate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        types: Option<PathBuf>,
    },
    /// Train the 15-feature baseline on a labeled pair file.
    BaselineTrain {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score a pair file with a trained baseline.
    BaselinePredict {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Export SortPooling activations of the best-predicted training pairs.
    DumpActivations {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// One flattened line per example instead of k x C blocks.
        #[arg(long)]
        flat: bool,
    },
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn snapshot_at(graph: &TemporalGraph, year: i32) -> Result<GraphSnapshot> {
    Ok(graph.snapshot(year_cutoff_day(year)?))
}

/// Input snapshot and the two preceding year ends.
fn history(graph: &TemporalGraph, year: i32) -> Result<[GraphSnapshot; 3]> {
    Ok([
        snapshot_at(graph, year)?,
        snapshot_at(graph, year - 1)?,
        snapshot_at(graph, year - 2)?,
    ])
}

fn labeled(snapshot: &GraphSnapshot, path: &Path) -> Result<Vec<LabeledPair>> {
    load_labeled_pairs(path)?
        .into_iter()
        .map(|(u, v, y)| LabeledPair::classify(snapshot, u as usize, v as usize, y))
        .collect()
}

fn features(history: &[GraphSnapshot; 3], pairs: &[(u32, u32)]) -> Result<Vec<PairFeatures>> {
    pairs
        .iter()
        .map(|&(u, v)| compute_pair_features([&history[0], &history[1], &history[2]], u as usize, v as usize))
        .collect()
}

fn load_scores(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("bad score {l:?}: {e}"),
            })
        })
        .collect()
}

fn scores_text(scores: &[f64]) -> String {
    scores.iter().map(|s| format!("{s}\n")).collect()
}

fn run(cli: Cli) -> Result<()> {
    let cfg = Config::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Synthetic { output } => {
            let syn = generate(&cfg.synthetic_config()?)?;
            syn.graph.save(&output)?;
            println!("nodes: {}", syn.graph.num_nodes());
            println!("events: {}", syn.graph.events().len());
        }
        Command::Ingest { input, output } => {
            let (graph, summary) = TemporalGraph::ingest(&input)?;
            graph.save_cache(&output)?;
            let mut out = String::new();
            writeln!(out, "nodes: {}", graph.num_nodes()).unwrap();
            writeln!(out, "events: {}", summary.accepted).unwrap();
            writeln!(out, "self_loops_rejected: {}", summary.self_loops.len()).unwrap();
            for (year, n) in graph.events_per_year() {
                writeln!(out, "year {year}: {n}").unwrap();
            }
            print!("{out}");
        }
        Command::MakeTrainingSet {
            graph,
            output,
            eval,
            truth,
            types,
        } => {
            let split = make_split(cfg.input_year()?)?;
            let graph = TemporalGraph::load(&graph)?;
            if eval {
                let input = snapshot_at(&graph, split.input_year)?;
                let target = snapshot_at(&graph, split.target_year)?;
                let pairs = sample_training_pairs(&input, &target, cfg.n_pairs, cfg.seed)?;
                write_file(&output, &pairs.iter().map(|p| format!("{}\t{}\n", p.u, p.v)).collect::<String>())?;
                let truth = truth.expect("required by clap");
                let types = types.expect("required by clap");
                write_file(&truth, &pairs.iter().map(|p| format!("{}\n", p.label)).collect::<String>())?;
                write_file(&types, &pairs.iter().map(|p| format!("{}\n", p.pair_type)).collect::<String>())?;
            } else {
                let input = snapshot_at(&graph, split.training_input_year)?;
                let target = snapshot_at(&graph, split.training_target_year)?;
                let pairs = sample_training_pairs(&input, &target, cfg.n_pairs, cfg.seed)?;
                write_labeled_pairs(&output, &pairs)?;
            }
        }
        Command::Train {
            graph,
            pairs,
            checkpoint,
            history: history_path,
        } => {
            let arch = cfg.architecture()?;
            let split = make_split(cfg.input_year()?)?;
            let graph = TemporalGraph::load(&graph)?;
            let snapshot = snapshot_at(&graph, split.training_input_year)?;
            let pairs = labeled(&snapshot, &pairs)?;
            let model = ModelParams::build(arch, cfg.seed)?;
            let (trained, hist) = train(&model, &pairs, &snapshot, &cfg.train_config())?;
            save_checkpoint(&trained, &checkpoint)?;
            write_file(&history_path, &hist.to_text())?;
        }
        Command::Predict {
            graph,
            checkpoint,
            pairs,
            output,
        } => {
            let model = load_checkpoint_for(&checkpoint, &cfg.architecture()?)?;
            let graph = TemporalGraph::load(&graph)?;
            let snapshot = snapshot_at(&graph, cfg.input_year()?)?;
            let pairs = load_eval_pairs(&pairs)?;
            let scores = predict_pairs(&model, &snapshot, &pairs, &cfg.predict_config())?;
            write_file(&output, &scores_text(&scores))?;
        }
        Command::Evaluate { scores, truth, types } => {
            let scores = load_scores(&scores)?;
            let labels = load_ground_truth(&truth)?;
            if scores.len() != labels.len() {
                return Err(Error::LengthMismatch {
                    left: scores.len(),
                    right: labels.len(),
                });
            }
            match types {
                Some(path) => print!("{}", evaluate(&scores, &labels, &load_pair_types(&path)?)?),
                None => {
                    println!("overall_auc: {:.6}", auc(&scores, &labels)?);
                    println!("pairs: {}", labels.len());
                }
            }
        }
        Command::BaselineTrain { graph, pairs, output } => {
            let split = make_split(cfg.input_year()?)?;
            let graph = TemporalGraph::load(&graph)?;
            let hist = history(&graph, split.training_input_year)?;
            let pairs = labeled(&hist[0], &pairs)?;
            let uv: Vec<(u32, u32)> = pairs.iter().map(|p| (p.u, p.v)).collect();
            let labels: Vec<u8> = pairs.iter().map(|p| p.label).collect();
            let types: Vec<PairType> = pairs.iter().map(|p| p.pair_type).collect();
            let (params, _) = baseline_train(&features(&hist, &uv)?, &labels, &types, &cfg.baseline_config())?;
            params.save(&output)?;
        }
        Command::BaselinePredict {
            graph,
            model,
            pairs,
            output,
        } => {
            let params = BaselineParams::load(&model)?;
            let graph = TemporalGraph::load(&graph)?;
            let hist = history(&graph, cfg.input_year()?)?;
            let pairs = load_eval_pairs(&pairs)?;
            let types = pairs
                .iter()
                .map(|&(u, v)| classify_pair(&hist[0], u as usize, v as usize))
                .collect::<Result<Vec<_>>>()?;
            let scores = baseline_predict(&params, &features(&hist, &pairs)?, &types)?;
            write_file(&output, &scores_text(&scores))?;
        }
        Command::DumpActivations {
            graph,
            checkpoint,
            pairs,
            output,
            flat,
        } => {
            let model = load_checkpoint_for(&checkpoint, &cfg.architecture()?)?;
            let split = make_split(cfg.input_year()?)?;
            let graph = TemporalGraph::load(&graph)?;
            let snapshot = snapshot_at(&graph, split.training_input_year)?;
            let pairs = labeled(&snapshot, &pairs)?;
            let predict = cfg.predict_config();
            let selection = select_top_examples(&model, &pairs, &snapshot, cfg.n_per_label, &predict)?;
            if selection.shortfall {
                eprintln!("note: fewer than {} examples for some label", cfg.n_per_label);
            }
            let records = selection
                .positives
                .iter()
                .chain(&selection.negatives)
                .map(|&i| {
                    let p = &pairs[i];
                    let seed = pair_seed(cfg.seed, i);
                    let input = model.encode_pair(&snapshot, p.u as usize, p.v as usize, seed)?;
                    Ok(ActivationRecord {
                        u: p.u,
                        v: p.v,
                        label: p.label,
                        pair_type: p.pair_type,
                        seed,
                        activations: capture_sortpool_activations(&model, &input)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if flat {
                export_flattened(&records, &output)?;
            } else {
                export_activations(&records, &output)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::LengthMismatch { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
