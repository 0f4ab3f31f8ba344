//! SortPooling activation capture and export for external visualization.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::dataset::{LabeledPair, PairType};
use crate::error::{Error, Result};
use crate::graph::GraphSnapshot;
use crate::model::{predict_pairs, ModelParams, PredictConfig};
use crate::nn::Tensor;
use crate::subgraph::SubgraphTensors;

/// Indices of the best-predicted examples of each label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    /// Highest-scoring positives, best first.
    pub positives: Vec<usize>,
    /// Lowest-scoring negatives, best first.
    pub negatives: Vec<usize>,
    /// True if either label had fewer than the requested count.
    pub shortfall: bool,
}

/// Picks the `n_per_label` most confident correct-direction examples per
/// label; ties go to the lower index.
pub fn select_by_scores(scores: &[f64], labels: &[u8], n_per_label: usize) -> Result<Selection> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let pick = |label: u8, descending: bool| {
        let mut idx: Vec<usize> = (0..scores.len()).filter(|&i| labels[i] == label).collect();
        idx.sort_by(|&a, &b| {
            let o = scores[a].total_cmp(&scores[b]);
            let o = if descending { o.reverse() } else { o };
            o.then(a.cmp(&b))
        });
        idx
    };
    let mut positives = pick(1, true);
    let mut negatives = pick(0, false);
    let shortfall = positives.len() < n_per_label || negatives.len() < n_per_label;
    positives.truncate(n_per_label);
    negatives.truncate(n_per_label);
    Ok(Selection {
        positives,
        negatives,
        shortfall,
    })
}

/// Scores `pairs` on `snapshot` and selects the best-predicted ones.
pub fn select_top_examples(
    model: &ModelParams,
    pairs: &[LabeledPair],
    snapshot: &GraphSnapshot,
    n_per_label: usize,
    config: &PredictConfig,
) -> Result<Selection> {
    let uv: Vec<(u32, u32)> = pairs.iter().map(|p| (p.u, p.v)).collect();
    let scores = predict_pairs(model, snapshot, &uv, config)?;
    let labels: Vec<u8> = pairs.iter().map(|p| p.label).collect();
    select_by_scores(&scores, &labels, n_per_label)
}

/// The `k × C` SortPooling output computed inside a full forward pass.
pub fn capture_sortpool_activations(model: &ModelParams, input: &SubgraphTensors) -> Result<Tensor> {
    Ok(model.forward_trace(input)?.pooled)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub u: u32,
    pub v: u32,
    pub label: u8,
    pub pair_type: PairType,
    /// Extraction seed used for this example.
    pub seed: u64,
    pub activations: Tensor,
}

fn fmt_value(x: f64) -> String {
    format!("{x:.16e}")
}

fn block_header(r: &ActivationRecord) -> String {
    format!(
        "# pair={},{} label={} pair_type={} seed={}",
        r.u, r.v, r.label, r.pair_type, r.seed
    )
}

/// Writes one block per example: a `# pair=.. label=.. pair_type=.. seed=..`
/// line then `k` rows of `C` tab-separated values; blocks are separated by
/// blank lines. The file opens with a summary comment line.
pub fn export_activations(records: &[ActivationRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let shape = records
        .first()
        .map_or((0, 0), |r| (r.activations.rows(), r.activations.cols()));
    (|| -> std::io::Result<()> {
        writeln!(
            w,
            "# sortpool_activations examples={} rows={} cols={}",
            records.len(),
            shape.0,
            shape.1
        )?;
        for r in records {
            writeln!(w)?;
            writeln!(w, "{}", block_header(r))?;
            for i in 0..r.activations.rows() {
                let row: Vec<String> = r.activations.row(i).iter().map(|&x| fmt_value(x)).collect();
                writeln!(w, "{}", row.join("\t"))?;
            }
        }
        w.flush()
    })()
    .map_err(|e| Error::io(path, e))
}

/// One line per example: `u v label pair_type seed` followed by the `k·C`
/// activations row-major, all tab-separated.
pub fn export_flattened(records: &[ActivationRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        for r in records {
            write!(w, "{}\t{}\t{}\t{}\t{}", r.u, r.v, r.label, r.pair_type, r.seed)?;
            for &x in r.activations.data() {
                write!(w, "\t{}", fmt_value(x))?;
            }
            writeln!(w)?;
        }
        w.flush()
    })()
    .map_err(|e| Error::io(path, e))
}

/// Parses a file written by [`export_activations`].
pub fn read_activations(path: impl AsRef<Path>) -> Result<Vec<ActivationRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut out: Vec<ActivationRecord> = Vec::new();
    let mut current: Option<(ActivationRecord, Vec<f64>, usize, usize)> = None;
    let finish = |cur: Option<(ActivationRecord, Vec<f64>, usize, usize)>, out: &mut Vec<ActivationRecord>| -> Result<()> {
        if let Some((mut rec, data, rows, cols)) = cur {
            rec.activations = Tensor::from_vec(&[rows, cols], data)?;
            out.push(rec);
        }
        Ok(())
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.starts_with("# sortpool_activations") || line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# ") {
            finish(current.take(), &mut out)?;
            let mut rec = ActivationRecord {
                u: 0,
                v: 0,
                label: 0,
                pair_type: PairType::Connected,
                seed: 0,
                activations: Tensor::zeros(&[0, 0]),
            };
            for kv in rest.split_whitespace() {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| bad(lineno, format!("bad field {kv:?}")))?;
                let num = |s: &str| s.parse::<u64>().map_err(|_| bad(lineno, format!("bad number {s:?}")));
                match k {
                    "pair" => {
                        let (a, b) = v
                            .split_once(',')
                            .ok_or_else(|| bad(lineno, format!("bad pair {v:?}")))?;
                        rec.u = num(a)? as u32;
                        rec.v = num(b)? as u32;
                    }
                    "label" => rec.label = num(v)? as u8,
                    "pair_type" => {
                        rec.pair_type = PairType::from_index(num(v)? as u8)
                            .ok_or_else(|| bad(lineno, format!("bad pair type {v:?}")))?
                    }
                    "seed" => rec.seed = num(v)?,
                    other => return Err(bad(lineno, format!("unknown field {other:?}"))),
                }
            }
            current = Some((rec, Vec::new(), 0, 0));
            continue;
        }
        let Some((_, data, rows, cols)) = current.as_mut() else {
            return Err(bad(lineno, "values before any block header".into()));
        };
        let row = line
            .split('\t')
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(lineno, e.to_string()))?;
        if *rows == 0 {
            *cols = row.len();
        } else if row.len() != *cols {
            return Err(bad(lineno, format!("row has {} values, expected {cols}", row.len())));
        }
        *rows += 1;
        data.extend(row);
    }
    finish(current, &mut out)?;
    Ok(out)
}
