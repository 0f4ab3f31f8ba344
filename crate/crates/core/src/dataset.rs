//! Candidate pairs: type classification, time-shifted splits, balanced
//! training-set sampling, and evaluation-file loading.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{GraphSnapshot, EPOCH_YEAR};

/// Pair type by endpoint degrees in the input snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PairType {
    /// Both endpoints have neighbors.
    Connected = 0,
    /// Exactly one endpoint is isolated.
    ColdStart = 1,
    /// Both endpoints are isolated.
    Isolated = 2,
}

impl PairType {
    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            0 => Some(Self::Connected),
            1 => Some(Self::ColdStart),
            2 => Some(Self::Isolated),
            _ => None,
        }
    }
}

impl fmt::Display for PairType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

pub fn classify_pair(snapshot: &GraphSnapshot, u: usize, v: usize) -> Result<PairType> {
    if u == v {
        return Err(Error::domain(format!("pair ({u}, {v}) has identical endpoints")));
    }
    let du = snapshot.degree(u)?;
    let dv = snapshot.degree(v)?;
    Ok(match (du > 0, dv > 0) {
        (true, true) => PairType::Connected,
        (false, false) => PairType::Isolated,
        _ => PairType::ColdStart,
    })
}

/// 1 iff the pair is linked in `target`.
pub fn label_pair(target: &GraphSnapshot, u: usize, v: usize) -> u8 {
    target.has_edge(u, v) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabeledPair {
    pub u: u32,
    pub v: u32,
    pub label: u8,
    pub pair_type: PairType,
}

impl LabeledPair {
    pub fn classify(snapshot: &GraphSnapshot, u: usize, v: usize, label: u8) -> Result<Self> {
        Ok(Self {
            u: u as u32,
            v: v as u32,
            label,
            pair_type: classify_pair(snapshot, u, v)?,
        })
    }
}

/// Years used for one run: the model sees `input_year`, is scored on links
/// realized by `target_year`, and is trained on the same gap shifted back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub input_year: i32,
    pub target_year: i32,
    pub training_input_year: i32,
    pub training_target_year: i32,
}

pub const HORIZON_YEARS: i32 = 3;

pub fn make_split(input_year: i32) -> Result<SplitSpec> {
    let training_input_year = input_year - HORIZON_YEARS;
    if training_input_year < EPOCH_YEAR {
        return Err(Error::domain(format!(
            "training input year {training_input_year} precedes {EPOCH_YEAR}"
        )));
    }
    Ok(SplitSpec {
        input_year,
        target_year: input_year + HORIZON_YEARS,
        training_input_year,
        training_target_year: input_year,
    })
}

/// Attempts per requested pair before negative sampling gives up.
pub const RETRY_FACTOR: usize = 1000;

/// Draws a balanced training set: `ceil(n/2)` pairs that link between the two
/// snapshots and `floor(n/2)` that do not. Pairs with two isolated endpoints
/// in `input` are never drawn.
pub fn sample_training_pairs(
    input: &GraphSnapshot,
    target: &GraphSnapshot,
    n_pairs: usize,
    seed: u64,
) -> Result<Vec<LabeledPair>> {
    if input.num_nodes() != target.num_nodes() {
        return Err(Error::domain(format!(
            "snapshots disagree on node count ({} vs {})",
            input.num_nodes(),
            target.num_nodes()
        )));
    }
    if input.cutoff_day() >= target.cutoff_day() {
        return Err(Error::domain(format!(
            "input cutoff {} must precede target cutoff {}",
            input.cutoff_day(),
            target.cutoff_day()
        )));
    }
    let n_pos = n_pairs.div_ceil(2);
    let n_neg = n_pairs / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let candidates: Vec<(usize, usize)> = target
        .edges()
        .filter(|&(u, v)| !input.has_edge(u, v))
        .filter(|&(u, v)| input.degree(u).unwrap_or(0) > 0 || input.degree(v).unwrap_or(0) > 0)
        .collect();
    if candidates.len() < n_pos {
        return Err(Error::Exhausted {
            what: "positive pairs",
            wanted: n_pos,
            found: candidates.len(),
        });
    }
    let mut out = Vec::with_capacity(n_pairs);
    for &(u, v) in candidates.choose_multiple(&mut rng, n_pos) {
        out.push(LabeledPair::classify(input, u, v, 1)?);
    }

    let n = input.num_nodes();
    let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(n_neg);
    let cap = RETRY_FACTOR * n_pairs.max(1);
    let mut attempts = 0;
    while seen.len() < n_neg {
        if attempts >= cap || n < 2 {
            return Err(Error::Exhausted {
                what: "negative pairs",
                wanted: n_neg,
                found: seen.len(),
            });
        }
        attempts += 1;
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        let (u, v) = (a.min(b), a.max(b));
        if input.has_edge(u, v) || target.has_edge(u, v) || seen.contains(&(u, v)) {
            continue;
        }
        let pt = classify_pair(input, u, v)?;
        if pt == PairType::Isolated {
            continue;
        }
        seen.insert((u, v));
        out.push(LabeledPair {
            u: u as u32,
            v: v as u32,
            label: 0,
            pair_type: pt,
        });
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// Every pair that is cold-start in `input` and links by `target`, plus as
/// many cold-start pairs that stay unlinked, shuffled.
pub fn cold_start_pairs(input: &GraphSnapshot, target: &GraphSnapshot, seed: u64) -> Result<Vec<LabeledPair>> {
    if input.num_nodes() != target.num_nodes() {
        return Err(Error::domain("snapshots disagree on node count"));
    }
    let mut out: Vec<LabeledPair> = Vec::new();
    for (u, v) in target.edges() {
        if !input.has_edge(u, v) && classify_pair(input, u, v)? == PairType::ColdStart {
            out.push(LabeledPair::classify(input, u, v, 1)?);
        }
    }
    let isolated: Vec<usize> = (0..input.num_nodes()).filter(|&u| input.adj(u).is_empty()).collect();
    let connected: Vec<usize> = (0..input.num_nodes()).filter(|&u| !input.adj(u).is_empty()).collect();
    let n_neg = out.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(n_neg);
    let mut attempts = 0;
    while seen.len() < n_neg {
        if attempts >= RETRY_FACTOR * n_neg.max(1) {
            return Err(Error::Exhausted {
                what: "cold-start negative pairs",
                wanted: n_neg,
                found: seen.len(),
            });
        }
        attempts += 1;
        let a = isolated[rng.gen_range(0..isolated.len())];
        let b = connected[rng.gen_range(0..connected.len())];
        let (u, v) = (a.min(b), a.max(b));
        if target.has_edge(u, v) || !seen.insert((u, v)) {
            continue;
        }
        out.push(LabeledPair {
            u: u as u32,
            v: v as u32,
            label: 0,
            pair_type: PairType::ColdStart,
        });
    }
    out.shuffle(&mut rng);
    Ok(out)
}

fn for_each_line(path: &Path, mut f: impl FnMut(usize, &str) -> Result<()>) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        f(idx + 1, trimmed)?;
    }
    Ok(())
}

fn parse_fields<const N: usize>(path: &Path, line: usize, text: &str) -> Result<[u64; N]> {
    let mut out = [0u64; N];
    let mut fields = text.split_whitespace();
    for slot in out.iter_mut() {
        let tok = fields.next().ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("expected {N} fields"),
        })?;
        *slot = tok.parse().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("bad field {tok:?}: {e}"),
        })?;
    }
    if fields.next().is_some() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("expected {N} fields"),
        });
    }
    Ok(out)
}

fn to_node(path: &Path, line: usize, x: u64) -> Result<u32> {
    u32::try_from(x).map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("node id {x} out of range"),
    })
}

/// Reads a `u<TAB>v` pair file in file order.
pub fn load_eval_pairs(path: impl AsRef<Path>) -> Result<Vec<(u32, u32)>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for_each_line(path, |line, text| {
        let [u, v] = parse_fields::<2>(path, line, text)?;
        out.push((to_node(path, line, u)?, to_node(path, line, v)?));
        Ok(())
    })?;
    Ok(out)
}

/// Reads one 0/1 label per line.
pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for_each_line(path, |line, text| {
        let [y] = parse_fields::<1>(path, line, text)?;
        if y > 1 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("label {y} is not 0 or 1"),
            });
        }
        out.push(y as u8);
        Ok(())
    })?;
    Ok(out)
}

/// Reads one pair type (0, 1 or 2) per line.
pub fn load_pair_types(path: impl AsRef<Path>) -> Result<Vec<PairType>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for_each_line(path, |line, text| {
        let [t] = parse_fields::<1>(path, line, text)?;
        let pt = u8::try_from(t)
            .ok()
            .and_then(PairType::from_index)
            .ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("pair type {t} is not 0, 1 or 2"),
            })?;
        out.push(pt);
        Ok(())
    })?;
    Ok(out)
}

/// Loads a pair file together with its aligned truth file.
pub fn load_labeled_eval(
    pairs: impl AsRef<Path>,
    truth: impl AsRef<Path>,
) -> Result<(Vec<(u32, u32)>, Vec<u8>)> {
    let p = load_eval_pairs(pairs)?;
    let t = load_ground_truth(truth)?;
    if p.len() != t.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: t.len(),
        });
    }
    Ok((p, t))
}

/// Reads a `u<TAB>v<TAB>label` training file.
pub fn load_labeled_pairs(path: impl AsRef<Path>) -> Result<Vec<(u32, u32, u8)>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for_each_line(path, |line, text| {
        let [u, v, y] = parse_fields::<3>(path, line, text)?;
        if y > 1 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("label {y} is not 0 or 1"),
            });
        }
        out.push((to_node(path, line, u)?, to_node(path, line, v)?, y as u8));
        Ok(())
    })?;
    Ok(out)
}

pub fn write_labeled_pairs(path: impl AsRef<Path>, pairs: &[LabeledPair]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        for p in pairs {
            writeln!(w, "{}\t{}\t{}", p.u, p.v, p.label)?;
        }
        w.flush()
    })()
    .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TemporalGraph;

    fn snap(n: usize, edges: &[(u32, u32)], day: u32) -> GraphSnapshot {
        let t: Vec<_> = edges.iter().map(|&(u, v)| (u, v, day)).collect();
        TemporalGraph::from_triples(n, &t).unwrap().snapshot(day)
    }

    #[test]
    fn classify_by_degree() {
        // node 0: degree 3, node 1: degree 2, node 6: isolated
        let s = snap(8, &[(0, 2), (0, 3), (0, 4), (1, 2), (1, 5)], 0);
        assert_eq!(classify_pair(&s, 0, 1).unwrap(), PairType::Connected);
        assert_eq!(classify_pair(&s, 6, 0).unwrap(), PairType::ColdStart);
        assert_eq!(classify_pair(&s, 6, 7).unwrap(), PairType::Isolated);
        assert!(classify_pair(&s, 3, 3).is_err());
    }

    #[test]
    fn splits() {
        let s = make_split(2017).unwrap();
        assert_eq!(
            (s.training_input_year, s.training_target_year, s.target_year),
            (2014, 2017, 2020)
        );
        let s = make_split(2014).unwrap();
        assert_eq!(
            (s.training_input_year, s.training_target_year, s.target_year),
            (2011, 2014, 2017)
        );
        assert!(make_split(1993).is_ok());
        assert!(make_split(1992).is_err());
    }

    #[test]
    fn labels_respect_cutoff() {
        let g = TemporalGraph::from_triples(3, &[(0, 1, 5), (1, 2, 50)]).unwrap();
        let s = g.snapshot(10);
        assert_eq!(label_pair(&s, 0, 1), 1);
        assert_eq!(label_pair(&s, 0, 2), 0);
        assert_eq!(label_pair(&s, 1, 2), 0);
    }

    fn toy() -> (GraphSnapshot, GraphSnapshot) {
        // 6 nodes; input has a path 0-1-2-3 plus edge 4-5; two new links by target.
        let g = TemporalGraph::from_triples(
            6,
            &[(0, 1, 1), (1, 2, 1), (2, 3, 1), (4, 5, 1), (0, 2, 9), (3, 4, 9)],
        )
        .unwrap();
        (g.snapshot(1), g.snapshot(9))
    }

    #[test]
    fn sampled_pairs_match_enumeration() {
        let (input, target) = toy();
        let mut eligible_pos = Vec::new();
        let mut eligible_neg = Vec::new();
        for u in 0..6 {
            for v in u + 1..6 {
                if input.has_edge(u, v) || classify_pair(&input, u, v).unwrap() == PairType::Isolated {
                    continue;
                }
                if target.has_edge(u, v) {
                    eligible_pos.push((u as u32, v as u32));
                } else {
                    eligible_neg.push((u as u32, v as u32));
                }
            }
        }
        assert_eq!(eligible_pos, vec![(0, 2), (3, 4)]);
        let pairs = sample_training_pairs(&input, &target, 4, 7).unwrap();
        assert_eq!(pairs.len(), 4);
        let mut pos: Vec<_> = pairs.iter().filter(|p| p.label == 1).map(|p| (p.u, p.v)).collect();
        pos.sort();
        assert_eq!(pos, eligible_pos);
        for p in pairs.iter().filter(|p| p.label == 0) {
            assert!(eligible_neg.contains(&(p.u, p.v)));
        }
        assert_eq!(pairs, sample_training_pairs(&input, &target, 4, 7).unwrap());
    }

    #[test]
    fn exhaustion_is_reported() {
        let (input, target) = toy();
        match sample_training_pairs(&input, &target, 1000, 1) {
            Err(Error::Exhausted { wanted, found, .. }) => {
                assert_eq!(wanted, 500);
                assert_eq!(found, 2);
            }
            other => panic!("{other:?}"),
        }
        let g = TemporalGraph::from_triples(3, &[(0, 1, 1), (1, 2, 1), (0, 2, 5)]).unwrap();
        match sample_training_pairs(&g.snapshot(1), &g.snapshot(5), 2, 1) {
            Err(Error::Exhausted { what, wanted, found }) => {
                assert_eq!((what, wanted, found), ("negative pairs", 1, 0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sample_rejects_misordered_snapshots() {
        let (input, target) = toy();
        assert!(sample_training_pairs(&target, &input, 2, 0).is_err());
    }

    #[test]
    fn eval_file_loading() {
        let dir = tempfile::tempdir().unwrap();
        let pairs = dir.path().join("pairs.txt");
        let truth = dir.path().join("truth.txt");
        let short = dir.path().join("short.txt");
        std::fs::write(&pairs, "3\t4\n0\t1\n2\t9\n").unwrap();
        std::fs::write(&truth, "1\n0\n1\n").unwrap();
        std::fs::write(&short, "1\n0\n").unwrap();
        assert_eq!(load_eval_pairs(&pairs).unwrap(), vec![(3, 4), (0, 1), (2, 9)]);
        assert_eq!(load_ground_truth(&truth).unwrap(), vec![1, 0, 1]);
        assert!(load_labeled_eval(&pairs, &truth).is_ok());
        assert!(matches!(
            load_labeled_eval(&pairs, &short),
            Err(Error::LengthMismatch { left: 3, right: 2 })
        ));
        std::fs::write(&truth, "1\n2\n").unwrap();
        assert!(matches!(load_ground_truth(&truth), Err(Error::Parse { line: 2, .. })));
    }
}
