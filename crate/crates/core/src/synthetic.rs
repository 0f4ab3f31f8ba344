//! Synthetic temporal co-occurrence graphs with planted triadic closure.
//!
//! The graph starts as a community-structured random graph with a share of
//! isolated newcomer nodes. Two growth phases follow, each posed on the
//! snapshot at its start: every unlinked pair with at least two common
//! neighbors links with `p_closure`, and pairs from a random pool of other
//! unlinked pairs link with `p_other`. Part of that pool is drawn among
//! pairs with an isolated endpoint so cold-start links exist.

use std::collections::HashSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{cold_start_pairs, sample_training_pairs, LabeledPair};
use crate::error::{Error, Result};
use crate::graph::{year_cutoff_day, EdgeEvent, GraphSnapshot, TemporalGraph};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub num_nodes: usize,
    pub communities: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Pareto shape of the per-node activity weights that scale initial edge
    /// probabilities; `None` keeps every node equally active.
    pub activity_shape: Option<f64>,
    /// Share of nodes without any initial edge.
    pub newcomer_fraction: f64,
    pub p_closure: f64,
    pub p_other: f64,
    /// Size of the non-closure pool relative to the closure set.
    pub other_pool_factor: f64,
    /// Share of the non-closure pool drawn among pairs with an isolated endpoint.
    pub cold_start_share: f64,
    /// Pick the connected endpoint of cold-start candidates with probability
    /// proportional to its degree instead of uniformly.
    pub preferential_cold_start: bool,
    /// The evaluation input year; the initial graph spans the five years before
    /// the training input year's end.
    pub input_year: i32,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_nodes: 500,
            communities: 20,
            p_in: 0.3,
            p_out: 0.002,
            activity_shape: Some(2.5),
            newcomer_fraction: 0.1,
            p_closure: 0.8,
            p_other: 0.05,
            other_pool_factor: 2.0,
            cold_start_share: 0.5,
            preferential_cold_start: true,
            input_year: 2010,
            seed: 0,
        }
    }
}

/// Counts of links planted in one growth phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PhaseStats {
    pub closure_candidates: usize,
    pub closure_links: usize,
    pub other_candidates: usize,
    pub other_links: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticGraph {
    pub graph: TemporalGraph,
    pub config: SyntheticConfig,
    pub phases: [PhaseStats; 2],
}

fn day_in_year(rng: &mut ChaCha8Rng, year: i32) -> Result<u32> {
    let end = year_cutoff_day(year)?;
    let start = year_cutoff_day(year - 1).map(|d| d + 1).unwrap_or(0);
    Ok(rng.gen_range(start..=end))
}

fn grow(
    rng: &mut ChaCha8Rng,
    snap: &GraphSnapshot,
    config: &SyntheticConfig,
    first_year: i32,
    events: &mut Vec<EdgeEvent>,
) -> Result<PhaseStats> {
    let n = snap.num_nodes();
    let mut stats = PhaseStats::default();
    let mut closure = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if !snap.has_edge(u, v) && snap.common_neighbors(u, v) >= 2 {
                closure.push((u, v));
            }
        }
    }
    let closure_set: HashSet<(usize, usize)> = closure.iter().copied().collect();
    stats.closure_candidates = closure.len();

    let pool_size = (config.other_pool_factor * closure.len() as f64).round() as usize;
    let n_cold = (config.cold_start_share * pool_size as f64).round() as usize;
    let isolated: Vec<usize> = (0..n).filter(|&u| snap.adj(u).is_empty()).collect();
    let connected: Vec<usize> = (0..n).filter(|&u| !snap.adj(u).is_empty()).collect();
    let weights: Vec<f64> = connected
        .iter()
        .map(|&u| {
            if config.preferential_cold_start {
                snap.adj(u).len() as f64
            } else {
                1.0
            }
        })
        .collect();
    let mut pool: HashSet<(usize, usize)> = HashSet::new();
    if !isolated.is_empty() && !connected.is_empty() {
        let pick = WeightedIndex::new(&weights).map_err(|e| Error::Config(e.to_string()))?;
        let mut tries = 0;
        while pool.len() < n_cold && tries < 100 * pool_size {
            tries += 1;
            let a = *isolated.choose(rng).expect("non-empty");
            let b = connected[pick.sample(rng)];
            pool.insert((a.min(b), a.max(b)));
        }
    }
    let mut tries = 0;
    while pool.len() < pool_size && tries < 100 * pool_size {
        tries += 1;
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let key = (a.min(b), a.max(b));
        if a == b || snap.has_edge(a, b) || closure_set.contains(&key) {
            continue;
        }
        pool.insert(key);
    }
    let mut pool: Vec<(usize, usize)> = pool.into_iter().collect();
    pool.sort_unstable();
    stats.other_candidates = pool.len();

    for (pairs, p, counter) in [
        (&closure, config.p_closure, &mut stats.closure_links),
        (&pool, config.p_other, &mut stats.other_links),
    ] {
        for &(u, v) in pairs {
            if rng.gen_bool(p) {
                let year = first_year + rng.gen_range(0..3);
                events.push(EdgeEvent {
                    u: u as u32,
                    v: v as u32,
                    day: day_in_year(rng, year)?,
                });
                *counter += 1;
            }
        }
    }
    Ok(stats)
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticGraph> {
    let c = config;
    if c.num_nodes < 4 || c.communities == 0 || c.communities > c.num_nodes {
        return Err(Error::Config("synthetic graph needs ≥ 4 nodes and 1..=n communities".into()));
    }
    for (name, p) in [
        ("p_in", c.p_in),
        ("p_out", c.p_out),
        ("newcomer_fraction", c.newcomer_fraction),
        ("p_closure", c.p_closure),
        ("p_other", c.p_other),
        ("cold_start_share", c.cold_start_share),
    ] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("{name} = {p} is not a probability")));
        }
    }
    let train_input = c.input_year - 3;
    year_cutoff_day(train_input - 3)?;

    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let n = c.num_nodes;
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng);
    let n_new = (c.newcomer_fraction * n as f64).round() as usize;
    let newcomer: HashSet<usize> = ids[..n_new].iter().copied().collect();
    let community: Vec<usize> = (0..n).map(|u| u % c.communities).collect();
    let activity: Vec<f64> = match c.activity_shape {
        Some(a) => {
            if !(a > 1.0) {
                return Err(Error::Config(format!("activity_shape = {a} must exceed 1")));
            }
            // Pareto draws rescaled to mean one
            let mean = a / (a - 1.0);
            (0..n)
                .map(|_| (1.0 - rng.gen::<f64>()).powf(-1.0 / a) / mean)
                .collect()
        }
        None => vec![1.0; n],
    };

    let mut events = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if newcomer.contains(&u) || newcomer.contains(&v) {
                continue;
            }
            let base = if community[u] == community[v] { c.p_in } else { c.p_out };
            let p = (base * activity[u] * activity[v]).min(1.0);
            if rng.gen_bool(p) {
                let year = train_input - rng.gen_range(0..3);
                let day = day_in_year(&mut rng, year)?;
                events.push(EdgeEvent {
                    u: u as u32,
                    v: v as u32,
                    day,
                });
                // repeated co-occurrence
                if rng.gen_bool(0.3) {
                    let again = day_in_year(&mut rng, year)?;
                    events.push(EdgeEvent {
                        u: u as u32,
                        v: v as u32,
                        day: again,
                    });
                }
            }
        }
    }

    let mut phases = [PhaseStats::default(); 2];
    for (i, input) in [train_input, c.input_year].into_iter().enumerate() {
        let graph = TemporalGraph::new(n, events.clone())?;
        let snap = graph.snapshot(year_cutoff_day(input)?);
        phases[i] = grow(&mut rng, &snap, c, input + 1, &mut events)?;
    }
    events.sort_by_key(|e| (e.day, e.u, e.v));
    Ok(SyntheticGraph {
        graph: TemporalGraph::new(n, events)?,
        config: c.clone(),
        phases,
    })
}

/// A synthetic graph with the snapshots and pair sets of one
/// train-then-evaluate run: training on `Y-3 -> Y`, evaluation on `Y -> Y+3`.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub synthetic: SyntheticGraph,
    pub train_input: GraphSnapshot,
    pub train_target: GraphSnapshot,
    pub eval_input: GraphSnapshot,
    pub eval_target: GraphSnapshot,
    /// Input snapshot and the two preceding year ends, for baseline features.
    pub train_history: [GraphSnapshot; 3],
    pub eval_history: [GraphSnapshot; 3],
    pub train: Vec<LabeledPair>,
    pub eval: Vec<LabeledPair>,
    /// All cold-start pairs that link during evaluation plus as many that do not.
    pub cold_start_eval: Vec<LabeledPair>,
}

impl Benchmark {
    pub fn build(config: &SyntheticConfig, n_train: usize, n_eval: usize) -> Result<Self> {
        let synthetic = generate(config)?;
        let g = &synthetic.graph;
        let y = config.input_year;
        let snap = |year: i32| -> Result<GraphSnapshot> { Ok(g.snapshot(year_cutoff_day(year)?)) };
        let history = |year: i32| -> Result<[GraphSnapshot; 3]> { Ok([snap(year)?, snap(year - 1)?, snap(year - 2)?]) };
        let train_input = snap(y - 3)?;
        let train_target = snap(y)?;
        let eval_target = snap(y + 3)?;
        let train = sample_training_pairs(&train_input, &train_target, n_train, config.seed)?;
        let eval = sample_training_pairs(&train_target, &eval_target, n_eval, config.seed ^ 1)?;
        let cold_start_eval = cold_start_pairs(&train_target, &eval_target, config.seed ^ 2)?;
        Ok(Self {
            train_history: history(y - 3)?,
            eval_history: history(y)?,
            eval_input: train_target.clone(),
            synthetic,
            train_input,
            train_target,
            eval_target,
            train,
            eval,
            cold_start_eval,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_planted() {
        let cfg = SyntheticConfig {
            num_nodes: 120,
            communities: 6,
            ..SyntheticConfig::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.graph, b.graph);
        for ph in a.phases {
            assert!(ph.closure_candidates > 0);
            assert!(ph.closure_links > 0);
        }
        let input = a.graph.snapshot(year_cutoff_day(cfg.input_year - 3).unwrap());
        let isolated = (0..cfg.num_nodes).filter(|&u| input.degree(u).unwrap() == 0).count();
        assert!(isolated >= 12);
    }
}
