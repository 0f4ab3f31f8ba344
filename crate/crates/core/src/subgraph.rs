//! Enclosing-subgraph extraction around a candidate pair, double-radius
//! node labeling, and the tensors fed to the graph network.

use std::collections::VecDeque;
use std::fmt;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::GraphSnapshot;
use crate::nn::Tensor;

pub const DEFAULT_KEEP_FRACTION: f64 = 0.35;
pub const DEFAULT_L_MAX: u32 = 10;

/// Local graph around a target pair. Index 0 and 1 are the targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnclosingSubgraph {
    pub nodes: Vec<u32>,
    /// Local index pairs `(i, j)` with `i < j`, ascending.
    pub edges: Vec<(usize, usize)>,
    /// Unclamped DRNL labels, one per node.
    pub drnl_labels: Vec<u32>,
    pub h: usize,
}

/// Per-pair extraction seed for parallel or batched extraction.
pub fn pair_seed(seed: u64, pair_index: usize) -> u64 {
    seed ^ pair_index as u64
}

/// Number of non-target nodes kept out of `m` eligible ones.
pub fn kept_count(m: usize, keep_fraction: f64) -> usize {
    // keep_fraction * m can land a hair above an integer (0.35 * 20)
    let raw = keep_fraction * m as f64;
    ((raw - 1e-9).ceil().max(0.0) as usize).min(m)
}

/// Hop distances from `src` over an adjacency closure, up to `limit` hops.
/// `blocked` nodes are never entered.
fn bfs<F, I>(n: usize, src: usize, limit: usize, blocked: Option<usize>, mut nbrs: F) -> Vec<Option<u32>>
where
    F: FnMut(usize) -> I,
    I: IntoIterator<Item = usize>,
{
    let mut dist = vec![None; n];
    dist[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].expect("queued nodes have a distance");
        if d as usize >= limit {
            continue;
        }
        for w in nbrs(u) {
            if Some(w) == blocked || dist[w].is_some() {
                continue;
            }
            dist[w] = Some(d + 1);
            queue.push_back(w);
        }
    }
    dist
}

/// Nodes within `h` hops of `src` in the snapshot, excluding `src`.
fn ball(snapshot: &GraphSnapshot, src: usize, h: usize) -> Vec<u32> {
    let mut seen = std::collections::HashSet::new();
    seen.insert(src as u32);
    let mut frontier = vec![src as u32];
    let mut out = Vec::new();
    for _ in 0..h {
        let mut next = Vec::new();
        for &u in &frontier {
            for &w in snapshot.adj(u as usize) {
                if seen.insert(w) {
                    next.push(w);
                    out.push(w);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    out
}

/// Extracts the `h`-hop enclosing subgraph of `(x, y)` and keeps
/// `ceil(keep_fraction * m)` of its `m` non-target nodes, chosen uniformly
/// with `seed`.
pub fn extract_enclosing_subgraph(
    snapshot: &GraphSnapshot,
    x: usize,
    y: usize,
    h: usize,
    keep_fraction: f64,
    seed: u64,
) -> Result<EnclosingSubgraph> {
    if x == y {
        return Err(Error::domain(format!("pair ({x}, {y}) has identical endpoints")));
    }
    snapshot.degree(x)?;
    snapshot.degree(y)?;
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::domain(format!("keep_fraction {keep_fraction} not in (0, 1]")));
    }
    if snapshot.has_edge(x, y) {
        return Err(Error::domain(format!(
            "pair ({x}, {y}) is already linked in the snapshot"
        )));
    }

    let mut eligible: Vec<u32> = ball(snapshot, x, h);
    eligible.extend(ball(snapshot, y, h));
    eligible.retain(|&w| w as usize != x && w as usize != y);
    eligible.sort_unstable();
    eligible.dedup();

    let keep = kept_count(eligible.len(), keep_fraction);
    let mut kept: Vec<u32> = if keep == eligible.len() {
        eligible
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        index::sample(&mut rng, eligible.len(), keep)
            .into_iter()
            .map(|i| eligible[i])
            .collect()
    };
    kept.sort_unstable();

    let mut nodes = Vec::with_capacity(kept.len() + 2);
    nodes.push(x as u32);
    nodes.push(y as u32);
    nodes.extend(kept);

    let edges = induced_edges(snapshot, &nodes);
    let mut sub = EnclosingSubgraph {
        nodes,
        edges,
        drnl_labels: Vec::new(),
        h,
    };
    sub.drnl_labels = compute_drnl_labels(&sub);
    Ok(sub)
}

fn induced_edges(snapshot: &GraphSnapshot, nodes: &[u32]) -> Vec<(usize, usize)> {
    let mut order: Vec<(u32, usize)> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    order.sort_unstable();
    let local = |g: u32| order.binary_search_by_key(&g, |&(n, _)| n).ok().map(|p| order[p].1);
    let mut edges = Vec::new();
    for (i, &u) in nodes.iter().enumerate() {
        for &w in snapshot.adj(u as usize) {
            if let Some(j) = local(w) {
                if i < j {
                    edges.push((i, j));
                }
            }
        }
    }
    edges.sort_unstable();
    edges
}

/// Double-radius label from the hop distances to the two targets.
/// `None` marks an unreachable side and yields label 0.
pub fn drnl_label(dx: Option<u32>, dy: Option<u32>) -> u32 {
    match (dx, dy) {
        (Some(dx), Some(dy)) => {
            let (dx, dy) = (dx as i64, dy as i64);
            let d = dx + dy;
            let half = d / 2;
            (1 + dx.min(dy) + half * (half + d % 2 - 1)) as u32
        }
        _ => 0,
    }
}

/// Labels every node of `sub`. Distance to `x` is measured with `y` removed
/// and vice versa; the two targets get label 1.
pub fn compute_drnl_labels(sub: &EnclosingSubgraph) -> Vec<u32> {
    let n = sub.nodes.len();
    let adj = local_adjacency(n, &sub.edges);
    let limit = usize::MAX;
    let dx = bfs(n, 0, limit, Some(1), |u| adj[u].iter().copied());
    let dy = bfs(n, 1, limit, Some(0), |u| adj[u].iter().copied());
    (0..n)
        .map(|i| if i < 2 { 1 } else { drnl_label(dx[i], dy[i]) })
        .collect()
}

fn local_adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    adj
}

/// One-hot label features and symmetric-normalized adjacency with self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphTensors {
    /// `n × (l_max + 1)`
    pub features: Tensor,
    /// `n × n`
    pub norm_adjacency: Tensor,
}

impl SubgraphTensors {
    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }
}

/// Labels above `l_max` are clamped to `l_max`.
pub fn build_tensors(sub: &EnclosingSubgraph, l_max: u32) -> SubgraphTensors {
    let n = sub.nodes.len();
    let width = l_max as usize + 1;
    let mut features = Tensor::zeros(&[n, width]);
    for (i, &label) in sub.drnl_labels.iter().enumerate() {
        features.row_mut(i)[label.min(l_max) as usize] = 1.0;
    }
    SubgraphTensors {
        features,
        norm_adjacency: normalized_adjacency(n, &sub.edges),
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` as a dense `n × n` matrix.
pub fn normalized_adjacency(n: usize, edges: &[(usize, usize)]) -> Tensor {
    let mut deg = vec![1.0f64; n];
    for &(i, j) in edges {
        deg[i] += 1.0;
        deg[j] += 1.0;
    }
    let mut a = Tensor::zeros(&[n, n]);
    let data = a.data_mut();
    for i in 0..n {
        data[i * n + i] = 1.0 / deg[i];
    }
    for &(i, j) in edges {
        let w = 1.0 / (deg[i] * deg[j]).sqrt();
        data[i * n + j] = w;
        data[j * n + i] = w;
    }
    a
}

impl fmt::Display for EnclosingSubgraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |it: &mut dyn Iterator<Item = String>| it.collect::<Vec<_>>().join(" ");
        writeln!(f, "h: {}", self.h)?;
        writeln!(f, "nodes: {}", join(&mut self.nodes.iter().map(|n| n.to_string())))?;
        writeln!(
            f,
            "edges: {}",
            join(&mut self.edges.iter().map(|(i, j)| format!("{i}-{j}")))
        )?;
        writeln!(
            f,
            "labels: {}",
            join(&mut self.drnl_labels.iter().map(|l| l.to_string()))
        )
    }
}

impl std::str::FromStr for EnclosingSubgraph {
    type Err = Error;

    /// Parses the debug text form written by `Display`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: String| Error::domain(format!("subgraph text: {m}"));
        let mut h = None;
        let mut nodes = None;
        let mut edges = None;
        let mut labels = None;
        for line in s.lines().filter(|l| !l.trim().is_empty()) {
            let (key, val) = line
                .split_once(':')
                .ok_or_else(|| bad(format!("missing key in {line:?}")))?;
            let toks = val.split_whitespace();
            match key.trim() {
                "h" => h = Some(val.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "nodes" => {
                    nodes = Some(
                        toks.map(|t| t.parse::<u32>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .map_err(|e| bad(e.to_string()))?,
                    )
                }
                "labels" => {
                    labels = Some(
                        toks.map(|t| t.parse::<u32>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .map_err(|e| bad(e.to_string()))?,
                    )
                }
                "edges" => {
                    let mut out = Vec::new();
                    for t in toks {
                        let (a, b) = t.split_once('-').ok_or_else(|| bad(format!("edge {t:?}")))?;
                        out.push((
                            a.parse().map_err(|_| bad(format!("edge {t:?}")))?,
                            b.parse().map_err(|_| bad(format!("edge {t:?}")))?,
                        ));
                    }
                    edges = Some(out);
                }
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        let sub = EnclosingSubgraph {
            nodes: nodes.ok_or_else(|| bad("missing nodes".into()))?,
            edges: edges.unwrap_or_default(),
            drnl_labels: labels.ok_or_else(|| bad("missing labels".into()))?,
            h: h.ok_or_else(|| bad("missing h".into()))?,
        };
        if sub.nodes.len() < 2 || sub.drnl_labels.len() != sub.nodes.len() {
            return Err(bad("node and label counts disagree".into()));
        }
        if sub.edges.iter().any(|&(i, j)| i >= j || j >= sub.nodes.len()) {
            return Err(bad("edge index out of range".into()));
        }
        Ok(sub)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TemporalGraph;

    fn snap(n: usize, edges: &[(u32, u32)]) -> GraphSnapshot {
        let t: Vec<_> = edges.iter().map(|&(u, v)| (u, v, 0)).collect();
        TemporalGraph::from_triples(n, &t).unwrap().snapshot(0)
    }

    // Reference evaluation written straight from the closed form with real
    // arithmetic and explicit floors.
    fn drnl_reference(dx: u32, dy: u32) -> u32 {
        let d = (dx + dy) as f64;
        let half = (d / 2.0).floor();
        let rem = d - 2.0 * half;
        (1.0 + (dx.min(dy) as f64) + half * (half + rem - 1.0)) as u32
    }

    #[test]
    fn drnl_values() {
        assert_eq!(drnl_label(Some(1), Some(1)), 2);
        assert_eq!(drnl_label(Some(1), Some(2)), 3);
        assert_eq!(drnl_label(Some(2), Some(2)), 5);
        assert_eq!(drnl_label(Some(0), Some(1)), 1);
        assert_eq!(drnl_label(None, Some(3)), 0);
        assert_eq!(drnl_label(Some(3), None), 0);
        for a in 0..=10 {
            for b in 0..=10 {
                assert_eq!(drnl_label(Some(a), Some(b)), drnl_reference(a, b));
                assert_eq!(drnl_label(Some(a), Some(b)), drnl_label(Some(b), Some(a)));
            }
        }
    }

    #[test]
    fn path_pair() {
        // a=0 – x=1, y=2 – b=3
        let s = snap(4, &[(0, 1), (2, 3)]);
        let sub = extract_enclosing_subgraph(&s, 1, 2, 1, 1.0, 0).unwrap();
        assert_eq!(sub.nodes, vec![1, 2, 0, 3]);
        let global: Vec<(u32, u32)> = sub
            .edges
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (sub.nodes[i], sub.nodes[j]);
                (a.min(b), a.max(b))
            })
            .collect();
        assert_eq!(global, vec![(0, 1), (2, 3)]);
        assert_eq!(sub.drnl_labels, vec![1, 1, 0, 0]);
    }

    #[test]
    fn square_midpoint_label() {
        // x=0 – c=2 – y=1
        let s = snap(3, &[(0, 2), (2, 1)]);
        let sub = extract_enclosing_subgraph(&s, 0, 1, 1, 1.0, 0).unwrap();
        assert_eq!(sub.nodes, vec![0, 1, 2]);
        assert_eq!(sub.drnl_labels, vec![1, 1, 2]);
    }

    #[test]
    fn isolated_pair() {
        let s = snap(5, &[(2, 3)]);
        for h in 1..4 {
            let sub = extract_enclosing_subgraph(&s, 0, 1, h, 0.35, 9).unwrap();
            assert_eq!(sub.nodes, vec![0, 1]);
            assert!(sub.edges.is_empty());
            assert_eq!(sub.drnl_labels, vec![1, 1]);
        }
    }

    #[test]
    fn star_dropping() {
        let leaves: Vec<(u32, u32)> = (2..12).map(|l| (0, l)).collect();
        let s = snap(12, &leaves);
        let sub = extract_enclosing_subgraph(&s, 0, 1, 1, 0.35, 42).unwrap();
        assert_eq!(sub.nodes.len(), 2 + 4);
        assert!(sub.nodes[2..].iter().all(|&l| (2..12).contains(&l)));
        assert_eq!(sub, extract_enclosing_subgraph(&s, 0, 1, 1, 0.35, 42).unwrap());
    }

    #[test]
    fn kept_counts() {
        assert_eq!(kept_count(10, 0.35), 4);
        assert_eq!(kept_count(20, 0.35), 7);
        assert_eq!(kept_count(0, 0.35), 0);
        assert_eq!(kept_count(7, 1.0), 7);
        assert_eq!(kept_count(1, 0.01), 1);
    }

    #[test]
    fn extraction_errors() {
        let s = snap(3, &[(0, 1)]);
        assert!(extract_enclosing_subgraph(&s, 0, 1, 1, 1.0, 0).is_err());
        assert!(extract_enclosing_subgraph(&s, 2, 2, 1, 1.0, 0).is_err());
        assert!(extract_enclosing_subgraph(&s, 0, 2, 1, 0.0, 0).is_err());
        assert!(extract_enclosing_subgraph(&s, 0, 2, 1, 1.5, 0).is_err());
        assert!(extract_enclosing_subgraph(&s, 0, 7, 1, 1.0, 0).is_err());
    }

    #[test]
    fn tensors() {
        let sub = EnclosingSubgraph {
            nodes: vec![0, 1],
            edges: vec![(0, 1)],
            drnl_labels: vec![1, 1],
            h: 1,
        };
        let t = build_tensors(&sub, 10);
        assert_eq!(t.norm_adjacency.data(), &[0.5, 0.5, 0.5, 0.5]);
        assert_eq!(t.features.shape(), &[2, 11]);
        assert_eq!(t.features.row(0)[1], 1.0);
        assert_eq!(t.features.row(0).iter().sum::<f64>(), 1.0);

        assert_eq!(normalized_adjacency(1, &[]).data(), &[1.0]);

        let big = EnclosingSubgraph {
            nodes: vec![0, 1, 2],
            edges: vec![],
            drnl_labels: vec![1, 1, 37],
            h: 1,
        };
        let t = build_tensors(&big, 4);
        assert_eq!(t.features.row(2), &[0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn debug_text_round_trip() {
        let s = snap(6, &[(0, 2), (2, 1), (1, 3), (3, 4), (0, 5)]);
        let sub = extract_enclosing_subgraph(&s, 0, 1, 2, 1.0, 0).unwrap();
        let text = sub.to_string();
        let back: EnclosingSubgraph = text.parse().unwrap();
        assert_eq!(back, sub);
        assert!("nodes: 1\nlabels: 1\nh: 1".parse::<EnclosingSubgraph>().is_err());
    }
}
