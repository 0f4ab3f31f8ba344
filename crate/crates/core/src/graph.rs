//! Temporal co-occurrence graph: day-stamped edge events and immutable
//! snapshots at a cutoff day.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate};

use crate::error::{Error, Result};

/// Leading bytes of the binary event cache.
pub const CACHE_MAGIC: &[u8; 8] = b"LPEVENTS";

/// Day 0 of the event calendar.
pub const EPOCH_YEAR: i32 = 1990;

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(EPOCH_YEAR, 1, 1).expect("valid epoch")
}

/// Day index of December 31 of `year`, counting 1990-01-01 as day 0.
pub fn year_cutoff_day(year: i32) -> Result<u32> {
    if year < EPOCH_YEAR {
        return Err(Error::domain(format!("year {year} precedes {EPOCH_YEAR}")));
    }
    let end = NaiveDate::from_ymd_opt(year, 12, 31)
        .ok_or_else(|| Error::domain(format!("year {year} out of calendar range")))?;
    Ok((end - epoch()).num_days() as u32)
}

/// Calendar year containing `day`.
pub fn day_to_year(day: u32) -> i32 {
    epoch()
        .checked_add_days(Days::new(day as u64))
        .map(|d| d.year())
        .unwrap_or(i32::MAX)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeEvent {
    pub u: u32,
    pub v: u32,
    pub day: u32,
}

/// What ingestion skipped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestSummary {
    pub accepted: usize,
    /// Line numbers (1-based) of rejected self-loop events.
    pub self_loops: Vec<usize>,
}

/// Full multigraph as a list of day-stamped events.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemporalGraph {
    num_nodes: usize,
    events: Vec<EdgeEvent>,
}

impl TemporalGraph {
    /// Builds a graph from raw events. Self-loops and out-of-range ids are rejected.
    pub fn new(num_nodes: usize, events: Vec<EdgeEvent>) -> Result<Self> {
        for e in &events {
            if e.u == e.v {
                return Err(Error::domain(format!("self-loop event on node {}", e.u)));
            }
            if e.u as usize >= num_nodes || e.v as usize >= num_nodes {
                return Err(Error::domain(format!(
                    "event ({}, {}) out of range for {num_nodes} nodes",
                    e.u, e.v
                )));
            }
        }
        Ok(Self { num_nodes, events })
    }

    /// Convenience constructor from `(u, v, day)` triples.
    pub fn from_triples(num_nodes: usize, triples: &[(u32, u32, u32)]) -> Result<Self> {
        Self::new(
            num_nodes,
            triples
                .iter()
                .map(|&(u, v, day)| EdgeEvent { u, v, day })
                .collect(),
        )
    }

    pub fn ingest(path: impl AsRef<Path>) -> Result<(Self, IngestSummary)> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file), path)
    }

    /// Parses the edge-list text format. `origin` is used in diagnostics only.
    pub fn read_from<R: Read>(reader: R, origin: &Path) -> Result<(Self, IngestSummary)> {
        let reader = BufReader::new(reader);
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };

        let mut declared: Option<usize> = None;
        let mut events = Vec::new();
        let mut summary = IngestSummary::default();
        let mut max_id: Option<u32> = None;

        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::io(origin, e))?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix("#nodes") {
                if lineno != 1 || declared.is_some() {
                    return Err(parse_err(lineno, "node-count header must be the first line".into()));
                }
                let n = rest
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| parse_err(lineno, format!("bad node count: {e}")))?;
                declared = Some(n);
                continue;
            }
            let mut fields = trimmed.split_whitespace();
            let mut next = |name: &str| -> Result<i64> {
                let tok = fields
                    .next()
                    .ok_or_else(|| parse_err(lineno, format!("missing field `{name}`")))?;
                tok.parse::<i64>()
                    .map_err(|e| parse_err(lineno, format!("bad `{name}` {tok:?}: {e}")))
            };
            let u = next("u")?;
            let v = next("v")?;
            let day = next("day")?;
            if fields.next().is_some() {
                return Err(parse_err(lineno, "expected exactly 3 fields".into()));
            }
            if u < 0 || v < 0 || u > u32::MAX as i64 || v > u32::MAX as i64 {
                return Err(parse_err(lineno, format!("node id out of range in ({u}, {v})")));
            }
            if day < 0 || day > u32::MAX as i64 {
                return Err(parse_err(lineno, format!("day {day} out of range")));
            }
            let (u, v, day) = (u as u32, v as u32, day as u32);
            if u == v {
                summary.self_loops.push(lineno);
                continue;
            }
            if let Some(n) = declared {
                if u as usize >= n || v as usize >= n {
                    return Err(parse_err(
                        lineno,
                        format!("node id exceeds declared count {n} in ({u}, {v})"),
                    ));
                }
            }
            max_id = Some(max_id.map_or(u.max(v), |m| m.max(u).max(v)));
            events.push(EdgeEvent { u, v, day });
        }

        let num_nodes = declared.unwrap_or_else(|| max_id.map_or(0, |m| m as usize + 1));
        summary.accepted = events.len();
        Ok((Self { num_nodes, events }, summary))
    }

    /// Writes the graph in the edge-list text format, always with a node-count header.
    pub fn write_to<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = BufWriter::new(writer);
        writeln!(w, "#nodes {}", self.num_nodes)?;
        for e in &self.events {
            writeln!(w, "{}\t{}\t{}", e.u, e.v, e.day)?;
        }
        w.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(file).map_err(|e| Error::io(path, e))
    }

    /// Writes the binary event cache: magic, node count and event count as
    /// u64 LE, then `u, v, day` as u32 LE per event.
    pub fn write_cache<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = BufWriter::new(writer);
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&(self.num_nodes as u64).to_le_bytes())?;
        w.write_all(&(self.events.len() as u64).to_le_bytes())?;
        for e in &self.events {
            for x in [e.u, e.v, e.day] {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn save_cache(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_cache(file).map_err(|e| Error::io(path, e))
    }

    /// Reads a binary event cache written by [`TemporalGraph::write_cache`].
    pub fn read_cache(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |msg: &str| Error::Parse {
            path: origin.to_path_buf(),
            line: 0,
            msg: format!("event cache: {msg}"),
        };
        let rest = bytes.strip_prefix(CACHE_MAGIC.as_slice()).ok_or_else(|| bad("bad magic"))?;
        if rest.len() < 16 {
            return Err(bad("truncated header"));
        }
        let num_nodes = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
        let count = u64::from_le_bytes(rest[8..16].try_into().expect("8 bytes")) as usize;
        let body = &rest[16..];
        if count.checked_mul(12) != Some(body.len()) {
            return Err(bad("event count does not match file size"));
        }
        let word = |i: usize| u32::from_le_bytes(body[4 * i..4 * i + 4].try_into().expect("4 bytes"));
        let events = (0..count)
            .map(|i| EdgeEvent {
                u: word(3 * i),
                v: word(3 * i + 1),
                day: word(3 * i + 2),
            })
            .collect();
        Self::new(num_nodes, events).map_err(|e| bad(&e.to_string()))
    }

    /// Loads either a binary event cache or a text edge list.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(CACHE_MAGIC) {
            Self::read_cache(&bytes, path)
        } else {
            Ok(Self::read_from(&bytes[..], path)?.0)
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn events(&self) -> &[EdgeEvent] {
        &self.events
    }

    pub fn max_day(&self) -> Option<u32> {
        self.events.iter().map(|e| e.day).max()
    }

    /// Number of events per calendar year.
    pub fn events_per_year(&self) -> BTreeMap<i32, usize> {
        let mut out = BTreeMap::new();
        for e in &self.events {
            *out.entry(day_to_year(e.day)).or_insert(0) += 1;
        }
        out
    }

    /// Simple-graph view containing every event with `day <= cutoff_day`.
    pub fn snapshot(&self, cutoff_day: u32) -> GraphSnapshot {
        let mut half: Vec<Vec<u32>> = vec![Vec::new(); self.num_nodes];
        for e in self.events.iter().filter(|e| e.day <= cutoff_day) {
            half[e.u as usize].push(e.v);
            half[e.v as usize].push(e.u);
        }
        let mut neighbors = Vec::with_capacity(self.num_nodes);
        let mut multiplicity = Vec::with_capacity(self.num_nodes);
        for mut list in half {
            list.sort_unstable();
            let mut nb: Vec<u32> = Vec::new();
            let mut mult: Vec<u32> = Vec::new();
            for x in list {
                if nb.last() == Some(&x) {
                    *mult.last_mut().expect("parallel vectors") += 1;
                } else {
                    nb.push(x);
                    mult.push(1);
                }
            }
            nb.shrink_to_fit();
            mult.shrink_to_fit();
            neighbors.push(nb);
            multiplicity.push(mult);
        }
        GraphSnapshot {
            num_nodes: self.num_nodes,
            cutoff_day,
            neighbors,
            multiplicity,
        }
    }
}

/// Immutable simple-graph view of a [`TemporalGraph`] at a cutoff day.
///
/// Adjacency is binary (distinct neighbors, sorted ascending); event
/// multiplicities are kept alongside for weighted degree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSnapshot {
    num_nodes: usize,
    cutoff_day: u32,
    neighbors: Vec<Vec<u32>>,
    multiplicity: Vec<Vec<u32>>,
}

impl GraphSnapshot {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn cutoff_day(&self) -> u32 {
        self.cutoff_day
    }

    fn check(&self, u: usize) -> Result<()> {
        if u >= self.num_nodes {
            Err(Error::domain(format!(
                "node {u} out of range for {} nodes",
                self.num_nodes
            )))
        } else {
            Ok(())
        }
    }

    pub fn degree(&self, u: usize) -> Result<usize> {
        self.check(u)?;
        Ok(self.neighbors[u].len())
    }

    pub fn neighbors(&self, u: usize) -> Result<&[u32]> {
        self.check(u)?;
        Ok(&self.neighbors[u])
    }

    /// Sum of event multiplicities over incident edges.
    pub fn weighted_degree(&self, u: usize) -> Result<usize> {
        self.check(u)?;
        Ok(self.multiplicity[u].iter().map(|&m| m as usize).sum())
    }

    /// Unchecked neighbor access for hot loops; panics on out-of-range ids.
    pub(crate) fn adj(&self, u: usize) -> &[u32] {
        &self.neighbors[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes
            && v < self.num_nodes
            && self.neighbors[u].binary_search(&(v as u32)).is_ok()
    }

    /// Number of events between `u` and `v` up to the cutoff.
    pub fn multiplicity(&self, u: usize, v: usize) -> usize {
        if u >= self.num_nodes {
            return 0;
        }
        match self.neighbors[u].binary_search(&(v as u32)) {
            Ok(i) => self.multiplicity[u][i] as usize,
            Err(_) => 0,
        }
    }

    /// Number of distinct undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Number of edge events up to the cutoff.
    pub fn num_events(&self) -> usize {
        self.multiplicity
            .iter()
            .flat_map(|m| m.iter())
            .map(|&m| m as usize)
            .sum::<usize>()
            / 2
    }

    /// Distinct edges as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors.iter().enumerate().flat_map(|(u, nb)| {
            nb.iter()
                .filter(move |&&v| (v as usize) > u)
                .map(move |&v| (u, v as usize))
        })
    }

    /// `|N(u) ∩ N(v)|` by merging the sorted lists.
    pub fn common_neighbors(&self, u: usize, v: usize) -> usize {
        let (a, b) = (&self.neighbors[u], &self.neighbors[v]);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}
