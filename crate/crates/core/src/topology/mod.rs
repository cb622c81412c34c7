//! Device-to-device interaction graphs.
//!
//! `neighbors(k)` is the set of devices whose messages node `k` receives,
//! never including `k` itself. Generators in this module produce symmetric
//! graphs, but [`Topology::new`] also accepts directed ones.

mod kregular;
mod mixing;
mod schedule;

use std::collections::VecDeque;
use std::fmt::Write as _;

pub use kregular::k_regular;
pub use mixing::{epsilon_bound, check_epsilon, EpsilonBound, EpsilonCheck, MixingWeights};
pub use schedule::TopologySchedule;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a topology from receive lists. Lists are sorted and deduplicated.
    /// Unless `allow_disconnected`, the graph must be strongly connected.
    pub fn new(mut neighbors: Vec<Vec<usize>>, allow_disconnected: bool) -> Result<Self> {
        let k = neighbors.len();
        if k == 0 {
            return Err(Error::Topology("topology needs at least one node".into()));
        }
        for (node, list) in neighbors.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            if list.contains(&node) {
                return Err(Error::Topology(format!("node {node} lists itself as a neighbor")));
            }
            if let Some(&bad) = list.iter().find(|&&i| i >= k) {
                return Err(Error::Topology(format!(
                    "node {node} lists neighbor {bad} but there are only {k} nodes"
                )));
            }
        }
        let topo = Topology { neighbors };
        if !allow_disconnected && !topo.is_connected() {
            return Err(Error::Topology("graph is not connected".into()));
        }
        Ok(topo)
    }

    /// `K` nodes with no links. Used for isolated training.
    pub fn empty(k: usize) -> Result<Self> {
        Topology::new(vec![Vec::new(); k], true)
    }

    /// Path graph `0 - 1 - ... - (K-1)`.
    pub fn line(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::Topology(format!("line topology needs K >= 2, got {k}")));
        }
        let neighbors = (0..k)
            .map(|i| {
                let mut n = Vec::with_capacity(2);
                if i > 0 {
                    n.push(i - 1);
                }
                if i + 1 < k {
                    n.push(i + 1);
                }
                n
            })
            .collect();
        Topology::new(neighbors, false)
    }

    /// Cycle graph; every node has degree 2 (degree 1 for `K = 2`).
    pub fn ring(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::Topology(format!("ring topology needs K >= 2, got {k}")));
        }
        let neighbors = (0..k).map(|i| vec![(i + k - 1) % k, (i + 1) % k]).collect();
        Topology::new(neighbors, false)
    }

    pub fn complete(k: usize) -> Result<Self> {
        let neighbors = (0..k).map(|i| (0..k).filter(|&j| j != i).collect()).collect();
        Topology::new(neighbors, false)
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, k: usize) -> &[usize] {
        &self.neighbors[k]
    }

    pub fn degree(&self, k: usize) -> usize {
        self.neighbors[k].len()
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_symmetric(&self) -> bool {
        self.neighbors
            .iter()
            .enumerate()
            .all(|(k, list)| list.iter().all(|&i| self.neighbors[i].binary_search(&k).is_ok()))
    }

    fn reach_all(&self, forward: bool) -> bool {
        let k = self.len();
        let mut adj = vec![Vec::new(); k];
        for (node, list) in self.neighbors.iter().enumerate() {
            for &i in list {
                // Information flows i -> node.
                if forward {
                    adj[i].push(node);
                } else {
                    adj[node].push(i);
                }
            }
        }
        let mut seen = vec![false; k];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Strong connectivity of the information-flow graph.
    pub fn is_connected(&self) -> bool {
        self.len() == 1 || (self.reach_all(true) && self.reach_all(false))
    }

    /// Adjacency-list text: one line per node, `k: i,j,...`.
    pub fn to_adjacency_text(&self) -> String {
        let mut out = String::new();
        for (k, list) in self.neighbors.iter().enumerate() {
            let joined: Vec<String> = list.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{k}: {}", joined.join(","));
        }
        out
    }

    pub fn from_adjacency_text(text: &str, allow_disconnected: bool) -> Result<Self> {
        let mut rows: Vec<(usize, Vec<usize>)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| Error::Topology(format!("line {}: {what}: '{line}'", lineno + 1));
            let (head, tail) = line.split_once(':').ok_or_else(|| bad("missing ':'"))?;
            let node: usize = head.trim().parse().map_err(|_| bad("bad node id"))?;
            let list = tail
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<usize>().map_err(|_| bad("bad neighbor id")))
                .collect::<Result<Vec<_>>>()?;
            rows.push((node, list));
        }
        rows.sort_by_key(|(k, _)| *k);
        for (expect, (k, _)) in rows.iter().enumerate() {
            if *k != expect {
                return Err(Error::Topology(format!(
                    "node ids must be 0..K without gaps or repeats; found {k} at position {expect}"
                )));
            }
        }
        Topology::new(rows.into_iter().map(|(_, l)| l).collect(), allow_disconnected)
    }
}
