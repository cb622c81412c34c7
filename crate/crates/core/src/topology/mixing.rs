use super::Topology;
use crate::error::{Error, Result};

/// Per-node weights `alpha[k][i]` over the neighbors of `k`, aligned with
/// [`Topology::neighbors`].
#[derive(Debug, Clone, PartialEq)]
pub struct MixingWeights {
    rows: Vec<Vec<(usize, f64)>>,
}

impl MixingWeights {
    /// Shard-size-proportional weights: `alpha[k][i] = E_i / sum_{j in N(k)} E_j`.
    pub fn from_shard_sizes(topo: &Topology, sizes: &[usize]) -> Result<Self> {
        if sizes.len() != topo.len() {
            return Err(Error::arg(format!(
                "{} shard sizes for {} nodes",
                sizes.len(),
                topo.len()
            )));
        }
        if let Some(node) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::arg(format!("node {node} has an empty shard")));
        }
        let rows = (0..topo.len())
            .map(|k| {
                let total: f64 = topo.neighbors(k).iter().map(|&i| sizes[i] as f64).sum();
                topo.neighbors(k)
                    .iter()
                    .map(|&i| (i, sizes[i] as f64 / total))
                    .collect()
            })
            .collect();
        Ok(MixingWeights { rows })
    }

    /// The same raw weight on every edge (not normalized).
    pub fn constant(topo: &Topology, alpha: f64) -> Self {
        MixingWeights {
            rows: (0..topo.len())
                .map(|k| topo.neighbors(k).iter().map(|&i| (i, alpha)).collect())
                .collect(),
        }
    }

    pub fn row(&self, k: usize) -> &[(usize, f64)] {
        &self.rows[k]
    }

    pub fn get(&self, k: usize, i: usize) -> Option<f64> {
        self.rows[k].iter().find(|(j, _)| *j == i).map(|(_, a)| *a)
    }

    pub fn row_sum(&self, k: usize) -> f64 {
        self.rows[k].iter().map(|(_, a)| a).sum()
    }

    /// Every non-empty row sums to one within `1e-12`.
    pub fn is_normalized(&self) -> bool {
        self.rows
            .iter()
            .enumerate()
            .all(|(k, r)| r.is_empty() || (self.row_sum(k) - 1.0).abs() <= 1e-12)
    }
}

/// Stable consensus step sizes lie in the open interval `(0, upper)`, with
/// `upper = 1 / delta` and `delta` the largest weighted in-degree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonBound {
    pub delta: f64,
    pub upper: f64,
}

pub fn epsilon_bound(weights: &MixingWeights) -> EpsilonBound {
    let delta = (0..weights.rows.len())
        .map(|k| weights.row_sum(k))
        .fold(0.0, f64::max);
    let upper = if delta > 0.0 { 1.0 / delta } else { f64::INFINITY };
    EpsilonBound { delta, upper }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpsilonCheck {
    Inside,
    /// `eps == upper`: outside the open interval but accepted, since the
    /// small-network presets use `eps = 1` with normalized weights.
    AtBoundary,
}

pub fn check_epsilon(eps: f64, bound: &EpsilonBound) -> Result<EpsilonCheck> {
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::arg(format!("consensus step must be positive, got {eps}")));
    }
    let tol = 1e-12 * bound.upper.max(1.0);
    if eps < bound.upper - tol {
        Ok(EpsilonCheck::Inside)
    } else if eps <= bound.upper + tol {
        Ok(EpsilonCheck::AtBoundary)
    } else {
        Err(Error::arg(format!(
            "consensus step {eps} exceeds the stability bound 1/delta = {}",
            bound.upper
        )))
    }
}
