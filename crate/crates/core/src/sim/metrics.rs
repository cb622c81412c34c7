use std::io::Write;
use std::path::Path;

use crate::algos::{Algorithm, QuantBits};
use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "round,node,algo,val_loss,val_acc,tx_bytes,cum_tx_bytes,update_ms";

/// One row of the metrics table: node `node` after round `round`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub node: usize,
    pub algorithm: Algorithm,
    pub val_loss: f64,
    pub val_acc: f64,
    pub tx_bytes: u64,
    pub cum_tx_bytes: u64,
    /// Wall-clock time of the node transition; zero unless timing is enabled.
    pub update_ms: f64,
}

/// Bytes one device transmits per round. Model exchange and federated
/// averaging send one model-sized tensor; gradient exchange scales with the
/// number of neighbors `degree`.
pub fn overhead_bytes(algorithm: Algorithm, parameter_count: usize, degree: usize, bits: QuantBits) -> u64 {
    let tensor = (parameter_count * bits.bytes_per_param()) as u64;
    match algorithm {
        Algorithm::Cfa | Algorithm::Fa => tensor,
        Algorithm::CfaGe => tensor * degree as u64,
        Algorithm::Centralized | Algorithm::Isolated => 0,
    }
}

/// Writes the metrics table as CSV with the fixed header.
pub fn write_metrics_csv<W: Write>(out: W, rows: &[RoundMetrics]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(METRICS_HEADER.split(','))?;
    for r in rows {
        w.write_record(metrics_record(r))?;
    }
    w.flush()?;
    Ok(())
}

/// CSV fields of one row, in header order.
pub(crate) fn metrics_record(r: &RoundMetrics) -> [String; 8] {
    [
        r.round.to_string(),
        r.node.to_string(),
        r.algorithm.to_string(),
        r.val_loss.to_string(),
        r.val_acc.to_string(),
        r.tx_bytes.to_string(),
        r.cum_tx_bytes.to_string(),
        format!("{:.3}", r.update_ms),
    ]
}

pub fn save_metrics_csv(path: impl AsRef<Path>, rows: &[RoundMetrics]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_metrics_csv(std::io::BufWriter::new(f), rows)
}

/// Earliest round at which each node's validation loss reaches a threshold,
/// summarized over nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetRounds {
    /// Fastest node, if any node reached the threshold.
    pub min: Option<usize>,
    /// Slowest node, if every node reached the threshold.
    pub max: Option<usize>,
    /// Nodes that never reached it.
    pub unreached: Vec<usize>,
}

impl TargetRounds {
    pub fn all_reached(&self) -> bool {
        self.unreached.is_empty() && self.max.is_some()
    }
}

pub fn rounds_to_target(rows: &[RoundMetrics], threshold: f64) -> Result<TargetRounds> {
    if rows.is_empty() {
        return Err(Error::arg("no metrics to scan"));
    }
    let nodes = rows.iter().map(|r| r.node).max().unwrap_or(0) + 1;
    let mut first: Vec<Option<usize>> = vec![None; nodes];
    let mut present = vec![false; nodes];
    for r in rows {
        present[r.node] = true;
        if r.val_loss <= threshold {
            let slot = &mut first[r.node];
            *slot = Some(slot.map_or(r.round, |t| t.min(r.round)));
        }
    }
    let reached: Vec<usize> = first.iter().flatten().copied().collect();
    let unreached: Vec<usize> = (0..nodes).filter(|&k| present[k] && first[k].is_none()).collect();
    Ok(TargetRounds {
        min: reached.iter().copied().min(),
        max: if unreached.is_empty() { reached.iter().copied().max() } else { None },
        unreached,
    })
}

/// Upper bound on global rounds `ln(1 / (1 - gamma_g)) / gamma_l`.
pub fn convergence_bound(gamma_g: f64, gamma_l: f64) -> Result<f64> {
    if !(gamma_g > 0.0 && gamma_g < 1.0) {
        return Err(Error::arg(format!("global accuracy must lie in (0,1), got {gamma_g}")));
    }
    if !(gamma_l > 0.0 && gamma_l.is_finite()) {
        return Err(Error::arg(format!("local accuracy must be > 0, got {gamma_l}")));
    }
    Ok((1.0 / (1.0 - gamma_g)).ln() / gamma_l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(round: usize, node: usize, loss: f64) -> RoundMetrics {
        RoundMetrics {
            round,
            node,
            algorithm: Algorithm::Cfa,
            val_loss: loss,
            val_acc: 0.0,
            tx_bytes: 0,
            cum_tx_bytes: 0,
            update_ms: 0.0,
        }
    }

    #[test]
    fn overhead_table() {
        let b = QuantBits::B16;
        assert_eq!(overhead_bytes(Algorithm::Cfa, 1488, 2, b), 2976);
        assert_eq!(overhead_bytes(Algorithm::Fa, 16680, 10, b), 33360);
        assert_eq!(overhead_bytes(Algorithm::CfaGe, 1488, 6, b), 17856);
        assert_eq!(overhead_bytes(Algorithm::CfaGe, 16680, 10, b), 333600);
        assert_eq!(overhead_bytes(Algorithm::Isolated, 16680, 10, b), 0);
    }

    #[test]
    fn target_rounds() {
        let rows: Vec<_> = (0..5).flat_map(|t| (0..2).map(move |k| row(t, k, 0.4))).collect();
        let r = rounds_to_target(&rows, 0.5).unwrap();
        assert_eq!((r.min, r.max), (Some(0), Some(0)));
        let r = rounds_to_target(&rows, 0.1).unwrap();
        assert_eq!((r.min, r.max, r.unreached), (None, None, vec![0, 1]));

        let rows = vec![row(0, 0, 1.0), row(0, 1, 1.0), row(1, 0, 0.3), row(1, 1, 0.9), row(2, 1, 0.2)];
        let r = rounds_to_target(&rows, 0.5).unwrap();
        assert_eq!((r.min, r.max), (Some(1), Some(2)));
        assert!(rounds_to_target(&[], 0.5).is_err());
    }

    #[test]
    fn bound_values() {
        assert!((convergence_bound(0.9, 0.2).unwrap() - 10f64.ln() / 0.2).abs() < 1e-12);
        assert!((convergence_bound(1.0 - (-1f64).exp(), 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(convergence_bound(1e-9, 1.0).unwrap() < 1e-8);
        assert!(convergence_bound(1.0, 1.0).is_err());
        assert!(convergence_bound(0.5, 0.0).is_err());
    }

    #[test]
    fn csv_header_exact() {
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &[row(0, 1, 0.5)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRICS_HEADER);
        assert_eq!(text.lines().nth(1).unwrap(), "0,1,cfa,0.5,0,0,0,0.000");
    }
}
