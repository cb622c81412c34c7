//! Grid sweeps over configuration keys.
//!
//! A grid is a base configuration plus axes of `key = v1,v2,...` values. Each
//! distinct point runs as its own engine instance; a failed point only marks
//! its own rows.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sim::metrics::metrics_record;
use crate::sim::{run, RunOutput, SimConfig, METRICS_HEADER};

/// One swept key and its values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<String>,
}

impl Axis {
    /// Parses `key=v1,v2,...`. Values are split on `,` unless the key takes
    /// comma-separated values itself, in which case `;` separates them.
    pub fn parse(text: &str) -> Result<Self> {
        let (key, values) = text
            .split_once('=')
            .ok_or_else(|| Error::arg(format!("axis '{text}' must look like key=v1,v2")))?;
        let sep = if values.contains(';') { ';' } else { ',' };
        let values: Vec<String> = values
            .split(sep)
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(String::from)
            .collect();
        if values.is_empty() {
            return Err(Error::arg(format!("axis '{key}' has no values")));
        }
        Ok(Axis { key: key.trim().to_string(), values })
    }
}

/// One configuration of the grid.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    /// The axis values that produced this point, in axis order.
    pub settings: Vec<String>,
    pub config: SimConfig,
    /// Short digest of the canonical configuration text.
    pub hash: String,
}

/// Digest of the canonical configuration text.
pub fn config_hash(cfg: &SimConfig) -> String {
    let digest = Sha256::digest(cfg.to_text().as_bytes());
    let mut s = String::with_capacity(16);
    for b in digest.iter().take(8) {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Cartesian product of the axes over `base`, skipping points whose
/// configuration repeats an earlier one.
pub fn expand(base: &SimConfig, axes: &[Axis]) -> Result<Vec<SweepPoint>> {
    let mut points = vec![SweepPoint { settings: Vec::new(), config: base.clone(), hash: String::new() }];
    for axis in axes {
        if axis.values.is_empty() {
            return Err(Error::arg(format!("axis '{}' has no values", axis.key)));
        }
        let mut next = Vec::with_capacity(points.len() * axis.values.len());
        for p in &points {
            for v in &axis.values {
                let mut config = p.config.clone();
                config.set(&axis.key, v)?;
                let mut settings = p.settings.clone();
                settings.push(v.clone());
                next.push(SweepPoint { settings, config, hash: String::new() });
            }
        }
        points = next;
    }
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(points.len());
    for mut p in points {
        p.hash = config_hash(&p.config);
        if seen.insert(p.hash.clone()) {
            out.push(p);
        }
    }
    Ok(out)
}

/// A point and what its run produced.
#[derive(Debug)]
pub struct SweepResult {
    pub point: SweepPoint,
    pub outcome: Result<RunOutput>,
}

impl SweepResult {
    pub fn status(&self) -> String {
        match &self.outcome {
            Ok(_) => "ok".into(),
            Err(e) => format!("failed: {e}"),
        }
    }
}

/// Runs every point, at most `workers` at a time. With more than one point in
/// flight each run uses a single thread.
pub fn run_sweep(points: Vec<SweepPoint>, workers: usize) -> Result<Vec<SweepResult>> {
    if points.is_empty() {
        return Err(Error::arg("empty sweep grid"));
    }
    let parallel = workers.clamp(1, points.len());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(|| {
        points
            .into_par_iter()
            .map(|mut point| {
                if parallel > 1 {
                    point.config.workers = Some(1);
                }
                let outcome = run(&point.config);
                if let Err(e) = &outcome {
                    log::warn!("sweep point {} failed: {e}", point.hash);
                }
                SweepResult { point, outcome }
            })
            .collect()
    }))
}

fn prefix(keys: &[String], r: &SweepResult) -> Vec<String> {
    let mut row = r.point.settings.clone();
    row.truncate(keys.len());
    row.push(r.point.hash.clone());
    row.push(r.status());
    row
}

/// Every metrics row of every run, with the axis values, the configuration
/// digest and the run status prepended. A failed run contributes one row with
/// empty metric fields.
pub fn write_sweep_metrics<W: Write>(out: W, keys: &[String], results: &[SweepResult]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).flexible(false).from_writer(out);
    let mut header: Vec<String> = keys.to_vec();
    header.extend(["config".into(), "status".into()]);
    header.extend(METRICS_HEADER.split(',').map(String::from));
    w.write_record(&header)?;
    for r in results {
        let head = prefix(keys, r);
        match &r.outcome {
            Ok(o) => {
                for m in &o.metrics {
                    let mut row = head.clone();
                    row.extend(metrics_record(m));
                    w.write_record(&row)?;
                }
            }
            Err(_) => {
                let mut row = head;
                row.extend(std::iter::repeat_n(String::new(), 8));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Column names of the per-point summary after the axis keys.
pub const SUMMARY_COLUMNS: &[&str] = &[
    "config",
    "status",
    "rounds",
    "mean_val_loss",
    "min_val_loss",
    "max_val_loss",
    "mean_val_acc",
    "cum_tx_bytes",
];

/// One row per point summarizing the last validated round over nodes.
pub fn write_sweep_summary<W: Write>(out: W, keys: &[String], results: &[SweepResult]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let mut header: Vec<String> = keys.to_vec();
    header.extend(SUMMARY_COLUMNS.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for r in results {
        let mut row = prefix(keys, r);
        match &r.outcome {
            Ok(o) if !o.metrics.is_empty() => {
                let last = o.final_rows();
                let n = last.len() as f64;
                let loss = last.iter().map(|m| m.val_loss);
                row.extend([
                    (last[0].round + 1).to_string(),
                    (loss.clone().sum::<f64>() / n).to_string(),
                    loss.clone().fold(f64::INFINITY, f64::min).to_string(),
                    loss.fold(f64::NEG_INFINITY, f64::max).to_string(),
                    (last.iter().map(|m| m.val_acc).sum::<f64>() / n).to_string(),
                    last.iter().map(|m| m.cum_tx_bytes).max().unwrap_or(0).to_string(),
                ]);
            }
            _ => row.extend(std::iter::repeat_n(String::new(), 6)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_sweep(dir: impl AsRef<Path>, keys: &[String], results: &[SweepResult]) -> Result<()> {
    std::fs::create_dir_all(dir.as_ref())?;
    let summary = std::fs::File::create(dir.as_ref().join("summary.csv"))?;
    write_sweep_summary(std::io::BufWriter::new(summary), keys, results)?;
    let metrics = std::fs::File::create(dir.as_ref().join("metrics.csv"))?;
    write_sweep_metrics(std::io::BufWriter::new(metrics), keys, results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algos::Algorithm;
    use crate::nn::Architecture;
    use crate::sim::{write_metrics_csv, DataSource, PartitionChoice, TopologySpec};

    fn base() -> SimConfig {
        let mut c = SimConfig::default();
        c.algorithm = Algorithm::Cfa;
        c.model = Architecture::Toy;
        c.nodes = 4;
        c.topology = TopologySpec::Ring;
        c.partition = PartitionChoice::Iid(Some(20));
        c.dataset = Some(DataSource::SynthDigits { n: None });
        c.valset = Some(DataSource::SynthDigits { n: Some(40) });
        c.rounds = 3;
        c
    }

    fn axes(spec: &[&str]) -> Vec<Axis> {
        spec.iter().map(|s| Axis::parse(s).unwrap()).collect()
    }

    #[test]
    fn axis_parsing() {
        let a = Axis::parse("l1=0.05, 0.1").unwrap();
        assert_eq!((a.key.as_str(), a.values.len()), ("l1", 2));
        let a = Axis::parse("alternate=0,1;2-4").unwrap();
        assert_eq!(a.values, vec!["0,1", "2-4"]);
        assert!(Axis::parse("l1").is_err());
        assert!(Axis::parse("l1=").is_err());
    }

    #[test]
    fn rate_by_degree_grid_has_twelve_points() {
        let pts = expand(&base(), &axes(&["beta=0.05,0.1,0.15,0.2", "N=2,6,10"])).unwrap();
        assert_eq!(pts.len(), 12);
        assert_eq!(pts[4].settings, vec!["0.1", "6"]);
        assert_eq!(pts[4].config.degree, 6);
        assert_eq!(pts[4].config.hyper.beta, vec![0.1, 0.1]);
    }

    #[test]
    fn duplicates_collapse() {
        let pts = expand(&base(), &axes(&["l1=0.1,0.10,0.2", "seed=1,1"])).unwrap();
        assert_eq!(pts.len(), 2);
        let a = expand(&base(), &axes(&["beta=0.3"])).unwrap();
        let b = expand(&base(), &axes(&["l1=0.3", "l2=0.3"])).unwrap();
        assert_eq!(a[0].hash, b[0].hash);
    }

    #[test]
    fn unknown_key_is_an_error() {
        assert!(expand(&base(), &axes(&["lr=0.1"])).is_err());
        assert!(run_sweep(Vec::new(), 2).is_err());
    }

    #[test]
    fn single_point_matches_single_run() {
        let pts = expand(&base(), &[]).unwrap();
        let results = run_sweep(pts, 2).unwrap();
        let mut merged = Vec::new();
        write_sweep_metrics(&mut merged, &[], &results).unwrap();
        let mut single = Vec::new();
        write_metrics_csv(&mut single, &run(&base()).unwrap().metrics).unwrap();

        let merged = String::from_utf8(merged).unwrap();
        let single = String::from_utf8(single).unwrap();
        let tag = format!("{},ok,", config_hash(&base()));
        let stripped: Vec<String> = merged.lines().skip(1).map(|l| l.strip_prefix(&tag).unwrap().to_string()).collect();
        assert_eq!(stripped, single.lines().skip(1).collect::<Vec<_>>());
        assert_eq!(merged.lines().next().unwrap(), format!("config,status,{METRICS_HEADER}"));
    }

    #[test]
    fn failed_point_marks_only_its_row() {
        let pts = expand(&base(), &axes(&["B=5,500"])).unwrap();
        let results = run_sweep(pts, 2).unwrap();
        let mut buf = Vec::new();
        write_sweep_summary(&mut buf, &["B".into()], &results).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 3);
        assert!(rows[1].starts_with("5,") && rows[1].contains(",ok,3,"));
        assert!(rows[2].starts_with("500,") && rows[2].contains("failed: "));
        assert!(rows[2].ends_with(",,,,,,"));
    }
}
