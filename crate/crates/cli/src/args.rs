use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use flsim::sim::SimConfig;
use flsim::Result;

/// Single-dash multi-letter flags accepted in their original spelling.
const LEGACY_FLAGS: &[&str] = &["-l1", "-l2", "-mu", "-eps", "-ro"];

const SUBCOMMANDS: &[&str] = &["run", "synth", "convert-check", "bench-overhead", "sweep", "help"];

/// Rewrites `-l1 0.1` style flags to `--l1 0.1` and inserts `run` when the
/// first argument is a flag rather than a subcommand.
pub fn normalize_argv<I, T>(argv: I) -> Vec<OsString>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let mut args: Vec<OsString> = argv
        .into_iter()
        .map(Into::into)
        .map(|a| {
            let legacy = a.to_str().and_then(|s| {
                let (flag, value) = match s.split_once('=') {
                    Some((f, v)) => (f, Some(v)),
                    None => (s, None),
                };
                LEGACY_FLAGS.contains(&flag).then(|| match value {
                    Some(v) => format!("-{flag}={v}"),
                    None => format!("-{flag}"),
                })
            });
            legacy.map(OsString::from).unwrap_or(a)
        })
        .collect();
    if let Some(first) = args.get(1).and_then(|a| a.to_str()) {
        let top_level = matches!(first, "-h" | "--help" | "-V" | "--version");
        if !top_level && !SUBCOMMANDS.contains(&first) && first.starts_with('-') {
            args.insert(1, OsString::from("run"));
        }
    }
    args
}

#[derive(Debug, Parser)]
#[command(name = "flsim", version, about = "Consensus-based federated learning simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation (the default when only flags are given).
    Run(RunArgs),
    /// Write a synthetic dataset as an FLDS file.
    Synth(SynthArgs),
    /// Check an FLDS file, for example one produced by the MAT converter.
    ConvertCheck(CheckArgs),
    /// Print per-device communication overhead per round.
    BenchOverhead(BenchArgs),
    /// Run a grid of configurations.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat key=value configuration file; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// cfa | cfa-ge | fa | centralized | isolated
    #[arg(long)]
    pub algo: Option<String>,
    /// mnist-1fc | cnn | 2nn | toy
    #[arg(long)]
    pub model: Option<String>,
    /// Gradient exchange rate for hidden layers.
    #[arg(long = "l1", allow_negative_numbers = true)]
    pub l1: Option<f64>,
    /// Gradient exchange rate for the output layer.
    #[arg(long = "l2", allow_negative_numbers = true)]
    pub l2: Option<f64>,
    /// Learning rate for local SGD.
    #[arg(long = "mu", allow_negative_numbers = true)]
    pub mu: Option<f64>,
    /// Mixing parameter for model averaging.
    #[arg(long = "eps", allow_negative_numbers = true)]
    pub eps: Option<f64>,
    /// Number of devices (default 80).
    #[arg(short = 'K')]
    pub nodes: Option<usize>,
    /// Neighbors per device.
    #[arg(short = 'N')]
    pub neighbors: Option<usize>,
    /// Training rounds.
    #[arg(short = 'T')]
    pub rounds: Option<usize>,
    /// MEWMA parameter.
    #[arg(long = "ro", allow_negative_numbers = true)]
    pub ro: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of devices taking part in each averaging round.
    #[arg(long)]
    pub participation: Option<f64>,
    /// line | ring | complete | empty | kregular[:n] | file:PATH | phases
    #[arg(long)]
    pub topology: Option<String>,
    /// iid[:n] | sizes:a,b,.. | random:n
    #[arg(long)]
    pub partition: Option<String>,
    /// synth-radar[:n] | synth-digits[:n] | idx:IMAGES,LABELS | PATH
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub valset: Option<String>,
    /// Any configuration key, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Worker threads (overrides FLSIM_WORKERS).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Record per-node update times.
    #[arg(long)]
    pub timing: bool,
}

impl ConfigArgs {
    /// Defaults, then the config file, then flags, then `--set` pairs.
    pub fn resolve(&self) -> Result<SimConfig> {
        let mut cfg = SimConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_text(&std::fs::read_to_string(path)?)?;
        }
        let flags: [(&str, Option<String>); 15] = [
            ("algo", self.algo.clone()),
            ("model", self.model.clone()),
            ("l1", self.l1.map(|v| v.to_string())),
            ("l2", self.l2.map(|v| v.to_string())),
            ("mu", self.mu.map(|v| v.to_string())),
            ("eps", self.eps.map(|v| v.to_string())),
            ("K", self.nodes.map(|v| v.to_string())),
            ("N", self.neighbors.map(|v| v.to_string())),
            ("T", self.rounds.map(|v| v.to_string())),
            ("ro", self.ro.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("participation", self.participation.map(|v| v.to_string())),
            ("topology", self.topology.clone()),
            ("partition", self.partition.clone()),
            ("dataset", self.dataset.clone()),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        if let Some(v) = &self.valset {
            cfg.set("valset", v)?;
        }
        for pair in &self.set {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| flsim::Error::Config(format!("--set expects KEY=VALUE, got '{pair}'")))?;
            cfg.set(k.trim(), v)?;
        }
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        cfg.timing |= self.timing;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output directory for metrics.csv, loss.png and config.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write every final model as node_<k>.flw under OUT/models.
    #[arg(long, requires = "out")]
    pub save_models: bool,
    /// Skip the loss plot.
    #[arg(long)]
    pub no_plot: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKind {
    Radar,
    Digits,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(value_enum)]
    pub kind: SynthKind,
    /// Output FLDS file.
    pub output: PathBuf,
    /// Number of examples.
    #[arg(short = 'n', long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Class-structure seed shared by training and validation files.
    #[arg(long, default_value_t = 1)]
    pub family: u64,
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// FLDS file to check.
    pub file: PathBuf,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    /// Reference FLDS file whose rows must match.
    #[arg(long)]
    pub against: Option<PathBuf>,
    /// Absolute feature tolerance against the reference.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Bits per exchanged parameter: 8, 16 or 32.
    #[arg(long, default_value = "16")]
    pub bits: String,
    /// Neighbor counts for gradient exchange.
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 6, 10])]
    pub degrees: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Swept key and values, e.g. `l1=0.05,0.1`. Repeatable.
    #[arg(long = "axis", value_name = "KEY=V1,V2")]
    pub axes: Vec<String>,
    /// Directory for summary.csv and metrics.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Grid points run at once.
    #[arg(long)]
    pub parallel: Option<usize>,
}
