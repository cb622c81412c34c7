use std::fmt::Write as _;
use std::ops::Range;
use std::path::PathBuf;

use crate::algos::{Algorithm, HyperParams, QuantBits};
use crate::data::{load_idx, load_native, synth_digits, synth_radar, Dataset, PartitionSpec, SynthOptions};
use crate::error::{Error, Result};
use crate::nn::Architecture;
use crate::seed::{self, Stream};
use crate::topology::{k_regular, Topology, TopologySchedule};

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Synthetic range spectra; `n` defaults from the node count.
    SynthRadar { n: Option<usize> },
    /// Synthetic digit images; `n` defaults from the node count.
    SynthDigits { n: Option<usize> },
    /// A native FLDS file.
    Native(PathBuf),
    /// An IDX image/label file pair.
    Idx { images: PathBuf, labels: PathBuf },
}

impl DataSource {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let count = |a: Option<&str>| -> Result<Option<usize>> {
            a.map(|v| v.parse().map_err(|_| Error::Config(format!("bad example count '{v}'"))))
                .transpose()
        };
        match head {
            "synth-radar" | "radar" => Ok(DataSource::SynthRadar { n: count(arg)? }),
            "synth-digits" | "digits" => Ok(DataSource::SynthDigits { n: count(arg)? }),
            "idx" => {
                let (images, labels) = arg
                    .and_then(|a| a.split_once(','))
                    .ok_or_else(|| Error::Config("idx source needs 'idx:IMAGES,LABELS'".into()))?;
                Ok(DataSource::Idx { images: images.into(), labels: labels.into() })
            }
            _ if s.is_empty() => Err(Error::Config("empty dataset reference".into())),
            _ => Ok(DataSource::Native(PathBuf::from(s))),
        }
    }

    fn is_synthetic(&self) -> bool {
        matches!(self, DataSource::SynthRadar { .. } | DataSource::SynthDigits { .. })
    }
}

impl std::fmt::Display for DataSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let n = |n: &Option<usize>| n.map(|v| format!(":{v}")).unwrap_or_default();
        match self {
            DataSource::SynthRadar { n: c } => write!(f, "synth-radar{}", n(c)),
            DataSource::SynthDigits { n: c } => write!(f, "synth-digits{}", n(c)),
            DataSource::Native(p) => write!(f, "{}", p.display()),
            DataSource::Idx { images, labels } => write!(f, "idx:{},{}", images.display(), labels.display()),
        }
    }
}

/// Graph family, resolved against the node count, degree and seed.
#[derive(Debug, Clone, PartialEq)]
pub enum TopologySpec {
    Line,
    Ring,
    Complete,
    /// No edges.
    Empty,
    /// Random regular graph; `None` takes the degree from the `N` key.
    KRegular(Option<usize>),
    /// Adjacency text file.
    File(PathBuf),
    /// Different graphs over consecutive round ranges.
    Phases(Vec<(Range<usize>, TopologySpec)>),
}

impl TopologySpec {
    /// `line`, `ring`, `complete`, `empty`, `kregular[:D]`, a file path, or
    /// phases such as `kregular:2@0-20,ring@20-40`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.contains('@') {
            let mut phases = Vec::new();
            for part in s.split(',') {
                let (spec, range) = part
                    .split_once('@')
                    .ok_or_else(|| Error::Config(format!("phase '{part}' needs SPEC@START-END")))?;
                let (a, b) = range
                    .split_once('-')
                    .ok_or_else(|| Error::Config(format!("bad round range '{range}'")))?;
                let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad round '{v}'")));
                let inner = TopologySpec::parse(spec)?;
                if matches!(inner, TopologySpec::Phases(_)) {
                    return Err(Error::Config("phases cannot nest".into()));
                }
                phases.push((parse(a)?..parse(b)?, inner));
            }
            return Ok(TopologySpec::Phases(phases));
        }
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        match head {
            "line" => Ok(TopologySpec::Line),
            "ring" => Ok(TopologySpec::Ring),
            "complete" => Ok(TopologySpec::Complete),
            "empty" | "none" => Ok(TopologySpec::Empty),
            "kregular" | "k-regular" => {
                let d = arg
                    .map(|a| a.parse().map_err(|_| Error::Config(format!("bad degree '{a}'"))))
                    .transpose()?;
                Ok(TopologySpec::KRegular(d))
            }
            "" => Err(Error::Config("empty topology".into())),
            _ => Ok(TopologySpec::File(PathBuf::from(s))),
        }
    }

    fn build(&self, k: usize, degree: usize, seed: u64) -> Result<Topology> {
        match self {
            TopologySpec::Line => Topology::line(k),
            TopologySpec::Ring => Topology::ring(k),
            TopologySpec::Complete => Topology::complete(k),
            TopologySpec::Empty => Topology::empty(k),
            TopologySpec::KRegular(d) => k_regular(k, d.unwrap_or(degree), seed),
            TopologySpec::File(p) => {
                let text = std::fs::read_to_string(p)?;
                let t = Topology::from_adjacency_text(&text, false)?;
                if t.len() != k {
                    return Err(Error::Config(format!("topology file has {} nodes, K={k}", t.len())));
                }
                Ok(t)
            }
            TopologySpec::Phases(_) => Err(Error::Config("phases cannot nest".into())),
        }
    }
}

impl std::fmt::Display for TopologySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TopologySpec::Line => f.write_str("line"),
            TopologySpec::Ring => f.write_str("ring"),
            TopologySpec::Complete => f.write_str("complete"),
            TopologySpec::Empty => f.write_str("empty"),
            TopologySpec::KRegular(None) => f.write_str("kregular"),
            TopologySpec::KRegular(Some(d)) => write!(f, "kregular:{d}"),
            TopologySpec::File(p) => write!(f, "{}", p.display()),
            TopologySpec::Phases(ps) => {
                for (i, (r, s)) in ps.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{s}@{}-{}", r.start, r.end)?;
                }
                Ok(())
            }
        }
    }
}

/// Partition scheme, resolved against the class count of the training set.
#[derive(Debug, Clone, PartialEq)]
pub enum PartitionChoice {
    Iid(Option<usize>),
    Sizes(Vec<usize>),
    RandomClasses(usize),
}

impl PartitionChoice {
    /// `iid`, `iid:PER_NODE`, `sizes:A,B,...` or `random:PER_NODE`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let num = |v: &str| v.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad size '{v}'")));
        match (head, arg) {
            ("iid", None) => Ok(PartitionChoice::Iid(None)),
            ("iid", Some(a)) => Ok(PartitionChoice::Iid(Some(num(a)?))),
            ("sizes", Some(a)) => Ok(PartitionChoice::Sizes(a.split(',').map(num).collect::<Result<_>>()?)),
            ("random" | "noniid" | "non-iid", Some(a)) => Ok(PartitionChoice::RandomClasses(num(a)?)),
            _ => Err(Error::Config(format!("unknown partition '{s}'"))),
        }
    }

    pub fn resolve(&self, classes: usize) -> PartitionSpec {
        match self {
            PartitionChoice::Iid(n) => PartitionSpec::Iid { per_node: *n },
            PartitionChoice::Sizes(v) => PartitionSpec::Sizes(v.clone()),
            PartitionChoice::RandomClasses(n) => PartitionSpec::random_classes(*n, classes),
        }
    }
}

impl std::fmt::Display for PartitionChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PartitionChoice::Iid(None) => f.write_str("iid"),
            PartitionChoice::Iid(Some(n)) => write!(f, "iid:{n}"),
            PartitionChoice::Sizes(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "sizes:{}", parts.join(","))
            }
            PartitionChoice::RandomClasses(n) => write!(f, "random:{n}"),
        }
    }
}

/// Everything that defines one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub algorithm: Algorithm,
    pub model: Architecture,
    pub nodes: usize,
    /// Neighbors per device for random regular graphs.
    pub degree: usize,
    pub topology: TopologySpec,
    pub partition: PartitionChoice,
    pub hyper: HyperParams,
    pub rounds: usize,
    /// Server step size; defaults to the local one.
    pub mu_s: Option<f64>,
    pub seed: u64,
    /// Parameter width used for byte accounting and, when enabled, numerics.
    pub quantize_bits: QuantBits,
    pub quantize_numerics: bool,
    /// Rounds run as federated averaging inside a consensus run.
    pub alternate: Vec<usize>,
    /// Fraction of devices taking part in each federated-averaging round.
    pub participation: f64,
    /// Probability that any single message is lost.
    pub drop_prob: f64,
    pub dataset: Option<DataSource>,
    pub valset: Option<DataSource>,
    /// Noise level of synthetic data; `None` keeps the generator default.
    pub noise: Option<f64>,
    /// Validate every this many rounds (the last round is always validated).
    pub validate_every: usize,
    pub timing: bool,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            algorithm: Algorithm::CfaGe,
            model: Architecture::Cnn,
            nodes: 80,
            degree: 2,
            topology: TopologySpec::KRegular(None),
            partition: PartitionChoice::Iid(None),
            hyper: HyperParams::default(),
            rounds: 40,
            mu_s: None,
            seed: 0,
            quantize_bits: QuantBits::B16,
            quantize_numerics: false,
            alternate: Vec::new(),
            participation: 1.0,
            drop_prob: 0.0,
            dataset: None,
            valset: None,
            noise: None,
            validate_every: 1,
            timing: false,
            workers: None,
            out: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{v}' for {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean '{v}' for {key}"))),
    }
}

/// `3,5,7` or ranges such as `0-4` (end exclusive), mixed freely.
fn parse_rounds(v: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in v.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (parse_num("alternate", a)?, parse_num("alternate", b)?);
                out.extend(a..b);
            }
            None => out.push(parse_num("alternate", part)?),
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

impl SimConfig {
    /// Known keys, in canonical order.
    pub const KEYS: &'static [&'static str] = &[
        "algo", "model", "K", "N", "T", "B", "mu", "mu_s", "eps", "l1", "l2", "beta", "beta_self", "ro",
        "ro_momentum", "nesterov", "warmup", "share", "seed", "topology", "partition", "quantize_bits",
        "quantize_numerics", "alternate", "participation", "drop", "dataset", "valset", "noise",
        "validate_every", "out",
    ];

    /// Sets one key. Keys are case-sensitive for the single-letter ones.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "algo" => self.algorithm = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "model" => self.model = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "K" => self.nodes = parse_num(key, v)?,
            "N" => self.degree = parse_num(key, v)?,
            "T" => self.rounds = parse_num(key, v)?,
            "B" => self.hyper.batch_size = parse_num(key, v)?,
            "mu" => self.hyper.mu = parse_num(key, v)?,
            "mu_s" => self.mu_s = Some(parse_num(key, v)?),
            "eps" => self.hyper.eps = parse_num(key, v)?,
            "l1" | "l2" => {
                let x = parse_num(key, v)?;
                let (first, last) = (self.hyper.beta.first().copied(), self.hyper.beta.last().copied());
                self.hyper.beta = if key == "l1" {
                    vec![x, last.unwrap_or(x)]
                } else {
                    vec![first.unwrap_or(x), x]
                };
            }
            "beta" => {
                let x = parse_num(key, v)?;
                self.hyper.beta = vec![x, x];
            }
            "beta_self" => self.hyper.beta_self = Some(parse_num(key, v)?),
            "ro" => self.hyper.mewma = parse_num(key, v)?,
            "ro_momentum" => self.hyper.momentum = Some(parse_num(key, v)?),
            "nesterov" => self.hyper.nesterov = parse_bool(key, v)?,
            "warmup" => self.hyper.warmup_rounds = parse_num(key, v)?,
            "share" => self.hyper.share = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "seed" => self.seed = parse_num(key, v)?,
            "topology" => self.topology = TopologySpec::parse(v)?,
            "partition" => self.partition = PartitionChoice::parse(v)?,
            "quantize_bits" => self.quantize_bits = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "quantize_numerics" => self.quantize_numerics = parse_bool(key, v)?,
            "alternate" => self.alternate = parse_rounds(v)?,
            "participation" => self.participation = parse_num(key, v)?,
            "drop" => self.drop_prob = parse_num(key, v)?,
            "dataset" => self.dataset = Some(DataSource::parse(v)?),
            "valset" => self.valset = Some(DataSource::parse(v)?),
            "noise" => self.noise = Some(parse_num(key, v)?),
            "validate_every" => self.validate_every = parse_num(key, v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies a flat `key=value` text. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", no + 1)))?;
            self.set(k.trim(), v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", no + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = SimConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Canonical `key=value` rendering; parsing it back yields an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let h = &self.hyper;
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        put("algo", self.algorithm.to_string());
        put("model", self.model.as_str().to_string());
        put("K", self.nodes.to_string());
        put("N", self.degree.to_string());
        put("T", self.rounds.to_string());
        put("B", h.batch_size.to_string());
        put("mu", h.mu.to_string());
        if let Some(m) = self.mu_s {
            put("mu_s", m.to_string());
        }
        put("eps", h.eps.to_string());
        put("l1", h.beta.first().copied().unwrap_or(0.0).to_string());
        put("l2", h.beta.last().copied().unwrap_or(0.0).to_string());
        if let Some(b) = h.beta_self {
            put("beta_self", b.to_string());
        }
        put("ro", h.mewma.to_string());
        if let Some(d) = h.momentum {
            put("ro_momentum", d.to_string());
        }
        put("nesterov", h.nesterov.to_string());
        put("warmup", h.warmup_rounds.to_string());
        put("share", h.share.to_string());
        put("seed", self.seed.to_string());
        put("topology", self.topology.to_string());
        put("partition", self.partition.to_string());
        put("quantize_bits", self.quantize_bits.to_string());
        put("quantize_numerics", self.quantize_numerics.to_string());
        let alt: Vec<String> = self.alternate.iter().map(|t| t.to_string()).collect();
        put("alternate", alt.join(","));
        put("participation", self.participation.to_string());
        put("drop", self.drop_prob.to_string());
        if let Some(d) = &self.dataset {
            put("dataset", d.to_string());
        }
        if let Some(d) = &self.valset {
            put("valset", d.to_string());
        }
        if let Some(n) = self.noise {
            put("noise", n.to_string());
        }
        put("validate_every", self.validate_every.to_string());
        if let Some(o) = &self.out {
            put("out", o.display().to_string());
        }
        s
    }

    /// Hyperparameters with the numerics quantizer resolved.
    pub fn effective_hyper(&self) -> HyperParams {
        let mut h = self.hyper.clone();
        h.quantize = self.quantize_numerics.then_some(self.quantize_bits);
        h
    }

    pub fn server_step(&self) -> f64 {
        self.mu_s.unwrap_or(self.hyper.mu)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.nodes == 0 {
            return Err(Error::Config("K must be >= 1".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Config("T must be >= 1".into()));
        }
        if let Some(&t) = self.alternate.iter().find(|&&t| t >= self.rounds) {
            return Err(Error::Config(format!("alternation round {t} is not below T={}", self.rounds)));
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(Error::Config(format!("participation must lie in (0,1], got {}", self.participation)));
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(Error::Config(format!("drop probability must lie in [0,1], got {}", self.drop_prob)));
        }
        if self.validate_every == 0 {
            return Err(Error::Config("validate_every must be >= 1".into()));
        }
        if let Some(m) = self.mu_s {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::Config(format!("mu_s must be >= 0, got {m}")));
            }
        }
        if let Some(n) = self.noise {
            if !(n >= 0.0 && n.is_finite()) {
                return Err(Error::Config(format!("noise must be >= 0, got {n}")));
            }
        }
        let uses_degree = |s: &TopologySpec| matches!(s, TopologySpec::KRegular(None));
        let needs_n = match &self.topology {
            TopologySpec::Phases(ps) => ps.iter().any(|(_, s)| uses_degree(s)),
            s => uses_degree(s),
        };
        if needs_n && self.algorithm.is_consensus() && self.degree == 0 {
            return Err(Error::Config("consensus needs at least one neighbor per device (N >= 1)".into()));
        }
        Ok(())
    }

    /// The per-round graph schedule.
    pub fn topology_schedule(&self) -> Result<TopologySchedule> {
        let seed = seed::derive(self.seed, Stream::Topology, &[]);
        match &self.topology {
            TopologySpec::Phases(ps) => {
                let phases = ps
                    .iter()
                    .enumerate()
                    .map(|(i, (r, s))| {
                        Ok((r.clone(), s.build(self.nodes, self.degree, seed::derive(seed, Stream::Topology, &[i as u64]))?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                TopologySchedule::new(phases)
            }
            TopologySpec::Empty if !self.algorithm.is_consensus() => {
                TopologySchedule::constant(Topology::empty(self.nodes)?, self.rounds)
            }
            TopologySpec::KRegular(None) if !self.algorithm.is_consensus() => {
                // Graph is irrelevant without neighbor exchange.
                TopologySchedule::constant(Topology::empty(self.nodes)?, self.rounds)
            }
            s => TopologySchedule::constant(s.build(self.nodes, self.degree, seed)?, self.rounds),
        }
    }

    fn default_source(&self) -> DataSource {
        match self.model {
            Architecture::SingleFc => DataSource::SynthDigits { n: None },
            _ => DataSource::SynthRadar { n: None },
        }
    }

    fn load_source(&self, src: &DataSource, validation: bool) -> Result<Dataset> {
        let per_node = match &self.partition {
            PartitionChoice::Iid(Some(n)) | PartitionChoice::RandomClasses(n) => Some(*n),
            PartitionChoice::Sizes(v) => Some(v.iter().sum::<usize>().div_ceil(self.nodes.max(1))),
            PartitionChoice::Iid(None) => None,
        };
        let sample_seed = if validation {
            seed::derive(self.seed, Stream::Synth, &[0x7a1])
        } else {
            seed::derive(self.seed, Stream::Synth, &[0x7a0])
        };
        match src {
            DataSource::SynthRadar { n } => {
                let default = if validation { 800 } else { self.nodes * per_node.unwrap_or(25) };
                let mut opts = SynthOptions::radar().with_family(self.seed);
                if let Some(x) = self.noise {
                    opts = opts.with_noise(x);
                }
                synth_radar(sample_seed, n.unwrap_or(default), &opts)
            }
            DataSource::SynthDigits { n } => {
                let default = if validation { 1000 } else { self.nodes * per_node.unwrap_or(400) };
                let mut opts = SynthOptions::digits().with_family(self.seed);
                if let Some(x) = self.noise {
                    opts = opts.with_noise(x);
                }
                synth_digits(sample_seed, n.unwrap_or(default), &opts)
            }
            DataSource::Native(p) => load_native(p),
            DataSource::Idx { images, labels } => load_idx(images, labels),
        }
    }

    /// Loads (or generates) the training and validation sets.
    pub fn load_data(&self) -> Result<(Dataset, Dataset)> {
        let train_src = self.dataset.clone().unwrap_or_else(|| self.default_source());
        let val_src = match (&self.valset, &train_src) {
            (Some(v), _) => v.clone(),
            (None, s) if s.is_synthetic() => match s {
                DataSource::SynthRadar { .. } => DataSource::SynthRadar { n: None },
                _ => DataSource::SynthDigits { n: None },
            },
            (None, _) => return Err(Error::Config("a validation set is required for file datasets".into())),
        };
        let train = self.load_source(&train_src, false)?;
        let val = self.load_source(&val_src, true)?;
        if train.feature_dim() != val.feature_dim() || train.class_count() != val.class_count() {
            return Err(Error::Config(format!(
                "validation set shape ({}, {} classes) differs from training set ({}, {} classes)",
                val.feature_dim(),
                val.class_count(),
                train.feature_dim(),
                train.class_count()
            )));
        }
        Ok((train, val))
    }
}
