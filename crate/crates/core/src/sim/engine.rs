use std::path::Path;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;

use super::config::SimConfig;
use super::metrics::{overhead_bytes, RoundMetrics};
use crate::algos::{
    cfa_ge_round_2stage, cfa_ge_round_4stage, cfa_round, centralized_epoch, fa_round, isolated_round, Algorithm,
    ExchangeMsg, HyperParams, NodeState, Payload, RoundCtx, SyncView,
};
use crate::data::{minibatches, partition, Dataset, Shard};
use crate::error::{Error, Result};
use crate::nn::{max_pairwise_distance, write_checkpoint, ModelParams, Network};
use crate::seed::{self, Stream};
use crate::topology::{check_epsilon, epsilon_bound, EpsilonCheck, MixingWeights};

/// Environment variable capping the worker pool.
pub const WORKERS_ENV: &str = "FLSIM_WORKERS";

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Vec<RoundMetrics>,
    /// Final model of every device (one entry for centralized runs).
    pub models: Vec<ModelParams>,
    /// Largest pairwise distance between device models after each round.
    pub consensus_gap: Vec<f64>,
    pub warnings: Vec<String>,
}

impl RunOutput {
    /// Metrics of the last validated round, one row per node.
    pub fn final_rows(&self) -> Vec<&RoundMetrics> {
        let last = self.metrics.iter().map(|r| r.round).max();
        self.metrics.iter().filter(|r| Some(r.round) == last).collect()
    }

    /// Loss curve of one node.
    pub fn loss_curve(&self, node: usize) -> Vec<(usize, f64)> {
        self.metrics
            .iter()
            .filter(|r| r.node == node)
            .map(|r| (r.round, r.val_loss))
            .collect()
    }
}

/// Worker count from the config, then the environment, else the machine default.
pub fn worker_count(cfg: &SimConfig) -> usize {
    cfg.workers
        .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Loads the configured data and runs the simulation.
pub fn run(cfg: &SimConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let (train, val) = cfg.load_data()?;
    run_with_data(cfg, &train, &val)
}

/// Writes one FLW1 checkpoint per model as `node_<k>.flw` inside `dir`.
pub fn save_models(dir: impl AsRef<Path>, models: &[ModelParams]) -> Result<()> {
    std::fs::create_dir_all(dir.as_ref())?;
    for (k, m) in models.iter().enumerate() {
        let f = std::fs::File::create(dir.as_ref().join(format!("node_{k}.flw")))?;
        write_checkpoint(std::io::BufWriter::new(f), m)?;
    }
    Ok(())
}

fn dropped(cfg: &SimConfig, round: usize, receiver: usize, sender: usize) -> bool {
    cfg.drop_prob > 0.0
        && seed::rng(cfg.seed, Stream::Drop, &[round as u64, receiver as u64, sender as u64]).random::<f64>()
            < cfg.drop_prob
}

fn participants(cfg: &SimConfig, round: usize) -> Vec<usize> {
    let k = cfg.nodes;
    let n = ((cfg.participation * k as f64).round() as usize).clamp(1, k);
    if n == k {
        return (0..k).collect();
    }
    let all: Vec<usize> = (0..k).collect();
    let mut rng = seed::rng(cfg.seed, Stream::Participation, &[round as u64]);
    let mut chosen: Vec<usize> = all.choose_multiple(&mut rng, n).copied().collect();
    chosen.sort_unstable();
    chosen
}

/// `sum_k (E_k / E) W_k`, or the shared model when all devices agree.
fn weighted_average(states: &[NodeState], shards: &[Shard]) -> Result<ModelParams> {
    let first = &states[0].model;
    if states.iter().all(|s| &s.model == first) {
        return Ok(first.clone());
    }
    let total: usize = shards.iter().map(Shard::len).sum();
    let mut avg = ModelParams::zeros_like(first);
    for (s, sh) in states.iter().zip(shards) {
        avg.axpy(sh.len() as f64 / total as f64, &s.model)?;
    }
    Ok(avg)
}

struct Ctx<'a> {
    cfg: &'a SimConfig,
    network: &'a Network,
    hyper: &'a HyperParams,
    shards: &'a [Shard],
    val: &'a Dataset,
    pool: &'a rayon::ThreadPool,
}

impl Ctx<'_> {
    fn evaluate_all(&self, models: &[&ModelParams]) -> Result<Vec<(f64, f64)>> {
        self.pool.install(|| {
            models
                .par_iter()
                .map(|m| self.network.evaluate(m, self.val.examples()))
                .collect()
        })
    }

    fn check_batch_size(&self) -> Result<()> {
        if let Some(s) = self.shards.iter().find(|s| s.len() < self.hyper.batch_size) {
            return Err(Error::Config(format!(
                "batch size {} exceeds the {} examples of node {}",
                self.hyper.batch_size,
                s.len(),
                s.owner
            )));
        }
        Ok(())
    }
}

/// Runs the simulation on already-loaded data.
pub fn run_with_data(cfg: &SimConfig, train: &Dataset, val: &Dataset) -> Result<RunOutput> {
    cfg.validate()?;
    let network = cfg.model.build(train.feature_dim(), train.class_count())?;
    if val.feature_dim() != train.feature_dim() || val.class_count() != train.class_count() {
        return Err(Error::Config("validation set does not match the training set".into()));
    }
    let k = cfg.nodes;
    let shards = partition(train, k, &cfg.partition.resolve(train.class_count()), cfg.seed)?;
    let schedule = cfg.topology_schedule()?;
    if schedule.nodes() != k {
        return Err(Error::Config(format!("topology has {} nodes, K={k}", schedule.nodes())));
    }
    let sizes: Vec<usize> = shards.iter().map(Shard::len).collect();
    let phase_weights = schedule
        .phases()
        .iter()
        .map(|(_, t)| MixingWeights::from_shard_sizes(t, &sizes))
        .collect::<Result<Vec<_>>>()?;

    let mut warnings = Vec::new();
    if cfg.algorithm.is_consensus() {
        for (w, (range, _)) in phase_weights.iter().zip(schedule.phases()) {
            let bound = epsilon_bound(w);
            if check_epsilon(cfg.hyper.eps, &bound)? == EpsilonCheck::AtBoundary {
                let msg = format!(
                    "eps={} sits on the stability boundary 1/{} for rounds {range:?}",
                    cfg.hyper.eps, bound.delta
                );
                log::debug!("{msg}");
                warnings.push(msg);
            }
        }
    }

    let hyper = cfg.effective_hyper();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(cfg))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let ctx = Ctx { cfg, network: &network, hyper: &hyper, shards: &shards, val, pool: &pool };

    let init = network.init(cfg.seed);
    let output = match cfg.algorithm {
        Algorithm::Centralized => run_centralized(&ctx, train, init)?,
        Algorithm::Fa => run_fa_only(&ctx, init)?,
        _ => {
            ctx.check_batch_size()?;
            run_decentralized(&ctx, &schedule, &phase_weights, init)?
        }
    };
    Ok(RunOutput { warnings, ..output })
}

fn run_centralized(ctx: &Ctx<'_>, train: &Dataset, init: ModelParams) -> Result<RunOutput> {
    let cfg = ctx.cfg;
    let pooled = Shard {
        owner: cfg.nodes,
        indices: (0..train.len()).collect(),
        examples: train.examples().to_vec(),
    };
    if pooled.len() < ctx.hyper.batch_size {
        return Err(Error::Config("batch size exceeds the pooled dataset".into()));
    }
    let mut w = init;
    let mut metrics = Vec::new();
    for t in 0..cfg.rounds {
        let start = Instant::now();
        w = centralized_epoch(ctx.network, &w, &pooled, ctx.hyper.batch_size, ctx.hyper.mu, cfg.seed, t)?;
        let ms = if cfg.timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        if !w.is_finite() {
            return Err(Error::Divergence { node: 0, round: t });
        }
        if validated(cfg, t) {
            let (loss, acc) = ctx.network.evaluate(&w, ctx.val.examples())?;
            metrics.push(RoundMetrics {
                round: t,
                node: 0,
                algorithm: cfg.algorithm,
                val_loss: loss,
                val_acc: acc,
                tx_bytes: 0,
                cum_tx_bytes: 0,
                update_ms: ms,
            });
        }
    }
    Ok(RunOutput { metrics, models: vec![w], consensus_gap: vec![0.0; cfg.rounds], warnings: Vec::new() })
}

fn validated(cfg: &SimConfig, t: usize) -> bool {
    (t + 1).is_multiple_of(cfg.validate_every) || t + 1 == cfg.rounds
}

/// One federated-averaging step of the server model. Returns the new model,
/// the participant list, and the elapsed time.
fn server_step(ctx: &Ctx<'_>, w: &ModelParams, t: usize) -> Result<(ModelParams, Vec<usize>, f64)> {
    let cfg = ctx.cfg;
    let who = participants(cfg, t);
    let parts: Vec<&Shard> = who.iter().map(|&i| &ctx.shards[i]).collect();
    let total: usize = ctx.shards.iter().map(Shard::len).sum();
    let start = Instant::now();
    let next = fa_round(ctx.network, w, &parts, total, cfg.server_step(), ctx.hyper.quantize)?;
    let ms = if cfg.timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
    if !next.is_finite() {
        return Err(Error::Divergence { node: cfg.nodes, round: t });
    }
    Ok((next, who, ms))
}

fn run_fa_only(ctx: &Ctx<'_>, init: ModelParams) -> Result<RunOutput> {
    let cfg = ctx.cfg;
    let bytes = overhead_bytes(Algorithm::Fa, init.parameter_count(), 0, cfg.quantize_bits);
    let mut w = init;
    let mut cum = vec![0u64; cfg.nodes];
    let mut metrics = Vec::new();
    for t in 0..cfg.rounds {
        let (next, who, ms) = server_step(ctx, &w, t)?;
        w = next;
        let mut tx = vec![0u64; cfg.nodes];
        for &i in &who {
            tx[i] = bytes;
        }
        for (c, b) in cum.iter_mut().zip(&tx) {
            *c += b;
        }
        if validated(cfg, t) {
            let (loss, acc) = ctx.network.evaluate(&w, ctx.val.examples())?;
            for node in 0..cfg.nodes {
                metrics.push(RoundMetrics {
                    round: t,
                    node,
                    algorithm: cfg.algorithm,
                    val_loss: loss,
                    val_acc: acc,
                    tx_bytes: tx[node],
                    cum_tx_bytes: cum[node],
                    update_ms: ms,
                });
            }
        }
    }
    Ok(RunOutput {
        metrics,
        models: vec![w; cfg.nodes],
        consensus_gap: vec![0.0; cfg.rounds],
        warnings: Vec::new(),
    })
}

fn consensus_message(algorithm: Algorithm, state: &NodeState, shared: ModelParams) -> ExchangeMsg {
    let payload = match algorithm {
        Algorithm::CfaGe => Payload::Gradients { aggregate: shared, gradients: state.mewma.clone(), lookahead: false },
        _ => Payload::Model(shared),
    };
    ExchangeMsg { sender: state.id, round: state.round, payload }
}

fn run_decentralized(
    ctx: &Ctx<'_>,
    schedule: &crate::topology::TopologySchedule,
    phase_weights: &[MixingWeights],
    init: ModelParams,
) -> Result<RunOutput> {
    let cfg = ctx.cfg;
    let k = cfg.nodes;
    let algo = cfg.algorithm;
    let params = init.parameter_count();
    let mut states: Vec<NodeState> = (0..k).map(|i| NodeState::new(i, init.clone(), ctx.hyper)).collect();
    let mut outbox: Vec<ExchangeMsg> = states.iter().map(|s| s.initial_message(algo == Algorithm::CfaGe)).collect();
    let mut server: Option<ModelParams> = None;
    let mut cum = vec![0u64; k];
    let mut metrics = Vec::new();
    let mut gap = Vec::with_capacity(cfg.rounds);

    for t in 0..cfg.rounds {
        let phase = schedule
            .phases()
            .iter()
            .position(|(r, _)| r.contains(&t))
            .unwrap_or(schedule.phases().len() - 1);
        let topo = &schedule.phases()[phase].1;
        let weights = &phase_weights[phase];
        let fa_now = algo.is_consensus() && cfg.alternate.binary_search(&t).is_ok();

        let (eval_models, tx, times): (Vec<ModelParams>, Vec<u64>, Vec<f64>) = if fa_now {
            let start_w = match server.take() {
                Some(w) => w,
                None => weighted_average(&states, ctx.shards)?,
            };
            let (w_s, who, ms) = server_step(ctx, &start_w, t)?;
            let bytes = overhead_bytes(Algorithm::Fa, params, 0, cfg.quantize_bits);
            let mut tx = vec![0u64; k];
            for &i in &who {
                tx[i] = bytes;
            }
            // Every device restarts from the server model with one local step.
            let restarted: Vec<Result<ModelParams>> = ctx.pool.install(|| {
                (0..k)
                    .into_par_iter()
                    .map(|i| {
                        let batches = minibatches(&ctx.shards[i], ctx.hyper.batch_size, cfg.seed, t)?;
                        let (_, g) = ctx.network.backward(&w_s, &batches[0])?;
                        let mut w = w_s.clone();
                        w.axpy(-ctx.hyper.mu, &g)?;
                        if !w.is_finite() {
                            return Err(Error::Divergence { node: i, round: t });
                        }
                        Ok(w)
                    })
                    .collect()
            });
            for (i, w) in restarted.into_iter().enumerate() {
                let w = w?;
                let s = &mut states[i];
                s.model = w.clone();
                s.aggregate = w_s.clone();
                s.round += 1;
                outbox[i] = consensus_message(algo, s, w);
            }
            server = Some(w_s.clone());
            (vec![w_s; k], tx, vec![ms; k])
        } else {
            server = None;
            let snapshot: Vec<ModelParams> = states.iter().map(|s| s.model.clone()).collect();
            let view = SyncView { models: &snapshot, shards: ctx.shards, weights };
            let warm = t < ctx.hyper.warmup_rounds;
            let results: Vec<Result<(NodeState, ExchangeMsg, f64)>> = ctx.pool.install(|| {
                (0..k)
                    .into_par_iter()
                    .map(|i| {
                        let rctx = RoundCtx {
                            network: ctx.network,
                            hyper: ctx.hyper,
                            neighbors: weights.row(i),
                            shard: &ctx.shards[i],
                            seed: cfg.seed,
                            round: t,
                        };
                        let inbox: Vec<&ExchangeMsg> = weights
                            .row(i)
                            .iter()
                            .filter(|&&(j, _)| !dropped(cfg, t, i, j))
                            .map(|&(j, _)| &outbox[j])
                            .collect();
                        let start = Instant::now();
                        let (s, m) = match algo {
                            Algorithm::Cfa => cfa_round(&states[i], &inbox, &rctx)?,
                            Algorithm::CfaGe if warm => cfa_ge_round_4stage(&states[i], &view, &rctx)?,
                            Algorithm::CfaGe => cfa_ge_round_2stage(&states[i], &inbox, &rctx)?,
                            _ => isolated_round(&states[i], &rctx)?,
                        };
                        let ms = if cfg.timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
                        Ok((s, m, ms))
                    })
                    .collect()
            });
            let mut times = Vec::with_capacity(k);
            let mut tx = Vec::with_capacity(k);
            for (i, r) in results.into_iter().enumerate() {
                let (s, m, ms) = r?;
                states[i] = s;
                outbox[i] = m;
                times.push(ms);
                tx.push(overhead_bytes(algo, params, topo.degree(i), cfg.quantize_bits));
            }
            (states.iter().map(|s| s.model.clone()).collect(), tx, times)
        };

        for (c, b) in cum.iter_mut().zip(&tx) {
            *c += b;
        }
        let refs: Vec<&ModelParams> = states.iter().map(|s| &s.model).collect();
        gap.push(if fa_now { 0.0 } else { max_pairwise_distance(&refs)? });

        if validated(cfg, t) {
            let eval_refs: Vec<&ModelParams> = if fa_now { vec![&eval_models[0]] } else { eval_models.iter().collect() };
            let scores = ctx.evaluate_all(&eval_refs)?;
            for node in 0..k {
                let (loss, acc) = if fa_now { scores[0] } else { scores[node] };
                metrics.push(RoundMetrics {
                    round: t,
                    node,
                    algorithm: algo,
                    val_loss: loss,
                    val_acc: acc,
                    tx_bytes: tx[node],
                    cum_tx_bytes: cum[node],
                    update_ms: times[node],
                });
            }
        }
    }
    Ok(RunOutput {
        metrics,
        models: states.into_iter().map(|s| s.model).collect(),
        consensus_gap: gap,
        warnings: Vec::new(),
    })
}
