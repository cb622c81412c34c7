//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `cargo test -p flsim --release --test acceptance`

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{gradient_check, random_examples, random_net, random_params, rng};
use flsim::algos::{
    centralized_step, cfa_ge_round_2stage, cfa_ge_round_4stage, cfa_round, fa_round, local_update, mewma_update,
    momentum_velocity, Algorithm, ExchangeMsg, HyperParams, NodeState, QuantBits, RoundCtx, SyncView, Preset,
};
use flsim::data::{minibatches, probe_batch, Shard};
use flsim::nn::{max_pairwise_distance, Example, GradientSet, ModelParams, Network};
use flsim::sim::{
    overhead_bytes, run, write_metrics_csv, DataSource, PartitionChoice, RoundMetrics, RunOutput, SimConfig,
    TopologySpec,
};
use flsim::topology::{MixingWeights, Topology};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Verdict = (bool, String);

fn criterion(name: &str, budget: Duration, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(v) => v,
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let pass = ok && in_time;
    let late = if in_time { "" } else { ", over budget" };
    println!(
        "{} {name}: {detail} [{:.2}s of {}s{late}]",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn main() {
    let secs = Duration::from_secs;
    let results = [
        criterion("overhead table", secs(1), overhead_table),
        criterion("parameter counts", secs(1), parameter_counts),
        criterion("gradient oracle", secs(60), gradient_oracle),
        criterion("consensus contraction", secs(10), consensus_contraction),
        criterion("four-stage closed form", secs(10), four_stage_closed_form),
        criterion("reductions", secs(10), reductions),
        criterion("digits line analogue", secs(300), digits_line_analogue),
        criterion("radar ring analogue", secs(600), radar_ring_analogue),
        criterion("determinism", secs(60), determinism),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed} of {} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}

fn overhead_table() -> Verdict {
    let cnn = Network::cnn(512, 8).unwrap().parameter_count();
    let two = Network::two_nn(512, 8).unwrap().parameter_count();
    let rows = [
        (Algorithm::Cfa, cnn, 0, 2976, 2.98),
        (Algorithm::Cfa, two, 0, 33360, 33.36),
        (Algorithm::Fa, cnn, 0, 2976, 2.98),
        (Algorithm::Fa, two, 0, 33360, 33.36),
        (Algorithm::CfaGe, cnn, 2, 5952, 5.96),
        (Algorithm::CfaGe, two, 2, 66720, 66.72),
        (Algorithm::CfaGe, cnn, 6, 17856, 17.88),
        (Algorithm::CfaGe, two, 6, 200160, 200.16),
        (Algorithm::CfaGe, cnn, 10, 29760, 29.8),
        (Algorithm::CfaGe, two, 10, 333600, 333.7),
    ];
    let mut bad = Vec::new();
    for (algo, params, degree, bytes, kb) in rows {
        let got = overhead_bytes(algo, params, degree, QuantBits::B16);
        let kb_got = got as f64 / 1000.0;
        if got != bytes || (kb_got - kb).abs() > 0.1 + 1e-9 {
            bad.push(format!("{algo} P={params} N={degree}: {got} B ({kb_got} KB), want {bytes} B ({kb} KB)"));
        }
    }
    (bad.is_empty(), if bad.is_empty() { "10 rows exact".into() } else { bad.join("; ") })
}

fn parameter_counts() -> Verdict {
    let cnn = Network::cnn(512, 8).unwrap().parameter_count();
    let two = Network::two_nn(512, 8).unwrap().parameter_count();
    let ok = cnn == 1488 && two == 16680 && cnn * 2 == 2976 && two * 2 == 33360;
    (ok, format!("cnn {cnn}, 2nn {two}"))
}

fn gradient_oracle() -> Verdict {
    let mut worst = 0.0f64;
    let mut nets = 0;
    for seed in 0..12u64 {
        for mask in 0..8u32 {
            let mut r = rng(1000 + 8 * seed + mask as u64);
            let (net, input, classes) = random_net(&mut r, mask & 1 != 0, mask & 2 != 0, mask & 4 != 0);
            let params = random_params(&net, &mut r, 0.5);
            let batch = random_examples(&mut r, 3, input, classes);
            worst = worst.max(gradient_check(&net, &params, &batch, 1e-5));
            nets += 1;
        }
    }
    let cnn = Network::cnn(48, 3).unwrap();
    let mut r = rng(77);
    let params = random_params(&cnn, &mut r, 0.3);
    let batch = random_examples(&mut r, 2, 48, 3);
    worst = worst.max(gradient_check(&cnn, &params, &batch, 1e-5));
    (worst <= 1e-4, format!("{} nets over 12 seeds, worst relative error {worst:.2e}", nets + 1))
}

fn shard(owner: usize, examples: Vec<Example>) -> Shard {
    Shard { owner, indices: (0..examples.len()).collect(), examples }
}

fn consensus_contraction() -> Verdict {
    let k = 10;
    let mut r = rng(5);
    let net = Network::dense_stack(&[8, 5, 3]).unwrap();
    let shards: Vec<Shard> = (0..k)
        .map(|i| {
            let n = r.random_range(5..15);
            shard(i, random_examples(&mut r, n, 8, 3))
        })
        .collect();
    let topo = Topology::ring(k).unwrap();
    let sizes: Vec<usize> = shards.iter().map(Shard::len).collect();
    let weights = MixingWeights::from_shard_sizes(&topo, &sizes).unwrap();
    let mut hyper = HyperParams::default();
    hyper.eps = 0.5;
    hyper.mu = 0.0;
    hyper.beta_self = None;
    let mut states: Vec<NodeState> =
        (0..k).map(|i| NodeState::new(i, random_params(&net, &mut r, 1.0), &hyper)).collect();
    let mut msgs: Vec<ExchangeMsg> = states.iter().map(|s| s.initial_message(false)).collect();

    let gap = |states: &[NodeState]| max_pairwise_distance(&states.iter().map(|s| &s.model).collect::<Vec<_>>()).unwrap();
    let initial = gap(&states);
    let mut prev = initial;
    let mut reached = None;
    let mut monotone = true;
    for t in 0..500 {
        let inbox: Vec<&ExchangeMsg> = msgs.iter().collect();
        let next: Vec<(NodeState, ExchangeMsg)> = states
            .iter()
            .map(|s| {
                let ctx = RoundCtx {
                    network: &net,
                    hyper: &hyper,
                    neighbors: weights.row(s.id),
                    shard: &shards[s.id],
                    seed: 1,
                    round: t,
                };
                cfa_round(s, &inbox, &ctx).unwrap()
            })
            .collect();
        (states, msgs) = next.into_iter().unzip();
        let d = gap(&states);
        monotone &= d <= prev * (1.0 + 1e-12);
        prev = d;
        if d < 1e-6 && reached.is_none() {
            reached = Some(t + 1);
        }
    }
    let ok = reached.is_some() && monotone;
    (
        ok,
        format!(
            "distance {initial:.3} -> {prev:.2e}, below 1e-6 after {} rounds, monotone {monotone}",
            reached.map_or("no".into(), |t| t.to_string())
        ),
    )
}

/// `out = base + sum_j coef_j(layer) * x_j`, entry by entry.
fn combine(base: &ModelParams, terms: &[(&dyn Fn(usize) -> f64, &GradientSet)]) -> ModelParams {
    let mut out = base.clone();
    let layers = out.num_layers();
    for q in 0..layers {
        for (c, x) in terms {
            let a = c(q);
            let src = &x.layers()[q];
            let dst = &mut out.layers_mut()[q];
            for (d, s) in dst.weights.iter_mut().zip(&src.weights) {
                *d += a * s;
            }
            for (d, s) in dst.bias.iter_mut().zip(&src.bias) {
                *d += a * s;
            }
        }
    }
    out
}

fn grad(net: &Network, w: &ModelParams, batch: &[&Example]) -> GradientSet {
    net.backward(w, batch).unwrap().1
}

fn random_graph(r: &mut ChaCha8Rng, k: usize) -> Topology {
    let mut nbrs: Vec<Vec<usize>> = (0..k).map(|i| vec![(i + 1) % k, (i + k - 1) % k]).collect();
    for _ in 0..r.random_range(0..k) {
        let (a, b) = (r.random_range(0..k), r.random_range(0..k));
        if a != b {
            nbrs[a].push(b);
            nbrs[b].push(a);
        }
    }
    Topology::new(nbrs, false).unwrap()
}

struct Instance {
    net: Network,
    shards: Vec<Shard>,
    topo: Topology,
    weights: MixingWeights,
    models: Vec<ModelParams>,
}

fn instance(r: &mut ChaCha8Rng, sizes: impl Fn(&mut ChaCha8Rng) -> usize) -> Instance {
    let (conv, pool, hidden) = (r.random(), r.random(), r.random());
    let (net, input, classes) = random_net(r, conv, pool, hidden);
    let k = r.random_range(3..7);
    let shards: Vec<Shard> = (0..k)
        .map(|i| {
            let n = sizes(r);
            shard(i, random_examples(r, n, input, classes))
        })
        .collect();
    let topo = random_graph(r, k);
    let lens: Vec<usize> = shards.iter().map(Shard::len).collect();
    let weights = MixingWeights::from_shard_sizes(&topo, &lens).unwrap();
    let models = (0..k).map(|_| random_params(&net, r, 0.5)).collect();
    Instance { net, shards, topo, weights, models }
}

fn aggregate(inst: &Instance, j: usize, eps: f64) -> ModelParams {
    let own = &inst.models[j];
    let mut psi = own.clone();
    for &i in inst.topo.neighbors(j) {
        let a = eps * inst.weights.get(j, i).unwrap();
        for ((p, &w), &v) in psi.values_mut().zip(own.values()).zip(inst.models[i].values()) {
            *p += a * (v - w);
        }
    }
    psi
}

fn four_stage_closed_form() -> Verdict {
    let mut worst = 0.0f64;
    for case in 0..20u64 {
        let mut r = rng(3000 + case);
        let inst = instance(&mut r, |r| r.random_range(3..9));
        let k = r.random_range(0..inst.models.len());
        let mut hyper = HyperParams::default();
        hyper.eps = r.random_range(0.1..1.0);
        hyper.beta = vec![r.random_range(0.0..0.3), r.random_range(0.0..0.3)];
        hyper.beta_self = if r.random() { Some(r.random_range(0.0..0.1)) } else { None };
        hyper.mu = r.random_range(0.0..0.1);
        hyper.mewma = r.random_range(0.5..1.0);
        let min_len = inst.shards.iter().map(Shard::len).min().unwrap();
        hyper.batch_size = r.random_range(1..=min_len);
        let (seed, round) = (r.random_range(0..100u64), r.random_range(0..3usize));

        let mut state = NodeState::new(k, inst.models[k].clone(), &hyper);
        for &i in inst.topo.neighbors(k) {
            if r.random() {
                state.mewma.insert(i, random_params(&inst.net, &mut r, 0.1));
            }
        }
        let view = SyncView { models: &inst.models, shards: &inst.shards, weights: &inst.weights };
        let ctx = RoundCtx {
            network: &inst.net,
            hyper: &hyper,
            neighbors: inst.weights.row(k),
            shard: &inst.shards[k],
            seed,
            round,
        };
        let (next, _) = cfa_ge_round_4stage(&state, &view, &ctx).unwrap();

        let b = hyper.batch_size;
        let layers = inst.models[k].num_layers();
        let rate = |q: usize| -if q + 1 == layers { hyper.beta[1] } else { hyper.beta[0] };
        let psi = aggregate(&inst, k, hyper.eps);
        let mut w = psi.clone();
        for &i in inst.topo.neighbors(k) {
            let g = grad(&inst.net, &psi, &probe_batch(&inst.shards[i], b, seed, round, k).unwrap());
            w = combine(&w, &[(&rate, &g)]);
        }
        let step = hyper.beta_self.unwrap_or(hyper.mu);
        for batch in minibatches(&inst.shards[k], b, seed, round).unwrap() {
            let g = grad(&inst.net, &w, &batch);
            w = combine(&w, &[(&|_| -step, &g)]);
        }
        let mut store = BTreeMap::new();
        for &i in inst.topo.neighbors(k) {
            let psi_i = aggregate(&inst, i, hyper.eps);
            let fresh = grad(&inst.net, &psi_i, &probe_batch(&inst.shards[k], b, seed, round, i).unwrap());
            let prev = state.mewma.get(&i).cloned().unwrap_or_else(|| GradientSet::zeros_like(&fresh));
            let rho = hyper.mewma;
            let zero = GradientSet::zeros_like(&fresh);
            store.insert(i, combine(&zero, &[(&|_| rho, &fresh), (&|_| 1.0 - rho, &prev)]));
        }

        worst = worst.max(next.model.max_abs_diff(&w).unwrap());
        worst = worst.max(next.aggregate.max_abs_diff(&psi).unwrap());
        if next.mewma.keys().ne(store.keys()) {
            return (false, format!("case {case}: stored neighbor set differs"));
        }
        for (i, g) in &store {
            worst = worst.max(next.mewma[i].max_abs_diff(g).unwrap());
        }
    }
    (worst <= 1e-12, format!("20 instances, max abs difference {worst:.2e}"))
}

fn reductions() -> Verdict {
    let mut worst = [0.0f64; 4];

    // Zero gradient rates: gradient exchange collapses to model consensus with one local batch.
    for case in 0..10u64 {
        let mut r = rng(4000 + case);
        let b = r.random_range(2..6);
        let inst = instance(&mut r, |_| b);
        let mut hyper = HyperParams::default();
        hyper.eps = r.random_range(0.1..1.0);
        hyper.beta = vec![0.0, 0.0];
        hyper.beta_self = None;
        hyper.mu = r.random_range(0.01..0.1);
        hyper.batch_size = b;
        let states: Vec<NodeState> =
            inst.models.iter().enumerate().map(|(i, m)| NodeState::new(i, m.clone(), &hyper)).collect();
        let plain: Vec<ExchangeMsg> = states.iter().map(|s| s.initial_message(false)).collect();
        let with_grads: Vec<ExchangeMsg> = states.iter().map(|s| s.initial_message(true)).collect();
        let view = SyncView { models: &inst.models, shards: &inst.shards, weights: &inst.weights };
        for (k, s) in states.iter().enumerate() {
            let ctx = RoundCtx {
                network: &inst.net,
                hyper: &hyper,
                neighbors: inst.weights.row(k),
                shard: &inst.shards[k],
                seed: case,
                round: 1,
            };
            let (cfa, _) = cfa_round(s, &plain.iter().collect::<Vec<_>>(), &ctx).unwrap();
            let (four, _) = cfa_ge_round_4stage(s, &view, &ctx).unwrap();
            let (two, _) = cfa_ge_round_2stage(s, &with_grads.iter().collect::<Vec<_>>(), &ctx).unwrap();
            worst[0] = worst[0].max(four.model.max_abs_diff(&cfa.model).unwrap());
            worst[0] = worst[0].max(two.model.max_abs_diff(&cfa.model).unwrap());
        }
    }

    // Zero momentum decay.
    for case in 0..10u64 {
        let mut r = rng(5000 + case);
        let inst = instance(&mut r, |r| r.random_range(4..12));
        let w = &inst.models[0];
        let mut v = GradientSet::zeros_like(w);
        let a = local_update(&inst.net, w.clone(), &inst.shards[0], 3, 0.05, case, 0, Some((0.0, &mut v))).unwrap();
        let b = local_update(&inst.net, w.clone(), &inst.shards[0], 3, 0.05, case, 0, None).unwrap();
        worst[1] = worst[1].max(a.max_abs_diff(&b).unwrap());
        let g1 = random_params(&inst.net, &mut r, 1.0);
        let g2 = random_params(&inst.net, &mut r, 1.0);
        let prev = random_params(&inst.net, &mut r, 1.0);
        let rates = vec![0.1; w.num_layers()];
        let vel = momentum_velocity(&prev, &[&g1, &g2], &rates, 0.0).unwrap();
        let zero = GradientSet::zeros_like(w);
        let want = combine(&zero, &[(&|_| -0.1, &g1), (&|_| -0.1, &g2)]);
        worst[1] = worst[1].max(vel.max_abs_diff(&want).unwrap());
    }

    // Unit MEWMA factor.
    for case in 0..10u64 {
        let mut r = rng(6000 + case);
        let inst = instance(&mut r, |r| r.random_range(3..6));
        let prev = random_params(&inst.net, &mut r, 1.0);
        let fresh = random_params(&inst.net, &mut r, 1.0);
        let m = mewma_update(&prev, &fresh, 1.0).unwrap();
        worst[2] = worst[2].max(m.max_abs_diff(&fresh).unwrap());
    }

    // Full participation with equal shards.
    for case in 0..10u64 {
        let mut r = rng(7000 + case);
        let n = r.random_range(3..8);
        let inst = instance(&mut r, |_| n);
        let k = inst.shards.len();
        let mu_s = r.random_range(0.1..2.0);
        let w = &inst.models[0];
        let parts: Vec<&Shard> = inst.shards.iter().collect();
        let fa = fa_round(&inst.net, w, &parts, k * n, mu_s, None).unwrap();
        let pooled: Vec<&Example> = inst.shards.iter().flat_map(|s| &s.examples).collect();
        let cen = centralized_step(&inst.net, w, &pooled, mu_s / k as f64).unwrap();
        worst[3] = worst[3].max(fa.max_abs_diff(&cen).unwrap());
    }

    let ok = worst.iter().all(|&d| d <= 1e-12);
    (
        ok,
        format!(
            "max abs difference: zero rates {:.1e}, zero decay {:.1e}, unit MEWMA {:.1e}, averaging {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn digits_line(algo: Algorithm) -> SimConfig {
    let mut c = SimConfig::default();
    c.algorithm = algo;
    c.model = "mnist-1fc".parse().unwrap();
    c.nodes = 4;
    c.topology = TopologySpec::Line;
    c.partition = PartitionChoice::Iid(Some(400));
    c.dataset = Some(DataSource::SynthDigits { n: None });
    c.hyper = Preset::One.hyper();
    c.rounds = 60;
    c.seed = 1;
    c
}

fn final_losses(o: &RunOutput) -> Vec<f64> {
    o.final_rows().iter().map(|r| r.val_loss).collect()
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(" "))
}

fn digits_line_analogue() -> Verdict {
    let cen = run(&digits_line(Algorithm::Centralized)).unwrap();
    let iso = run(&digits_line(Algorithm::Isolated)).unwrap();
    let ge = run(&digits_line(Algorithm::CfaGe)).unwrap();
    let (cen_l, iso_l, ge_l) = (final_losses(&cen)[0], final_losses(&iso), final_losses(&ge));
    let a = ge_l.iter().zip(&iso_l).all(|(g, i)| g < i);
    let b = ge_l.iter().all(|g| (g - cen_l).abs() <= 0.15);
    let (g0, g_end) = (ge.consensus_gap[0], *ge.consensus_gap.last().unwrap());
    let c = g_end < 0.1 * g0;
    (
        a && b && c,
        format!(
            "(a) {} cfa-ge {} vs isolated {}; (b) {} centralized {cen_l:.3}; (c) {} distance {g0:.3} -> {g_end:.3} ({:.0}%)",
            verdict(a),
            fmt(&ge_l),
            fmt(&iso_l),
            verdict(b),
            verdict(c),
            100.0 * g_end / g0
        ),
    )
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAILED"
    }
}

fn radar_ring(algo: Algorithm) -> SimConfig {
    let mut c = SimConfig::default();
    c.algorithm = algo;
    c.model = "cnn".parse().unwrap();
    c.nodes = 20;
    c.topology = TopologySpec::Ring;
    c.partition = PartitionChoice::Iid(Some(25));
    c.dataset = Some(DataSource::SynthRadar { n: None });
    c.hyper = Preset::Three.hyper();
    c.rounds = 60;
    c.seed = 1;
    c
}

/// First round (1-based) at which each node's loss is at or below `threshold`.
fn first_reach(rows: &[RoundMetrics], threshold: f64, nodes: usize) -> Vec<Option<usize>> {
    let mut first = vec![None; nodes];
    for r in rows {
        if r.val_loss <= threshold && first[r.node].is_none() {
            first[r.node] = Some(r.round + 1);
        }
    }
    first
}

fn radar_ring_analogue() -> Verdict {
    let cen = run(&radar_ring(Algorithm::Centralized)).unwrap();
    let threshold = cen.metrics.iter().find(|r| r.round == 19).unwrap().val_loss;
    let budget = 3 * 20;
    let nodes = 20;
    let censored = |f: &[Option<usize>]| f.iter().map(|t| t.unwrap_or(budget + 1) as f64).sum::<f64>() / nodes as f64;
    let mut summary = Vec::new();
    let mut means = Vec::new();
    let mut all = false;
    for algo in [Algorithm::CfaGe, Algorithm::Cfa] {
        let o = run(&radar_ring(algo)).unwrap();
        let f = first_reach(&o.metrics, threshold, nodes);
        let reached: Vec<usize> = f.iter().flatten().copied().collect();
        let within = reached.iter().filter(|&&t| t <= budget).count();
        if algo == Algorithm::CfaGe {
            all = within == nodes;
        }
        summary.push(format!(
            "{algo} {within}/{nodes} nodes within {budget} rounds (first {}, mean censored {:.1})",
            reached.iter().min().map_or("-".into(), |t| t.to_string()),
            censored(&f)
        ));
        means.push(censored(&f));
    }
    let faster = means[0] < means[1];
    (
        all && faster,
        format!(
            "threshold {threshold:.3}; {}; all nodes {}; cfa-ge faster {}",
            summary.join("; "),
            verdict(all),
            verdict(faster)
        ),
    )
}

fn csv(cfg: &SimConfig) -> Vec<u8> {
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &run(cfg).unwrap().metrics).unwrap();
    buf
}

fn determinism() -> Verdict {
    let mut checked = 0;
    for algo in [Algorithm::CfaGe, Algorithm::Cfa, Algorithm::Fa, Algorithm::Centralized, Algorithm::Isolated] {
        let mut c = radar_ring(algo);
        c.nodes = 8;
        c.rounds = 6;
        c.partition = PartitionChoice::Iid(Some(20));
        c.drop_prob = 0.1;
        c.workers = Some(1);
        let first = csv(&c);
        let again = csv(&c);
        c.workers = Some(4);
        let wide = csv(&c);
        if first != again || first != wide {
            return (false, format!("{algo}: metrics differ between runs or worker counts"));
        }
        checked += 1;
    }
    (true, format!("{checked} algorithms, byte-identical across 2 runs and 1 vs 4 workers"))
}
