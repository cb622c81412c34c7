mod args;
mod plot;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use flsim::algos::{Algorithm, QuantBits};
use flsim::data::{load_native, save_native, synth_digits, synth_radar, SynthOptions};
use flsim::nn::Architecture;
use flsim::sim::{overhead_bytes, run, save_metrics_csv, save_models, worker_count, RunOutput, SimConfig};
use flsim::sweep::{expand, run_sweep, save_sweep, write_sweep_summary, Axis};
use flsim::Error;

use args::{BenchArgs, CheckArgs, Cli, Command, RunArgs, SweepArgs, SynthArgs, SynthKind};

/// Error with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Divergence { .. } => 3,
            Error::Config(_) | Error::Argument(_) => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

fn check_failed(message: String) -> Failure {
    Failure { code: 1, message }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::try_parse_from(args::normalize_argv(std::env::args_os())).unwrap_or_else(|e| e.exit());
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Synth(a) => cmd_synth(a),
        Command::ConvertCheck(a) => cmd_check(a),
        Command::BenchOverhead(a) => cmd_bench(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("flsim: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn summarize(cfg: &SimConfig, out: &RunOutput) -> String {
    let last = out.final_rows();
    let n = last.len().max(1) as f64;
    let loss: Vec<f64> = last.iter().map(|r| r.val_loss).collect();
    let mean = loss.iter().sum::<f64>() / n;
    let min = loss.iter().copied().fold(f64::INFINITY, f64::min);
    let max = loss.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let acc = last.iter().map(|r| r.val_acc).sum::<f64>() / n;
    let round = last.first().map_or(0, |r| r.round);
    let tx = last.iter().map(|r| r.tx_bytes).max().unwrap_or(0);
    let cum = last.iter().map(|r| r.cum_tx_bytes).max().unwrap_or(0);
    format!(
        "algo={} model={} K={} T={}\nround {round}: val_loss mean {mean:.4} min {min:.4} max {max:.4}, val_acc mean {acc:.4}\nbytes per device: {tx} last round, {cum} total\n",
        cfg.algorithm,
        cfg.model.as_str(),
        cfg.nodes,
        cfg.rounds,
    )
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let cfg = a.config.resolve()?;
    let out = run(&cfg)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", summarize(&cfg, &out));
    if let Some(dir) = a.out.or_else(|| cfg.out.clone()) {
        std::fs::create_dir_all(&dir)?;
        save_metrics_csv(dir.join("metrics.csv"), &out.metrics)?;
        std::fs::write(dir.join("config.txt"), cfg.to_text())?;
        if !a.no_plot {
            let nodes = out.metrics.iter().map(|r| r.node).max().map_or(0, |n| n + 1);
            let curves: Vec<_> = (0..nodes).map(|k| out.loss_curve(k)).collect();
            plot::save(dir.join("loss.png"), &curves)?;
        }
        if a.save_models {
            save_models(dir.join("models"), &out.models)?;
        }
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<(), Failure> {
    let data = match a.kind {
        SynthKind::Radar => {
            let mut opts = SynthOptions::radar().with_family(a.family);
            if let Some(n) = a.noise {
                opts = opts.with_noise(n);
            }
            synth_radar(a.seed, a.count, &opts)?
        }
        SynthKind::Digits => {
            let mut opts = SynthOptions::digits().with_family(a.family);
            if let Some(n) = a.noise {
                opts = opts.with_noise(n);
            }
            synth_digits(a.seed, a.count, &opts)?
        }
    };
    save_native(&a.output, &data)?;
    println!(
        "wrote {} examples, dim {}, {} classes to {}",
        data.len(),
        data.feature_dim(),
        data.class_count(),
        a.output.display()
    );
    Ok(())
}

fn cmd_check(a: CheckArgs) -> Result<(), Failure> {
    let data = load_native(&a.file)?;
    println!("count {} dim {} classes {}", data.len(), data.feature_dim(), data.class_count());
    let hist: Vec<String> = data.class_histogram().iter().map(|c| c.to_string()).collect();
    println!("class histogram {}", hist.join(" "));
    let mut problems = Vec::new();
    for (name, want, got) in [
        ("count", a.count, data.len()),
        ("dim", a.dim, data.feature_dim()),
        ("classes", a.classes, data.class_count()),
    ] {
        if let Some(w) = want {
            if w != got {
                problems.push(format!("{name} is {got}, expected {w}"));
            }
        }
    }
    if let Some(x) = data.examples().iter().flat_map(|e| &e.x).find(|v| !v.is_finite()) {
        problems.push(format!("non-finite feature {x}"));
    }
    if let Some(path) = &a.against {
        let reference = load_native(path)?;
        if reference.len() != data.len() || reference.feature_dim() != data.feature_dim() {
            problems.push("shape differs from the reference".into());
        } else {
            let mut worst = 0.0f64;
            for (i, (u, v)) in data.examples().iter().zip(reference.examples()).enumerate() {
                if u.y != v.y {
                    problems.push(format!("label of row {i} is {}, reference {}", u.y, v.y));
                    break;
                }
                for (p, q) in u.x.iter().zip(&v.x) {
                    worst = worst.max((p - q).abs());
                }
            }
            println!("max feature difference {worst:e}");
            if worst > a.tol {
                problems.push(format!("features differ by {worst:e} > {:e}", a.tol));
            }
        }
    }
    if problems.is_empty() {
        println!("ok");
        Ok(())
    } else {
        Err(check_failed(problems.join("; ")))
    }
}

/// A closed stdout (e.g. piped into `head`) ends output quietly.
fn quiet_pipe(r: std::io::Result<()>) -> Result<(), Failure> {
    match r {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn cmd_bench(a: BenchArgs) -> Result<(), Failure> {
    let bits: QuantBits = a.bits.parse()?;
    quiet_pipe(write_bench(&a, bits))
}

fn write_bench(a: &BenchArgs, bits: QuantBits) -> std::io::Result<()> {
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "model,params,algo,neighbors,bytes,kbytes")?;
    for arch in [Architecture::Cnn, Architecture::TwoNn] {
        let params = arch.build(512, 8).map_err(std::io::Error::other)?.parameter_count();
        let row = |algo: Algorithm, degree: usize| {
            let bytes = overhead_bytes(algo, params, degree, bits);
            (bytes, bytes as f64 / 1000.0)
        };
        let (b, kb) = row(Algorithm::Cfa, 0);
        writeln!(stdout, "{},{params},cfa/fa,,{b},{kb:.2}", arch.as_str())?;
        for &d in &a.degrees {
            let (b, kb) = row(Algorithm::CfaGe, d);
            writeln!(stdout, "{},{params},cfa-ge,{d},{b},{kb:.2}", arch.as_str())?;
        }
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Failure> {
    let base = a.config.resolve()?;
    let axes = a.axes.iter().map(|s| Axis::parse(s)).collect::<flsim::Result<Vec<_>>>()?;
    let keys: Vec<String> = axes.iter().map(|x| x.key.clone()).collect();
    let points = expand(&base, &axes)?;
    let workers = a.parallel.unwrap_or_else(|| worker_count(&base));
    let results = run_sweep(points, workers)?;
    write_sweep_summary(std::io::stdout().lock(), &keys, &results)?;
    if let Some(dir) = a.out {
        save_sweep(&dir, &keys, &results)?;
    }
    let failed = results.iter().filter(|r| r.outcome.is_err()).count();
    if failed > 0 {
        eprintln!("{failed} of {} sweep points failed", results.len());
    }
    Ok(())
}
