//! `ncs`: discretize plants, compute LQR gains, certify them under packet loss,
//! simulate, and synthesize weights.
//!
//! Exit status: 0 on success (with a certified design where one is expected),
//! 2 when no certified design is produced, 1 on configuration or I/O errors.

mod config;

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ncs_core::bmi_stab::certify_gain;
use ncs_core::lqr::solve_dare;
use ncs_core::plant::DiscretePlant;
use ncs_core::sim::{expected_itae_with_seeds, simulate_once, write_trace_csv};
use ncs_core::synth::{run_statistics, synthesize, Arm, SynthesisResult};
use ncs_core::{Error, Matrix};
use serde::Serialize;
use serde_json::json;

use crate::config::{resolve_gain, FileConfig, Gain};

#[derive(Parser)]
#[command(
    name = "ncs",
    version,
    about = "Stabilizing LQR design for loops with packet loss"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Outer optimizer, overriding the configuration.
    #[arg(long, global = true, value_enum)]
    arm: Option<ArmArg>,
    /// Number of traces (`simulate`) or runs per arm (`compare`).
    #[arg(long, global = true)]
    runs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Zero-order-hold discretization of the configured plant.
    Discretize,
    /// Riccati solution and gain for the `[design]` weights.
    Lqr,
    /// Stability certificate for the `[design]` gain.
    Certify,
    /// Loss realizations and expected tracking cost for the `[design]` gain.
    Simulate,
    /// Weight synthesis with the configured optimizer.
    Synthesize,
    /// Repeated synthesis with both optimizers.
    Compare,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArmArg {
    Regpso,
    Ga,
}

impl From<ArmArg> for Arm {
    fn from(a: ArmArg) -> Self {
        match a {
            ArmArg::Regpso => Arm::Regpso,
            ArmArg::Ga => Arm::Ga,
        }
    }
}

enum Outcome {
    Done,
    NotCertified,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotCertified) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome> {
    let mut cfg = config::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.synth.master_seed = seed;
    }
    if let Some(arm) = cli.arm {
        cfg.synth.outer = arm.into();
    }
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    match cli.command {
        Command::Discretize => discretize(&cfg, &cli.out),
        Command::Lqr => lqr(&cfg, &cli.out),
        Command::Certify => certify(&cfg, &cli.out),
        Command::Simulate => simulate(&cfg, &cli.out, cli.runs.unwrap_or(1)),
        Command::Synthesize => synthesize_cmd(&cfg, &cli.out),
        Command::Compare => compare(
            &cfg,
            &cli.out,
            cli.runs.unwrap_or(10),
            cli.arm.map(Arm::from),
        ),
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(file, value)?;
    Ok(())
}

fn discretize(cfg: &FileConfig, out: &Path) -> Result<Outcome> {
    let d = cfg.synth.discrete_plant()?;
    write_json(out, "discrete.json", &d)?;
    println!("G = {:?}", d.g.to_rows());
    println!("H = {:?}", d.h.to_rows());
    Ok(Outcome::Done)
}

fn lqr(cfg: &FileConfig, out: &Path) -> Result<Outcome> {
    let d = cfg.synth.discrete_plant()?;
    let Gain::Weights(w) = cfg.gain_source(&d)? else {
        bail!("lqr needs q and r in [design]");
    };
    match solve_dare(&d, &w) {
        Ok(design) => {
            write_json(out, "lqr.json", &design)?;
            println!("K = {:?}", design.k.as_slice());
            println!("rho(G - HK) = {:.6}", design.nominal_spectral_radius);
            Ok(Outcome::Done)
        }
        Err(e) => {
            eprintln!("no stabilizing gain: {e}");
            Ok(Outcome::NotCertified)
        }
    }
}

fn design_gain(cfg: &FileConfig) -> Result<(DiscretePlant, Option<Matrix>)> {
    let d = cfg.synth.discrete_plant()?;
    let source = cfg.gain_source(&d)?;
    let k = resolve_gain(&source, &d);
    Ok((d, k))
}

fn certify(cfg: &FileConfig, out: &Path) -> Result<Outcome> {
    cfg.synth.validate()?;
    let (d, k) = design_gain(cfg)?;
    let Some(k) = k else {
        eprintln!("the weights produce no stabilizing gain");
        return Ok(Outcome::NotCertified);
    };
    let result = certify_gain(&d, &k, cfg.synth.p_tx, &cfg.synth.certify_options())?;
    write_json(
        out,
        "certificate.json",
        &json!({ "k": k, "result": result }),
    )?;
    match &result.certificate {
        Some(c) if result.certified => {
            println!(
                "certified: a1 = {:.6}, a2 = {:.6}, decay product = {:.6}",
                c.a1, c.a2, c.decay_product
            );
            println!("eig(P) = {:?}", c.eigenvalues());
            Ok(Outcome::Done)
        }
        _ => {
            println!(
                "not certified after {} generations",
                result.generations_used
            );
            Ok(Outcome::NotCertified)
        }
    }
}

fn simulate(cfg: &FileConfig, out: &Path, traces: usize) -> Result<Outcome> {
    let s = &cfg.synth;
    s.validate()?;
    let (d, k) = design_gain(cfg)?;
    let Some(k) = k else {
        eprintln!("the weights produce no stabilizing gain");
        return Ok(Outcome::NotCertified);
    };
    let seeds = s.report_seeds();
    if traces > seeds.len() {
        bail!(
            "--runs {traces} exceeds sim.report_realizations = {}",
            seeds.len()
        );
    }
    for (i, &seed) in seeds.iter().take(traces).enumerate() {
        let trace = simulate_once(&d, &k, s.p_tx, s.sim.ref_amplitude, s.sim.horizon, seed)?;
        write_trace_csv(&trace, File::create(out.join(format!("trace_{i}.csv")))?)?;
    }
    let cost =
        expected_itae_with_seeds(&d, &k, s.p_tx, s.sim.ref_amplitude, s.sim.horizon, &seeds)?;
    write_json(
        out,
        "simulation.json",
        &json!({ "k": k, "expected_cost": cost }),
    )?;
    println!(
        "expected cost {:.4} (std {:.4}, {} realizations)",
        cost.mean, cost.std_dev, cost.realizations
    );
    Ok(Outcome::Done)
}

fn write_convergence(path: &Path, history: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "best_cost"])?;
    for (i, v) in history.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_result(out: &Path, r: &SynthesisResult, cfg: &FileConfig) -> Result<()> {
    write_json(out, "result.json", r)?;
    write_convergence(&out.join("convergence.csv"), &r.convergence)?;
    let s = &cfg.synth;
    let d = s.discrete_plant()?;
    let seed = s.report_seeds()[0];
    let trace = simulate_once(&d, &r.k, s.p_tx, s.sim.ref_amplitude, s.sim.horizon, seed)?;
    write_trace_csv(&trace, File::create(out.join("trace_0.csv"))?)?;
    Ok(())
}

fn synthesize_cmd(cfg: &FileConfig, out: &Path) -> Result<Outcome> {
    cfg.synth.validate()?;
    match synthesize(&cfg.synth) {
        Ok(r) => {
            write_result(out, &r, cfg)?;
            println!(
                "weights q = {:?}, r = {}",
                r.weights.q_diag, r.weights.r_value
            );
            println!("K = {:?}", r.k.as_slice());
            println!(
                "expected cost {:.4} (search {:.4}), decay product {:.6}, {:.1}s",
                r.expected_cost.mean, r.search_cost, r.certificate.decay_product, r.wall_time
            );
            Ok(Outcome::Done)
        }
        Err(Error::NoCertifiedDesign(msg)) => {
            eprintln!("no certified design found within budget: {msg}");
            Ok(Outcome::NotCertified)
        }
        Err(e) => Err(e.into()),
    }
}

fn compare(cfg: &FileConfig, out: &Path, runs: usize, only: Option<Arm>) -> Result<Outcome> {
    cfg.synth.validate()?;
    if runs < 2 {
        bail!("--runs must be at least 2");
    }
    let arms: Vec<Arm> = match only {
        Some(a) => vec![a],
        None => vec![Arm::Regpso, Arm::Ga],
    };
    let cmp = run_statistics(&cfg.synth, &arms, runs)?;
    let mut w = csv::Writer::from_path(out.join("stats.csv"))?;
    w.write_record(["arm", "mean", "std", "best", "worst"])?;
    for s in &cmp.stats {
        w.write_record([
            s.arm.to_string(),
            s.mean.to_string(),
            s.std_dev.to_string(),
            s.best.to_string(),
            s.worst.to_string(),
        ])?;
        println!(
            "{:>6}: mean {:.4}  std {:.4}  best {:.4}  worst {:.4}  failures {}",
            s.arm, s.mean, s.std_dev, s.best, s.worst, s.failures
        );
    }
    w.flush()?;
    write_json(out, "comparison.json", &cmp)?;
    if cmp.stats.iter().any(|s| s.failures > 0) {
        Ok(Outcome::NotCertified)
    } else {
        Ok(Outcome::Done)
    }
}
