//! `rmc`: command-line driver for the robust matrix completion toolkit.

use clap::{Parser, Subcommand};
use rmc_core::harness;
use rmc_core::oracles;
use rmc_core::problem::{self, read_truth_file, ObservationSet};
use rmc_core::{
    beta_data_driven, gen_instance, solve, BetaSpec, InstanceParams, SolverConfig,
    TerminationReason, ThresholdKind,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rmc", version, about = "Robust matrix completion: alternating thresholding + rank projection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover a low-rank matrix from an observation file.
    Solve(SolveArgs),
    /// Generate a synthetic instance: observations plus ground-truth sidecar.
    Gen(GenArgs),
    /// Run a phase-transition grid experiment from a config file.
    Phase(PhaseArgs),
    /// Numerically verify the deterministic analysis lemmas.
    Verify(VerifyArgs),
}

#[derive(clap::Args)]
struct SolveArgs {
    /// Observation file ("n1 n2 p" header + sorted "i j value" triplets).
    #[arg(long)]
    input: PathBuf,
    /// Target rank r.
    #[arg(long)]
    rank: usize,
    /// Thresholding operator: soft | scad | hard.
    #[arg(long)]
    threshold: String,
    /// SCAD parameter a (> 2).
    #[arg(long, default_value_t = 3.0)]
    scad_a: f64,
    /// Fixed threshold scale beta.
    #[arg(long)]
    beta: Option<f64>,
    /// Ground-truth sidecar file; beta = beta-factor * (mu r / n) sigma_1*.
    #[arg(long)]
    beta_oracle: Option<PathBuf>,
    /// Multiplier for the oracle or data-driven beta.
    #[arg(long, default_value_t = 1.1)]
    beta_factor: f64,
    /// Estimate beta from the observations themselves.
    #[arg(long, default_value_t = false)]
    beta_data_driven: bool,
    /// Threshold decay rate in (0, 1).
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    /// Relative successive-change stopping tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Accepted for interface stability; every solve path is deterministic,
    /// so this value is unused.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the per-iteration trace CSV here.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Write the recovered matrix (dense text format) here.
    #[arg(long)]
    lhat_out: Option<PathBuf>,
    /// Record wall-clock per iteration (makes the trace non-reproducible).
    #[arg(long, default_value_t = false)]
    timing: bool,
}

#[derive(clap::Args)]
struct GenArgs {
    #[arg(long)]
    n1: usize,
    #[arg(long)]
    n2: usize,
    #[arg(long)]
    rank: usize,
    /// Bernoulli sampling rate in (0, 1].
    #[arg(long)]
    p: f64,
    /// Per-entry corruption probability in [0, 1).
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    seed: u64,
    /// Writes <prefix>.obs.txt and <prefix>.truth.txt.
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(clap::Args)]
struct PhaseArgs {
    /// Flat key = value experiment description.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for <algo>.csv, <algo>.pgm, and manifest.txt.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(clap::Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// sparse-spectral | perturbation | sparse-projection | threshold | all.
    #[arg(long, default_value = "all")]
    lemma: String,
}

fn parse_kind(name: &str, scad_a: f64) -> Result<ThresholdKind, String> {
    match name {
        "soft" => Ok(ThresholdKind::Soft),
        "scad" => Ok(ThresholdKind::Scad { a: scad_a }),
        "hard" => Ok(ThresholdKind::Hard),
        other => Err(format!("unknown threshold '{other}' (expected soft, scad, or hard)")),
    }
}

fn cmd_solve(args: SolveArgs) -> Result<(), String> {
    let obs = ObservationSet::read_file(&args.input).map_err(|e| e.to_string())?;
    let kind = parse_kind(&args.threshold, args.scad_a)?;

    let mode_count = usize::from(args.beta.is_some())
        + usize::from(args.beta_oracle.is_some())
        + usize::from(args.beta_data_driven);
    if mode_count != 1 {
        return Err("exactly one of --beta, --beta-oracle, --beta-data-driven is required".into());
    }
    let truth = match &args.beta_oracle {
        Some(path) => Some(read_truth_file(path, args.rank).map_err(|e| e.to_string())?),
        None => None,
    };
    let beta = if let Some(b) = args.beta {
        BetaSpec::Fixed(b)
    } else if args.beta_oracle.is_some() {
        BetaSpec::Oracle {
            factor: args.beta_factor,
        }
    } else {
        BetaSpec::DataDriven {
            factor: args.beta_factor,
        }
    };
    if !kind.is_conforming() {
        eprintln!(
            "note: hard thresholding is discontinuous; the decay-schedule recovery \
             guarantees for conforming operators do not apply"
        );
    }
    let _ = args.seed;

    let cfg = SolverConfig {
        rank_r: args.rank,
        kind,
        beta,
        gamma: args.gamma,
        max_iters: args.max_iters,
        stop_tol: args.tol,
        record_timing: args.timing,
    };
    let trace = solve(&obs, &cfg, truth.as_ref()).map_err(|e| e.to_string())?;

    if args.beta_data_driven {
        let raw = beta_data_driven(&obs, args.rank).map_err(|e| e.to_string())?;
        println!("data-driven beta estimate: {raw:.6e} (scaled by {})", args.beta_factor);
    }
    println!("beta = {:.6e}, gamma = {}, operator = {}", trace.beta, args.gamma, kind);
    let last = trace.final_record();
    match &trace.termination {
        TerminationReason::Converged => println!(
            "converged at t = {} (successive change {:.3e})",
            trace.converged_at().unwrap(),
            last.successive_change
        ),
        TerminationReason::MaxIters => println!(
            "stopped at max_iters = {} (successive change {:.3e})",
            args.max_iters, last.successive_change
        ),
        TerminationReason::Failed(msg) => println!("failed mid-run: {msg}"),
    }
    println!("final outlier support size: {}", last.support_size);
    if let Some(err) = last.rel_inf_error {
        println!("final rel inf error vs truth: {err:.6e}");
    }
    if let Some(path) = &args.trace_out {
        trace.write_csv(path).map_err(|e| e.to_string())?;
        println!("trace written to {}", path.display());
    }
    if let Some(path) = &args.lhat_out {
        trace.l_hat.write_text(path).map_err(|e| e.to_string())?;
        println!("estimate written to {}", path.display());
    }
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<(), String> {
    let inst = gen_instance(InstanceParams {
        n1: args.n1,
        n2: args.n2,
        rank: args.rank,
        p: args.p,
        alpha: args.alpha,
        seed: args.seed,
    })
    .map_err(|e| e.to_string())?;
    let mut obs_path = args.out_prefix.clone().into_os_string();
    obs_path.push(".obs.txt");
    let obs_path = PathBuf::from(obs_path);
    let mut truth_path = args.out_prefix.clone().into_os_string();
    truth_path.push(".truth.txt");
    let truth_path = PathBuf::from(truth_path);
    inst.obs.write_file(&obs_path).map_err(|e| e.to_string())?;
    problem::write_truth_file(&inst.truth, &truth_path).map_err(|e| e.to_string())?;
    let rep = rmc_core::check_assumptions(&inst.truth, &inst.obs, &inst.stats);
    println!(
        "instance {}x{} rank {}: |Omega| = {}, outliers = {}",
        args.n1,
        args.n2,
        args.rank,
        inst.obs.len(),
        inst.stats.total_outliers
    );
    println!(
        "mu = {:.4}, kappa = {:.4}, alpha_hat = {:.4}, p = {}, sample scaling = {:.4}, outlier scaling = {:.4}",
        rep.mu, rep.kappa, rep.alpha_hat, rep.p, rep.sample_scaling, rep.outlier_scaling
    );
    println!("observations: {}", obs_path.display());
    println!("ground truth: {}", truth_path.display());
    Ok(())
}

fn cmd_phase(args: PhaseArgs) -> Result<(), String> {
    let config_text = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("{}: {e}", args.config.display()))?;
    let grid = harness::parse_config(&config_text).map_err(|e| e.to_string())?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| format!("{}: {e}", args.out_dir.display()))?;
    let outcome = harness::run_grid(&grid).map_err(|e| e.to_string())?;
    for failure in &outcome.failures {
        eprintln!("trial failure: {failure}");
    }
    let mut artifacts: Vec<(String, Vec<u8>)> = Vec::new();
    for algo in &outcome.algorithms {
        let csv_name = format!("{}.csv", algo.name);
        let pgm_name = format!("{}.pgm", algo.name);
        let csv = harness::csv_string(&grid, std::slice::from_ref(algo)).into_bytes();
        let pgm = harness::pgm_bytes(&grid, algo).map_err(|e| e.to_string())?;
        std::fs::write(args.out_dir.join(&csv_name), &csv)
            .map_err(|e| format!("{csv_name}: {e}"))?;
        std::fs::write(args.out_dir.join(&pgm_name), &pgm)
            .map_err(|e| format!("{pgm_name}: {e}"))?;
        let mean_rate = algo.cells.iter().map(|c| c.success_rate).sum::<f64>()
            / algo.cells.len() as f64;
        println!(
            "{}: {} cells, mean success rate {:.3}",
            algo.name,
            algo.cells.len(),
            mean_rate
        );
        artifacts.push((csv_name, csv));
        artifacts.push((pgm_name, pgm));
    }
    let manifest = harness::manifest_string(&config_text, &artifacts);
    std::fs::write(args.out_dir.join("manifest.txt"), manifest)
        .map_err(|e| format!("manifest.txt: {e}"))?;
    println!("artifacts written to {}", args.out_dir.display());
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<bool, String> {
    let reports = match args.lemma.as_str() {
        "all" => oracles::run_all(args.trials, args.seed).map_err(|e| e.to_string())?,
        "sparse-spectral" => vec![oracles::check_sparse_spectral(args.trials, args.seed)
            .map_err(|e| e.to_string())?],
        "perturbation" => vec![oracles::check_perturbation_bound(args.trials, args.seed)
            .map_err(|e| e.to_string())?],
        "sparse-projection" => vec![oracles::check_sparse_projection_bound(args.trials, args.seed)
            .map_err(|e| e.to_string())?],
        "threshold" => vec![oracles::check_threshold_lemma(args.trials, args.seed)
            .map_err(|e| e.to_string())?],
        other => {
            return Err(format!(
                "unknown lemma '{other}' (expected sparse-spectral, perturbation, \
                 sparse-projection, threshold, or all)"
            ))
        }
    };
    let mut clean = true;
    for r in &reports {
        println!("{r}");
        clean &= r.violations == 0;
    }
    Ok(clean)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(args) => cmd_solve(args).map(|()| true),
        Command::Gen(args) => cmd_gen(args).map(|()| true),
        Command::Phase(args) => cmd_phase(args).map(|()| true),
        Command::Verify(args) => cmd_verify(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
