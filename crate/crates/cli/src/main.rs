use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};
use rayon::prelude::*;

use uavplan_core::io::{dump_results, evaluate_files, load_scenario, write_metrics_json};
use uavplan_core::pipeline::{run, Method};
use uavplan_core::surrogates::{speed_gap_identity_error, surrogate_suite, GRADIENT_TOL, VALUE_TOL};
use uavplan_core::{Error, RunStatus, ScaConfig, Scenario};

/// Exit codes.
const OK: u8 = 0;
const USAGE: u8 = 1;
const NOT_CONVERGED: u8 = 2;
const INFEASIBLE: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "uavplan", version, about = "UAV trajectory and uplink power planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Maximise the minimum average rate under the propulsion-power limit.
    PlanMinrate(PlanArgs),
    /// Maximise the minimum delivered bits per joule of propulsion energy.
    PlanEe(PlanArgs),
    /// Min-rate over circular trajectories.
    BaselineCircularMinrate(PlanArgs),
    /// Energy efficiency over circular trajectories.
    BaselineCircularEe(PlanArgs),
    /// Recompute metrics and the feasibility audit of a stored plan.
    Eval(EvalArgs),
    /// Check every surrogate bound on random samples.
    VerifySurrogates(VerifyArgs),
}

#[derive(Debug, Args)]
struct PlanArgs {
    /// Scenario JSON file.
    #[arg(long, required_unless_present = "scenario_dir", conflicts_with = "scenario_dir")]
    scenario: Option<PathBuf>,
    /// Directory of scenario JSON files; each gets its own output subdirectory.
    #[arg(long)]
    scenario_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Maximum convex-approximation iterations per run.
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
    /// Relative objective change that ends the approximation loop.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Override the scenario's average propulsion-power limit, W.
    #[arg(long)]
    plim_w: Option<f64>,
    /// Tolerance of the Dinkelbach stopping rule.
    #[arg(long, default_value_t = 1e-3)]
    dinkelbach_tol: f64,
    /// Duality-gap tolerance of the convex subsolver.
    #[arg(long, default_value_t = 1e-7)]
    subsolver_tol: f64,
    /// Worker threads for --scenario-dir.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Trajectory CSV (columns n,qx,qy,vx,vy,ax,ay at least).
    #[arg(long)]
    plan: PathBuf,
    /// Transmit powers CSV (columns n,p_1..p_K).
    #[arg(long)]
    powers: PathBuf,
    /// Write the metrics JSON here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluate against the scenario without its propulsion-power limit.
    #[arg(long)]
    no_plim: bool,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InfeasibleScenario(_) | Error::InfeasibleInit(_) => INFEASIBLE,
        Error::Solver(_) => NOT_CONVERGED,
        _ => USAGE,
    }
}

impl PlanArgs {
    fn config(&self) -> ScaConfig {
        ScaConfig {
            max_outer_iters: self.max_iters,
            rel_obj_tol: self.tol,
            dinkelbach_tol: self.dinkelbach_tol,
            subsolver_tol: self.subsolver_tol,
            ..ScaConfig::default()
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.max_iters == 0 {
            return Err("--max-iters must be positive".into());
        }
        for (name, v) in [("--tol", self.tol), ("--dinkelbach-tol", self.dinkelbach_tol), ("--subsolver-tol", self.subsolver_tol)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.jobs == 0 {
            return Err("--jobs must be positive".into());
        }
        Ok(())
    }
}

fn plan_one(method: Method, args: &PlanArgs, scenario_path: &Path, out: &Path) -> u8 {
    let scenario = match load_scenario(scenario_path) {
        Ok(s) => s,
        Err(e) => {
            error!("{e}");
            return exit_code(&e);
        }
    };
    let scenario = match args.plim_w {
        Some(limit) if method.is_energy_efficiency() => {
            warn!("--plim-w {limit} ignored: energy-efficiency planners do not use the power limit");
            scenario
        }
        Some(limit) => match scenario.with_prop_limit(Some(limit)).validated() {
            Ok(s) => s,
            Err(e) => {
                error!("{e}");
                return exit_code(&e);
            }
        },
        None => scenario,
    };
    let result = run(&scenario, method, &args.config());
    let output = match result {
        Ok(o) => o,
        Err(e) => {
            error!("{}: {e}", scenario_path.display());
            return exit_code(&e);
        }
    };
    let report = &output.outcome.report;
    let audit_scenario: Scenario = if method.is_energy_efficiency() {
        scenario.clone().with_prop_limit(None)
    } else {
        scenario.clone()
    };
    if let Err(e) = dump_results(&audit_scenario, &output.outcome.plan, report, out) {
        error!("writing {}: {e}", out.display());
        return USAGE;
    }
    println!(
        "{method} {}: status {:?}, min rate {:.6} bps/Hz, EE {:.6e} bits/J, avg power {:.3} W, {} iterations, {:.2} s -> {}",
        scenario_path.display(),
        report.status,
        report.min_avg_rate,
        report.ee_bits_per_joule,
        report.avg_prop_power_w,
        report.iterations,
        report.wall_time_s,
        out.display()
    );
    match report.status {
        RunStatus::Converged | RunStatus::Evaluated => OK,
        RunStatus::MaxIterations | RunStatus::SubsolverFailure => NOT_CONVERGED,
    }
}

fn scenario_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn plan(method: Method, args: &PlanArgs) -> u8 {
    if let Err(msg) = args.validate() {
        eprintln!("error: {msg}");
        return USAGE;
    }
    if let Some(path) = &args.scenario {
        return plan_one(method, args, path, &args.out);
    }
    let dir = args.scenario_dir.as_ref().expect("clap enforces one scenario source");
    let files = match scenario_files(dir) {
        Ok(f) if !f.is_empty() => f,
        Ok(_) => {
            eprintln!("error: no .json scenarios in {}", dir.display());
            return USAGE;
        }
        Err(e) => {
            eprintln!("error: {}: {e}", dir.display());
            return USAGE;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return USAGE;
        }
    };
    info!("{} scenarios on {} workers", files.len(), args.jobs);
    pool.install(|| {
        files
            .par_iter()
            .map(|f| {
                let stem = f.file_stem().unwrap_or_default();
                plan_one(method, args, f, &args.out.join(stem))
            })
            .collect::<Vec<u8>>()
    })
    .into_iter()
    .max()
    .unwrap_or(OK)
}

fn eval(args: &EvalArgs) -> u8 {
    let result = load_scenario(&args.scenario)
        .map(|s| if args.no_plim { s.with_prop_limit(None) } else { s })
        .and_then(|s| evaluate_files(&s, &args.plan, &args.powers));
    let (_, report) = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    match &args.out {
        Some(path) => {
            if let Err(e) = write_metrics_json(&report, path) {
                eprintln!("error: {e}");
                return USAGE;
            }
        }
        None => match serde_json::to_string_pretty(&report) {
            Ok(json) => println!("{json}"),
            Err(e) => {
                eprintln!("error: {e}");
                return USAGE;
            }
        },
    }
    OK
}

fn verify(args: &VerifyArgs) -> u8 {
    let checks = surrogate_suite(args.samples, args.seed);
    let mut failed = 0;
    println!("{:<28} {:>10} {:>10} {:>12} {:>10} {:>8}", "family", "value gap", "grad gap", "max excess", "violations", "samples");
    for (name, c) in &checks {
        let ok = c.passes(VALUE_TOL, GRADIENT_TOL);
        failed += usize::from(!ok);
        println!(
            "{name:<28} {:>10.2e} {:>10.2e} {:>12.2e} {:>10} {:>8} {}",
            c.value_gap,
            c.gradient_gap,
            c.max_violation,
            c.violations + c.nonfinite,
            c.samples,
            if ok { "ok" } else { "FAIL" }
        );
    }
    let gap = speed_gap_identity_error(args.samples, args.seed);
    let gap_ok = gap <= 1e-12;
    failed += usize::from(!gap_ok);
    println!("speed gap identity error {gap:.2e} {}", if gap_ok { "ok" } else { "FAIL" });
    if failed == 0 {
        OK
    } else {
        NOT_CONVERGED
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("UAVPLAN_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match &cli.command {
        Command::PlanMinrate(a) => plan(Method::MinRate, a),
        Command::PlanEe(a) => plan(Method::EnergyEfficiency, a),
        Command::BaselineCircularMinrate(a) => plan(Method::CircularMinRate, a),
        Command::BaselineCircularEe(a) => plan(Method::CircularEnergyEfficiency, a),
        Command::Eval(a) => eval(a),
        Command::VerifySurrogates(a) => verify(a),
    };
    ExitCode::from(code)
}
