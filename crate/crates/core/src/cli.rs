//! Command-line front end: `solve`, `sweep` and `validate`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 non-convergence or a
//! failed property.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ConfigError, ReportFormat, RunConfig};
use crate::constellation::build_ci_geometry;
use crate::realify::{build_real_channel, Complex64, ComplexVector, RealDistortionMatrix};
use crate::simulator::{run_sweep, sample_channel, EeMode, MetricsRecord, Scheme};
use crate::solver::{solve, IterationRecord, ProblemInstance, SolveReport, Termination};
use crate::validation::{run_all, PropertyOutcome, ValidationSettings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

pub const CSV_HEADER: &str =
    "gamma_db,beta,scheme,mean_power,ber,mi_bits_per_user,energy_efficiency,blocks,symbols_per_block,solver_failures,seed";

#[derive(Debug, Parser)]
#[command(name = "robust-slp", version, about = "Worst-case symbol-level precoding under bounded distortion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one precoding instance and write the full report.
    Solve(CommonArgs),
    /// Run the Monte-Carlo sweep and write one CSV row per (gamma, beta, scheme).
    Sweep(SweepArgs),
    /// Run the solver property suites.
    Validate(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `run.parallel`.
    #[arg(long)]
    pub parallel: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Use (1 - BER) in place of BER in the energy-efficiency figure.
    #[arg(long)]
    pub ee_complement: bool,
    /// Comma-separated subset of wc-slp, nominal-slp, nominal-under-distortion.
    #[arg(long, value_delimiter = ',')]
    pub schemes: Option<Vec<Scheme>>,
}

pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Validate(args) => cmd_validate(&args),
    }
}

fn load(args: &CommonArgs) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(p) = args.parallel {
        cfg.run.parallel = p;
    }
    if let Some(out) = &args.out {
        cfg.output.path = Some(out.clone());
    }
    cfg.revalidate()?;
    Ok(cfg)
}

fn write_output(path: Option<&Path>, body: &str) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, body),
        None => std::io::stdout().lock().write_all(body.as_bytes()),
    }
}

fn emit(cfg: &RunConfig, body: &str) -> i32 {
    match write_output(cfg.output.path.as_deref(), body) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: cannot write output: {e}");
            EXIT_CONFIG
        }
    }
}

fn render<T: Serialize>(format: ReportFormat, value: &T) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(value).expect("report serializes") + "\n",
        ReportFormat::Toml => toml::to_string(value).expect("report serializes"),
    }
}

#[derive(Debug, Serialize)]
struct SolveDocument<'a> {
    config: String,
    seed: u64,
    symbols: Vec<usize>,
    termination: &'a Termination,
    converged: bool,
    iterations: usize,
    objective: f64,
    mu: Option<f64>,
    u: Vec<f64>,
    t: Vec<f64>,
    w: Vec<f64>,
    power: f64,
    trace: &'a [IterationRecord],
}

/// Channel and symbols of the `solve` instance, from the config or the seed.
fn solve_instance(cfg: &RunConfig) -> crate::Result<(ProblemInstance, Vec<usize>)> {
    let sys = &cfg.system;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let channel = match &cfg.problem.channel {
        Some(ch) => {
            let users: Vec<ComplexVector> = ch
                .re
                .iter()
                .zip(&ch.im)
                .map(|(re, im)| ComplexVector::from_iterator(sys.n_t, re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b))))
                .collect();
            build_real_channel(&users)?
        }
        None => sample_channel(sys.n_t, sys.n_r, &mut rng)?.real,
    };
    let symbols = match &cfg.problem.symbols {
        Some(s) => s.clone(),
        None => (0..sys.n_r).map(|_| rng.random_range(0..sys.psk_order)).collect(),
    };
    let gamma = 10f64.powf(cfg.problem.gamma_db / 10.0);
    let geometry = build_ci_geometry(&symbols, &vec![gamma; sys.n_r], &vec![sys.noise_sigma; sys.n_r], &cfg.constellation())?;
    let instance = ProblemInstance::with_momentum(
        channel,
        RealDistortionMatrix::identity(sys.n_t),
        geometry,
        cfg.problem.beta,
        cfg.problem_epsilon(),
        cfg.solver.momentum,
    )?;
    Ok((instance, symbols))
}

pub fn cmd_solve(args: &CommonArgs) -> i32 {
    let cfg = match load(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let (instance, symbols) = match solve_instance(&cfg) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("config error: cannot build the problem instance: {e}");
            return EXIT_CONFIG;
        }
    };
    let report: SolveReport = solve(&instance, &cfg.solver);
    let doc = SolveDocument {
        config: cfg.to_toml(),
        seed: cfg.run.seed,
        symbols,
        termination: &report.termination,
        converged: report.converged(),
        iterations: report.iterations,
        objective: report.objective,
        mu: report.mu,
        u: report.u.iter().copied().collect(),
        t: report.t.iter().copied().collect(),
        w: report.w.iter().copied().collect(),
        power: report.u.norm_squared(),
        trace: &report.trace,
    };
    let code = emit(&cfg, &render(cfg.output.format, &doc));
    if code != EXIT_OK {
        return code;
    }
    if report.converged() {
        EXIT_OK
    } else {
        eprintln!("solver did not converge: {:?} after {} iterations", report.termination, report.iterations);
        EXIT_FAILURE
    }
}

fn csv_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV with the effective config as leading `#` lines, then the header.
pub fn render_csv(cfg: &RunConfig, records: &[MetricsRecord]) -> String {
    let mut out = String::new();
    for line in cfg.to_toml().lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let row = [
            csv_float(r.gamma_db),
            csv_float(r.beta),
            r.scheme.name().to_string(),
            csv_float(r.mean_power),
            csv_float(r.ber),
            csv_float(r.mi_bits_per_user),
            csv_float(r.energy_efficiency),
            r.blocks.to_string(),
            r.symbols_per_block.to_string(),
            r.solver_failures.to_string(),
            r.seed.to_string(),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn cmd_sweep(args: &SweepArgs) -> i32 {
    let mut cfg = match load(&args.common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    if args.ee_complement {
        cfg.sweep.ee_mode = EeMode::Complement;
    }
    if let Some(schemes) = &args.schemes {
        cfg.sweep.schemes = schemes.clone();
    }
    if let Err(e) = cfg.revalidate() {
        eprintln!("{e}");
        return EXIT_CONFIG;
    }
    match run_sweep(&cfg.sweep_config()) {
        Ok(records) => {
            let failures: u64 = records.iter().map(|r| r.solver_failures).sum();
            if failures > 0 {
                log::warn!("{failures} solver failures excluded from the averages");
            }
            emit(&cfg, &render_csv(&cfg, &records))
        }
        Err(e) => {
            eprintln!("sweep failed: {e}");
            EXIT_FAILURE
        }
    }
}

#[derive(Debug, Serialize)]
struct ValidateDocument<'a> {
    config: String,
    seed: u64,
    passed: bool,
    properties: &'a [PropertyOutcome],
}

pub fn cmd_validate(args: &CommonArgs) -> i32 {
    let cfg = match load(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let outcomes = run_all(&ValidationSettings::from_config(&cfg));
    let passed = outcomes.iter().all(|o| o.passed);

    let mut summary = format!("seed {}\n", cfg.run.seed);
    for o in &outcomes {
        summary.push_str(&format!(
            "{} {:<18} worst {:.3e} threshold {:.1e} checks {} ({})\n",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.worst,
            o.threshold,
            o.checks,
            o.detail
        ));
    }
    let doc = ValidateDocument { config: cfg.to_toml(), seed: cfg.run.seed, passed, properties: &outcomes };
    // Property lines go to stdout; the structured report goes to the output
    // path, or follows the lines on stdout.
    match cfg.output.path.as_deref() {
        Some(path) => {
            print!("{summary}");
            if let Err(e) = std::fs::write(path, render(cfg.output.format, &doc)) {
                eprintln!("error: cannot write output: {e}");
                return EXIT_CONFIG;
            }
        }
        None => {
            let code = emit(&cfg, &(summary + &render(cfg.output.format, &doc)));
            if code != EXIT_OK {
                return code;
            }
        }
    }
    if passed {
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}
