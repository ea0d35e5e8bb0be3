use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use d2d_cli::config::{load_config, ConfigError, SweepConfig};
use d2d_cli::exit;
use d2d_cli::optimize::{find_optimal_beta, OptimizationReport};
use d2d_cli::output::{config_json, emit_results, round_sig, Format, TableRow};
use d2d_cli::sweep::{check_rows, run_coverage_curve, run_sweep, SweepContent};
use d2d_cli::validate;

#[derive(Parser)]
#[command(name = "d2d", version, about = "Coverage and ASE of D2D-underlay uplink cellular networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cellular-mode probability against β.
    QCurve(Common),
    /// Coverage of both tiers against γ at fixed `beta_dbm`.
    CoverageCurve(Common),
    /// Coverage of both tiers against β at fixed γ.
    CoverageBeta(Common),
    /// Mode probability, coverage and ASE against β.
    AseSweep(Common),
    /// ASE-maximising β subject to a cellular coverage floor.
    OptimizeBeta(Common),
    /// Runs the acceptance suite and prints one line per criterion.
    Validate(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` override, applied after all other flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo replications.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, allow_negative_numbers = true, value_name = "DBM")]
    beta_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true, value_name = "DBM")]
    beta_max: Option<f64>,
    #[arg(long, value_name = "DB")]
    beta_step: Option<f64>,
    /// SINR threshold of β sweeps and of the optimisation constraint.
    #[arg(long, allow_negative_numbers = true, value_name = "DB")]
    gamma_db: Option<f64>,
    /// Comma-separated SINR thresholds of the coverage curve.
    #[arg(long, allow_hyphen_values = true, value_name = "DB,..")]
    gamma_grid: Option<String>,
    #[arg(long, value_parser = ["analytic", "mc", "both"])]
    engine: Option<String>,
    #[arg(long, value_name = "KM")]
    window_km: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Cellular coverage floor of optimize-beta.
    #[arg(long)]
    constraint: Option<f64>,
    /// Record per-row wall time.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, String)>, ConfigError> {
        let mut v: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, val: Option<String>| {
            if let Some(val) = val {
                v.push((k.to_string(), val));
            }
        };
        push("seed", self.seed.map(|x| x.to_string()));
        push("replications", self.reps.map(|x| x.to_string()));
        push("beta_min_dbm", self.beta_min.map(|x| x.to_string()));
        push("beta_max_dbm", self.beta_max.map(|x| x.to_string()));
        push("beta_step_db", self.beta_step.map(|x| x.to_string()));
        push("gamma_db", self.gamma_db.map(|x| x.to_string()));
        push("gamma_grid_db", self.gamma_grid.clone());
        push("engine", self.engine.clone());
        push("window_km", self.window_km.map(|x| x.to_string()));
        push("workers", self.workers.map(|x| x.to_string()));
        push("coverage_constraint", self.constraint.map(|x| x.to_string()));
        push("timing", self.timing.then(|| "true".to_string()));
        for kv in &self.set {
            let (k, val) = kv.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: 0,
                text: kv.clone(),
            })?;
            v.push((k.trim().to_string(), val.trim().to_string()));
        }
        Ok(v)
    }

    fn format(&self) -> Format {
        match self.format {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

fn resolve(common: &Common) -> Result<SweepConfig, ConfigError> {
    let cfg = load_config(common.config.as_deref(), &common.overrides()?)?;
    eprint!("# resolved configuration\n{}", cfg.echo());
    Ok(cfg)
}

fn emit<T: TableRow>(rows: &[T], common: &Common, cfg: &SweepConfig, extra: Vec<String>) -> i32 {
    if let Err(e) = emit_results(rows, common.format(), common.out.as_deref(), cfg) {
        eprintln!("error: {e}");
        return exit::FAILURE;
    }
    let mut problems = extra;
    problems.extend(rows.iter().flat_map(|r| r.errors().iter().cloned()));
    for p in &problems {
        eprintln!("error: {p}");
    }
    if problems.is_empty() {
        exit::SUCCESS
    } else {
        exit::NUMERIC
    }
}

fn beta_sweep(common: &Common, content: SweepContent) -> i32 {
    let cfg = match resolve(common) {
        Ok(c) => c,
        Err(e) => return config_failure(e),
    };
    let rows = run_sweep(&cfg, content);
    let violations = check_rows(&rows);
    emit(&rows, common, &cfg, violations)
}

fn config_failure(e: ConfigError) -> i32 {
    eprintln!("config error: {e}");
    exit::CONFIG
}

fn report_text(r: &OptimizationReport) -> String {
    let fmt = |c: &d2d_cli::optimize::Candidate| {
        format!(
            "beta_dbm = {}, ase_total = {}, cov_cell = {}",
            round_sig(c.beta_dbm),
            round_sig(c.ase_total),
            round_sig(c.cov_cell)
        )
    };
    let mut s = format!("coverage_constraint = {}\ngamma_db = {}\n", r.coverage_constraint, r.gamma_db);
    match &r.constrained {
        Some(c) => s += &format!("constrained: {}\n", fmt(c)),
        None => s += "constrained: infeasible\n",
    }
    s += &format!("unconstrained: {}\n", fmt(&r.unconstrained));
    if let Some(c) = &r.closest_to_feasible {
        s += &format!("closest_to_feasible: {}\n", fmt(c));
    }
    s += "evaluations:\nbeta_dbm,ase_total,cov_cell\n";
    for c in &r.evaluations {
        s += &format!("{},{},{}\n", round_sig(c.beta_dbm), round_sig(c.ase_total), round_sig(c.cov_cell));
    }
    s
}

fn optimize(common: &Common) -> i32 {
    let cfg = match resolve(common) {
        Ok(c) => c,
        Err(e) => return config_failure(e),
    };
    let report = match find_optimal_beta(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit::NUMERIC;
        }
    };
    let text = match common.format() {
        Format::Csv => report_text(&report),
        Format::Json => {
            let mut v = serde_json::to_value(&report).expect("serialisable report");
            v["config"] = config_json(&cfg);
            serde_json::to_string_pretty(&v).expect("serialisable report") + "\n"
        }
    };
    let written = match &common.out {
        Some(p) => std::fs::write(p, text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return exit::FAILURE;
    }
    if report.feasible() {
        exit::SUCCESS
    } else {
        eprintln!("error: no evaluated threshold reaches cellular coverage {}", cfg.coverage_constraint);
        exit::INFEASIBLE
    }
}

fn run_validate(common: &Common) -> i32 {
    let cfg = match resolve(common) {
        Ok(c) => c,
        Err(e) => return config_failure(e),
    };
    let outcomes = validate::run_all(cfg.seed, |line| println!("{line}"));
    if outcomes.iter().all(|o| o.passed()) {
        exit::SUCCESS
    } else {
        exit::FAILURE
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::QCurve(c) => beta_sweep(c, SweepContent::Mode),
        Command::CoverageBeta(c) => beta_sweep(c, SweepContent::Coverage),
        Command::AseSweep(c) => beta_sweep(c, SweepContent::Full),
        Command::CoverageCurve(c) => match resolve(c) {
            Ok(cfg) => {
                let rows = run_coverage_curve(&cfg);
                emit(&rows, c, &cfg, Vec::new())
            }
            Err(e) => config_failure(e),
        },
        Command::OptimizeBeta(c) => optimize(c),
        Command::Validate(c) => run_validate(c),
    };
    ExitCode::from(code as u8)
}
