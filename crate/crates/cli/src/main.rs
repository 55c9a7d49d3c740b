use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use lipquant::adversary::QueryPlacement;
use lipquant::experiment::{
    adversary_report, adversary_resolution, oracle_summary, run_experiment_with, write_csv, ConfigBuilder,
    ExperimentConfig,
};
use lipquant::strategy::StrategyRegistry;
use lipquant::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_ASSERTION: u8 = 3;

#[derive(Parser)]
#[command(name = "lipquant", version, about = "Deterministic quantile bounds for Lipschitz functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep budgets and write one CSV row per budget.
    Run(ProblemArgs),
    /// Check the lower-bound constructions against the oracle.
    Adversary(AdversaryArgs),
    /// Print reference quantile and constant estimates for a problem.
    Oracle(ProblemArgs),
    /// List registered algorithms.
    Algorithms,
}

#[derive(Args)]
struct ProblemArgs {
    /// key = value configuration file; flags override it.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// Comma list or start:stop:step.
    #[arg(long)]
    budgets: Option<String>,
    #[arg(long)]
    lipschitz: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Oracle grid resolution per axis.
    #[arg(long)]
    resolution: Option<String>,
    #[arg(long)]
    max_level: Option<String>,
}

impl ProblemArgs {
    fn config(&self) -> lipquant::Result<ExperimentConfig> {
        let mut b = ConfigBuilder::new();
        if let Some(path) = &self.config {
            b.read_file(path)?;
        }
        let flags = [
            ("problem", &self.problem),
            ("algo", &self.algo),
            ("alpha", &self.alpha),
            ("budgets", &self.budgets),
            ("lipschitz", &self.lipschitz),
            ("out", &self.out),
            ("seed", &self.seed),
            ("resolution", &self.resolution),
            ("max_level", &self.max_level),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                b.set(key, v, 0)?;
            }
        }
        b.build()
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Placement {
    Targeted,
    Random,
}

#[derive(Args)]
struct AdversaryArgs {
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Query counts, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    ns: Vec<usize>,
    #[arg(long, value_enum, default_value_t = Placement::Targeted)]
    placement: Placement,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    resolution: Option<usize>,
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config { .. } | Error::UnknownName { .. } | Error::InvalidArgument(_) | Error::Expression(_) | Error::Io(_)
    )
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.12}"))
}

fn cmd_run(args: &ProblemArgs) -> anyhow::Result<ExitCode> {
    let cfg = match args.config() {
        Ok(c) => c,
        Err(e) => return Ok(config_failure(&e)),
    };
    let report = match run_experiment_with(&cfg, &StrategyRegistry::with_builtins()) {
        Ok(r) => r,
        Err(e) if is_config_error(&e) => return Ok(config_failure(&e)),
        Err(e) => return Err(e.into()),
    };
    match &cfg.out {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(&report.rows, BufWriter::new(f))?;
        }
        None => write_csv(&report.rows, io::stdout().lock())?,
    }
    let mut err = io::stderr().lock();
    writeln!(err, "problem {} (d={}), algorithm {}", report.problem, report.dim, report.algorithm)?;
    writeln!(err, "reference quantile {}", fmt_opt(report.true_q))?;
    if let Some(c) = report.constants {
        writeln!(err, "bound constants L={:.4} M={:.4}", c.lipschitz, c.level_set)?;
    }
    match &report.fit {
        Ok(fit) => {
            write!(err, "slope {:.4} (R² {:.3}, {} rows", fit.slope, fit.r2, fit.used)?;
            if fit.excluded_zero + fit.excluded_saturated > 0 {
                write!(err, ", excluded {} zero-error and {} depth-capped", fit.excluded_zero, fit.excluded_saturated)?;
            }
            writeln!(err, ")")?;
            if let Some(rho) = fit.rho() {
                writeln!(err, "rho {rho:.4}")?;
            }
        }
        Err(m) => writeln!(err, "no slope fit: {m}")?,
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_adversary(args: &AdversaryArgs) -> anyhow::Result<ExitCode> {
    let placement = match args.placement {
        Placement::Targeted => QueryPlacement::Targeted,
        Placement::Random => QueryPlacement::Random { seed: args.seed },
    };
    let resolution = args.resolution.unwrap_or_else(|| adversary_resolution(args.dim));
    let reports = match adversary_report(args.dim, &args.ns, placement, resolution) {
        Ok(r) => r,
        Err(e) if is_config_error(&e) => return Ok(config_failure(&e)),
        Err(e) => return Err(e.into()),
    };
    let mut out = io::stdout().lock();
    writeln!(out, "{:>4}  {:>14}  {:>14}  {:>10}  result", "N", "claimed_gap", "measured_gap", "residual")?;
    for r in &reports {
        let verdict = if r.pass { "pass" } else { "FAIL" };
        writeln!(out, "{:>4}  {:>14.6e}  {:>14.6e}  {:>10.1e}  {verdict}", r.n, r.claimed_gap, r.measured_gap, r.max_residual)?;
    }
    Ok(if reports.iter().all(|r| r.pass) { ExitCode::SUCCESS } else { ExitCode::from(EXIT_ASSERTION) })
}

fn cmd_oracle(args: &ProblemArgs) -> anyhow::Result<ExitCode> {
    let s = match args.config().and_then(|c| oracle_summary(&c)) {
        Ok(s) => s,
        Err(e) if is_config_error(&e) => return Ok(config_failure(&e)),
        Err(e) => return Err(e.into()),
    };
    let mut out = io::stdout().lock();
    writeln!(out, "problem            {}", s.problem)?;
    writeln!(out, "dim                {}", s.dim)?;
    writeln!(out, "alpha              {}", s.alpha)?;
    writeln!(out, "quantile           {}", fmt_opt(s.reference))?;
    writeln!(out, "closed form        {}", fmt_opt(s.closed_form))?;
    writeln!(out, "lipschitz          {}", s.lipschitz)?;
    writeln!(out, "lipschitz sampled  {:.6}", s.lipschitz_sampled)?;
    writeln!(out, "level-set M        {}", s.level_set.map_or_else(|| "-".into(), |m| format!("{m:.6}")))?;
    Ok(ExitCode::SUCCESS)
}

fn config_failure(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_CONFIG)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Adversary(a) => cmd_adversary(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Algorithms => {
            let reg = StrategyRegistry::with_builtins();
            for name in reg.names() {
                let s = reg.get(name).expect("listed name");
                println!("{name:<12} {}", s.description());
            }
            Ok(ExitCode::SUCCESS)
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
