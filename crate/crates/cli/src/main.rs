mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lobsim_core::dist::ArrivalConfig;
use lobsim_core::sim::TimeMode;

use config::{RuleKind, RunConfig};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "lobsim", version, about = "Limit order book simulator with threshold and recurrence analytics")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand. Each flag overrides the config file.
#[derive(Args, Debug, Default)]
struct Common {
    /// TOML or JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// `uniform`, or a TOML/JSON file holding an arrival law.
    #[arg(long, global = true)]
    dist: Option<String>,
    #[arg(long, global = true, value_enum)]
    rule: Option<RuleKind>,
    /// Number of arrivals.
    #[arg(long = "n", global = true)]
    n_events: Option<u64>,
    #[arg(long, global = true)]
    bins: Option<usize>,
    /// Run a single seed.
    #[arg(long, global = true, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Run seeds 1..=N.
    #[arg(long, global = true)]
    seeds: Option<u64>,
    #[arg(long, global = true)]
    record_every: Option<u64>,
    #[arg(long, global = true)]
    burn_in: Option<f64>,
    #[arg(long, global = true, value_enum)]
    time_mode: Option<Clock>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Threshold on ℒ for the conditional drift.
    #[arg(long, global = true)]
    k: Option<f64>,
    #[arg(long, global = true)]
    x: Option<f64>,
    #[arg(long, global = true)]
    y: Option<f64>,
    #[arg(long, global = true)]
    k_b: Option<usize>,
    #[arg(long, global = true)]
    k_a: Option<usize>,
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    /// Lower bound on F_b(κ_b) for the shooting scan.
    #[arg(long, global = true)]
    lower_fb: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Clock {
    EventCount,
    Poisson,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the book and write checkpoint, occupation, joint and top-shape CSVs.
    Simulate,
    /// Threshold prices by Monte Carlo, shooting or the closed form.
    Kappa {
        #[arg(long, value_enum, default_value = "exact")]
        mode: KappaMode,
        /// Run every applicable mode and compare.
        #[arg(long)]
        compare: bool,
    },
    /// Best-price densities from the boundary value problem.
    Ode,
    /// Binned occupation measures, solved and simulated.
    Pi,
    /// Run a property suite; exits 4 when a gating check fails.
    Check {
        #[arg(long, value_enum)]
        suite: Suite,
    },
    /// Drift certificate, level-set fixture and 5-bin simulation.
    Lyapunov,
    /// Three-bin lower bound on F_b(κ_b).
    Bound3,
    /// Coupled-run experiments.
    Couple {
        #[arg(long, value_enum, default_value = "perturbation")]
        experiment: Experiment,
    },
    /// Running max of the mid-region order count.
    Runmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KappaMode {
    Mc,
    Ode,
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Coupling,
    Lyapunov,
    Bounds,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Perturbation,
    Sandwich,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        match self.dist.as_deref() {
            None => {}
            Some("uniform") => c.arrivals = ArrivalConfig { p_bid: c.arrivals.p_bid, ..RunConfig::default().arrivals },
            Some(path) => c.arrivals = RunConfig::load_arrivals(path.as_ref())?,
        }
        macro_rules! set {
            ($($f:ident => $g:ident),*) => {$(if let Some(v) = self.$f.clone() { c.$g = v; })*};
        }
        set!(rule => rule, n_events => n_events, bins => bins, record_every => record_every, burn_in => burn_in, eps => eps, k => k,
            x => x, y => y, k_b => k_b, k_a => k_a, tolerance => tolerance, grid_n => grid_n);
        if let Some(s) = self.seed {
            c.seeds = vec![s];
        }
        if let Some(n) = self.seeds {
            c.seeds = (1..=n).collect();
        }
        if let Some(m) = self.time_mode {
            c.time_mode = match m {
                Clock::EventCount => TimeMode::EventCount,
                Clock::Poisson => TimeMode::Poisson,
            };
        }
        if self.lower_fb.is_some() {
            c.lower_fb = self.lower_fb;
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = cli.common.resolve()?;
    let out = &cli.common.out;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, out),
        Command::Kappa { mode, compare } => commands::kappa(&cfg, out, mode, compare),
        Command::Ode => commands::ode(&cfg, out),
        Command::Pi => commands::pi(&cfg, out),
        Command::Check { suite } => commands::check(&cfg, out, suite),
        Command::Lyapunov => commands::lyapunov(&cfg, out),
        Command::Bound3 => commands::bound3(&cfg, out),
        Command::Couple { experiment } => commands::couple(&cfg, out, experiment),
        Command::Runmax => commands::runmax(&cfg, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lobsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
