use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ncgw_cli::commands::{self, EvolveOptions};
use ncgw_cli::config::{Overrides, RunConfig};
use ncgw_core::tdse::Scheme;

#[derive(Parser)]
#[command(name = "ncgw", version, about = "Invariant, coherent-state and uncertainty checks for a gravitational well in noncommutative phase space")]
struct Cli {
    /// JSON run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for random test packets.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Grid points per axis.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Time origin tau of the packet.
    #[arg(long, global = true, allow_hyphen_values = true)]
    tau: Option<f64>,
    /// Number of time samples.
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Operator-algebra, invariance and ladder checks; lists paper mismatches.
    Validate,
    /// Closed-form invariant coefficients to coeffs.csv.
    Coeffs,
    /// Dumps Psi (or Phi_lambda) on the grid.
    State {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        t: f64,
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<f64>,
    },
    /// Expectation values in both modes to expectations.csv.
    Expect,
    /// Uncertainty product trace and minima.
    Uncertainty,
    /// Time-dependent Schrodinger propagation.
    Evolve(EvolveArgs),
    /// Full discrepancy report.
    Report {
        /// Skip the propagation checks.
        #[arg(long)]
        fast: bool,
    },
    /// Every artifact plus the golden-fixture regression.
    Pipeline {
        #[arg(long)]
        fast: bool,
    },
}

#[derive(Args)]
struct EvolveArgs {
    /// Final time; defaults to one period.
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, value_enum, default_value = "split")]
    scheme: SchemeArg,
    /// Write a wavefunction dump every N steps.
    #[arg(long)]
    dump_every: Option<usize>,
    /// Start from Phi_lambda instead of a random Gaussian mixture.
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SchemeArg {
    Split,
    CrankNicolson,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ov = Overrides { out: cli.out.clone(), grid: cli.grid, tau: cli.tau, samples: cli.samples };
    let result = RunConfig::load(cli.config.as_deref(), &ov).and_then(|cfg| match cli.command {
        Command::Validate => commands::validate(&cfg),
        Command::Coeffs => commands::coeffs(&cfg),
        Command::State { t, lambda } => commands::state(&cfg, t, lambda),
        Command::Expect => commands::expect(&cfg),
        Command::Uncertainty => commands::uncertainty(&cfg),
        Command::Evolve(a) => {
            let scheme = match a.scheme {
                SchemeArg::Split => Scheme::SplitOperator4way,
                SchemeArg::CrankNicolson => Scheme::CrankNicolson,
            };
            let opts = EvolveOptions { t_end: a.t_end, dt: a.dt, scheme, dump_every: a.dump_every, lambda: a.lambda, seed: cli.seed };
            commands::evolve(&cfg, &opts)
        }
        Command::Report { fast } => commands::report(&cfg, fast, cli.seed),
        Command::Pipeline { fast } => commands::pipeline(&cfg, fast, cli.seed),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ncgw: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
