mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::{EstimatorArgs, ScenarioArgs};

/// Continuous-time transfer function identification from sampled data with
/// the SRIVC and SRIVC-c instrumental variable estimators.
#[derive(Parser, Debug)]
#[command(name = "srivc", version)]
struct Cli {
    /// Worker threads for Monte Carlo runs and sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log progress and warnings to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a noisy sampled record of the system response to a multisine.
    Generate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Dataset CSV to write (`t,u,y`).
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Input definition file to write (default: `<output>.input.csv`).
        #[arg(long)]
        input_out: Option<PathBuf>,
    },
    /// Estimate a transfer function from a dataset.
    Estimate {
        /// Dataset CSV (`t,u,y`).
        #[arg(long)]
        data: PathBuf,
        /// Input definition file (default: `<data>.input.csv` when present).
        #[arg(long)]
        input_def: Option<PathBuf>,
        /// TOML config file; only its [estimator] section is used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        estimator: EstimatorArgs,
        /// Report file (default: `<data>.report.txt`).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run one of the reference Monte Carlo experiments.
    Reproduce {
        preset: Preset,
        /// TOML config file; [experiment] and [estimator] sections are used.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Monte Carlo runs per condition.
        #[arg(long)]
        runs: Option<usize>,
        /// Record lengths for fig1/fig2, comma separated.
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
        /// Master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Relative-step convergence tolerance.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Maximum number of IV iterations.
        #[arg(long)]
        max_iter: Option<usize>,
        /// Directory for the summary, plot and raw CSV files.
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
        /// Also write per-run estimates.
        #[arg(long)]
        raw: bool,
    },
    /// Numerical checks of the consistency conditions.
    Diagnose {
        kind: DiagnosticKind,
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Denominator degree n.
        #[arg(long)]
        order_n: Option<usize>,
        /// Numerator degree m.
        #[arg(long)]
        order_m: Option<usize>,
        /// Sampling periods for condsweep, comma separated.
        #[arg(long, value_delimiter = ',')]
        h_list: Option<Vec<f64>>,
        /// Independent noise seeds for psi.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// CSV file for the detailed result.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Preset {
    Fig1,
    Fig2,
    Table1,
    Fig3,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DiagnosticKind {
    Psi,
    Power,
    Phistar,
    Condsweep,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    NotConverged,
    Numerical(String),
    Diagnostic(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::NotConverged => 3,
            CliError::Numerical(_) => 4,
            CliError::Diagnostic(_) => 5,
        }
    }
}

impl From<srivc::Error> for CliError {
    fn from(e: srivc::Error) -> Self {
        use srivc::Error as E;
        match e {
            E::SingularRegression { .. }
            | E::NearSingularNormalMatrix { .. }
            | E::UnstableFilter
            | E::PoleOnGrid { .. }
            | E::IllConditioned(_)
            | E::ZeroConstantTerm
            | E::DegreeZero => CliError::Numerical(e.to_string()),
            E::AssumptionA3Violated(_) | E::ResonantGrid(_) => CliError::Diagnostic(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .init();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot configure {jobs} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Generate { scenario, output, input_out } => commands::generate(&scenario, output, input_out),
        Command::Estimate {
            data,
            input_def,
            config,
            estimator,
            report,
        } => commands::estimate(&data, input_def, config, &estimator, report),
        Command::Reproduce {
            preset,
            config,
            runs,
            n_list,
            seed,
            epsilon,
            max_iter,
            out_dir,
            raw,
        } => commands::reproduce(
            preset,
            commands::ReproduceOptions {
                config,
                runs,
                n_list,
                seed,
                epsilon,
                max_iter,
                out_dir,
                raw,
            },
        ),
        Command::Diagnose {
            kind,
            scenario,
            order_n,
            order_m,
            h_list,
            seeds,
            output,
        } => commands::diagnose(kind, &scenario, order_n, order_m, h_list, seeds, output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(m) | CliError::Numerical(m) | CliError::Diagnostic(m) => eprintln!("error: {m}"),
                CliError::NotConverged => eprintln!("warning: iteration limit reached before convergence"),
            }
            ExitCode::from(e.code())
        }
    }
}
