//! TOML experiment description merged with command-line overrides.
//!
//! ```toml
//! [system]            # ascending powers of p
//! num = [1.25]
//! den = [1.0, 0.7, 0.25]
//!
//! [input]
//! offset = 0.0
//! sines = [[1.0, 0.714], [1.0, 1.428], [1.0, 2.142]]   # amplitude, rad/s
//! # components = [[amp, freq, phase], ...]             # cosine form
//!
//! [grid]
//! samples = 2000
//! h = 0.3             # or h_lb / h_hb for uniform random gaps
//!
//! [noise]
//! variance = 0.1
//! seed = 1
//!
//! [estimator]
//! kind = "srivc-c"
//! n = 2
//! m = 0
//! epsilon = 1e-4
//! max_iter = 50
//!
//! [experiment]
//! runs = 300
//! seed = 20240601
//! sizes = [100, 1000, 10000]
//! periods = [0.06, 0.2, 0.6]
//! upper_bounds = [0.1, 0.3, 0.6]
//! ```

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;
use srivc::estimator::{EstimatorConfig, EstimatorKind, ModelOrder};
use srivc::harness::{reference_input, reference_system};
use srivc::lti::{Hold, TransferFunction};
use srivc::signals::{Component, GridKind, Multisine};

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub system: Option<SystemSection>,
    #[serde(default)]
    pub input: Option<InputSection>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    pub offset: Option<f64>,
    pub sines: Option<Vec<[f64; 2]>>,
    pub components: Option<Vec<[f64; 3]>>,
    /// Input definition file in the `offset,` / `amp,freq_rad_s,phase_rad` format.
    pub file: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub samples: Option<usize>,
    pub h: Option<f64>,
    pub h_lb: Option<f64>,
    pub h_hb: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub variance: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    pub kind: Option<String>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub epsilon: Option<f64>,
    pub max_iter: Option<usize>,
    pub input_hold: Option<String>,
    pub output_hold: Option<String>,
    pub condition_limit: Option<f64>,
    pub cutoff: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub sizes: Option<Vec<usize>>,
    pub periods: Option<Vec<f64>>,
    pub upper_bounds: Option<Vec<f64>>,
    pub h_lb: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// System, input, grid and noise flags shared by `generate` and `diagnose`.
#[derive(Args, Debug, Default, Clone)]
pub struct ScenarioArgs {
    /// TOML config file; flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of samples N.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Regular sampling period.
    #[arg(long, conflicts_with_all = ["h_lb", "h_hb"])]
    pub h: Option<f64>,
    /// Lower bound of uniformly distributed sampling gaps.
    #[arg(long, requires = "h_hb")]
    pub h_lb: Option<f64>,
    /// Upper bound of uniformly distributed sampling gaps.
    #[arg(long, requires = "h_lb")]
    pub h_hb: Option<f64>,
    /// Output noise variance.
    #[arg(long)]
    pub variance: Option<f64>,
    /// Random seed for noise and irregular grids.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Input definition file, replacing the config/default multisine.
    #[arg(long)]
    pub input_def: Option<PathBuf>,
}

/// Estimator selection and tuning flags.
#[derive(Args, Debug, Default, Clone)]
pub struct EstimatorArgs {
    /// srivc or srivc-c.
    #[arg(long)]
    pub estimator: Option<String>,
    /// Denominator degree n.
    #[arg(long)]
    pub order_n: Option<usize>,
    /// Numerator degree m.
    #[arg(long)]
    pub order_m: Option<usize>,
    /// Relative-step convergence tolerance.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Maximum number of IV iterations.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Input intersample assumption for srivc: zoh or foh.
    #[arg(long)]
    pub input_hold: Option<String>,
    /// Output intersample assumption: zoh or foh.
    #[arg(long)]
    pub output_hold: Option<String>,
    /// Largest accepted condition number of the normal matrix.
    #[arg(long)]
    pub condition_limit: Option<f64>,
    /// Cutoff (rad/s) of the state-variable filter used for initialization.
    #[arg(long)]
    pub cutoff: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub system: TransferFunction,
    pub input: Multisine,
    pub samples: Option<usize>,
    pub grid: Option<GridChoice>,
    pub variance: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridChoice {
    Regular(f64),
    Irregular(f64, f64),
}

impl GridChoice {
    pub fn kind(self, seed: u64) -> GridKind {
        match self {
            GridChoice::Regular(h) => GridKind::Regular { h },
            GridChoice::Irregular(h_lb, h_hb) => GridKind::IrregularUniform { h_lb, h_hb, seed },
        }
    }
}

pub const DEFAULT_SEED: u64 = 1;

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn input_from_section(sec: &InputSection) -> Result<Multisine, CliError> {
    if let Some(file) = &sec.file {
        return srivc::io::load_multisine(file).map_err(usage);
    }
    let offset = sec.offset.unwrap_or(0.0);
    let mut comps: Vec<Component> = Vec::new();
    if let Some(s) = &sec.sines {
        comps.extend(s.iter().map(|&[amplitude, frequency]| Component {
            amplitude,
            frequency,
            phase: -std::f64::consts::FRAC_PI_2,
        }));
    }
    if let Some(c) = &sec.components {
        comps.extend(c.iter().map(|&[amplitude, frequency, phase]| Component {
            amplitude,
            frequency,
            phase,
        }));
    }
    Multisine::new(offset, comps).map_err(usage)
}

impl Scenario {
    pub fn resolve(file: &FileConfig, args: &ScenarioArgs) -> Result<Self, CliError> {
        let system = match &file.system {
            Some(s) => TransferFunction::from_coeffs(&s.num, &s.den).map_err(usage)?,
            None => reference_system(),
        };
        let input = match (&args.input_def, &file.input) {
            (Some(path), _) => srivc::io::load_multisine(path).map_err(usage)?,
            (None, Some(sec)) => input_from_section(sec)?,
            (None, None) => reference_input(),
        };
        let grid = match (args.h, args.h_lb, args.h_hb) {
            (Some(h), _, _) => Some(GridChoice::Regular(h)),
            (None, Some(lb), Some(hb)) => Some(GridChoice::Irregular(lb, hb)),
            _ => match (file.grid.h, file.grid.h_lb, file.grid.h_hb) {
                (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                    return Err(usage("[grid] sets both h and irregular bounds"));
                }
                (Some(h), None, None) => Some(GridChoice::Regular(h)),
                (None, Some(lb), Some(hb)) => Some(GridChoice::Irregular(lb, hb)),
                (None, None, None) => None,
                _ => return Err(usage("[grid] needs both h_lb and h_hb")),
            },
        };
        Ok(Self {
            system,
            input,
            samples: args.samples.or(file.grid.samples),
            grid,
            variance: args.variance.or(file.noise.variance).unwrap_or(0.1),
            seed: args.seed.or(file.noise.seed).unwrap_or(DEFAULT_SEED),
        })
    }
}

fn parse_hold(s: &str) -> Result<Hold, CliError> {
    s.parse().map_err(|_| usage(format!("unknown hold '{s}' (expected zoh or foh)")))
}

#[derive(Debug, Clone)]
pub struct EstimatorChoice {
    pub kind: EstimatorKind,
    pub order: ModelOrder,
    pub config: EstimatorConfig,
    pub cutoff: Option<f64>,
}

impl EstimatorChoice {
    pub fn resolve(file: &FileConfig, args: &EstimatorArgs) -> Result<Self, CliError> {
        let sec = &file.estimator;
        let kind = match args.estimator.as_deref().or(sec.kind.as_deref()) {
            Some(s) => s.parse().map_err(usage)?,
            None => EstimatorKind::SrivcC,
        };
        let n = args.order_n.or(sec.n).unwrap_or(2);
        let m = args.order_m.or(sec.m).unwrap_or(0);
        let order = ModelOrder::new(n, m).map_err(usage)?;
        let mut config = EstimatorConfig::default();
        if let Some(v) = args.epsilon.or(sec.epsilon) {
            config.epsilon = v;
        }
        if let Some(v) = args.max_iter.or(sec.max_iter) {
            config.max_iter = v;
        }
        if let Some(v) = args.condition_limit.or(sec.condition_limit) {
            config.condition_limit = v;
        }
        if let Some(s) = args.input_hold.as_deref().or(sec.input_hold.as_deref()) {
            config.input_hold = parse_hold(s)?;
        }
        if let Some(s) = args.output_hold.as_deref().or(sec.output_hold.as_deref()) {
            config.output_hold = parse_hold(s)?;
        }
        config.validate().map_err(usage)?;
        Ok(Self {
            kind,
            order,
            config,
            cutoff: args.cutoff.or(sec.cutoff),
        })
    }
}
