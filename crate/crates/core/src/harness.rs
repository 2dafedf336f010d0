//! Monte Carlo runner: repeated noisy experiments over a sweep of sampling
//! conditions, aggregated into per-parameter means and MSEs.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{initialize, srivc, srivc_c, EstimatorConfig, EstimatorKind, ModelOrder, ThetaVector};
use crate::lti::TransferFunction;
use crate::signals::{derive_seed, generate_dataset, GridKind, Multisine, NoiseModel, SamplingGrid};

/// The experimental variable swept across conditions.
#[derive(Clone, Debug, PartialEq)]
pub enum Sweep {
    /// Regular sampling at period `h`, varying the record length.
    SampleSizes { h: f64, sizes: Vec<usize> },
    /// Fixed record length, varying the regular sampling period.
    RegularPeriods { samples: usize, periods: Vec<f64> },
    /// Fixed record length, gaps uniform on `[h_lb, h_hb]`, varying `h_hb`.
    IrregularBounds { samples: usize, h_lb: f64, upper: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Condition {
    pub label: String,
    pub samples: usize,
    grid: GridTemplate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum GridTemplate {
    Regular(f64),
    Irregular(f64, f64),
}

impl Condition {
    fn grid(&self, seed: u64) -> Result<SamplingGrid> {
        let kind = match self.grid {
            GridTemplate::Regular(h) => GridKind::Regular { h },
            GridTemplate::Irregular(h_lb, h_hb) => GridKind::IrregularUniform { h_lb, h_hb, seed },
        };
        SamplingGrid::generate(kind, self.samples, 0.0)
    }
}

impl Sweep {
    /// Name of the swept quantity, used as the x-axis of plot exports.
    pub fn axis(&self) -> &'static str {
        match self {
            Sweep::SampleSizes { .. } => "N",
            Sweep::RegularPeriods { .. } => "h",
            Sweep::IrregularBounds { .. } => "h_hb",
        }
    }

    pub fn conditions(&self) -> Vec<Condition> {
        match self {
            Sweep::SampleSizes { h, sizes } => sizes
                .iter()
                .map(|&n| Condition {
                    label: format!("N={n}"),
                    samples: n,
                    grid: GridTemplate::Regular(*h),
                })
                .collect(),
            Sweep::RegularPeriods { samples, periods } => periods
                .iter()
                .map(|&h| Condition {
                    label: format!("h={h}"),
                    samples: *samples,
                    grid: GridTemplate::Regular(h),
                })
                .collect(),
            Sweep::IrregularBounds { samples, h_lb, upper } => upper
                .iter()
                .map(|&hb| Condition {
                    label: format!("h_hb={hb}"),
                    samples: *samples,
                    grid: GridTemplate::Irregular(*h_lb, hb),
                })
                .collect(),
        }
    }
}

/// Numeric value of a condition label such as `h=0.2`.
pub fn condition_value(label: &str) -> Option<f64> {
    label.split_once('=').and_then(|(_, v)| v.parse().ok())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub system: TransferFunction,
    pub input: Multisine,
    pub order: ModelOrder,
    pub noise_variance: f64,
    pub sweep: Sweep,
    pub runs: usize,
    pub master_seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub config: EstimatorConfig,
    /// SVF initialization cutoff; defaults to the highest excitation frequency.
    pub init_cutoff: Option<f64>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::SpecInvalid(msg.into())
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(invalid("runs must be at least 1"));
        }
        if self.estimators.is_empty() {
            return Err(invalid("no estimator selected"));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(invalid(format!("noise variance {} must be finite and >= 0", self.noise_variance)));
        }
        if self.system.den().degree() != self.order.n || self.system.num().degree() > self.order.m {
            return Err(invalid(format!(
                "system {}/{} does not match model order {}",
                self.system.num(),
                self.system.den(),
                self.order
            )));
        }
        if !self.system.is_stable()? {
            return Err(invalid("system must be stable"));
        }
        self.config.validate().map_err(|e| invalid(e.to_string()))?;
        let min_samples = 5 * self.order.num_params();
        let conditions = self.sweep.conditions();
        if conditions.is_empty() {
            return Err(invalid("sweep has no conditions"));
        }
        for c in &conditions {
            if c.samples < min_samples {
                return Err(invalid(format!("{}: need at least {min_samples} samples", c.label)));
            }
            match c.grid {
                GridTemplate::Regular(h) if !(h > 0.0 && h.is_finite()) => {
                    return Err(invalid(format!("{}: sampling period must be positive", c.label)));
                }
                GridTemplate::Irregular(lb, hb) if !(lb > 0.0 && hb >= lb && hb.is_finite()) => {
                    return Err(invalid(format!("{}: need 0 < h_lb <= h_hb", c.label)));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn true_theta(&self) -> Result<ThetaVector> {
        ThetaVector::from_polynomials(self.order, self.system.den(), self.system.num())
    }
}

/// Outcome of one estimator on one simulated data record.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub condition: usize,
    pub run: usize,
    pub estimator: EstimatorKind,
    pub outcome: std::result::Result<RunEstimate, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunEstimate {
    pub theta: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub estimator: String,
    pub condition: String,
    pub param: String,
    pub true_value: f64,
    pub mean: f64,
    pub mse: f64,
    pub std: f64,
    pub runs: usize,
    pub divergences: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MonteCarloSummary {
    pub rows: Vec<SummaryRow>,
}

impl MonteCarloSummary {
    pub fn get(&self, estimator: EstimatorKind, condition: &str, param: &str) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator.name() && r.condition == condition && r.param == param)
    }

    /// Distinct condition labels in row order.
    pub fn conditions(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.condition) {
                out.push(r.condition.clone());
            }
        }
        out
    }

    pub fn params(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.param) {
                out.push(r.param.clone());
            }
        }
        out
    }

    pub fn estimators(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.estimator) {
                out.push(r.estimator.clone());
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub summary: MonteCarloSummary,
    pub records: Vec<RunRecord>,
    pub conditions: Vec<Condition>,
}

/// `a1..an, b0..bm`.
pub fn param_names(order: ModelOrder) -> Vec<String> {
    (1..=order.n)
        .map(|i| format!("a{i}"))
        .chain((0..=order.m).map(|i| format!("b{i}")))
        .collect()
}

fn run_cell(spec: &ExperimentSpec, condition: &Condition, c: usize, r: usize) -> Vec<RunRecord> {
    let seed = derive_seed(spec.master_seed, &[c as u64, r as u64]);
    let record = |estimator, outcome| RunRecord {
        condition: c,
        run: r,
        estimator,
        outcome,
    };
    let prepared = (|| {
        let grid = condition.grid(derive_seed(seed, &[1]))?;
        let noise = NoiseModel::new(spec.noise_variance, derive_seed(seed, &[0]))?;
        let data = generate_dataset(&spec.system, &spec.input, &grid, &noise)?;
        let u = data.sampled_input();
        let cutoff = spec.init_cutoff.or(spec.input.max_frequency());
        let theta1 = initialize(&u, &data.output, spec.order, cutoff, &spec.config)?;
        Ok::<_, Error>((data, u, theta1))
    })();
    let (data, u, theta1) = match prepared {
        Ok(p) => p,
        Err(e) => {
            return spec
                .estimators
                .iter()
                .map(|&k| record(k, Err(format!("initialization: {e}"))))
                .collect()
        }
    };
    spec.estimators
        .iter()
        .map(|&kind| {
            let result = match kind {
                EstimatorKind::Srivc => srivc(&u, &data.output, &theta1, &spec.config),
                EstimatorKind::SrivcC => srivc_c(&data.input, &data.output, &theta1, &spec.config),
            };
            let outcome = result
                .map(|res| RunEstimate {
                    theta: res.theta.values().to_vec(),
                    converged: res.converged,
                    iterations: res.iteration_count(),
                })
                .map_err(|e| e.to_string());
            record(kind, outcome)
        })
        .collect()
}

/// Runs every (condition, run) cell, in parallel on the current rayon pool,
/// and aggregates in a fixed order so results do not depend on scheduling.
pub fn run_experiment_detailed(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let truth = spec.true_theta()?;
    let conditions = spec.sweep.conditions();
    let cells: Vec<(usize, usize)> = (0..conditions.len())
        .flat_map(|c| (0..spec.runs).map(move |r| (c, r)))
        .collect();
    let records: Vec<RunRecord> = cells
        .par_iter()
        .flat_map_iter(|&(c, r)| run_cell(spec, &conditions[c], c, r))
        .collect();

    let names = param_names(spec.order);
    let mut rows = Vec::new();
    for &kind in &spec.estimators {
        for (c, condition) in conditions.iter().enumerate() {
            let estimates: Vec<&RunEstimate> = records
                .iter()
                .filter(|rec| rec.condition == c && rec.estimator == kind)
                .filter_map(|rec| rec.outcome.as_ref().ok())
                .collect();
            let nonconverged = estimates.iter().filter(|e| !e.converged).count();
            if nonconverged > 0 {
                log::info!("{kind} {}: {nonconverged} runs hit the iteration limit", condition.label);
            }
            let divergences = spec.runs - estimates.len();
            for (p, name) in names.iter().enumerate() {
                let t = truth.values()[p];
                let vals: Vec<f64> = estimates.iter().map(|e| e.theta[p]).collect();
                let (mean, mse, std) = moments(&vals, t);
                rows.push(SummaryRow {
                    estimator: kind.name().to_string(),
                    condition: condition.label.clone(),
                    param: name.clone(),
                    true_value: t,
                    mean,
                    mse,
                    std,
                    runs: vals.len(),
                    divergences,
                });
            }
        }
    }
    Ok(ExperimentOutput {
        summary: MonteCarloSummary { rows },
        records,
        conditions,
    })
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<MonteCarloSummary> {
    Ok(run_experiment_detailed(spec)?.summary)
}

/// Sample mean, MSE about `truth`, and unbiased standard deviation. Empty
/// input gives NaNs.
fn moments(vals: &[f64], truth: f64) -> (f64, f64, f64) {
    let n = vals.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = vals.iter().sum::<f64>() / n as f64;
    let mse = vals.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / n as f64;
    let std = if n > 1 {
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, mse, std)
}

/// `G(p) = 1.25 / (0.25 p^2 + 0.7 p + 1)`.
pub fn reference_system() -> TransferFunction {
    TransferFunction::from_coeffs(&[1.25], &[1.0, 0.7, 0.25]).expect("valid reference system")
}

/// `sin(0.714 t) + sin(1.428 t) + sin(2.142 t)`.
pub fn reference_input() -> Multisine {
    Multisine::sines(&[(1.0, 0.714), (1.0, 1.428), (1.0, 2.142)]).expect("valid reference input")
}

pub const DEFAULT_MASTER_SEED: u64 = 20_240_601;

/// Rounded log-spaced integers from `lo` to `hi`, duplicates removed.
pub fn log_spaced_sizes(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    if count <= 1 {
        return vec![lo];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<usize> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp().round() as usize)
        .collect();
    out.dedup();
    out
}

fn reference_spec(name: &str, sweep: Sweep) -> ExperimentSpec {
    ExperimentSpec {
        name: name.to_string(),
        system: reference_system(),
        input: reference_input(),
        order: ModelOrder { n: 2, m: 0 },
        noise_variance: 0.1,
        sweep,
        runs: 300,
        master_seed: DEFAULT_MASTER_SEED,
        estimators: vec![EstimatorKind::Srivc, EstimatorKind::SrivcC],
        config: EstimatorConfig::default(),
        init_cutoff: None,
    }
}

/// Record-length sweep at `h = 0.3`: 60 sizes from 100 to 25500.
pub fn preset_fig1_fig2() -> ExperimentSpec {
    reference_spec(
        "consistency",
        Sweep::SampleSizes {
            h: 0.3,
            sizes: log_spaced_sizes(100, 25_500, 60),
        },
    )
}

/// `N = 2000` at `h` in {0.06, 0.2, 0.6}.
pub fn preset_table1() -> ExperimentSpec {
    reference_spec(
        "sampling-period",
        Sweep::RegularPeriods {
            samples: 2000,
            periods: vec![0.06, 0.2, 0.6],
        },
    )
}

/// `N = 2000`, gaps uniform on `[0.05, h_hb]` with `h_hb` in {0.1, ..., 0.6}.
pub fn preset_fig3() -> ExperimentSpec {
    reference_spec(
        "irregular",
        Sweep::IrregularBounds {
            samples: 2000,
            h_lb: 0.05,
            upper: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
        },
    )
}

pub const SUMMARY_HEADER: &str = "estimator,condition,param,true_value,mean,mse,std,runs,divergences";

pub fn write_summary<W: Write>(summary: &MonteCarloSummary, mut w: W) -> Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for r in &summary.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.estimator, r.condition, r.param, r.true_value, r.mean, r.mse, r.std, r.runs, r.divergences
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_summary(summary: &MonteCarloSummary, path: &Path) -> Result<()> {
    write_summary(summary, BufWriter::new(fs::File::create(path)?))
}

pub fn parse_summary(text: &str) -> Result<MonteCarloSummary> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == SUMMARY_HEADER => {}
        other => return Err(Error::Parse(format!("unexpected summary header {other:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 9 {
            return Err(Error::Parse(format!("summary line {}: expected 9 fields", i + 2)));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse(format!("summary line {}: bad number '{s}'", i + 2)))
        };
        let count = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::Parse(format!("summary line {}: bad count '{s}'", i + 2)))
        };
        rows.push(SummaryRow {
            estimator: f[0].to_string(),
            condition: f[1].to_string(),
            param: f[2].to_string(),
            true_value: num(f[3])?,
            mean: num(f[4])?,
            mse: num(f[5])?,
            std: num(f[6])?,
            runs: count(f[7])?,
            divergences: count(f[8])?,
        });
    }
    Ok(MonteCarloSummary { rows })
}

pub fn read_summary(path: &Path) -> Result<MonteCarloSummary> {
    parse_summary(&fs::read_to_string(path)?)
}

/// One line per run and estimator: `condition,run,estimator,converged,iters,theta...`.
/// Failed runs have an empty `converged` field and the error in place of theta.
pub fn write_raw<W: Write>(output: &ExperimentOutput, order: ModelOrder, mut w: W) -> Result<()> {
    writeln!(w, "condition,run,estimator,converged,iters,{}", param_names(order).join(","))?;
    for rec in &output.records {
        let label = &output.conditions[rec.condition].label;
        match &rec.outcome {
            Ok(e) => {
                let theta: Vec<String> = e.theta.iter().map(|v| v.to_string()).collect();
                writeln!(w, "{label},{},{},{},{},{}", rec.run, rec.estimator, e.converged, e.iterations, theta.join(","))?;
            }
            Err(msg) => writeln!(w, "{label},{},{},,,\"{}\"", rec.run, rec.estimator, msg.replace('"', "'"))?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Wide table keyed by the swept quantity: one row per (x, estimator) with
/// `mean` and `mse` columns for every parameter.
pub fn write_plot<W: Write>(summary: &MonteCarloSummary, axis: &str, mut w: W) -> Result<()> {
    let params = summary.params();
    let mut header = format!("{axis},estimator");
    for p in &params {
        let _ = write!(header, ",{p}_mean,{p}_mse");
    }
    writeln!(w, "{header}")?;
    for est in summary.estimators() {
        for cond in summary.conditions() {
            let x = condition_value(&cond).map_or(cond.clone(), |v| v.to_string());
            let mut line = format!("{x},{est}");
            for p in &params {
                match summary.rows.iter().find(|r| r.estimator == est && r.condition == cond && &r.param == p) {
                    Some(r) => {
                        let _ = write!(line, ",{},{}", r.mean, r.mse);
                    }
                    None => line.push_str(",,"),
                }
            }
            writeln!(w, "{line}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width text table: one row per (estimator, parameter), one
/// `mean / MSE` column per condition.
pub fn format_table(summary: &MonteCarloSummary) -> String {
    let conditions = summary.conditions();
    let mut out = String::new();
    let _ = write!(out, "{:<9} {:<6} {:>7}", "estimator", "param", "true");
    for c in &conditions {
        let _ = write!(out, "  {c:>22}");
    }
    out.push('\n');
    for est in summary.estimators() {
        for p in summary.params() {
            let mut rows = summary.rows.iter().filter(|r| r.estimator == est && r.param == p);
            let Some(first) = rows.next() else { continue };
            let _ = write!(out, "{est:<9} {p:<6} {:>7.3}", first.true_value);
            for c in &conditions {
                match summary.rows.iter().find(|r| r.estimator == est && r.param == p && &r.condition == c) {
                    Some(r) => {
                        let _ = write!(out, "  {:>22}", format!("{:.3} / {:.1e}", r.mean, r.mse));
                    }
                    None => {
                        let _ = write!(out, "  {:>22}", "-");
                    }
                }
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ExperimentSpec {
        let mut spec = preset_table1();
        spec.runs = 4;
        spec.sweep = Sweep::RegularPeriods {
            samples: 300,
            periods: vec![0.2, 0.6],
        };
        spec
    }

    #[test]
    fn presets_match_reference_experiments() {
        let s = preset_fig1_fig2();
        let Sweep::SampleSizes { h, sizes } = &s.sweep else { panic!() };
        assert_eq!(*h, 0.3);
        assert_eq!(sizes.len(), 60);
        assert_eq!((sizes[0], sizes[59]), (100, 25_500));
        assert!(sizes.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s.runs, 300);

        let t = preset_table1();
        assert_eq!(t.sweep, Sweep::RegularPeriods { samples: 2000, periods: vec![0.06, 0.2, 0.6] });
        let f = preset_fig3();
        let Sweep::IrregularBounds { samples, h_lb, upper } = &f.sweep else { panic!() };
        assert_eq!((*samples, *h_lb, upper.len()), (2000, 0.05, 6));
        assert_eq!((upper[0], upper[5]), (0.1, 0.6));
        assert_eq!((t.runs, f.runs), (300, 300));
        for s in [s, t, f] {
            s.validate().unwrap();
            assert_eq!(s.noise_variance, 0.1);
            assert_eq!(s.true_theta().unwrap().values(), &[0.7, 0.25, 1.25]);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = small_spec();
        s.runs = 0;
        assert!(matches!(s.validate(), Err(Error::SpecInvalid(_))));
        let mut s = small_spec();
        s.order = ModelOrder { n: 3, m: 0 };
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.sweep = Sweep::IrregularBounds { samples: 100, h_lb: 0.3, upper: vec![0.1] };
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.estimators.clear();
        assert!(s.validate().is_err());
    }

    #[test]
    fn noiseless_single_run_recovers_truth() {
        let mut spec = small_spec();
        spec.runs = 1;
        spec.noise_variance = 0.0;
        spec.estimators = vec![EstimatorKind::SrivcC];
        spec.config.epsilon = 1e-12;
        let summary = run_experiment(&spec).unwrap();
        assert_eq!(summary.rows.len(), 6);
        for r in &summary.rows {
            assert!((r.mean - r.true_value).abs() < 1e-6, "{r:?}");
            assert!(r.mse < 1e-12);
            assert_eq!((r.runs, r.divergences), (1, 0));
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let spec = small_spec();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_experiment(&spec)).unwrap();
        let b = four.install(|| run_experiment(&spec)).unwrap();
        assert_eq!(a, b);
        let mut other = spec.clone();
        other.master_seed += 1;
        assert_ne!(a, run_experiment(&other).unwrap());
    }

    #[test]
    fn summary_invariants_and_round_trip() {
        let spec = small_spec();
        let out = run_experiment_detailed(&spec).unwrap();
        assert_eq!(out.summary.rows.len(), 2 * 2 * 3);
        for r in &out.summary.rows {
            assert!(r.mse >= (r.mean - r.true_value).powi(2) * (1.0 - 1e-12));
            assert!(r.divergences <= spec.runs);
        }
        let mut buf = Vec::new();
        write_summary(&out.summary, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(parse_summary(&text).unwrap(), out.summary);

        let mut raw = Vec::new();
        write_raw(&out, spec.order, &mut raw).unwrap();
        let raw = String::from_utf8(raw).unwrap();
        assert_eq!(raw.lines().count(), 1 + 2 * 4 * 2);
        assert!(raw.starts_with("condition,run,estimator,converged,iters,a1,a2,b0\n"));

        let mut plot = Vec::new();
        write_plot(&out.summary, spec.sweep.axis(), &mut plot).unwrap();
        let plot = String::from_utf8(plot).unwrap();
        assert!(plot.starts_with("h,estimator,a1_mean,a1_mse,a2_mean,a2_mse,b0_mean,b0_mse\n0.2,srivc,"));

        let table = format_table(&out.summary);
        assert_eq!(table.lines().count(), 1 + 6);
    }

    #[test]
    fn empty_summary_is_header_only() {
        let mut buf = Vec::new();
        write_summary(&MonteCarloSummary::default(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{SUMMARY_HEADER}\n"));
        assert_eq!(parse_summary(&format!("{SUMMARY_HEADER}\n")).unwrap(), MonteCarloSummary::default());
        assert!(parse_summary("bad header\n").is_err());
    }

    #[test]
    fn irregular_conditions_draw_distinct_grids() {
        let mut spec = preset_fig3();
        spec.runs = 2;
        spec.sweep = Sweep::IrregularBounds { samples: 200, h_lb: 0.05, upper: vec![0.3] };
        let out = run_experiment_detailed(&spec).unwrap();
        let thetas: Vec<&Vec<f64>> = out.records.iter().map(|r| &r.outcome.as_ref().unwrap().theta).collect();
        assert_ne!(thetas[0], thetas[2]);
    }

    #[test]
    fn log_spacing() {
        assert_eq!(log_spaced_sizes(100, 10_000, 3), vec![100, 1000, 10_000]);
        assert_eq!(log_spaced_sizes(10, 12, 10), vec![10, 11, 12]);
        assert_eq!(condition_value("h=0.06"), Some(0.06));
        assert_eq!(condition_value("N=25500"), Some(25500.0));
    }
}
