//! Iterative instrumental-variable estimators for continuous-time transfer
//! functions `B(p)/A(p)` with `A(0) = 1`.
//!
//! [`srivc`] prefilters the sampled input through an assumed hold;
//! [`srivc_c`] instead evaluates every input-side quantity exactly from the
//! known continuous-time multisine. Both filter the sampled output through a
//! hold.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lti::{Hold, Realization, TransferFunction};
use crate::polynomial::Polynomial;
use crate::signals::{Multisine, SampledSignal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModelOrder {
    /// Denominator degree.
    pub n: usize,
    /// Numerator degree.
    pub m: usize,
}

impl ModelOrder {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n == 0 || m > n {
            return Err(Error::InvalidOrder(format!("need n >= 1 and n >= m, got n = {n}, m = {m}")));
        }
        Ok(Self { n, m })
    }

    pub fn num_params(&self) -> usize {
        self.n + self.m + 1
    }
}

impl fmt::Display for ModelOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(n = {}, m = {})", self.n, self.m)
    }
}

/// `[a_1, ..., a_n, b_0, ..., b_m]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaVector {
    order: ModelOrder,
    values: Vec<f64>,
}

impl ThetaVector {
    pub fn new(order: ModelOrder, values: Vec<f64>) -> Result<Self> {
        if values.len() != order.num_params() {
            return Err(Error::DimensionMismatch(format!(
                "theta has {} entries, order {order} needs {}",
                values.len(),
                order.num_params()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("theta entries must be finite".into()));
        }
        Ok(Self { order, values })
    }

    /// Packs `A` (rescaled to `A(0) = 1`) and `B` into a parameter vector.
    pub fn from_polynomials(order: ModelOrder, den: &Polynomial, num: &Polynomial) -> Result<Self> {
        if den.degree() > order.n || (!num.is_zero() && num.degree() > order.m) {
            return Err(Error::DimensionMismatch(format!(
                "polynomials of degree ({}, {}) exceed order {order}",
                den.degree(),
                num.degree()
            )));
        }
        let c0 = den.constant();
        if c0.abs() < 1e-12 {
            return Err(Error::ZeroConstantTerm);
        }
        let mut values: Vec<f64> = den.padded(order.n + 1)[1..].iter().map(|a| a / c0).collect();
        values.extend(num.padded(order.m + 1).iter().map(|b| b / c0));
        Self::new(order, values)
    }

    pub fn order(&self) -> ModelOrder {
        self.order
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn a(&self) -> &[f64] {
        &self.values[..self.order.n]
    }

    pub fn b(&self) -> &[f64] {
        &self.values[self.order.n..]
    }

    /// `A(p) = 1 + a_1 p + ... + a_n p^n`.
    pub fn den(&self) -> Polynomial {
        let mut c = vec![1.0];
        c.extend_from_slice(self.a());
        Polynomial::from_coeffs(&c)
    }

    pub fn num(&self) -> Polynomial {
        Polynomial::from_coeffs(self.b())
    }

    pub fn model(&self) -> Result<TransferFunction> {
        TransferFunction::new(self.num(), self.den())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_error(&self, other: &ThetaVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl fmt::Display for ThetaVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "]")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Srivc,
    SrivcC,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Srivc => "srivc",
            EstimatorKind::SrivcC => "srivc-c",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "srivc" => Ok(EstimatorKind::Srivc),
            "srivc-c" | "srivcc" | "srivc_c" => Ok(EstimatorKind::SrivcC),
            other => Err(Error::Parse(format!("unknown estimator '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorConfig {
    /// Stop once `|theta_{j+1} - theta_j| / |theta_j|` drops below this.
    pub epsilon: f64,
    pub max_iter: usize,
    /// Intersample assumption for the input (SRIVC only).
    pub input_hold: Hold,
    pub output_hold: Hold,
    pub condition_limit: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            max_iter: 50,
            input_hold: Hold::Foh,
            output_hold: Hold::Foh,
            condition_limit: 1e12,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("epsilon {} must be positive", self.epsilon)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.condition_limit > 1.0) {
            return Err(Error::InvalidConfig("condition_limit must exceed 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub index: usize,
    pub theta: ThetaVector,
    pub relative_step: f64,
    pub reflected: bool,
    pub condition_estimate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimationResult {
    pub theta: ThetaVector,
    pub converged: bool,
    pub iterations: Vec<IterationRecord>,
    pub final_model: TransferFunction,
}

impl EstimationResult {
    pub fn iteration_count(&self) -> usize {
        self.iterations.len()
    }
}

fn monomials(range: std::ops::RangeInclusive<usize>) -> Vec<Polynomial> {
    range.map(|i| Polynomial::monomial(i, 1.0)).collect()
}

fn check_stable(aj: &Polynomial) -> Result<()> {
    if aj.degree() == 0 || aj.is_stable()? {
        Ok(())
    } else {
        Err(Error::UnstableFilter)
    }
}

fn check_pair(u: &SampledSignal, y: &SampledSignal) -> Result<()> {
    if u.times() != y.times() {
        return Err(Error::DimensionMismatch("input and output must share time stamps".into()));
    }
    Ok(())
}

fn columns_to_matrix(cols: Vec<Vec<f64>>, rows: usize) -> DMatrix<f64> {
    let ncols = cols.len();
    let mut data = Vec::with_capacity(rows * ncols);
    for c in cols {
        debug_assert_eq!(c.len(), rows);
        data.extend(c);
    }
    DMatrix::from_vec(rows, ncols, data)
}

/// Hold-filtered output quantities: `y_f = y / A` and the regressor columns
/// `-p^i y / A`, `i = 1..n`.
fn output_side(aj: &Polynomial, y: &SampledSignal, n: usize, hold: Hold) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let real = Realization::new(aj, &monomials(0..=n))?;
    let mut cols = real.discretize_grid(y.times(), hold, false)?.run(y.values());
    let yf = cols.remove(0);
    for c in cols.iter_mut() {
        c.iter_mut().for_each(|v| *v = -*v);
    }
    Ok((yf, cols))
}

/// Hold-filtered `p^i u / A`, `i = 0..m`.
fn input_columns_hold(aj: &Polynomial, u: &SampledSignal, m: usize, hold: Hold) -> Result<Vec<Vec<f64>>> {
    let real = Realization::new(aj, &monomials(0..=m))?;
    Ok(real.discretize_grid(u.times(), hold, false)?.run(u.values()))
}

/// Hold-filtered `-p^i B u / A^2`, `i = 1..n`, as one cascade filter each.
fn instrument_columns_hold(aj: &Polynomial, bj: &Polynomial, u: &SampledSignal, n: usize, hold: Hold) -> Result<Vec<Vec<f64>>> {
    let a2 = aj * aj;
    let nums: Vec<Polynomial> = (1..=n).map(|i| (-bj).shifted(i)).collect();
    let real = Realization::new(&a2, &nums)?;
    Ok(real.discretize_grid(u.times(), hold, false)?.run(u.values()))
}

fn exact_column(u_ct: &Multisine, times: &[f64], h: impl Fn(Complex64) -> Complex64) -> Vec<f64> {
    u_ct.apply_response(h).sample(times)
}

/// Exact `p^i u / A` at the sample times, `i = 0..m`.
fn input_columns_exact(aj: &Polynomial, u_ct: &Multisine, times: &[f64], m: usize) -> Vec<Vec<f64>> {
    (0..=m)
        .map(|i| exact_column(u_ct, times, |s| s.powu(i as u32) / aj.eval_at(s)))
        .collect()
}

/// Exact `-p^i B u / A^2` at the sample times, `i = 1..n`.
fn instrument_columns_exact(aj: &Polynomial, bj: &Polynomial, u_ct: &Multisine, times: &[f64], n: usize) -> Vec<Vec<f64>> {
    (1..=n)
        .map(|i| {
            exact_column(u_ct, times, |s| {
                let a = aj.eval_at(s);
                -s.powu(i as u32) * bj.eval_at(s) / (a * a)
            })
        })
        .collect()
}

fn check_excitation_poles(aj: &Polynomial, u_ct: &Multisine) -> Result<()> {
    let mut freqs: Vec<f64> = u_ct.components().iter().map(|c| c.frequency).collect();
    if u_ct.offset() != 0.0 {
        freqs.push(0.0);
    }
    for w in freqs {
        if aj.eval_at(Complex64::new(0.0, w)).norm() < 1e-300 {
            return Err(Error::PoleOnGrid { re: 0.0, im: w });
        }
    }
    Ok(())
}

/// Rows `[-(p/A) y, ..., -(p^n/A) y, (1/A) u, ..., (p^m/A) u]` with hold-based
/// filtering of both signals.
pub fn build_regressor_srivc(
    aj: &Polynomial,
    u: &SampledSignal,
    y: &SampledSignal,
    order: ModelOrder,
    cfg: &EstimatorConfig,
) -> Result<DMatrix<f64>> {
    check_pair(u, y)?;
    check_stable(aj)?;
    let (_, mut cols) = output_side(aj, y, order.n, cfg.output_hold)?;
    cols.extend(input_columns_hold(aj, u, order.m, cfg.input_hold)?);
    Ok(columns_to_matrix(cols, y.len()))
}

/// Rows `[-(p B/A^2) u, ..., -(p^n B/A^2) u, (1/A) u, ..., (p^m/A) u]`, all
/// hold-based.
pub fn build_instrument_srivc(
    aj: &Polynomial,
    bj: &Polynomial,
    u: &SampledSignal,
    order: ModelOrder,
    cfg: &EstimatorConfig,
) -> Result<DMatrix<f64>> {
    check_stable(aj)?;
    let mut cols = instrument_columns_hold(aj, bj, u, order.n, cfg.input_hold)?;
    cols.extend(input_columns_hold(aj, u, order.m, cfg.input_hold)?);
    Ok(columns_to_matrix(cols, u.len()))
}

/// As [`build_regressor_srivc`], but the input columns are exact samples of
/// the filtered continuous-time multisine.
pub fn build_regressor_srivc_c(
    aj: &Polynomial,
    u_ct: &Multisine,
    y: &SampledSignal,
    order: ModelOrder,
    cfg: &EstimatorConfig,
) -> Result<DMatrix<f64>> {
    check_stable(aj)?;
    check_excitation_poles(aj, u_ct)?;
    let (_, mut cols) = output_side(aj, y, order.n, cfg.output_hold)?;
    cols.extend(input_columns_exact(aj, u_ct, y.times(), order.m));
    Ok(columns_to_matrix(cols, y.len()))
}

/// Exact instrument matrix; depends only on the input and the time stamps.
pub fn build_instrument_srivc_c(
    aj: &Polynomial,
    bj: &Polynomial,
    u_ct: &Multisine,
    times: &[f64],
    order: ModelOrder,
) -> Result<DMatrix<f64>> {
    check_stable(aj)?;
    check_excitation_poles(aj, u_ct)?;
    let mut cols = instrument_columns_exact(aj, bj, u_ct, times, order.n);
    cols.extend(input_columns_exact(aj, u_ct, times, order.m));
    Ok(columns_to_matrix(cols, times.len()))
}

/// `y_f = (1/A) y` with the configured output hold.
pub fn filtered_output(aj: &Polynomial, y: &SampledSignal, cfg: &EstimatorConfig) -> Result<Vec<f64>> {
    check_stable(aj)?;
    Ok(output_side(aj, y, 0, cfg.output_hold)?.0)
}

/// Ratio of extreme singular values; infinite for a singular matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    let min = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min == 0.0 || !min.is_finite() || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// One IV update: solves `(sum phi_hat phi^T) theta = sum phi_hat y_f`.
/// Returns the new parameters and the condition estimate of the normal matrix.
pub fn iv_step(
    phi_hat: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    y_f: &[f64],
    condition_limit: f64,
) -> Result<(Vec<f64>, f64)> {
    let (rows, d) = phi.shape();
    if phi_hat.shape() != (rows, d) || y_f.len() != rows {
        return Err(Error::DimensionMismatch(format!(
            "phi is {rows}x{d}, phi_hat is {:?}, y_f has {} entries",
            phi_hat.shape(),
            y_f.len()
        )));
    }
    if rows < d {
        return Err(Error::DimensionMismatch(format!("{rows} samples for {d} parameters")));
    }
    let normal = phi_hat.tr_mul(phi);
    let rhs = phi_hat.tr_mul(&DVector::from_column_slice(y_f));
    let condition = condition_number(&normal);
    if !(condition <= condition_limit) {
        return Err(Error::NearSingularNormalMatrix { condition });
    }
    let sol = normal
        .full_piv_lu()
        .solve(&rhs)
        .ok_or(Error::NearSingularNormalMatrix { condition })?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::NearSingularNormalMatrix { condition });
    }
    Ok((sol.iter().copied().collect(), condition))
}

/// Reflects unstable poles of the model denominator; returns whether any
/// reflection happened.
fn stabilize(theta: ThetaVector) -> Result<(ThetaVector, bool)> {
    let den = theta.den();
    if den.degree() == 0 || den.is_stable()? {
        return Ok((theta, false));
    }
    let reflected = den.reflect_unstable()?;
    let order = theta.order();
    let mut values = reflected.padded(order.n + 1)[1..].to_vec();
    values.extend_from_slice(theta.b());
    Ok((ThetaVector::new(order, values)?, true))
}

/// State-variable-filter least squares: filters both signals through
/// `p^i / (1 + p/w_c)^n` and regresses the filtered output on the filtered
/// derivatives, then reflects any unstable poles.
///
/// `cutoff` defaults to `pi / (10 h)` with `h` the mean sampling gap.
pub fn initialize(
    u: &SampledSignal,
    y: &SampledSignal,
    order: ModelOrder,
    cutoff: Option<f64>,
    cfg: &EstimatorConfig,
) -> Result<ThetaVector> {
    check_pair(u, y)?;
    let d = order.num_params();
    let len = y.len();
    if len < 5 * d {
        return Err(Error::DimensionMismatch(format!("initialization needs at least {} samples, got {len}", 5 * d)));
    }
    let mean_gap = (y.times()[len - 1] - y.times()[0]) / (len - 1) as f64;
    let wc = cutoff.unwrap_or(std::f64::consts::PI / (10.0 * mean_gap));
    if !(wc > 0.0 && wc.is_finite()) {
        return Err(Error::InvalidConfig(format!("SVF cutoff {wc} must be positive")));
    }
    let lag = Polynomial::from_coeffs(&[1.0, 1.0 / wc]);
    let svf = (0..order.n).fold(Polynomial::one(), |acc, _| &acc * &lag);

    if y.values().iter().all(|&v| v == 0.0) {
        // Nothing to regress on: keep the filter poles, zero gain.
        return ThetaVector::from_polynomials(order, &svf, &Polynomial::zero());
    }

    let (yf, mut cols) = output_side(&svf, y, order.n, cfg.output_hold)?;
    cols.extend(input_columns_hold(&svf, u, order.m, cfg.input_hold)?);
    let phi = columns_to_matrix(cols, len);
    let svd = phi.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let smin = svd.singular_values.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let condition = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
    if !(condition <= cfg.condition_limit) {
        return Err(Error::SingularRegression { condition });
    }
    let sol = svd
        .solve(&DVector::from_vec(yf), 0.0)
        .map_err(|e| Error::IllConditioned(e.to_string()))?;
    let theta = ThetaVector::new(order, sol.iter().copied().collect())?;
    Ok(stabilize(theta)?.0)
}

/// Shared iteration loop; `prefilter` returns `(phi_hat, phi, y_f)` for the
/// current model.
fn iterate(
    theta1: &ThetaVector,
    cfg: &EstimatorConfig,
    mut prefilter: impl FnMut(&Polynomial, &Polynomial) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<f64>)>,
) -> Result<EstimationResult> {
    cfg.validate()?;
    let order = theta1.order();
    let (mut theta, _) = stabilize(theta1.clone())?;
    let mut iterations = Vec::new();
    let mut converged = false;
    for index in 1..=cfg.max_iter {
        let (aj, bj) = (theta.den(), theta.num());
        let (phi_hat, phi, yf) = prefilter(&aj, &bj)?;
        let (next, condition_estimate) = iv_step(&phi_hat, &phi, &yf, cfg.condition_limit)?;
        let (next, reflected) = stabilize(ThetaVector::new(order, next)?)?;
        let diff = next
            .values()
            .iter()
            .zip(theta.values())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let relative_step = diff / theta.norm().max(f64::MIN_POSITIVE);
        iterations.push(IterationRecord {
            index,
            theta: next.clone(),
            relative_step,
            reflected,
            condition_estimate,
        });
        theta = next;
        if relative_step < cfg.epsilon {
            converged = true;
            break;
        }
    }
    let final_model = theta.model()?;
    Ok(EstimationResult {
        theta,
        converged,
        iterations,
        final_model,
    })
}

/// Classical SRIVC: input and output prefiltered through hold assumptions.
pub fn srivc(
    u: &SampledSignal,
    y: &SampledSignal,
    theta1: &ThetaVector,
    cfg: &EstimatorConfig,
) -> Result<EstimationResult> {
    check_pair(u, y)?;
    let order = theta1.order();
    if y.len() < order.num_params() {
        return Err(Error::DimensionMismatch("fewer samples than parameters".into()));
    }
    let len = y.len();
    iterate(theta1, cfg, |aj, bj| {
        // Both banks share the denominator; with equal holds they also share
        // the discretization.
        let real = Realization::new(aj, &monomials(0..=order.n))?;
        let out_grid = real.discretize_grid(y.times(), cfg.output_hold, false)?;
        let mut phi_cols = out_grid.run(y.values());
        let yf = phi_cols.remove(0);
        phi_cols.iter_mut().flatten().for_each(|v| *v = -*v);
        let mut u_cols = if cfg.input_hold == cfg.output_hold {
            out_grid.run(u.values())
        } else {
            real.discretize_grid(u.times(), cfg.input_hold, false)?.run(u.values())
        };
        u_cols.truncate(order.m + 1);
        let mut hat_cols = instrument_columns_hold(aj, bj, u, order.n, cfg.input_hold)?;
        hat_cols.extend(u_cols.iter().cloned());
        phi_cols.extend(u_cols);
        Ok((columns_to_matrix(hat_cols, len), columns_to_matrix(phi_cols, len), yf))
    })
}

/// SRIVC-c: input-side regressors and all instruments evaluated exactly from
/// the continuous-time multisine.
pub fn srivc_c(
    u_ct: &Multisine,
    y: &SampledSignal,
    theta1: &ThetaVector,
    cfg: &EstimatorConfig,
) -> Result<EstimationResult> {
    let order = theta1.order();
    if y.len() < order.num_params() {
        return Err(Error::DimensionMismatch("fewer samples than parameters".into()));
    }
    let len = y.len();
    let times = y.times();
    iterate(theta1, cfg, |aj, bj| {
        check_excitation_poles(aj, u_ct)?;
        let (yf, mut phi_cols) = output_side(aj, y, order.n, cfg.output_hold)?;
        let u_cols = input_columns_exact(aj, u_ct, times, order.m);
        let mut hat_cols = instrument_columns_exact(aj, bj, u_ct, times, order.n);
        hat_cols.extend(u_cols.iter().cloned());
        phi_cols.extend(u_cols);
        Ok((columns_to_matrix(hat_cols, len), columns_to_matrix(phi_cols, len), yf))
    })
}
