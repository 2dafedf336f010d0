//! Numerical checks of the objects behind SRIVC-c consistency: the
//! input/noise cross moment, time-average power of filtered multisines, the
//! limiting instrument Gram matrix, and normal-matrix conditioning versus the
//! sampling period.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{
    build_instrument_srivc_c, build_regressor_srivc_c, condition_number, EstimatorConfig, ModelOrder, ThetaVector,
};
use crate::lti::{Hold, Realization, TransferFunction};
use crate::polynomial::Polynomial;
use crate::signals::{generate_dataset, GridKind, Multisine, NoiseModel, SamplingGrid};

/// `[d^{n+m} u, ..., d u, u]`: derivatives of a multisine in descending order.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeStack {
    base: Multisine,
    depth: usize,
}

impl DerivativeStack {
    pub fn new(base: Multisine, order: ModelOrder) -> Self {
        Self {
            base,
            depth: order.num_params(),
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn base(&self) -> &Multisine {
        &self.base
    }

    /// Entry `i` is the derivative of order `depth - 1 - i`.
    pub fn entry(&self, i: usize) -> Multisine {
        assert!(i < self.depth, "stack index {i} out of range");
        self.base.derivative((self.depth - 1 - i) as u32)
    }

    /// Every entry passed through `1 / den`, exactly. `den` must be stable.
    pub fn filtered(&self, den: &Polynomial) -> Result<Vec<Multisine>> {
        check_stable_den(den)?;
        check_no_excitation_pole(den, &self.base)?;
        Ok((0..self.depth)
            .map(|i| {
                let k = (self.depth - 1 - i) as u32;
                self.base.apply_response(|s| s.powu(k) / den.eval_at(s))
            })
            .collect())
    }

    /// Rows are sample times, columns stack entries.
    pub fn sample_filtered(&self, den: &Polynomial, times: &[f64]) -> Result<DMatrix<f64>> {
        let filtered = self.filtered(den)?;
        Ok(DMatrix::from_fn(times.len(), self.depth, |k, c| filtered[c].eval(times[k])))
    }
}

/// A sample average with a batch-means standard error for each entry.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMoment {
    pub value: DMatrix<f64>,
    pub stderr: DMatrix<f64>,
    pub samples: usize,
}

impl EmpiricalMoment {
    /// The (0, 0) entry, for scalar moments.
    pub fn scalar(&self) -> f64 {
        self.value[(0, 0)]
    }

    pub fn scalar_stderr(&self) -> f64 {
        self.stderr[(0, 0)]
    }

    /// Largest `|value| / stderr` over entries with a positive stderr.
    pub fn max_z_score(&self) -> f64 {
        self.value
            .iter()
            .zip(self.stderr.iter())
            .filter(|(_, s)| **s > 0.0)
            .map(|(v, s)| v.abs() / s)
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.value.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "entry_i,entry_j,value,stderr")?;
        for i in 0..self.value.nrows() {
            for j in 0..self.value.ncols() {
                writeln!(w, "{i},{j},{:e},{:e}", self.value[(i, j)], self.stderr[(i, j)])?;
            }
        }
        Ok(())
    }
}

fn batch_count(len: usize) -> usize {
    (len / 10).clamp(2, 50)
}

/// Mean and batch-means standard error of `f(k)` over `k < len`. Batch means
/// absorb the serial correlation that filtered noise introduces.
fn batch_mean(len: usize, f: impl Fn(usize) -> f64) -> (f64, f64) {
    let batches = batch_count(len);
    let mut means = Vec::with_capacity(batches);
    let mut total = 0.0;
    for b in 0..batches {
        let (lo, hi) = (b * len / batches, (b + 1) * len / batches);
        let s: f64 = (lo..hi).map(&f).sum();
        total += s;
        means.push(s / (hi - lo) as f64);
    }
    let mean = total / len as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

fn check_stable_den(den: &Polynomial) -> Result<()> {
    if den.degree() == 0 || den.is_stable()? {
        Ok(())
    } else {
        Err(Error::UnstableFilter)
    }
}

fn check_no_excitation_pole(den: &Polynomial, ms: &Multisine) -> Result<()> {
    let mut freqs: Vec<f64> = ms.components().iter().map(|c| c.frequency).collect();
    if ms.offset() != 0.0 {
        freqs.push(0.0);
    }
    for w in freqs {
        if den.eval_at(Complex64::new(0.0, w)).norm() < 1e-300 {
            return Err(Error::PoleOnGrid { re: 0.0, im: w });
        }
    }
    Ok(())
}

/// Sample cross moment between the derivative stack filtered by `1/A_j^2`
/// and the noise part of the regressor, `[-(p/A_j) v, ..., -(p^n/A_j) v, 0, ...]`
/// with FOH noise filtering. For white noise independent of the input every
/// entry tends to zero.
pub fn empirical_psi(
    aj: &Polynomial,
    u_ct: &Multisine,
    noise: &NoiseModel,
    grid: &SamplingGrid,
    order: ModelOrder,
) -> Result<EmpiricalMoment> {
    let len = grid.len();
    if len < 2 {
        return Err(Error::EmptySignal);
    }
    let d = order.num_params();
    let a2 = aj * aj;
    let stack = DerivativeStack::new(u_ct.clone(), order).sample_filtered(&a2, grid.times())?;
    check_stable_den(aj)?;
    let v = noise.sample(len);
    let nums: Vec<Polynomial> = (1..=order.n).map(|i| Polynomial::monomial(i, -1.0)).collect();
    let vf = Realization::new(aj, &nums)?
        .discretize_grid(grid.times(), Hold::Foh, false)?
        .run(&v);

    let mut value = DMatrix::zeros(d, d);
    let mut stderr = DMatrix::zeros(d, d);
    for c in 0..d {
        for (r, col) in vf.iter().enumerate() {
            let (m, s) = batch_mean(len, |k| stack[(k, c)] * col[k]);
            value[(c, r)] = m;
            stderr[(c, r)] = s;
        }
    }
    Ok(EmpiricalMoment {
        value,
        stderr,
        samples: len,
    })
}

/// Time-average power of the steady-state filter output:
/// `H(0)^2 a_0^2 + 1/2 sum_l a_l^2 |H(i w_l)|^2`.
pub fn analytic_average_power(filter: &TransferFunction, ms: &Multisine) -> Result<f64> {
    let x = crate::signals::filter_multisine(filter, ms)?;
    Ok(multisine_power(&x))
}

fn multisine_power(x: &Multisine) -> f64 {
    x.offset().powi(2) + 0.5 * x.components().iter().map(|c| c.amplitude.powi(2)).sum::<f64>()
}

/// Fails when a regular grid makes some cosine product alias to DC, so the
/// sample mean no longer converges to the time average.
pub fn check_power_resonance(ms: &Multisine, h: f64) -> Result<()> {
    let w: Vec<f64> = ms.components().iter().map(|c| c.frequency).collect();
    let near_zero = |x: f64| (x * h / 2.0).sin().abs() < 1e-6;
    for (j, &wj) in w.iter().enumerate() {
        if near_zero(wj) {
            return Err(Error::ResonantGrid(format!("frequency {wj} aliases to DC at h = {h}")));
        }
        for &wl in &w[j..] {
            if near_zero(wj + wl) || (wj != wl && near_zero(wj - wl)) {
                return Err(Error::ResonantGrid(format!(
                    "frequencies {wj} and {wl} beat at DC for h = {h}"
                )));
            }
        }
    }
    Ok(())
}

/// Sample mean of the squared filtered multisine on the grid. Resonant regular
/// grids are reported with a warning; the value is still returned.
pub fn empirical_average_power(
    filter: &TransferFunction,
    ms: &Multisine,
    grid: &SamplingGrid,
) -> Result<EmpiricalMoment> {
    if grid.len() < 2 {
        return Err(Error::EmptySignal);
    }
    if let GridKind::Regular { h } = grid.kind() {
        if let Err(e) = check_power_resonance(ms, h) {
            log::warn!("{e}");
        }
    }
    let x = crate::signals::filter_multisine(filter, ms)?;
    let samples = x.sample(grid.times());
    let (mean, se) = batch_mean(samples.len(), |k| samples[k] * samples[k]);
    Ok(EmpiricalMoment {
        value: DMatrix::from_element(1, 1, mean),
        stderr: DMatrix::from_element(1, 1, se),
        samples: samples.len(),
    })
}

/// Persistence of excitation required for a positive definite limiting
/// instrument Gram matrix: `2 m_u >= n + m` with a nonzero offset, or
/// `2 m_u >= n + m + 1` without one (each sinusoid contributes two degrees of
/// freedom, the offset one).
pub fn check_excitation_order(ms: &Multisine, order: ModelOrder) -> Result<()> {
    let mu = ms.components().len();
    let needed = order.n + order.m + usize::from(ms.offset() == 0.0);
    if 2 * mu >= needed {
        Ok(())
    } else {
        Err(Error::AssumptionA3Violated(format!(
            "{mu} sinusoids{} cannot excite a model of order {order}",
            if ms.offset() == 0.0 { " and no offset" } else { "" }
        )))
    }
}

fn true_den(system: &TransferFunction) -> Result<Polynomial> {
    if !system.is_stable()? {
        return Err(Error::UnstableFilter);
    }
    system.den().normalized_constant()
}

/// Time-average Gram matrix of the derivative stack filtered by `1/A*^2`,
/// assembled in closed form from cosine-product averages. No excitation
/// check is made.
pub fn phi_star_matrix(system: &TransferFunction, ms: &Multisine, order: ModelOrder) -> Result<DMatrix<f64>> {
    let a = true_den(system)?;
    let filtered = DerivativeStack::new(ms.clone(), order).filtered(&(&a * &a))?;
    let d = order.num_params();
    let phasors: Vec<Vec<Complex64>> = filtered.iter().map(Multisine::phasors).collect();
    Ok(DMatrix::from_fn(d, d, |i, j| {
        let ac: f64 = phasors[i]
            .iter()
            .zip(&phasors[j])
            .map(|(p, q)| (p * q.conj()).re)
            .sum();
        filtered[i].offset() * filtered[j].offset() + 0.5 * ac
    }))
}

/// Smallest eigenvalue of [`phi_star_matrix`], after checking the input is
/// rich enough for it to be positive.
pub fn phi_star_min_eig(system: &TransferFunction, ms: &Multisine, order: ModelOrder) -> Result<f64> {
    check_excitation_order(ms, order)?;
    Ok(min_eigenvalue(&phi_star_matrix(system, ms, order)?))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// `sum_i z_i p^{n+m-i}`: the numerator whose filtered output is `z . stack`.
pub fn stack_polynomial(z: &[f64]) -> Polynomial {
    let top = z.len().saturating_sub(1);
    let mut c = vec![0.0; z.len().max(1)];
    for (i, &zi) in z.iter().enumerate() {
        c[top - i] = zi;
    }
    Polynomial::from_coeffs(&c)
}

/// For each sampling period, the condition number of `(1/N) sum phi_hat phi^T`
/// built from noiseless data at the true parameters.
pub fn normal_matrix_condition_sweep(
    system: &TransferFunction,
    ms: &Multisine,
    order: ModelOrder,
    h_list: &[f64],
    samples: usize,
) -> Result<Vec<(f64, f64)>> {
    let a = true_den(system)?;
    let b = system.num().scaled(1.0 / system.den().constant());
    let theta = ThetaVector::from_polynomials(order, &a, &b)?;
    let cfg = EstimatorConfig::default();
    h_list
        .par_iter()
        .map(|&h| {
            let grid = SamplingGrid::generate(GridKind::Regular { h }, samples, 0.0)?;
            let data = generate_dataset(system, ms, &grid, &NoiseModel::new(0.0, 0)?)?;
            let phi = build_regressor_srivc_c(&theta.den(), ms, &data.output, order, &cfg)?;
            let hat = build_instrument_srivc_c(&theta.den(), &theta.num(), ms, grid.times(), order)?;
            let normal = hat.tr_mul(&phi) / samples as f64;
            Ok((h, condition_number(&normal)))
        })
        .collect()
}

pub fn write_condition_csv<W: Write>(mut w: W, rows: &[(f64, f64)]) -> Result<()> {
    writeln!(w, "h,condition")?;
    for (h, c) in rows {
        writeln!(w, "{h},{c:e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomial::sylvester;
    use crate::signals::Component;

    fn multisine_input() -> Multisine {
        Multisine::sines(&[(1.0, 0.714), (1.0, 1.428), (1.0, 2.142)]).unwrap()
    }

    fn gstar() -> TransferFunction {
        TransferFunction::from_coeffs(&[1.25], &[1.0, 0.7, 0.25]).unwrap()
    }

    fn order(n: usize, m: usize) -> ModelOrder {
        ModelOrder::new(n, m).unwrap()
    }

    fn grid(h: f64, n: usize) -> SamplingGrid {
        SamplingGrid::generate(GridKind::Regular { h }, n, 0.0).unwrap()
    }

    #[test]
    fn derivative_stack_ordering() {
        let s = DerivativeStack::new(multisine_input(), order(2, 0));
        assert_eq!(s.depth(), 3);
        assert_eq!(s.entry(2), multisine_input());
        assert_eq!(s.entry(0), multisine_input().derivative(2));
    }

    #[test]
    fn psi_zero_for_zero_noise_or_zero_input() {
        let aj = Polynomial::from_coeffs(&[1.0, 0.7, 0.25]);
        let g = grid(0.3, 500);
        let psi = empirical_psi(&aj, &multisine_input(), &NoiseModel::new(0.0, 1).unwrap(), &g, order(2, 0)).unwrap();
        assert!(psi.value.iter().all(|v| *v == 0.0));
        let psi = empirical_psi(&aj, &Multisine::constant(0.0), &NoiseModel::new(0.1, 1).unwrap(), &g, order(2, 0)).unwrap();
        assert!(psi.value.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn psi_vanishes_statistically() {
        let aj = Polynomial::from_coeffs(&[1.0, 0.6, 0.3]);
        let psi = empirical_psi(&aj, &multisine_input(), &NoiseModel::new(0.1, 5).unwrap(), &grid(0.3, 100_000), order(2, 0)).unwrap();
        assert_eq!(psi.value.shape(), (3, 3));
        // Last column corresponds to a b-slot: structurally zero.
        assert!(psi.value.column(2).iter().all(|v| *v == 0.0));
        assert!(psi.max_z_score() < 4.0, "{}", psi.value);
    }

    #[test]
    fn average_power_closed_forms() {
        let unity = TransferFunction::unity();
        assert_eq!(analytic_average_power(&unity, &Multisine::constant(3.0)).unwrap(), 9.0);
        let cos2 = Multisine::new(0.0, vec![Component { amplitude: 2.0, frequency: 1.0, phase: 0.0 }]).unwrap();
        assert!((analytic_average_power(&unity, &cos2).unwrap() - 2.0).abs() < 1e-15);
        let oracle: f64 = [0.714f64, 1.428, 2.142]
            .iter()
            .map(|&w| 0.5 * gstar().freq_response(w).unwrap().norm_sqr())
            .sum();
        assert!((analytic_average_power(&gstar(), &multisine_input()).unwrap() - oracle).abs() < 1e-14);
    }

    #[test]
    fn empirical_power_matches_analytic() {
        let c = empirical_average_power(&TransferFunction::unity(), &Multisine::constant(1.7), &grid(0.3, 100)).unwrap();
        assert!((c.scalar() - 1.7 * 1.7).abs() < 1e-14);
        let exact = analytic_average_power(&TransferFunction::unity(), &multisine_input()).unwrap();
        let e = empirical_average_power(&TransferFunction::unity(), &multisine_input(), &grid(0.3, 100_000)).unwrap();
        assert!((e.scalar() - exact).abs() / exact < 0.01);
    }

    #[test]
    fn empirical_power_error_shrinks_with_n() {
        let exact = analytic_average_power(&gstar(), &multisine_input()).unwrap();
        // Average the error over several grid lengths to smooth the bounded
        // oscillation of the tail.
        let err = |n0: usize| -> f64 {
            (0..10)
                .map(|k| {
                    let e = empirical_average_power(&gstar(), &multisine_input(), &grid(0.3, n0 + 37 * k)).unwrap();
                    (e.scalar() - exact).abs()
                })
                .sum::<f64>()
        };
        assert!(err(20_000) < 0.7 * err(5_000));
    }

    #[test]
    fn resonance_detection() {
        let ms = multisine_input();
        assert!(check_power_resonance(&ms, 0.3).is_ok());
        let h = 2.0 * std::f64::consts::PI / (0.714 + 1.428);
        assert!(matches!(check_power_resonance(&ms, h), Err(Error::ResonantGrid(_))));
    }

    #[test]
    fn phi_star_positive_for_rich_input() {
        let ms = multisine_input();
        let eig = phi_star_min_eig(&gstar(), &ms, order(2, 0)).unwrap();
        assert!(eig > 0.0);
        let scaled = phi_star_min_eig(&gstar(), &ms.scaled(3.0), order(2, 0)).unwrap();
        assert!((scaled / eig - 9.0).abs() < 1e-6);
    }

    #[test]
    fn phi_star_degenerate_for_poor_input() {
        let ms = Multisine::sines(&[(1.0, 1.0)]).unwrap();
        let o = order(2, 1);
        assert!(matches!(phi_star_min_eig(&gstar(), &ms, o), Err(Error::AssumptionA3Violated(_))));
        let m = phi_star_matrix(&gstar(), &ms, o).unwrap();
        assert!(min_eigenvalue(&m).abs() < 1e-10 * m.trace());
    }

    #[test]
    fn quadratic_form_matches_filtered_power() {
        let o = order(2, 0);
        let ms = multisine_input();
        let m = phi_star_matrix(&gstar(), &ms, o).unwrap();
        let a = gstar().den().clone();
        let a2 = &a * &a;
        for z in [[1.0, 0.0, 0.0], [0.3, -1.2, 0.7], [-2.0, 0.5, 1.0]] {
            let zv = nalgebra::DVector::from_column_slice(&z);
            let q = (zv.transpose() * &m * &zv)[(0, 0)];
            let tf = TransferFunction::new(stack_polynomial(&z), a2.clone()).unwrap();
            let p = analytic_average_power(&tf, &ms).unwrap();
            assert!((q - p).abs() <= 1e-8 * p.abs());
        }
    }

    #[test]
    fn instrument_is_sylvester_times_stack() {
        let o = order(2, 1);
        let aj = Polynomial::from_coeffs(&[1.0, 0.9, 0.3]);
        let bj = Polynomial::from_coeffs(&[1.1, -0.4]);
        let times: Vec<f64> = (0..40).map(|k| 0.17 * k as f64).collect();
        let ms = multisine_input();
        let hat = build_instrument_srivc_c(&aj, &bj, &ms, &times, o).unwrap();
        let stack = DerivativeStack::new(ms, o).sample_filtered(&(&aj * &aj), &times).unwrap();
        let s = sylvester(&(-&bj), &aj, 2, 1).unwrap();
        for k in 0..times.len() {
            let row: Vec<f64> = stack.row(k).iter().copied().collect();
            let mapped = s.apply(&row);
            for (c, v) in mapped.iter().enumerate() {
                assert!((hat[(k, c)] - v).abs() < 1e-10, "row {k} col {c}");
            }
        }
    }

    #[test]
    fn condition_sweep_finite_and_smooth() {
        let rows = normal_matrix_condition_sweep(&gstar(), &multisine_input(), order(2, 0), &[0.06, 0.12, 0.2, 0.6], 2000).unwrap();
        assert!(rows.iter().all(|(_, c)| c.is_finite() && *c < 1e10));
        let ratio = rows[0].1 / rows[1].1;
        assert!(ratio < 100.0 && ratio > 0.01);
        let mut buf = Vec::new();
        write_condition_csv(&mut buf, &rows).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("h,condition\n0.06,"));
    }

    #[test]
    fn condition_sweep_flags_offset_only_input() {
        let rows = normal_matrix_condition_sweep(&gstar(), &Multisine::constant(1.0), order(2, 0), &[0.3], 500).unwrap();
        assert!(rows[0].1 > 1e12);
    }
}
