//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use num_complex::Complex64;
use srivc::lti::Hold;

/// Coefficients (ascending) of `prod (s - r)` for a conjugate-closed root set.
pub fn poly_from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (k, v) in c.iter().enumerate() {
            next[k + 1] += v;
            next[k] -= v * r;
        }
        c = next;
    }
    c.iter().map(|z| z.re).collect()
}

pub fn eval_c(coeffs: &[f64], s: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

pub fn well_separated(roots: &[Complex64], gap: f64) -> bool {
    roots
        .iter()
        .enumerate()
        .all(|(i, a)| roots[i + 1..].iter().all(|b| (a - b).norm() > gap))
}

/// Modal simulation of `num / prod(s - roots)` (distinct poles) driven by the
/// hold interpolation of the samples, zero state at `t[0]`. Uses the segment
/// integrals `int_0^h e^{l(h-s)} ds = (e^{lh} - 1)/l` and
/// `int_0^h e^{l(h-s)} s ds = (e^{lh} - 1 - lh)/l^2`.
pub fn modal_hold_oracle(num: &[f64], roots: &[Complex64], t: &[f64], u: &[f64], hold: Hold) -> Vec<f64> {
    let den = poly_from_roots(roots);
    let n = roots.len();
    let d = if num.len() > n { num[n] } else { 0.0 };
    let rem: Vec<f64> = (0..n).map(|k| num.get(k).copied().unwrap_or(0.0) - d * den[k]).collect();
    let dden: Vec<f64> = (1..den.len()).map(|k| k as f64 * den[k]).collect();
    let residues: Vec<Complex64> = roots.iter().map(|&l| eval_c(&rem, l) / eval_c(&dden, l)).collect();
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    let mut y = Vec::with_capacity(t.len());
    for k in 0..t.len() {
        if k > 0 {
            let h = t[k] - t[k - 1];
            let slope = match hold {
                Hold::Zoh => 0.0,
                Hold::Foh => (u[k] - u[k - 1]) / h,
            };
            for (xi, &l) in x.iter_mut().zip(roots) {
                let e = (l * h).exp();
                let i0 = (e - 1.0) / l;
                let i1 = (e - 1.0 - l * h) / (l * l);
                *xi = e * *xi + u[k - 1] * i0 + slope * i1;
            }
        }
        let modal: Complex64 = x.iter().zip(&residues).map(|(xi, r)| xi * r).sum();
        y.push(d * u[k] + modal.re);
    }
    y
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
