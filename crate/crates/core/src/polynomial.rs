//! Real polynomials in the differential operator `p`.
//!
//! Coefficients are stored in ascending order, so `coeffs[0]` is the constant
//! term. Denominators of identified models are normalized so that this
//! constant term equals one.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Roots with real part in `[-BOUNDARY_SHIFT, 0]` are treated as marginal and
/// pushed to `-BOUNDARY_SHIFT` by [`Polynomial::reflect_unstable`].
pub const BOUNDARY_SHIFT: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Builds a polynomial from ascending coefficients, trimming trailing zeros.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPolynomial);
        }
        Ok(Self::from_vec_trimmed(coeffs))
    }

    /// Panicking convenience constructor for literals in code and tests.
    pub fn from_coeffs(coeffs: &[f64]) -> Self {
        Self::new(coeffs.to_vec()).expect("finite, non-empty coefficients")
    }

    fn from_vec_trimmed(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: vec![0.0] }
    }

    pub fn one() -> Self {
        Self { coeffs: vec![1.0] }
    }

    /// `c * p^k`.
    pub fn monomial(k: usize, c: f64) -> Self {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = c;
        Self::from_vec_trimmed(coeffs)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficients zero-padded (or truncated) to `len` entries.
    pub fn padded(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for (o, c) in out.iter_mut().zip(&self.coeffs) {
            *o = *c;
        }
        out
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == 0.0
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().unwrap()
    }

    pub fn constant(&self) -> f64 {
        self.coeffs[0]
    }

    /// Largest coefficient magnitude, used as a scale for residual checks.
    pub fn scale(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Horner evaluation at a complex point.
    pub fn eval_at(&self, s: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() == 1 {
            return Self::zero();
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| k as f64 * c)
            .collect();
        Self::from_vec_trimmed(coeffs)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_vec_trimmed(self.coeffs.iter().map(|c| c * factor).collect())
    }

    /// Multiplies by `p^k`.
    pub fn shifted(&self, k: usize) -> Self {
        if self.is_zero() {
            return Self::zero();
        }
        let mut coeffs = vec![0.0; k];
        coeffs.extend_from_slice(&self.coeffs);
        Self { coeffs }
    }

    /// Rescales so that the constant term equals one.
    pub fn normalized_constant(&self) -> Result<Self> {
        let c0 = self.constant();
        if c0.abs() < 1e-12 {
            return Err(Error::ZeroConstantTerm);
        }
        Ok(self.scaled(1.0 / c0))
    }

    /// All `degree()` roots, computed as eigenvalues of the balanced companion
    /// matrix and polished with a few Newton steps. Complex roots are returned
    /// as exact conjugate pairs.
    pub fn roots(&self) -> Result<Vec<Complex64>> {
        let d = self.degree();
        if d == 0 {
            return Err(Error::DegreeZero);
        }
        let lead = self.leading();
        if lead.abs() <= 1e-14 * self.scale() {
            return Err(Error::IllConditioned(format!(
                "leading coefficient {lead:e} is negligible"
            )));
        }
        if d == 1 {
            return Ok(vec![Complex64::new(-self.coeffs[0] / lead, 0.0)]);
        }

        let mut companion = DMatrix::<f64>::zeros(d, d);
        for j in 0..d {
            companion[(0, j)] = -self.coeffs[d - 1 - j] / lead;
        }
        for i in 1..d {
            companion[(i, i - 1)] = 1.0;
        }
        balance(&mut companion);

        let eig = companion
            .try_schur(f64::EPSILON, 10_000)
            .ok_or_else(|| Error::IllConditioned("Schur iteration did not converge".into()))?
            .complex_eigenvalues();
        if eig.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::IllConditioned("non-finite eigenvalue".into()));
        }

        let dp = self.derivative();
        let polished: Vec<Complex64> = eig.iter().map(|&z| self.newton_polish(&dp, z)).collect();
        Ok(pair_conjugates(polished))
    }

    fn newton_polish(&self, dp: &Polynomial, mut z: Complex64) -> Complex64 {
        let mut res = self.eval_at(z).norm();
        for _ in 0..4 {
            let dz = dp.eval_at(z);
            if dz.norm() == 0.0 {
                break;
            }
            let cand = z - self.eval_at(z) / dz;
            let cand_res = self.eval_at(cand).norm();
            if !(cand_res < res) {
                break;
            }
            z = cand;
            res = cand_res;
        }
        z
    }

    /// Rebuilds `leading * prod (p - r)` from a conjugate-closed root list.
    pub fn from_roots(roots: &[Complex64], leading: f64) -> Self {
        let mut acc = Polynomial::from_coeffs(&[leading]);
        for r in roots {
            if r.im > 0.0 {
                acc = &acc * &Polynomial::from_coeffs(&[r.norm_sqr(), -2.0 * r.re, 1.0]);
            } else if r.im == 0.0 {
                acc = &acc * &Polynomial::from_coeffs(&[-r.re, 1.0]);
            }
        }
        acc
    }

    /// True iff every root lies strictly in the open left half-plane.
    pub fn is_stable(&self) -> Result<bool> {
        Ok(self.roots()?.iter().all(|r| r.re < 0.0))
    }

    /// Mirrors right-half-plane roots across the imaginary axis, nudges
    /// marginal roots to `-BOUNDARY_SHIFT`, and renormalizes the constant
    /// term to one.
    pub fn reflect_unstable(&self) -> Result<Self> {
        let roots = self.roots()?;
        if roots.iter().all(|r| r.re < -BOUNDARY_SHIFT) {
            return self.normalized_constant();
        }
        let moved: Vec<Complex64> = roots
            .iter()
            .map(|r| Complex64::new((-r.re.abs()).min(-BOUNDARY_SHIFT), r.im))
            .collect();
        Polynomial::from_roots(&moved, self.leading()).normalized_constant()
    }
}

/// Parlett-Reinsch balancing with radix 2; preserves eigenvalues exactly.
fn balance(a: &mut DMatrix<f64>) {
    const RADIX: f64 = 2.0;
    let n = a.nrows();
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= RADIX * RADIX;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= RADIX * RADIX;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let inv = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= inv;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
    }
}

/// Forces complex roots into exact conjugate pairs by averaging each root in
/// the upper half-plane with its nearest partner in the lower half-plane.
fn pair_conjugates(roots: Vec<Complex64>) -> Vec<Complex64> {
    let mut upper: Vec<Complex64> = roots.iter().copied().filter(|r| r.im > 0.0).collect();
    let mut lower: Vec<Complex64> = roots.iter().copied().filter(|r| r.im < 0.0).collect();
    let mut out: Vec<Complex64> = roots.iter().copied().filter(|r| r.im == 0.0).collect();

    if upper.len() != lower.len() {
        // Odd split: nearly-real pairs straddled the axis; collapse the
        // smallest imaginary parts onto the real line.
        let mut all: Vec<Complex64> = upper.drain(..).chain(lower.drain(..)).collect();
        all.sort_by(|a, b| a.im.abs().total_cmp(&b.im.abs()));
        let excess = all.len() % 2;
        for r in all.iter_mut().take(excess) {
            r.im = 0.0;
        }
        for r in all {
            if r.im > 0.0 {
                upper.push(r);
            } else if r.im < 0.0 {
                lower.push(r);
            } else {
                out.push(r);
            }
        }
        if upper.len() != lower.len() {
            out.extend(upper);
            out.extend(lower);
            return sorted(out);
        }
    }

    for u in upper {
        let (idx, _) = lower
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| (**a - u.conj()).norm().total_cmp(&(**b - u.conj()).norm()))
            .expect("balanced split");
        let l = lower.swap_remove(idx);
        let avg = Complex64::new(0.5 * (u.re + l.re), 0.5 * (u.im - l.im));
        out.push(avg);
        out.push(avg.conj());
    }
    sorted(out)
}

fn sorted(mut roots: Vec<Complex64>) -> Vec<Complex64> {
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(b.im.total_cmp(&a.im)));
    roots
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, c) in self.coeffs.iter().enumerate().rev() {
            if *c == 0.0 && self.coeffs.len() > 1 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match k {
                0 => write!(f, "{c}")?,
                1 => write!(f, "{c}p")?,
                _ => write!(f, "{c}p^{k}")?,
            }
        }
        Ok(())
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::from_vec_trimmed(out)
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let len = self.coeffs.len().max(rhs.coeffs.len());
        let a = self.padded(len);
        let b = rhs.padded(len);
        Polynomial::from_vec_trimmed(a.iter().zip(&b).map(|(x, y)| x + y).collect())
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self + &(-rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scaled(-1.0)
    }
}

/// Sylvester matrix linking a derivative stack to filtered instruments.
///
/// For `neg_b` of nominal degree `m` and `a` of nominal degree `n`, the
/// `(n+m+1)`-square matrix `S` satisfies, for every signal `w`,
///
/// ```text
/// S * [p^{n+m} w, ..., p w, w]^T
///   = [p neg_b w, ..., p^n neg_b w, a w, p a w, ..., p^m a w]^T
/// ```
///
/// so with `w = u / A^2` it maps the derivative stack onto the instrument
/// vector `[-p B/A^2 u, ..., -p^n B/A^2 u, u/A, ..., p^m u/A]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SylvesterMatrix {
    entries: DMatrix<f64>,
    n: usize,
    m: usize,
}

impl SylvesterMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.n + self.m + 1
    }

    pub fn determinant(&self) -> f64 {
        self.entries.determinant()
    }

    /// Largest absolute entry, raised to the matrix dimension: a crude bound
    /// on the determinant magnitude used for relative singularity checks.
    pub fn det_scale(&self) -> f64 {
        let max = self.entries.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        max.powi(self.dim() as i32)
    }

    pub fn apply(&self, stack: &[f64]) -> Vec<f64> {
        assert_eq!(stack.len(), self.dim());
        (0..self.dim())
            .map(|r| (0..self.dim()).map(|c| self.entries[(r, c)] * stack[c]).sum())
            .collect()
    }
}

pub fn sylvester(neg_b: &Polynomial, a: &Polynomial, n: usize, m: usize) -> Result<SylvesterMatrix> {
    if a.degree() > n && !a.is_zero() {
        return Err(Error::DimensionMismatch(format!(
            "deg(A) = {} exceeds nominal degree {n}",
            a.degree()
        )));
    }
    if neg_b.degree() > m && !neg_b.is_zero() {
        return Err(Error::DimensionMismatch(format!(
            "deg(-B) = {} exceeds nominal degree {m}",
            neg_b.degree()
        )));
    }
    let dim = n + m + 1;
    let top = n + m;
    let mut entries = DMatrix::zeros(dim, dim);
    // Row i-1 holds p^i * neg_b, i = 1..=n.
    for i in 1..=n {
        for (k, &c) in neg_b.coeffs().iter().enumerate() {
            entries[(i - 1, top - (i + k))] = c;
        }
    }
    // Row n+i holds p^i * a, i = 0..=m.
    for i in 0..=m {
        for (k, &c) in a.coeffs().iter().enumerate() {
            entries[(n + i, top - (i + k))] = c;
        }
    }
    Ok(SylvesterMatrix { entries, n, m })
}
