//! Continuous-time LTI filters and their exact hold-equivalent discretizations.

use std::fmt;

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::polynomial::Polynomial;
use crate::signals::SampledSignal;

/// Assumed intersample behaviour of a sampled signal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Hold {
    /// Piecewise constant between samples.
    Zoh,
    /// Piecewise linear between samples.
    Foh,
}

impl fmt::Display for Hold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hold::Zoh => write!(f, "zoh"),
            Hold::Foh => write!(f, "foh"),
        }
    }
}

impl std::str::FromStr for Hold {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zoh" => Ok(Hold::Zoh),
            "foh" => Ok(Hold::Foh),
            other => Err(Error::Parse(format!("unknown hold '{other}'"))),
        }
    }
}

/// `G(p) = num(p) / den(p)`, always proper.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferFunction {
    num: Polynomial,
    den: Polynomial,
}

impl TransferFunction {
    pub fn new(num: Polynomial, den: Polynomial) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::InvalidPolynomial);
        }
        if !num.is_zero() && num.degree() > den.degree() {
            return Err(Error::ImproperTransferFunction {
                num: num.degree(),
                den: den.degree(),
            });
        }
        Ok(Self { num, den })
    }

    pub fn from_coeffs(num: &[f64], den: &[f64]) -> Result<Self> {
        Self::new(Polynomial::new(num.to_vec())?, Polynomial::new(den.to_vec())?)
    }

    pub fn unity() -> Self {
        Self {
            num: Polynomial::one(),
            den: Polynomial::one(),
        }
    }

    pub fn num(&self) -> &Polynomial {
        &self.num
    }

    pub fn den(&self) -> &Polynomial {
        &self.den
    }

    /// Series connection `self * other`.
    pub fn series(&self, other: &TransferFunction) -> TransferFunction {
        TransferFunction {
            num: &self.num * &other.num,
            den: &self.den * &other.den,
        }
    }

    pub fn is_stable(&self) -> Result<bool> {
        if self.den.degree() == 0 {
            return Ok(true);
        }
        self.den.is_stable()
    }

    /// `num(s) / den(s)` at an arbitrary complex point.
    pub fn eval_at(&self, s: Complex64) -> Result<Complex64> {
        let d = self.den.eval_at(s);
        if d.norm() < 1e-300 {
            return Err(Error::PoleOnGrid { re: s.re, im: s.im });
        }
        Ok(self.num.eval_at(s) / d)
    }

    pub fn freq_response(&self, omega: f64) -> Result<Complex64> {
        self.eval_at(Complex64::new(0.0, omega))
    }

    pub fn dc_gain(&self) -> Result<f64> {
        Ok(self.freq_response(0.0)?.re)
    }

    /// Controllable canonical realization; the states are
    /// `[w, p w, ..., p^{n-1} w]` with `den(p) w = u`.
    pub fn to_state_space(&self) -> Result<StateSpace> {
        let r = Realization::new(&self.den, std::slice::from_ref(&self.num))?;
        Ok(StateSpace {
            a: r.a,
            b: r.b,
            c: RowDVector::from_row_slice(&r.c[0]),
            d: r.d[0],
        })
    }
}

impl fmt::Display for TransferFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) / ({})", self.num, self.den)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: RowDVector<f64>,
    pub d: f64,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: RowDVector<f64>, d: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.len() != n || c.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, B has {} rows, C has {} columns",
                a.nrows(),
                a.ncols(),
                b.len(),
                c.len()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// `C (iw I - A)^{-1} B + D`.
    pub fn freq_response(&self, omega: f64) -> Result<Complex64> {
        let n = self.order();
        if n == 0 {
            return Ok(Complex64::new(self.d, 0.0));
        }
        let s = Complex64::new(0.0, omega);
        let m = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
            let diag = if i == j { s } else { Complex64::new(0.0, 0.0) };
            diag - Complex64::new(self.a[(i, j)], 0.0)
        });
        let rhs = DVector::<Complex64>::from_fn(n, |i, _| Complex64::new(self.b[i], 0.0));
        let x = m
            .lu()
            .solve(&rhs)
            .ok_or(Error::PoleOnGrid { re: 0.0, im: omega })?;
        let cx: Complex64 = (0..n).map(|i| x[i] * self.c[i]).sum();
        Ok(cx + self.d)
    }

    pub fn discretize(&self, h: f64, hold: Hold) -> Result<DiscreteFilter> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidBounds(format!("sampling interval {h} must be positive")));
        }
        let step = hold_step(&self.a, &self.b, h, hold);
        Ok(DiscreteFilter {
            ad: step.ad,
            bd0: step.bd0,
            bd1: step.bd1,
            c: self.c.clone(),
            d: self.d,
            hold,
            h: Some(h),
        })
    }
}

/// Exact hold-equivalent of a state-space model:
/// `x+ = Ad x + Bd0 u_k + Bd1 u_{k+1}`, `y_k = C x_k + D u_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteFilter {
    pub ad: DMatrix<f64>,
    pub bd0: DVector<f64>,
    pub bd1: DVector<f64>,
    pub c: RowDVector<f64>,
    pub d: f64,
    pub hold: Hold,
    pub h: Option<f64>,
}

impl DiscreteFilter {
    /// Runs the filter from zero initial state over a regularly sampled input.
    pub fn run(&self, input: &[f64]) -> Vec<f64> {
        let n = self.ad.nrows();
        let mut x = DVector::zeros(n);
        let mut out = Vec::with_capacity(input.len());
        for k in 0..input.len() {
            out.push(self.c.dot(&x.transpose()) + self.d * input[k]);
            if k + 1 < input.len() {
                x = &self.ad * &x + &self.bd0 * input[k] + &self.bd1 * input[k + 1];
            }
        }
        out
    }

    /// Gain of the discrete filter at `z = 1`.
    pub fn dc_gain(&self) -> Option<f64> {
        let n = self.ad.nrows();
        let i_minus = DMatrix::identity(n, n) - &self.ad;
        let x = i_minus.lu().solve(&(&self.bd0 + &self.bd1))?;
        Some(self.c.dot(&x.transpose()) + self.d)
    }
}

struct HoldStep {
    ad: DMatrix<f64>,
    bd0: DVector<f64>,
    bd1: DVector<f64>,
}

/// Augmented matrix exponential. For FOH,
/// `exp([[A h, B h, 0], [0, 0, 1], [0, 0, 0]]) = [[Ad, G1, G2], ...]` where
/// `G1 = int_0^h e^{A s} ds B` and `G2` is the response to the unit ramp
/// `s / h`; the two taps are `Bd0 = G1 - G2` and `Bd1 = G2`.
fn hold_step(a: &DMatrix<f64>, b: &DVector<f64>, h: f64, hold: Hold) -> HoldStep {
    let n = a.nrows();
    let taps = HoldKernel::new(a, b, hold).taps(h);
    HoldStep {
        ad: DMatrix::from_row_slice(n, n, &taps.ad),
        bd0: DVector::from_vec(taps.bd0),
        bd1: DVector::from_vec(taps.bd1),
    }
}

/// Reusable workspace for the augmented exponential, evaluated for many step
/// lengths without allocating. Scaling and squaring around a degree-12 Taylor
/// polynomial with the scaled norm kept below 1/4 (truncation < 3e-18).
struct HoldKernel {
    n: usize,
    dim: usize,
    hold: Hold,
    /// Row-major `[[A, B, 0], [0, 0, 1], [0, 0, 0]]` without the step.
    base: Vec<f64>,
    m: Vec<f64>,
    e: Vec<f64>,
    tmp: Vec<f64>,
}

const TAYLOR_DEGREE: usize = 12;
const SCALED_NORM: f64 = 0.25;

impl HoldKernel {
    fn new(a: &DMatrix<f64>, b: &DVector<f64>, hold: Hold) -> Self {
        let n = a.nrows();
        let dim = match hold {
            Hold::Zoh => n + 1,
            Hold::Foh => n + 2,
        };
        let mut base = vec![0.0; dim * dim];
        for i in 0..n {
            for j in 0..n {
                base[i * dim + j] = a[(i, j)];
            }
            base[i * dim + n] = b[i];
        }
        let zeros = vec![0.0; dim * dim];
        Self {
            n,
            dim,
            hold,
            base,
            m: zeros.clone(),
            e: zeros.clone(),
            tmp: zeros,
        }
    }

    fn taps(&mut self, h: f64) -> Taps {
        self.exp(h);
        let (n, dim) = (self.n, self.dim);
        let mut ad = Vec::with_capacity(n * n);
        for i in 0..n {
            ad.extend_from_slice(&self.e[i * dim..i * dim + n]);
        }
        let g1: Vec<f64> = (0..n).map(|i| self.e[i * dim + n]).collect();
        match self.hold {
            Hold::Zoh => Taps {
                ad,
                bd0: g1,
                bd1: vec![0.0; n],
            },
            Hold::Foh => {
                let g2: Vec<f64> = (0..n).map(|i| self.e[i * dim + n + 1]).collect();
                Taps {
                    ad,
                    bd0: g1.iter().zip(&g2).map(|(a, b)| a - b).collect(),
                    bd1: g2,
                }
            }
        }
    }

    /// Leaves `exp(Z h)` in `self.e`, where `Z` is the augmented matrix whose
    /// ramp entry is `1/h` (so that `Z h` has a unit entry there).
    fn exp(&mut self, h: f64) {
        let (n, dim) = (self.n, self.dim);
        for (m, b) in self.m.iter_mut().zip(&self.base) {
            *m = b * h;
        }
        if self.hold == Hold::Foh {
            self.m[n * dim + n + 1] = 1.0;
        }
        let norm = (0..dim)
            .map(|j| (0..dim).map(|i| self.m[i * dim + j].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let squarings = if norm > SCALED_NORM {
            (norm / SCALED_NORM).log2().ceil() as i32
        } else {
            0
        };
        let scale = 0.5f64.powi(squarings);
        self.m.iter_mut().for_each(|v| *v *= scale);

        // Horner: E = I + M/1 (I + M/2 (I + ... (I + M/12))).
        set_identity(&mut self.e, dim);
        for k in (1..=TAYLOR_DEGREE).rev() {
            matmul(&self.m, &self.e, &mut self.tmp, dim);
            let inv = 1.0 / k as f64;
            for (i, v) in self.tmp.iter_mut().enumerate() {
                *v *= inv;
                if i % (dim + 1) == 0 {
                    *v += 1.0;
                }
            }
            std::mem::swap(&mut self.e, &mut self.tmp);
        }
        for _ in 0..squarings {
            matmul(&self.e, &self.e, &mut self.tmp, dim);
            std::mem::swap(&mut self.e, &mut self.tmp);
        }
    }
}

fn set_identity(m: &mut [f64], dim: usize) {
    m.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..dim {
        m[i * dim + i] = 1.0;
    }
}

fn matmul(a: &[f64], b: &[f64], out: &mut [f64], dim: usize) {
    for i in 0..dim {
        let row = &a[i * dim..(i + 1) * dim];
        let o = &mut out[i * dim..(i + 1) * dim];
        o.iter_mut().for_each(|v| *v = 0.0);
        for (k, &aik) in row.iter().enumerate() {
            if aik != 0.0 {
                let brow = &b[k * dim..(k + 1) * dim];
                for (ov, bv) in o.iter_mut().zip(brow) {
                    *ov += aik * bv;
                }
            }
        }
    }
}

/// One denominator shared by several numerators: a single state vector
/// drives every output, so the whole bank costs one discretization.
#[derive(Clone, Debug)]
pub(crate) struct Realization {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: Vec<Vec<f64>>,
    d: Vec<f64>,
}

impl Realization {
    pub(crate) fn new(den: &Polynomial, nums: &[Polynomial]) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::InvalidPolynomial);
        }
        let n = den.degree();
        for num in nums {
            if !num.is_zero() && num.degree() > n {
                return Err(Error::ImproperTransferFunction {
                    num: num.degree(),
                    den: n,
                });
            }
        }
        let an = den.leading();
        let dc = den.coeffs();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n.saturating_sub(1) {
            a[(i, i + 1)] = 1.0;
        }
        if n > 0 {
            for k in 0..n {
                a[(n - 1, k)] = -dc[k] / an;
            }
        }
        let mut b = DVector::zeros(n);
        if n > 0 {
            b[n - 1] = 1.0 / an;
        }
        let mut c = Vec::with_capacity(nums.len());
        let mut d = Vec::with_capacity(nums.len());
        for num in nums {
            let nc = num.padded(n + 1);
            let cn = nc[n];
            c.push((0..n).map(|k| nc[k] - cn * dc[k] / an).collect());
            d.push(cn / an);
        }
        Ok(Self { a, b, c, d })
    }

    pub(crate) fn order(&self) -> usize {
        self.a.nrows()
    }

    pub(crate) fn outputs(&self) -> usize {
        self.c.len()
    }

    /// Precomputes the state-update taps for the given time stamps.
    pub(crate) fn discretize_grid(&self, times: &[f64], hold: Hold, force_per_interval: bool) -> Result<GridFilter<'_>> {
        validate_times(times)?;
        let n = self.order();
        if n == 0 || times.len() < 2 {
            return Ok(GridFilter {
                real: self,
                steps: Steps::Static,
            });
        }
        let steps = match regular_step(times) {
            Some(h) if !force_per_interval => Steps::Regular(HoldKernel::new(&self.a, &self.b, hold).taps(h)),
            _ => {
                let mut kernel = HoldKernel::new(&self.a, &self.b, hold);
                Steps::PerInterval(times.windows(2).map(|w| kernel.taps(w[1] - w[0])).collect())
            }
        };
        Ok(GridFilter { real: self, steps })
    }
}

/// Flat row-major copies of the taps for an allocation-free inner loop.
#[derive(Clone, Debug)]
struct Taps {
    ad: Vec<f64>,
    bd0: Vec<f64>,
    bd1: Vec<f64>,
}

#[derive(Clone, Debug)]
enum Steps {
    Static,
    Regular(Taps),
    PerInterval(Vec<Taps>),
}

pub(crate) struct GridFilter<'a> {
    real: &'a Realization,
    steps: Steps,
}

impl GridFilter<'_> {
    /// Filters `input` from zero initial state; returns one column per
    /// numerator of the underlying realization.
    pub(crate) fn run(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let real = self.real;
        let n = real.order();
        let len = input.len();
        let mut out: Vec<Vec<f64>> = (0..real.outputs()).map(|_| Vec::with_capacity(len)).collect();
        let mut x = vec![0.0; n];
        let mut next = vec![0.0; n];
        for k in 0..len {
            let uk = input[k];
            for (o, col) in out.iter_mut().enumerate() {
                let cx: f64 = real.c[o].iter().zip(&x).map(|(c, s)| c * s).sum();
                col.push(cx + real.d[o] * uk);
            }
            if k + 1 == len {
                break;
            }
            let taps = match &self.steps {
                Steps::Static => continue,
                Steps::Regular(t) => t,
                Steps::PerInterval(v) => &v[k],
            };
            let uk1 = input[k + 1];
            for i in 0..n {
                let row = &taps.ad[i * n..(i + 1) * n];
                let mut acc = taps.bd0[i] * uk + taps.bd1[i] * uk1;
                for j in 0..n {
                    acc += row[j] * x[j];
                }
                next[i] = acc;
            }
            std::mem::swap(&mut x, &mut next);
        }
        out
    }
}

pub(crate) fn validate_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::EmptySignal);
    }
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::NonIncreasingTimes);
    }
    Ok(())
}

/// Common step if every gap matches the mean gap to within rounding.
pub(crate) fn regular_step(times: &[f64]) -> Option<f64> {
    if times.len() < 2 {
        return None;
    }
    let h = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    let tol = 1e-10 * h;
    times
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= tol)
        .then_some(h)
}

fn filter_bank(
    den: &Polynomial,
    nums: &[Polynomial],
    sig: &SampledSignal,
    hold: Hold,
    force_per_interval: bool,
) -> Result<Vec<Vec<f64>>> {
    let real = Realization::new(den, nums)?;
    let grid = real.discretize_grid(sig.times(), hold, force_per_interval)?;
    Ok(grid.run(sig.values()))
}

/// `[tf applied to the hold interpolation of sig](t_k)` with zero initial
/// state at the first sample. Irregular grids fall back to per-interval
/// discretization.
pub fn filter_samples(tf: &TransferFunction, sig: &SampledSignal, hold: Hold) -> Result<SampledSignal> {
    let mut cols = filter_bank(&tf.den, std::slice::from_ref(&tf.num), sig, hold, false)?;
    SampledSignal::new(sig.times().to_vec(), cols.pop().unwrap(), Some(hold))
}

/// Like [`filter_samples`] but always rediscretizes on every interval.
pub fn filter_samples_irregular(tf: &TransferFunction, sig: &SampledSignal, hold: Hold) -> Result<SampledSignal> {
    let mut cols = filter_bank(&tf.den, std::slice::from_ref(&tf.num), sig, hold, true)?;
    SampledSignal::new(sig.times().to_vec(), cols.pop().unwrap(), Some(hold))
}
