//! Multisine excitation, sampling grids, measurement noise and synthetic
//! datasets.
//!
//! All sinusoids are stored in cosine form `a cos(w t + phi)`; a sine is a
//! cosine with phase `-pi/2`.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lti::{validate_times, Hold, TransferFunction};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Component {
    pub amplitude: f64,
    /// rad/s
    pub frequency: f64,
    /// rad
    pub phase: f64,
}

/// `offset + sum_l a_l cos(w_l t + phi_l)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Multisine {
    offset: f64,
    components: Vec<Component>,
}

impl Multisine {
    /// Validated constructor: amplitudes and frequencies positive, frequencies
    /// pairwise distinct.
    pub fn new(offset: f64, components: Vec<Component>) -> Result<Self> {
        if !offset.is_finite() {
            return Err(Error::InvalidMultisine("offset must be finite".into()));
        }
        for (i, c) in components.iter().enumerate() {
            if !(c.amplitude > 0.0 && c.amplitude.is_finite()) {
                return Err(Error::InvalidMultisine(format!("amplitude {} must be positive", c.amplitude)));
            }
            if !(c.frequency > 0.0 && c.frequency.is_finite()) {
                return Err(Error::InvalidMultisine(format!("frequency {} must be positive", c.frequency)));
            }
            if !c.phase.is_finite() {
                return Err(Error::InvalidMultisine("phase must be finite".into()));
            }
            if components[..i].iter().any(|o| o.frequency == c.frequency) {
                return Err(Error::InvalidMultisine(format!("frequency {} repeated", c.frequency)));
            }
        }
        Ok(Self { offset, components })
    }

    pub fn constant(offset: f64) -> Self {
        Self {
            offset,
            components: Vec::new(),
        }
    }

    /// Sum of `amp * sin(freq * t)` terms.
    pub fn sines(terms: &[(f64, f64)]) -> Result<Self> {
        let components = terms
            .iter()
            .map(|&(amplitude, frequency)| Component {
                amplitude,
                frequency,
                phase: -FRAC_PI_2,
            })
            .collect();
        Self::new(0.0, components)
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn max_frequency(&self) -> Option<f64> {
        self.components.iter().map(|c| c.frequency).reduce(f64::max)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.offset
            + self
                .components
                .iter()
                .map(|c| c.amplitude * (c.frequency * t + c.phase).cos())
                .sum::<f64>()
    }

    pub fn sample(&self, times: &[f64]) -> Vec<f64> {
        times.iter().map(|&t| self.eval(t)).collect()
    }

    pub fn scaled(&self, factor: f64) -> Multisine {
        Multisine {
            offset: self.offset * factor,
            components: self
                .components
                .iter()
                .map(|c| Component {
                    amplitude: c.amplitude * factor.abs(),
                    frequency: c.frequency,
                    phase: if factor < 0.0 { c.phase + std::f64::consts::PI } else { c.phase },
                })
                .collect(),
        }
    }

    /// Steady-state response to an arbitrary frequency response `H(s)`.
    /// The caller guarantees `H` is the response of a stable real filter
    /// without poles at the excitation frequencies.
    pub(crate) fn apply_response(&self, response: impl Fn(Complex64) -> Complex64) -> Multisine {
        let dc = if self.offset != 0.0 {
            response(Complex64::new(0.0, 0.0)).re * self.offset
        } else {
            0.0
        };
        let components = self
            .components
            .iter()
            .map(|c| {
                let h = response(Complex64::new(0.0, c.frequency));
                Component {
                    amplitude: c.amplitude * h.norm(),
                    frequency: c.frequency,
                    phase: c.phase + h.arg(),
                }
            })
            .collect();
        Multisine { offset: dc, components }
    }

    /// Complex phasor `a e^{i phi}` of each component.
    pub fn phasors(&self) -> Vec<Complex64> {
        self.components
            .iter()
            .map(|c| Complex64::from_polar(c.amplitude, c.phase))
            .collect()
    }

    /// Exact term-by-term time derivative of the given order.
    pub fn derivative(&self, order: u32) -> Multisine {
        if order == 0 {
            return self.clone();
        }
        Multisine {
            offset: 0.0,
            components: self
                .components
                .iter()
                .map(|c| Component {
                    amplitude: c.amplitude * c.frequency.powi(order as i32),
                    frequency: c.frequency,
                    phase: c.phase + order as f64 * FRAC_PI_2,
                })
                .collect(),
        }
    }
}

/// Steady-state output of a stable filter driven by a multisine.
pub fn filter_multisine(tf: &TransferFunction, ms: &Multisine) -> Result<Multisine> {
    if !tf.is_stable()? {
        return Err(Error::UnstableFilter);
    }
    // Surface poles on the excitation grid before building the response.
    if ms.offset != 0.0 {
        tf.freq_response(0.0)?;
    }
    for c in &ms.components {
        tf.freq_response(c.frequency)?;
    }
    Ok(ms.apply_response(|s| tf.eval_at(s).expect("checked above")))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledSignal {
    times: Vec<f64>,
    values: Vec<f64>,
    hold: Option<Hold>,
}

impl SampledSignal {
    pub fn new(times: Vec<f64>, values: Vec<f64>, hold: Option<Hold>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} time stamps but {} values",
                times.len(),
                values.len()
            )));
        }
        validate_times(&times)?;
        Ok(Self { times, values, hold })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn hold(&self) -> Option<Hold> {
        self.hold
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn with_hold(mut self, hold: Option<Hold>) -> Self {
        self.hold = hold;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GridKind {
    Regular { h: f64 },
    /// Gaps drawn i.i.d. uniform on `[h_lb, h_hb]`.
    IrregularUniform { h_lb: f64, h_hb: f64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingGrid {
    times: Vec<f64>,
    kind: GridKind,
}

impl SamplingGrid {
    pub fn generate(kind: GridKind, n: usize, t1: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidBounds(format!("need at least 2 samples, got {n}")));
        }
        if !t1.is_finite() {
            return Err(Error::InvalidBounds("start time must be finite".into()));
        }
        let times = match kind {
            GridKind::Regular { h } => {
                if !(h > 0.0 && h.is_finite()) {
                    return Err(Error::InvalidBounds(format!("h = {h} must be positive")));
                }
                (0..n).map(|k| t1 + k as f64 * h).collect()
            }
            GridKind::IrregularUniform { h_lb, h_hb, seed } => {
                if !(h_lb > 0.0 && h_lb <= h_hb && h_hb.is_finite()) {
                    return Err(Error::InvalidBounds(format!("need 0 < h_lb <= h_hb, got [{h_lb}, {h_hb}]")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut t = t1;
                let mut times = Vec::with_capacity(n);
                times.push(t);
                for _ in 1..n {
                    t += if h_hb > h_lb { rng.gen_range(h_lb..=h_hb) } else { h_lb };
                    times.push(t);
                }
                times
            }
        };
        Ok(Self { times, kind })
    }

    /// Wraps externally supplied time stamps, e.g. read from a dataset file.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        validate_times(&times)?;
        let kind = match crate::lti::regular_step(&times) {
            Some(h) => GridKind::Regular { h },
            None => {
                let gaps = times.windows(2).map(|w| w[1] - w[0]);
                let lo = gaps.clone().fold(f64::INFINITY, f64::min);
                let hi = gaps.fold(0.0, f64::max);
                GridKind::IrregularUniform { h_lb: lo, h_hb: hi, seed: 0 }
            }
        };
        Ok(Self { times, kind })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn mean_gap(&self) -> f64 {
        (self.times[self.times.len() - 1] - self.times[0]) / (self.times.len() - 1) as f64
    }
}

/// i.i.d. zero-mean Gaussian measurement noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    pub variance: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(variance: f64, seed: u64) -> Result<Self> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise variance {variance} must be >= 0")));
        }
        Ok(Self { variance, seed })
    }

    pub fn sample(&self, n: usize) -> Vec<f64> {
        if self.variance == 0.0 {
            return vec![0.0; n];
        }
        let sd = self.variance.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent per-cell seed from a master seed and a path of indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(master), |acc, &p| mix64(acc ^ mix64(p)))
}

/// Continuous-time input together with noisy output samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub input: Multisine,
    pub output: SampledSignal,
}

impl Dataset {
    /// The input evaluated at the output sample times.
    pub fn sampled_input(&self) -> SampledSignal {
        let times = self.output.times().to_vec();
        let values = self.input.sample(&times);
        SampledSignal::new(times, values, None).expect("times already validated")
    }

    pub fn len(&self) -> usize {
        self.output.len()
    }

    pub fn is_empty(&self) -> bool {
        self.output.is_empty()
    }
}

/// Warns when a regular grid aliases some excitation frequency to DC.
pub fn resonant_frequencies(ms: &Multisine, h: f64) -> Vec<f64> {
    ms.components
        .iter()
        .map(|c| c.frequency)
        .filter(|w| (w * h / 2.0).sin().abs() < 1e-6)
        .collect()
}

/// Samples the steady-state system output on the grid and adds noise.
pub fn generate_dataset(
    system: &TransferFunction,
    input: &Multisine,
    grid: &SamplingGrid,
    noise: &NoiseModel,
) -> Result<Dataset> {
    let x = filter_multisine(system, input)?;
    if let GridKind::Regular { h } = grid.kind {
        let bad = resonant_frequencies(input, h);
        if !bad.is_empty() {
            log::warn!("sampling period {h} is resonant with excitation frequencies {bad:?}");
        }
    }
    let v = noise.sample(grid.len());
    let values = grid
        .times
        .iter()
        .zip(&v)
        .map(|(&t, &e)| x.eval(t) + e)
        .collect();
    Ok(Dataset {
        input: input.clone(),
        output: SampledSignal::new(grid.times.clone(), values, None)?,
    })
}
