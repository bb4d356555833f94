//! Reproducible random streams and finite-activity compound-Poisson noise.
//!
//! Every random quantity in the crate is drawn from an [`RngStream`], a
//! ChaCha8 generator whose 256-bit key is the triple
//! `(master_seed, stream_id, purpose)`. Because the key fully determines the
//! keystream, two streams with the same triple produce identical draws on
//! every platform, and changing any component yields an unrelated stream.
//! Simulations derive one stream per path (via [`RngStream::child`]) and one
//! substream per noise source (via [`RngStream::purpose`]), so the slow
//! Wiener process, fast Wiener process and the two jump measures can be
//! replayed independently of each other.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::quadrature;

const DOMAIN_TAG: u64 = 0x6d73_6c65_7679_0001;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LevyError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid jump measure: {0}")]
    InvalidMeasure(String),
}

/// What a substream is used for. Distinct purposes give independent streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Root,
    SlowWiener,
    FastWiener,
    SlowJumps,
    FastJumps,
    AveragedWiener,
    Bootstrap,
    Probe,
    Endpoint,
    Custom(u64),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Root => 0,
            Purpose::SlowWiener => 1,
            Purpose::FastWiener => 2,
            Purpose::SlowJumps => 3,
            Purpose::FastJumps => 4,
            Purpose::AveragedWiener => 5,
            Purpose::Bootstrap => 6,
            Purpose::Probe => 7,
            Purpose::Endpoint => 8,
            Purpose::Custom(v) => 0x1000_0000_0000_0000 | v,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A keyed, replayable random stream.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    purpose: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self::keyed(master_seed, stream_id, Purpose::Root.tag())
    }

    fn keyed(master_seed: u64, stream_id: u64, purpose: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&stream_id.to_le_bytes());
        key[16..24].copy_from_slice(&purpose.to_le_bytes());
        key[24..].copy_from_slice(&DOMAIN_TAG.to_le_bytes());
        Self {
            master_seed,
            stream_id,
            purpose,
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh stream with the same seed and id but a different purpose.
    /// Independent of how many draws were taken from `self`.
    pub fn purpose(&self, purpose: Purpose) -> RngStream {
        Self::keyed(self.master_seed, self.stream_id, self.purpose ^ purpose.tag().rotate_left(17))
    }

    /// Fresh stream for sub-task `index` (a path, chain or grid node).
    pub fn child(&self, index: u64) -> RngStream {
        let id = splitmix64(splitmix64(self.stream_id ^ self.purpose.rotate_left(29)) ^ index);
        Self::keyed(self.master_seed, id, 0)
    }

    /// Uniform on [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u = self.rng.random::<f64>();
            if u > 0.0 {
                return u;
            }
        }
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Exponential with the given rate (> 0).
    #[inline]
    pub fn exponential(&mut self, rate: f64) -> f64 {
        -self.uniform_open().ln() / rate
    }

    /// Uniform integer in `0..n`.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

/// Law of a single jump mark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SizeFamily {
    PointMass { c: f64 },
    Uniform { a: f64, b: f64 },
    /// Gaussian with mean `mu` and deviation `sd`, conditioned on `[-bound, bound]`.
    TruncatedGaussian { mu: f64, sd: f64, bound: f64 },
}

impl SizeFamily {
    fn validate(&self) -> Result<(), LevyError> {
        let bad = |m: &str| Err(LevyError::InvalidMeasure(m.to_string()));
        match *self {
            SizeFamily::PointMass { c } if !c.is_finite() => bad("point mass must be finite"),
            SizeFamily::Uniform { a, b } if !(a.is_finite() && b.is_finite() && a < b) => {
                bad("uniform needs finite a < b")
            }
            SizeFamily::TruncatedGaussian { mu, sd, bound }
                if !(mu.is_finite() && sd > 0.0 && sd.is_finite() && bound > 0.0 && bound.is_finite()) =>
            {
                bad("truncated gaussian needs finite mu, sd > 0, bound > 0")
            }
            _ => Ok(()),
        }
    }

    /// Closed-form first and second moments.
    pub fn analytic_moments(&self) -> (f64, f64) {
        match *self {
            SizeFamily::PointMass { c } => (c, c * c),
            SizeFamily::Uniform { a, b } => ((a + b) / 2.0, (a * a + a * b + b * b) / 3.0),
            SizeFamily::TruncatedGaussian { mu, sd, bound } => {
                let (al, be) = ((-bound - mu) / sd, (bound - mu) / sd);
                let (pa, pb) = (std_pdf(al), std_pdf(be));
                let z = std_cdf(be) - std_cdf(al);
                let shift = (pa - pb) / z;
                let mean = mu + sd * shift;
                let var = sd * sd * (1.0 + (al * pa - be * pb) / z - shift * shift);
                (mean, var + mean * mean)
            }
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            SizeFamily::PointMass { c } => (c, c),
            SizeFamily::Uniform { a, b } => (a, b),
            SizeFamily::TruncatedGaussian { bound, .. } => (-bound, bound),
        }
    }

    /// Quadrature rule `(z_i, w_i)` with `sum w_i g(z_i) ≈ E g(Z)`.
    pub fn law_rule(&self) -> Vec<(f64, f64)> {
        match *self {
            SizeFamily::PointMass { c } => vec![(c, 1.0)],
            SizeFamily::Uniform { a, b } => {
                let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
                quadrature::gl64()
                    .iter()
                    .map(|&(z, w)| (mid + half * z, 0.5 * w))
                    .collect()
            }
            SizeFamily::TruncatedGaussian { mu, sd, bound } => {
                let (al, be) = ((-bound - mu) / sd, (bound - mu) / sd);
                let norm = std_cdf(be) - std_cdf(al);
                quadrature::gl64()
                    .iter()
                    .map(|&(z, w)| {
                        let v = bound * z;
                        (v, w * bound * std_pdf((v - mu) / sd) / (sd * norm))
                    })
                    .collect()
            }
        }
    }

    fn sample(&self, stream: &mut RngStream) -> f64 {
        match *self {
            SizeFamily::PointMass { c } => c,
            SizeFamily::Uniform { a, b } => a + (b - a) * stream.uniform(),
            SizeFamily::TruncatedGaussian { mu, sd, bound } => {
                let (al, be) = ((-bound - mu) / sd, (bound - mu) / sd);
                let (ca, cb) = (std_cdf(al), std_cdf(be));
                if cb - ca > 0.25 {
                    loop {
                        let v = mu + sd * stream.normal();
                        if (-bound..=bound).contains(&v) {
                            return v;
                        }
                    }
                }
                let u = ca + (cb - ca) * stream.uniform_open();
                let v = mu + sd * std_normal().inverse_cdf(u);
                v.clamp(-bound, bound)
            }
        }
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

fn std_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn std_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// A finite Lévy measure `ν = intensity · Law(Z)` on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawJumpMeasure", into = "RawJumpMeasure")]
pub struct JumpMeasureSpec {
    intensity: f64,
    size: SizeFamily,
    m1: f64,
    m2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJumpMeasure {
    intensity: f64,
    size: SizeFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m2: Option<f64>,
}

impl TryFrom<RawJumpMeasure> for JumpMeasureSpec {
    type Error = LevyError;
    fn try_from(raw: RawJumpMeasure) -> Result<Self, LevyError> {
        let spec = JumpMeasureSpec::new(raw.intensity, raw.size)?;
        match (raw.m1, raw.m2) {
            (None, None) => Ok(spec),
            (m1, m2) => JumpMeasureSpec::with_declared(
                raw.intensity,
                raw.size,
                m1.unwrap_or(spec.m1),
                m2.unwrap_or(spec.m2),
            ),
        }
    }
}

impl From<JumpMeasureSpec> for RawJumpMeasure {
    fn from(s: JumpMeasureSpec) -> Self {
        RawJumpMeasure {
            intensity: s.intensity,
            size: s.size,
            m1: Some(s.m1),
            m2: Some(s.m2),
        }
    }
}

const MOMENT_TOL: f64 = 1e-12;

impl JumpMeasureSpec {
    /// Builds a measure whose declared moments are the analytic ones.
    pub fn new(intensity: f64, size: SizeFamily) -> Result<Self, LevyError> {
        if !(intensity >= 0.0 && intensity.is_finite()) {
            return Err(LevyError::InvalidMeasure(format!(
                "intensity must be finite and nonnegative, got {intensity}"
            )));
        }
        size.validate()?;
        let (m1, m2) = size.analytic_moments();
        Ok(Self { intensity, size, m1, m2 })
    }

    /// Builds a measure with explicitly declared moments, which must agree
    /// with the analytic moments of `size`.
    pub fn with_declared(intensity: f64, size: SizeFamily, m1: f64, m2: f64) -> Result<Self, LevyError> {
        let spec = Self::new(intensity, size)?;
        for (name, declared, exact) in [("m1", m1, spec.m1), ("m2", m2, spec.m2)] {
            if !((declared - exact).abs() <= MOMENT_TOL * exact.abs().max(1.0)) {
                return Err(LevyError::InvalidMeasure(format!(
                    "declared {name} = {declared} disagrees with analytic value {exact}"
                )));
            }
        }
        Ok(spec)
    }

    /// No jumps at all.
    pub fn none() -> Self {
        Self::new(0.0, SizeFamily::PointMass { c: 0.0 }).expect("valid")
    }

    /// uniform(-0.5, 0.5) marks at unit rate.
    pub fn default_uniform() -> Self {
        Self::new(1.0, SizeFamily::Uniform { a: -0.5, b: 0.5 }).expect("valid")
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }
    pub fn size(&self) -> SizeFamily {
        self.size
    }
    pub fn m1(&self) -> f64 {
        self.m1
    }
    pub fn m2(&self) -> f64 {
        self.m2
    }
    pub fn support(&self) -> (f64, f64) {
        self.size.support()
    }

    /// `∫ z ν(dz)`.
    pub fn compensator_rate(&self) -> f64 {
        compensator_rate(self)
    }

    /// Same law with the intensity multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, LevyError> {
        Self::new(self.intensity * factor, self.size)
    }

    /// `∫ g(z) ν(dz)` by the law's quadrature rule.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        if self.intensity == 0.0 {
            return 0.0;
        }
        self.intensity * self.size.law_rule().iter().map(|&(z, w)| w * g(z)).sum::<f64>()
    }
}

/// Event times of a Poisson process with the given rate on `(0, horizon]`,
/// drawn from exponential inter-arrival times.
pub fn sample_jump_times(intensity: f64, horizon: f64, stream: &mut RngStream) -> Result<Vec<f64>, LevyError> {
    if !(intensity >= 0.0) || !intensity.is_finite() {
        return Err(LevyError::InvalidArgument(format!("intensity must be >= 0, got {intensity}")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(LevyError::InvalidArgument(format!("horizon must be > 0, got {horizon}")));
    }
    let mut times = Vec::new();
    if intensity == 0.0 {
        return Ok(times);
    }
    let mut t = 0.0f64;
    loop {
        let mut next = t + stream.exponential(intensity);
        if next <= t {
            next = t.next_up();
        }
        if next > horizon {
            return Ok(times);
        }
        times.push(next);
        t = next;
    }
}

/// One mark drawn from the measure's size law.
pub fn sample_jump_size(spec: &JumpMeasureSpec, stream: &mut RngStream) -> f64 {
    spec.size.sample(stream)
}

pub fn compensator_rate(spec: &JumpMeasureSpec) -> f64 {
    spec.intensity * spec.m1
}
