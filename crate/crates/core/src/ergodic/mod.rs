//! Invariant measure of the frozen fast equation, averaged coefficients,
//! the Poisson-equation corrector and ergodicity diagnostics.
//!
//! Expectations under `μ^x` are time averages pooled over a few long
//! frozen chains. Their confidence intervals come from batch means, since
//! successive samples of one chain are correlated.

mod poisson;
mod table;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::{simulate_frozen_with, IntegrateError, OnStep, Scheme, Snapshot};
use crate::levy_rng::RngStream;
use crate::linalg::{outer_self, psd_sqrt, symmetrize, PsdRoot};
use crate::model::ModelSpec;
use crate::stats::{batch_means, BatchMeans, StatsError};

pub use poisson::{
    convergence_to_average, ergodicity_decay, poisson_cell, poisson_centering, semigroup_identity, CenteringCheck,
    DecayCurve, DriftCurve, PoissonEstimate, SemigroupCheck, TailDiagnostic,
};
pub use table::{build_averaged_table, AveragedTable, Extrapolation, TableConfig, TableHeader, TableQuery, Validation,
    TABLE_VERSION,
};

/// Batches used for every batch-means interval in this module.
pub const BATCHES: usize = 32;
/// Effective sample sizes below this set [`InvariantSample::low_ess`].
pub const MIN_ESS: f64 = 100.0;
pub const LEVEL: f64 = 0.95;

#[derive(Debug, Error)]
pub enum ErgodicError {
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("averaged table rejected: leave-node-out error {error:.3e} at node {node:?} exceeds {tolerance:.3e}; use a finer grid")]
    TableRejected { node: Vec<f64>, error: f64, tolerance: f64 },
    #[error("decay rate {rate} is not positive; the corrector integral is not demonstrably convergent")]
    NotConvergent { rate: f64 },
    #[error("table file: {0}")]
    Format(String),
}

/// Sampler settings for `μ^x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantConfig {
    /// Start of every chain; zeros when absent.
    #[serde(default)]
    pub y0: Option<Vec<f64>>,
    /// Discarded initial time of each chain.
    pub burn_in: f64,
    /// Sampled time of each chain after the burn-in.
    pub horizon: f64,
    #[serde(default = "default_chains")]
    pub n_chains: usize,
    #[serde(default = "default_frozen_delta")]
    pub delta: f64,
    /// Keep every `thin`-th grid sample.
    #[serde(default = "default_thin")]
    pub thin: usize,
}

fn default_chains() -> usize {
    8
}
fn default_frozen_delta() -> f64 {
    2f64.powi(-6)
}
fn default_thin() -> usize {
    1
}

impl Default for InvariantConfig {
    fn default() -> Self {
        Self {
            y0: None,
            burn_in: 5.0,
            horizon: 200.0,
            n_chains: default_chains(),
            delta: default_frozen_delta(),
            thin: default_thin(),
        }
    }
}

impl InvariantConfig {
    /// Burn-in `5/γ̂` and sampled horizon `100/γ̂` from a pilot decay fit.
    pub fn from_pilot(rate: f64) -> Result<Self, ErgodicError> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(ErgodicError::NotConvergent { rate });
        }
        Ok(Self {
            burn_in: 5.0 / rate,
            horizon: 100.0 / rate,
            ..Self::default()
        })
    }

    pub fn validate(&self, m: usize) -> Result<(), ErgodicError> {
        let bad = |s: String| Err(ErgodicError::Config(s));
        if !(self.burn_in >= 0.0 && self.burn_in.is_finite()) {
            return bad(format!("burn_in must be >= 0, got {}", self.burn_in));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be > 0, got {}", self.horizon));
        }
        if self.n_chains == 0 || self.thin == 0 {
            return bad("n_chains and thin must be positive".into());
        }
        if let Some(y) = &self.y0 {
            if y.len() != m {
                return bad(format!("y0 has dimension {}, model has m = {m}", y.len()));
            }
        }
        Ok(())
    }
}

/// Pooled post-burn-in samples of `μ^x`, all with weight `1/len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantSample {
    pub x: Vec<f64>,
    pub m: usize,
    /// One flattened `len × m` block per chain.
    pub chains: Vec<Vec<f64>>,
    pub burn_in: f64,
    pub horizon: f64,
    pub delta: f64,
    pub thin: usize,
    /// From the batch-means autocorrelation time of `|y|²`.
    pub effective_sample_size: f64,
    pub low_ess: bool,
}

impl InvariantSample {
    pub fn len(&self) -> usize {
        self.chains.iter().map(|c| c.len() / self.m).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.chains.iter().flat_map(move |c| c.chunks_exact(self.m))
    }

    /// Batch-means estimate of `∫ φ dμ^x`.
    pub fn expectation(&self, phi: impl Fn(&[f64]) -> f64) -> Result<BatchMeans, ErgodicError> {
        let series: Vec<Vec<f64>> = self.chains.iter().map(|c| c.chunks_exact(self.m).map(&phi).collect()).collect();
        let refs: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
        Ok(batch_means(&refs, BATCHES, LEVEL)?)
    }

    /// `∫ y_i^k dμ^x`.
    pub fn moment(&self, component: usize, k: i32) -> Result<BatchMeans, ErgodicError> {
        self.expectation(|y| y[component].powi(k))
    }
}

/// Runs `n_chains` frozen chains at `x` and pools their post-burn-in grid
/// samples.
pub fn estimate_invariant_measure(
    spec: &ModelSpec,
    x: &[f64],
    cfg: &InvariantConfig,
    stream: &RngStream,
) -> Result<InvariantSample, ErgodicError> {
    cfg.validate(spec.m())?;
    let m = spec.m();
    let y0 = cfg.y0.clone().unwrap_or_else(|| vec![0.0; m]);
    let total = cfg.burn_in + cfg.horizon;
    let chains = (0..cfg.n_chains)
        .map(|c| {
            let mut samples = Vec::new();
            let mut k = 0usize;
            let mut keep = |s: &Snapshot<'_>| {
                if s.grid && s.t > cfg.burn_in {
                    if k % cfg.thin == 0 {
                        samples.extend_from_slice(s.y);
                    }
                    k += 1;
                }
            };
            simulate_frozen_with(
                spec,
                x,
                &y0,
                total,
                cfg.delta,
                Scheme::TamedEuler,
                &stream.child(c as u64),
                &[],
                &mut OnStep(&mut keep),
            )?;
            Ok(samples)
        })
        .collect::<Result<Vec<_>, ErgodicError>>()?;
    let mut sample = InvariantSample {
        x: x.to_vec(),
        m,
        chains,
        burn_in: cfg.burn_in,
        horizon: cfg.horizon,
        delta: cfg.delta,
        thin: cfg.thin,
        effective_sample_size: 0.0,
        low_ess: true,
    };
    let bm = sample.expectation(|y| y.iter().map(|v| v * v).sum())?;
    sample.effective_sample_size = bm.effective_sample_size;
    sample.low_ess = bm.effective_sample_size < MIN_ESS;
    Ok(sample)
}

/// Per-point values of a vector field on an invariant sample, as series
/// `out[component][chain]`.
fn field_series(
    inv: &InvariantSample,
    width: usize,
    mut eval: impl FnMut(&[f64], &mut [f64]),
) -> Vec<Vec<Vec<f64>>> {
    let mut out = vec![vec![Vec::new(); inv.chains.len()]; width];
    let mut buf = vec![0.0; width];
    for (c, chain) in inv.chains.iter().enumerate() {
        for y in chain.chunks_exact(inv.m) {
            eval(y, &mut buf);
            for (i, v) in buf.iter().enumerate() {
                out[i][c].push(*v);
            }
        }
    }
    out
}

fn summarize(series: &[Vec<Vec<f64>>]) -> Result<(Vec<f64>, Vec<f64>), ErgodicError> {
    let mut mean = Vec::with_capacity(series.len());
    let mut ci = Vec::with_capacity(series.len());
    for comp in series {
        let refs: Vec<&[f64]> = comp.iter().map(|s| s.as_slice()).collect();
        let bm = batch_means(&refs, BATCHES, LEVEL)?;
        mean.push(bm.mean);
        ci.push(bm.half_width);
    }
    Ok((mean, ci))
}

/// `b̄(x) = ∫ b(x, y) μ^x(dy)` with batch-means half-widths per component.
pub fn averaged_drift(spec: &ModelSpec, x: &[f64], inv: &InvariantSample) -> Result<(Vec<f64>, Vec<f64>), ErgodicError> {
    check_same_x(x, inv)?;
    let series = field_series(inv, spec.n(), |y, out| spec.b(x, y, out));
    summarize(&series)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedDiffusion {
    /// Row-major `n × n` estimate of `∫ σσ*(x, y) μ^x(dy)`, symmetrized.
    pub cov: Vec<f64>,
    pub cov_ci: Vec<f64>,
    /// PSD square root `σ̄(x)`.
    pub root: PsdRoot,
}

pub fn averaged_diffusion(spec: &ModelSpec, x: &[f64], inv: &InvariantSample) -> Result<AveragedDiffusion, ErgodicError> {
    check_same_x(x, inv)?;
    let (n, d1) = (spec.n(), spec.d1());
    let mut sig = vec![0.0; n * d1];
    let series = field_series(inv, n * n, |y, out| {
        spec.sigma(x, y, &mut sig);
        outer_self(&sig, n, d1, out);
    });
    let (mut cov, mut cov_ci) = summarize(&series)?;
    symmetrize(&mut cov, n);
    symmetrize(&mut cov_ci, n);
    let root = psd_sqrt(&cov, n);
    Ok(AveragedDiffusion { cov, cov_ci, root })
}

fn check_same_x(x: &[f64], inv: &InvariantSample) -> Result<(), ErgodicError> {
    if inv.x != x {
        return Err(ErgodicError::Config(format!(
            "invariant sample was estimated at x = {:?}, not {x:?}",
            inv.x
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
