//! Monte Carlo error estimates of the slow component against the averaged
//! dynamics, and log-log order fits.
//!
//! Paths are indexed from zero and path `i` uses `stream.child(i)` at every
//! `ε`, so the sweep runs on common random numbers. Paths run in parallel
//! but all reductions happen in path-index order, which keeps reports
//! bit-reproducible.

mod report;
mod sampler;

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::{simulate_slow_fast_with, IntegrateError, OnStep, Scheme, Snapshot, StepperConfig};
use crate::levy_rng::{Purpose, RngStream};
use crate::model::ModelSpec;
use crate::stats::{bootstrap_interval, ols, z_for_level, StatsError};

pub use crate::stats::mc_mean_ci;
pub use report::{CheckpointError, ErrorKind, ErrorReport, LevelEstimate, WeakMode};
pub use sampler::{CoupledDraw, ModelSampler, PathSampler};

pub const LEVEL: f64 = 0.95;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
/// Independent-mode reports are withheld when a half-width exceeds this
/// fraction of the smallest error.
pub const NOISE_FRACTION: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("path {path} at epsilon {epsilon} aborted: {source}")]
    Aborted {
        epsilon: f64,
        path: usize,
        #[source]
        source: IntegrateError,
    },
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Micro step used at each `ε` of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeltaPolicy {
    /// `δ = min(ε)·2^{-shift}` at every level.
    GlobalFromMin { shift: i32 },
    /// `δ = ε·2^{-shift}`.
    PerEpsilon { shift: i32 },
    Fixed { delta: f64 },
}

impl Default for DeltaPolicy {
    fn default() -> Self {
        DeltaPolicy::GlobalFromMin { shift: 6 }
    }
}

impl DeltaPolicy {
    pub fn delta(&self, epsilon: f64, eps_min: f64) -> f64 {
        match *self {
            DeltaPolicy::GlobalFromMin { shift } => eps_min * 2f64.powi(-shift),
            DeltaPolicy::PerEpsilon { shift } => epsilon * 2f64.powi(-shift),
            DeltaPolicy::Fixed { delta } => delta,
        }
    }
}

/// Scalar observable `φ` of the slow state with a declared polynomial growth
/// exponent.
#[derive(Clone)]
pub struct TestFunction {
    pub name: String,
    pub growth: f64,
    eval: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction").field("name", &self.name).field("growth", &self.growth).finish()
    }
}

impl TestFunction {
    pub fn new(name: impl Into<String>, growth: f64, eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), growth, eval: Arc::new(eval) }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("constant({c})"), 0.0, move |_| c)
    }

    /// `|x|²`.
    pub fn square_norm() -> Self {
        Self::new("square_norm", 2.0, |x| x.iter().map(|v| v * v).sum())
    }

    /// `x_i^k`.
    pub fn power(component: usize, k: i32) -> Self {
        Self::new(format!("power(x{component},{k})"), k.max(0) as f64, move |x| x[component].powi(k))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    /// Checks `|φ(x)| ≤ C(1 + |x|^growth)` along rays out to radius `10⁴`:
    /// the ratio may not grow by more than a factor 10 past radius 10.
    pub fn check_growth(&self, n: usize) -> Result<(), EstimateError> {
        let mut stream = RngStream::new(0x9e37, 0).purpose(Purpose::Probe);
        let (mut near, mut far) = (0.0f64, 0.0f64);
        for _ in 0..16 {
            let dir: Vec<f64> = (0..n).map(|_| stream.normal()).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            for k in -2..=4 {
                let r = 10f64.powi(k);
                let x: Vec<f64> = dir.iter().map(|v| v / norm * r).collect();
                let v = self.eval(&x);
                if !v.is_finite() {
                    return Err(EstimateError::Config(format!("test function {} is not finite at {x:?}", self.name)));
                }
                let ratio = v.abs() / (1.0 + r.powf(self.growth));
                if k <= 1 {
                    near = near.max(ratio);
                } else {
                    far = far.max(ratio);
                }
            }
        }
        if far > 10.0 * near.max(1e-300) && far > 1e-12 {
            return Err(EstimateError::Config(format!(
                "test function {} grows faster than |x|^{}",
                self.name, self.growth
            )));
        }
        Ok(())
    }
}

/// Outcome of [`fit_order`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum FitOutcome {
    Fitted { slope: f64, intercept: f64, r2: f64 },
    /// Some error is exactly zero (or negative); no logarithms are taken.
    Degenerate { reason: String },
    /// Fit suppressed, e.g. because Monte Carlo noise dominates.
    Withheld { reason: String },
}

impl FitOutcome {
    pub fn slope(&self) -> Option<f64> {
        match self {
            FitOutcome::Fitted { slope, .. } => Some(*slope),
            _ => None,
        }
    }

    pub fn r2(&self) -> Option<f64> {
        match self {
            FitOutcome::Fitted { r2, .. } => Some(*r2),
            _ => None,
        }
    }
}

pub const EXACT_AGREEMENT: &str = "degenerate: exact agreement";

/// OLS of `ln error` on `ln ε`.
pub fn fit_order(eps: &[f64], errors: &[f64]) -> Result<FitOutcome, EstimateError> {
    if eps.len() != errors.len() {
        return Err(EstimateError::Config("epsilon and error lists differ in length".into()));
    }
    let mut sorted = eps.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted.dedup();
    if sorted.len() < 3 || sorted.len() != eps.len() {
        return Err(EstimateError::Config("need >= 3 distinct epsilon levels".into()));
    }
    if eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(EstimateError::Config("epsilon values must be positive".into()));
    }
    if errors.iter().any(|e| !(*e > 0.0)) {
        return Ok(FitOutcome::Degenerate { reason: EXACT_AGREEMENT.into() });
    }
    let lx: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let (slope, intercept, r2) = ols(&lx, &ly);
    Ok(FitOutcome::Fitted { slope, intercept, r2 })
}

/// Sorts a sweep into strictly decreasing order, rejecting duplicates and
/// short lists.
pub fn epsilon_levels(eps: &[f64]) -> Result<Vec<f64>, EstimateError> {
    if eps.len() < 3 {
        return Err(EstimateError::Config(format!("need >= 3 levels, got {}", eps.len())));
    }
    if let Some(e) = eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(EstimateError::Config(format!("epsilon must be positive, got {e}")));
    }
    let mut v = eps.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    if v.windows(2).any(|w| w[0] == w[1]) {
        return Err(EstimateError::Config("epsilon levels must be distinct".into()));
    }
    Ok(v)
}

/// Settings shared by the strong and weak sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub epsilons: Vec<f64>,
    pub horizon: f64,
    pub n_paths: usize,
    pub delta: DeltaPolicy,
}

impl Sweep {
    fn levels(&self) -> Result<Vec<(f64, f64)>, EstimateError> {
        let eps = epsilon_levels(&self.epsilons)?;
        if self.n_paths < 2 {
            return Err(EstimateError::Config("need at least 2 paths per level".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(EstimateError::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        let eps_min = *eps.last().unwrap();
        eps.into_iter()
            .map(|e| {
                let d = self.delta.delta(e, eps_min);
                StepperConfig::new(e, self.horizon).with_delta(d).validate(true)?;
                Ok((e, d))
            })
            .collect()
    }
}

fn run_paths<T: Send>(
    n: usize,
    epsilon: f64,
    f: impl Fn(usize) -> Result<T, IntegrateError> + Sync,
) -> Result<Vec<T>, EstimateError> {
    (0..n)
        .into_par_iter()
        .map(|i| f(i).map_err(|source| EstimateError::Aborted { epsilon, path: i, source }))
        .collect()
}

/// `(E sup_t |X^ε − X̄|^p)^{1/p}` per level with a percentile bootstrap
/// interval, and the fitted order.
pub fn strong_error(
    sampler: &dyn PathSampler,
    sweep: &Sweep,
    p: f64,
    stream: &RngStream,
) -> Result<ErrorReport, EstimateError> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(EstimateError::Config(format!("p must be >= 2, got {p}")));
    }
    sampler.check_coupling()?;
    let levels = sweep.levels()?;
    let mut out = Vec::with_capacity(levels.len());
    let mut extrapolated = 0usize;
    for (li, &(eps, delta)) in levels.iter().enumerate() {
        let draws = run_paths(sweep.n_paths, eps, |i| sampler.coupled(eps, delta, sweep.horizon, &[], &stream.child(i as u64)))?;
        extrapolated += draws.iter().map(|d| d.extrapolated).sum::<usize>();
        let powered: Vec<f64> = draws.iter().map(|d| d.sup_distance.powf(p)).collect();
        let stat = |v: &[f64]| crate::stats::shifted_mean(v).max(0.0).powf(1.0 / p);
        let error = stat(&powered);
        let (lo, hi) = if powered.iter().all(|&v| v == 0.0) {
            (0.0, 0.0)
        } else {
            let mut boot = stream.purpose(Purpose::Bootstrap).child(li as u64);
            bootstrap_interval(&powered, stat, BOOTSTRAP_RESAMPLES, LEVEL, &mut boot)?
        };
        out.push(LevelEstimate {
            epsilon: eps,
            delta,
            error,
            half_width: 0.5 * (hi - lo),
            ci_lo: lo,
            ci_hi: hi,
            n_paths: sweep.n_paths,
            checkpoints: Vec::new(),
        });
    }
    ErrorReport::assemble(ErrorKind::Strong { p }, sampler, sweep, stream, out, extrapolated, None)
}

/// `max_t |Eφ(X^ε_t) − Eφ(X̄_t)|` over the checkpoints `T/4, T/2, 3T/4, T`.
pub fn weak_error(
    sampler: &dyn PathSampler,
    phi: &TestFunction,
    sweep: &Sweep,
    mode: WeakMode,
    stream: &RngStream,
) -> Result<ErrorReport, EstimateError> {
    if mode == WeakMode::CoupledDifference {
        sampler.check_coupling()?;
    }
    let levels = sweep.levels()?;
    let times: Vec<f64> = (1..=4).map(|k| sweep.horizon * k as f64 / 4.0).collect();
    let mut out = Vec::with_capacity(levels.len());
    let mut extrapolated = 0usize;
    for &(eps, delta) in &levels {
        let per_time: Vec<(f64, f64)> = match mode {
            WeakMode::CoupledDifference => {
                let draws = run_paths(sweep.n_paths, eps, |i| sampler.coupled(eps, delta, sweep.horizon, &times, &stream.child(i as u64)))?;
                extrapolated += draws.iter().map(|d| d.extrapolated).sum::<usize>();
                (0..times.len())
                    .map(|k| {
                        let diffs: Vec<f64> =
                            draws.iter().map(|d| phi.eval(&d.slow[k]) - phi.eval(&d.averaged[k])).collect();
                        mc_mean_ci(&diffs, LEVEL)
                    })
                    .collect::<Result<_, _>>()?
            }
            WeakMode::Independent => {
                let fast = stream.purpose(Purpose::Custom(0x5f));
                let avg = stream.purpose(Purpose::Custom(0xa9));
                let a = run_paths(sweep.n_paths, eps, |i| sampler.slow_fast(eps, delta, sweep.horizon, &times, &fast.child(i as u64)))?;
                let b = run_paths(sweep.n_paths, eps, |i| sampler.averaged(delta, sweep.horizon, &times, &avg.child(i as u64)))?;
                extrapolated += b.iter().map(|(_, e)| e).sum::<usize>();
                (0..times.len())
                    .map(|k| {
                        let va: Vec<f64> = a.iter().map(|s| phi.eval(&s[k])).collect();
                        let vb: Vec<f64> = b.iter().map(|(s, _)| phi.eval(&s[k])).collect();
                        let (ma, ha) = mc_mean_ci(&va, LEVEL)?;
                        let (mb, hb) = mc_mean_ci(&vb, LEVEL)?;
                        Ok((ma - mb, ha.hypot(hb)))
                    })
                    .collect::<Result<_, StatsError>>()?
            }
        };
        let checkpoints: Vec<CheckpointError> = times
            .iter()
            .zip(&per_time)
            .map(|(&t, &(m, h))| CheckpointError { t, difference: m, half_width: h })
            .collect();
        let best = checkpoints
            .iter()
            .max_by(|a, b| a.difference.abs().total_cmp(&b.difference.abs()))
            .expect("four checkpoints");
        let error = best.difference.abs();
        let hw = best.half_width;
        out.push(LevelEstimate {
            epsilon: eps,
            delta,
            error,
            half_width: hw,
            ci_lo: (error - hw).max(0.0),
            ci_hi: error + hw,
            n_paths: sweep.n_paths,
            checkpoints,
        });
    }
    let withheld = (mode == WeakMode::Independent)
        .then(|| {
            let smallest = out.iter().map(|l| l.error).fold(f64::INFINITY, f64::min);
            let widest = out.iter().map(|l| l.half_width).fold(0.0, f64::max);
            (widest > NOISE_FRACTION * smallest && smallest > 0.0).then(|| {
                format!("noise-dominated: half-width {widest:.3e} exceeds {NOISE_FRACTION} x smallest error {smallest:.3e}")
            })
        })
        .flatten();
    ErrorReport::assemble(
        ErrorKind::Weak { test_function: phi.name.clone(), mode },
        sampler,
        sweep,
        stream,
        out,
        extrapolated,
        withheld,
    )
}

/// One row of [`fast_moment_sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastMomentRow {
    pub epsilon: f64,
    pub delta: f64,
    /// `sup_t E|Y_t|^p` over the micro grid.
    pub marginal_sup: f64,
    pub marginal_half_width: f64,
    pub marginal_argmax_t: f64,
    /// `E sup_t |Y_t|^p`.
    pub pathwise_sup: f64,
    pub pathwise_half_width: f64,
    pub n_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastMomentTable {
    pub model: String,
    pub p: f64,
    pub horizon: f64,
    pub rows: Vec<FastMomentRow>,
    /// `max/min` of the marginal statistic across the sweep.
    pub marginal_ratio: f64,
    /// Set when the marginal statistic at least doubles across the sweep.
    pub marginal_flag: bool,
    /// Every step to a smaller `ε` raises the pathwise statistic by more
    /// than three paired standard errors.
    pub pathwise_increasing: bool,
}

impl FastMomentTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,delta,marginal_sup,marginal_ci_lo,marginal_ci_hi,marginal_argmax_t,pathwise_sup,pathwise_ci_lo,pathwise_ci_hi,n_paths\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
                r.epsilon,
                r.delta,
                r.marginal_sup,
                r.marginal_sup - r.marginal_half_width,
                r.marginal_sup + r.marginal_half_width,
                r.marginal_argmax_t,
                r.pathwise_sup,
                r.pathwise_sup - r.pathwise_half_width,
                r.pathwise_sup + r.pathwise_half_width,
                r.n_paths
            ));
        }
        s
    }
}

/// Marginal and pathwise `p`-th moments of `Y^ε` over `[0, T]` for each `ε`.
#[allow(clippy::too_many_arguments)]
pub fn fast_moment_sweep(
    spec: &ModelSpec,
    x0: &[f64],
    y0: &[f64],
    sweep: &Sweep,
    p: f64,
    scheme: Scheme,
    stream: &RngStream,
) -> Result<FastMomentTable, EstimateError> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(EstimateError::Config(format!("p must be positive, got {p}")));
    }
    let levels = sweep.levels()?;
    let z = z_for_level(LEVEL)?;
    let mut rows = Vec::with_capacity(levels.len());
    let mut sups: Vec<Vec<f64>> = Vec::with_capacity(levels.len());
    for &(eps, delta) in &levels {
        let cfg = StepperConfig::new(eps, sweep.horizon).with_delta(delta).with_scheme(scheme);
        let n_grid = cfg.steps() + 1;
        let paths = run_paths(sweep.n_paths, eps, |i| {
            let mut grid = Vec::with_capacity(n_grid);
            let mut sup = 0.0f64;
            let mut obs = |s: &Snapshot<'_>| {
                let v = s.y.iter().map(|v| v * v).sum::<f64>().sqrt().powf(p);
                sup = sup.max(v);
                if s.grid {
                    grid.push(v);
                }
            };
            simulate_slow_fast_with(spec, x0, y0, &cfg, &stream.child(i as u64), &[], &mut OnStep(&mut obs))?;
            Ok((grid, sup))
        })?;
        let len = paths.iter().map(|(g, _)| g.len()).min().unwrap_or(0);
        let (mut best, mut best_hw, mut best_k) = (f64::NEG_INFINITY, 0.0, 0);
        for k in 0..len {
            let col: Vec<f64> = paths.iter().map(|(g, _)| g[k]).collect();
            let (m, hw) = mc_mean_ci(&col, LEVEL)?;
            if m > best {
                (best, best_hw, best_k) = (m, hw, k);
            }
        }
        let sup: Vec<f64> = paths.iter().map(|(_, s)| *s).collect();
        let (pm, phw) = mc_mean_ci(&sup, LEVEL)?;
        rows.push(FastMomentRow {
            epsilon: eps,
            delta,
            marginal_sup: best,
            marginal_half_width: best_hw,
            marginal_argmax_t: (best_k as f64 * delta).min(sweep.horizon),
            pathwise_sup: pm,
            pathwise_half_width: phw,
            n_paths: sweep.n_paths,
        });
        sups.push(sup);
    }
    let max = rows.iter().map(|r| r.marginal_sup).fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.marginal_sup).fold(f64::INFINITY, f64::min);
    let marginal_ratio = if max == 0.0 { 1.0 } else { max / min };
    let pathwise_increasing = sups.windows(2).all(|w| {
        let d: Vec<f64> = w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect();
        match mc_mean_ci(&d, LEVEL) {
            Ok((m, hw)) => m > 3.0 * hw / z,
            Err(_) => false,
        }
    });
    Ok(FastMomentTable {
        model: spec.name().to_string(),
        p,
        horizon: sweep.horizon,
        rows,
        marginal_ratio,
        marginal_flag: marginal_ratio >= 2.0,
        pathwise_increasing,
    })
}

/// Spearman rank correlation, ties broken by position.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (rank, i) in idx.into_iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}
