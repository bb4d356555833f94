//! Jump-adapted tamed Euler stepping for the slow-fast system, the frozen
//! fast equation and the averaged slow equation.
//!
//! All jump times are drawn up front and merged with the micro grid. Each
//! segment first takes a diffusion step over its length from the pre-state,
//! then applies the jumps that occur at its right end. Drift increments are
//! tamed as `h·b / (1 + h|b|)`; the compensator `h·∫h ν(dz)` of the jump
//! measure is subtracted outside the taming.
//!
//! Noise sources use separate substreams of the caller's stream, so a pair
//! of runs that share the slow substreams sees identical `W¹` increments and
//! `N¹` events.

mod clock;
mod path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::levy_rng::{sample_jump_size, sample_jump_times, LevyError, Purpose, RngStream};
use crate::linalg::{min_eigenvalue, psd_sqrt};
use crate::model::ModelSpec;

pub use path::{JumpEvent, JumpMismatch, JumpSource, PathSample};

/// Largest allowed fast effective step `δ/ε`.
pub const MAX_FAST_STEP: f64 = 1.0 / 16.0;

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite state at t = {time}")]
    BlowUp { time: f64 },
    #[error("implicit step did not converge at t = {time}")]
    NewtonFailed { time: f64 },
    #[error("averaged table queried outside its box at x = {x:?}")]
    OutOfTable { x: Vec<f64> },
    #[error("averaged covariance not positive semidefinite at x = {x:?} (min eigenvalue {min_eig})")]
    NotPsd { x: Vec<f64>, min_eig: f64 },
    #[error(transparent)]
    Levy(#[from] LevyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    TamedEuler,
    /// Implicit drift stage solved by scalar Newton, explicit noise. 1D only.
    SplitStepImplicit,
    /// Untamed Euler, for taming-consistency comparisons.
    ExplicitEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperConfig {
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default)]
    pub scheme: Scheme,
    pub horizon: f64,
}

impl StepperConfig {
    /// Tamed Euler with [`StepperConfig::default_delta`].
    pub fn new(epsilon: f64, horizon: f64) -> Self {
        Self {
            epsilon,
            delta: Self::default_delta(epsilon),
            scheme: Scheme::TamedEuler,
            horizon,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    /// `ε·2⁻⁶`, not below `2⁻¹⁶` unless that would break the fast-step bound.
    pub fn default_delta(epsilon: f64) -> f64 {
        (epsilon / 64.0).max(2f64.powi(-16)).min(epsilon * MAX_FAST_STEP)
    }

    pub fn steps(&self) -> usize {
        clock::grid_steps(self.horizon, self.delta)
    }

    pub fn validate(&self, with_fast: bool) -> Result<(), IntegrateError> {
        let bad = |m: String| Err(IntegrateError::Config(m));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("micro step must be positive, got {}", self.delta));
        }
        if with_fast {
            if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
                return bad(format!("epsilon must be positive, got {}", self.epsilon));
            }
            if self.delta > self.epsilon * MAX_FAST_STEP * (1.0 + 1e-12) {
                return bad(format!(
                    "micro step {} exceeds epsilon/16 = {}",
                    self.delta,
                    self.epsilon * MAX_FAST_STEP
                ));
            }
        }
        Ok(())
    }
}

/// Averaged coefficients as seen by the integrators.
pub trait AveragedField: Send + Sync {
    fn slow_dim(&self) -> usize;
    /// Writes `b̄(x)`; returns `true` if the query was extrapolated.
    fn drift(&self, x: &[f64], out: &mut [f64]) -> Result<bool, IntegrateError>;
    /// Writes the row-major `n × n` matrix `σσ*‾(x)`; returns `true` if extrapolated.
    fn covariance(&self, x: &[f64], out: &mut [f64]) -> Result<bool, IntegrateError>;
}

/// State after a tick. Components absent from a run are empty slices.
#[derive(Debug)]
pub struct Snapshot<'a> {
    pub t: f64,
    /// The tick is a micro-grid time (including `t = 0`).
    pub grid: bool,
    pub checkpoint: Option<usize>,
    /// Slow state of the full system, or the frozen value for frozen runs.
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub xbar: &'a [f64],
}

/// Pre-jump state handed to [`Observer::jump`].
#[derive(Debug)]
pub struct JumpRecord<'a> {
    pub t: f64,
    pub source: JumpSource,
    pub mark: f64,
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub xbar: &'a [f64],
}

pub trait Observer {
    fn step(&mut self, _s: &Snapshot<'_>) {}
    fn jump(&mut self, _r: &JumpRecord<'_>) {}
}

impl Observer for () {}

/// Adapts a closure over snapshots into an [`Observer`].
pub struct OnStep<F>(pub F);

impl<F: FnMut(&Snapshot<'_>)> Observer for OnStep<F> {
    fn step(&mut self, s: &Snapshot<'_>) {
        (self.0)(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateAt {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub xbar: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub ticks: usize,
    pub slow_jumps: usize,
    pub fast_jumps: usize,
    pub extrapolated: usize,
    /// `max |X − X̄|` over all ticks; zero for runs without both.
    pub sup_distance: f64,
    /// One entry per requested checkpoint, in request order.
    pub checkpoints: Vec<StateAt>,
    pub terminal: StateAt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    SlowFast,
    Frozen,
    Pair,
    Averaged,
}

struct Engine<'a> {
    spec: &'a ModelSpec,
    avg: Option<&'a dyn AveragedField>,
    mode: Mode,
    scheme: Scheme,
    fast_scale: f64,
    horizon: f64,
    delta: f64,
}

struct Work {
    drift: Vec<f64>,
    sigma: Vec<f64>,
    comp: Vec<f64>,
    scratch: Vec<f64>,
    cov: Vec<f64>,
    fy: Vec<f64>,
    gy: Vec<f64>,
    compy: Vec<f64>,
    scratchy: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|a| a.is_finite())
}

/// Solves `u = x + h·g(u)` by Newton with a central-difference derivative.
fn solve_implicit(
    x: f64,
    h: f64,
    t: f64,
    mut g: impl FnMut(f64) -> Result<f64, IntegrateError>,
) -> Result<f64, IntegrateError> {
    let mut u = x;
    for _ in 0..NEWTON_MAX_ITER {
        let r = u - x - h * g(u)?;
        let e = 1e-7 * u.abs().max(1.0);
        let dg = (g(u + e)? - g(u - e)?) / (2.0 * e);
        let du = r / (1.0 - h * dg);
        u -= du;
        if !u.is_finite() {
            break;
        }
        if du.abs() <= NEWTON_TOL * u.abs().max(1.0) {
            return Ok(u);
        }
    }
    Err(IntegrateError::NewtonFailed { time: t })
}

#[derive(Clone, Copy)]
enum SlowLane {
    /// `b(x, y)`, `σ(x, y)` from the model.
    Model,
    /// `b̄(x)` from the table, `σ(x, y)` from the model.
    AveragedDrift,
    /// `b̄(x)` and `(σσ*‾(x))^{1/2}` from the table.
    Averaged,
}

impl Engine<'_> {
    fn avg(&self) -> &dyn AveragedField {
        self.avg.expect("averaged lane without a table")
    }

    /// Drift of a slow lane at `x`. Returns whether the query extrapolated.
    fn slow_drift(&self, lane: SlowLane, x: &[f64], y: &[f64], out: &mut [f64]) -> Result<bool, IntegrateError> {
        match lane {
            SlowLane::Model => {
                self.spec.b(x, y, out);
                Ok(false)
            }
            SlowLane::AveragedDrift | SlowLane::Averaged => self.avg().drift(x, out),
        }
    }

    /// One diffusion step of a slow lane from `x` over `h`, written to `out`.
    #[allow(clippy::too_many_arguments)]
    fn slow_step(
        &self,
        lane: SlowLane,
        x: &[f64],
        y: &[f64],
        h: f64,
        t: f64,
        dw: &[f64],
        w: &mut Work,
        out: &mut [f64],
    ) -> Result<usize, IntegrateError> {
        let n = x.len();
        let mut extrap = usize::from(self.slow_drift(lane, x, y, &mut w.drift)?);
        match self.scheme {
            Scheme::TamedEuler => {
                let nb = norm(&w.drift);
                for i in 0..n {
                    out[i] = x[i] + h * w.drift[i] / (1.0 + h * nb);
                }
            }
            Scheme::ExplicitEuler => {
                for i in 0..n {
                    out[i] = x[i] + h * w.drift[i];
                }
            }
            Scheme::SplitStepImplicit => {
                let mut d = [0.0];
                out[0] = solve_implicit(x[0], h, t, |u| {
                    extrap += usize::from(self.slow_drift(lane, &[u], y, &mut d)?);
                    Ok(d[0])
                })?;
            }
        }
        match lane {
            SlowLane::Model | SlowLane::AveragedDrift => {
                let d1 = dw.len();
                self.spec.sigma(x, y, &mut w.sigma);
                for i in 0..n {
                    out[i] += (0..d1).map(|k| w.sigma[i * d1 + k] * dw[k]).sum::<f64>();
                }
            }
            SlowLane::Averaged => {
                extrap += usize::from(self.avg().covariance(x, &mut w.cov)?);
                if n > 1 {
                    let me = min_eigenvalue(&w.cov, n);
                    if me < -1e-10 {
                        return Err(IntegrateError::NotPsd { x: x.to_vec(), min_eig: me });
                    }
                } else if w.cov[0] < -1e-10 {
                    return Err(IntegrateError::NotPsd { x: x.to_vec(), min_eig: w.cov[0] });
                }
                let root = psd_sqrt(&w.cov, n).root;
                for i in 0..n {
                    out[i] += (0..n).map(|k| root[i * n + k] * dw[k]).sum::<f64>();
                }
            }
        }
        self.spec.slow_compensator(x, &mut w.comp, &mut w.scratch);
        for i in 0..n {
            out[i] -= h * w.comp[i];
        }
        Ok(extrap)
    }

    /// One diffusion step of the fast component with effective step `s`.
    #[allow(clippy::too_many_arguments)]
    fn fast_step(
        &self,
        x: &[f64],
        y: &[f64],
        s: f64,
        t: f64,
        dw: &[f64],
        w: &mut Work,
        out: &mut [f64],
    ) -> Result<(), IntegrateError> {
        let m = y.len();
        self.spec.f(x, y, &mut w.fy);
        match self.scheme {
            Scheme::TamedEuler => {
                let nf = norm(&w.fy);
                for i in 0..m {
                    out[i] = y[i] + s * w.fy[i] / (1.0 + s * nf);
                }
            }
            Scheme::ExplicitEuler => {
                for i in 0..m {
                    out[i] = y[i] + s * w.fy[i];
                }
            }
            Scheme::SplitStepImplicit => {
                let mut d = [0.0];
                out[0] = solve_implicit(y[0], s, t, |u| {
                    self.spec.f(x, &[u], &mut d);
                    Ok(d[0])
                })?;
            }
        }
        let d2 = dw.len();
        self.spec.g(x, y, &mut w.gy);
        for i in 0..m {
            out[i] += (0..d2).map(|k| w.gy[i * d2 + k] * dw[k]).sum::<f64>();
        }
        self.spec.fast_compensator(x, y, &mut w.compy, &mut w.scratchy);
        for i in 0..m {
            out[i] -= s * w.compy[i];
        }
        Ok(())
    }

    fn run(
        &self,
        x0: &[f64],
        y0: &[f64],
        stream: &RngStream,
        checkpoints: &[f64],
        obs: &mut dyn Observer,
    ) -> Result<RunSummary, IntegrateError> {
        let spec = self.spec;
        let (n, m, d1, d2) = (spec.n(), spec.m(), spec.d1(), spec.d2());
        let has_x = matches!(self.mode, Mode::SlowFast | Mode::Pair);
        let has_y = self.mode != Mode::Averaged;
        let has_bar = matches!(self.mode, Mode::Pair | Mode::Averaged);
        let bar_lane = if self.mode == Mode::Averaged { SlowLane::Averaged } else { SlowLane::AveragedDrift };

        let mut x: Vec<f64> = if self.mode == Mode::Averaged { Vec::new() } else { x0.to_vec() };
        let mut y: Vec<f64> = if has_y { y0.to_vec() } else { Vec::new() };
        let mut xb: Vec<f64> = if has_bar { x0.to_vec() } else { Vec::new() };

        let slow_noise_dim = if self.mode == Mode::Averaged { n } else { d1 };
        let mut w1 = stream.purpose(if self.mode == Mode::Averaged { Purpose::AveragedWiener } else { Purpose::SlowWiener });
        let mut w2 = stream.purpose(Purpose::FastWiener);
        let (slow_times, slow_marks) = if self.mode == Mode::Frozen {
            (Vec::new(), Vec::new())
        } else {
            let mut s = stream.purpose(Purpose::SlowJumps);
            let times = sample_jump_times(spec.nu1().intensity(), self.horizon, &mut s)?;
            let marks: Vec<f64> = times.iter().map(|_| sample_jump_size(spec.nu1(), &mut s)).collect();
            (times, marks)
        };
        let (fast_times, fast_marks) = if has_y {
            let mut s = stream.purpose(Purpose::FastJumps);
            let times = sample_jump_times(spec.nu2().intensity() * self.fast_scale, self.horizon, &mut s)?;
            let marks: Vec<f64> = times.iter().map(|_| sample_jump_size(spec.nu2(), &mut s)).collect();
            (times, marks)
        } else {
            (Vec::new(), Vec::new())
        };

        let mut w = Work {
            drift: vec![0.0; n],
            sigma: vec![0.0; n * d1],
            comp: vec![0.0; n],
            scratch: vec![0.0; n],
            cov: vec![0.0; n * n],
            fy: vec![0.0; m],
            gy: vec![0.0; m * d2],
            compy: vec![0.0; m],
            scratchy: vec![0.0; m],
        };
        let mut dw1 = vec![0.0; slow_noise_dim];
        let mut dw2 = vec![0.0; d2];
        let (mut xn, mut yn, mut xbn) = (x.clone(), y.clone(), xb.clone());
        let mut jump_buf = vec![0.0; n.max(m)];

        let mut summary = RunSummary {
            ticks: 0,
            slow_jumps: slow_times.len(),
            fast_jumps: fast_times.len(),
            extrapolated: 0,
            sup_distance: 0.0,
            checkpoints: Vec::new(),
            terminal: StateAt { t: 0.0, x: Vec::new(), y: Vec::new(), xbar: Vec::new() },
        };
        let mut cps: Vec<Option<StateAt>> = vec![None; checkpoints.len()];
        if let Some(c) = checkpoints.iter().find(|&&c| !(c > 0.0 && c <= self.horizon)) {
            return Err(IntegrateError::Config(format!("checkpoint {c} outside (0, {}]", self.horizon)));
        }

        obs.step(&Snapshot { t: 0.0, grid: true, checkpoint: None, x: &x, y: &y, xbar: &xb });
        let mut t_prev = 0.0;
        for tick in clock::Clock::new(self.horizon, self.delta, &slow_times, &fast_times, checkpoints) {
            let t = tick.t;
            let h = t - t_prev;
            let sq = h.sqrt();
            if has_x || has_bar {
                dw1.iter_mut().for_each(|v| *v = sq * w1.normal());
            }
            if has_y {
                let sqf = (h * self.fast_scale).sqrt();
                dw2.iter_mut().for_each(|v| *v = sqf * w2.normal());
            }
            if has_x {
                summary.extrapolated += self.slow_step(SlowLane::Model, &x, &y, h, t, &dw1, &mut w, &mut xn)?;
            }
            if has_bar {
                summary.extrapolated += self.slow_step(bar_lane, &xb, &y, h, t, &dw1, &mut w, &mut xbn)?;
            }
            if has_y {
                self.fast_step(&x, &y, h * self.fast_scale, t, &dw2, &mut w, &mut yn)?;
            }
            if has_x {
                std::mem::swap(&mut x, &mut xn);
            }
            if has_y {
                std::mem::swap(&mut y, &mut yn);
            }
            if has_bar {
                std::mem::swap(&mut xb, &mut xbn);
            }

            if let Some(j) = tick.slow_jump {
                let z = slow_marks[j];
                obs.jump(&JumpRecord { t, source: JumpSource::Slow, mark: z, x: &x, y: &y, xbar: &xb });
                if has_x {
                    spec.h1(&x, z, &mut jump_buf[..n]);
                    x.iter_mut().zip(&jump_buf[..n]).for_each(|(a, d)| *a += d);
                }
                if has_bar {
                    spec.h1(&xb, z, &mut jump_buf[..n]);
                    xb.iter_mut().zip(&jump_buf[..n]).for_each(|(a, d)| *a += d);
                }
            }
            if let Some(j) = tick.fast_jump {
                let z = fast_marks[j];
                obs.jump(&JumpRecord { t, source: JumpSource::Fast, mark: z, x: &x, y: &y, xbar: &xb });
                spec.h2(&x, &y, z, &mut jump_buf[..m]);
                y.iter_mut().zip(&jump_buf[..m]).for_each(|(a, d)| *a += d);
            }
            if !(finite(&x) && finite(&y) && finite(&xb)) {
                return Err(IntegrateError::BlowUp { time: t });
            }
            if self.mode == Mode::Pair {
                let d = x.iter().zip(&xb).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                summary.sup_distance = summary.sup_distance.max(d);
            }
            if let Some(c) = tick.checkpoint {
                cps[c] = Some(StateAt { t, x: x.clone(), y: y.clone(), xbar: xb.clone() });
            }
            summary.ticks += 1;
            obs.step(&Snapshot { t, grid: tick.grid, checkpoint: tick.checkpoint, x: &x, y: &y, xbar: &xb });
            t_prev = t;
        }
        // checkpoints that coincide with each other were visited once
        for i in 0..cps.len() {
            if cps[i].is_none() {
                let src = (0..cps.len()).find(|&j| checkpoints[j] == checkpoints[i] && cps[j].is_some());
                cps[i] = src.and_then(|j| cps[j].clone());
            }
        }
        summary.checkpoints = cps.into_iter().map(|c| c.expect("every checkpoint is visited")).collect();
        summary.terminal = StateAt { t: t_prev, x, y, xbar: xb };
        Ok(summary)
    }
}

fn check_dims(spec: &ModelSpec, x0: Option<&[f64]>, y0: Option<&[f64]>) -> Result<(), IntegrateError> {
    if let Some(x) = x0 {
        if x.len() != spec.n() {
            return Err(IntegrateError::Config(format!("x0 has dimension {}, model has n = {}", x.len(), spec.n())));
        }
    }
    if let Some(y) = y0 {
        if y.len() != spec.m() {
            return Err(IntegrateError::Config(format!("y0 has dimension {}, model has m = {}", y.len(), spec.m())));
        }
    }
    Ok(())
}

fn check_scheme(spec: &ModelSpec, scheme: Scheme) -> Result<(), IntegrateError> {
    if scheme == Scheme::SplitStepImplicit && (spec.n() > 1 || spec.m() > 1) {
        return Err(IntegrateError::Config("split-step implicit scheme supports scalar components only".into()));
    }
    Ok(())
}

fn check_table(spec: &ModelSpec, avg: &dyn AveragedField) -> Result<(), IntegrateError> {
    if avg.slow_dim() != spec.n() {
        return Err(IntegrateError::Config(format!(
            "averaged table has dimension {}, model has n = {}",
            avg.slow_dim(),
            spec.n()
        )));
    }
    Ok(())
}

/// Records a full path. `lanes` picks which components form a row.
struct Recorder {
    path: PathSample,
    slow: Lane,
    fast: bool,
    fast_events: bool,
}

#[derive(Clone, Copy, PartialEq)]
enum Lane {
    None,
    X,
    XBar,
}

impl Recorder {
    fn new(slow: Lane, fast: bool, n: usize, m: usize, frozen_x: Option<Vec<f64>>) -> Self {
        let slow_dim = if slow == Lane::None { 0 } else { n };
        Self {
            path: PathSample::empty(slow_dim, if fast { m } else { 0 }, frozen_x),
            slow,
            fast,
            fast_events: fast,
        }
    }

    fn row(&self, x: &[f64], y: &[f64], xbar: &[f64], out: &mut Vec<f64>) {
        match self.slow {
            Lane::X => out.extend_from_slice(x),
            Lane::XBar => out.extend_from_slice(xbar),
            Lane::None => {}
        }
        if self.fast {
            out.extend_from_slice(y);
        }
    }
}

impl Observer for Recorder {
    fn step(&mut self, s: &Snapshot<'_>) {
        self.path.times.push(s.t);
        let mut row = Vec::with_capacity(self.path.width());
        self.row(s.x, s.y, s.xbar, &mut row);
        self.path.states.extend_from_slice(&row);
    }

    fn jump(&mut self, r: &JumpRecord<'_>) {
        if r.source == JumpSource::Slow && self.slow == Lane::None {
            return;
        }
        if r.source == JumpSource::Fast && !self.fast_events {
            return;
        }
        let mut pre = Vec::with_capacity(self.path.width());
        self.row(r.x, r.y, r.xbar, &mut pre);
        self.path.events.push(JumpEvent {
            time: r.t,
            mark: r.mark,
            source: r.source,
            row: self.path.times.len(),
            pre,
        });
    }
}

/// Forwards to two observers.
struct Both<'a>(&'a mut dyn Observer, &'a mut dyn Observer);

impl Observer for Both<'_> {
    fn step(&mut self, s: &Snapshot<'_>) {
        self.0.step(s);
        self.1.step(s);
    }
    fn jump(&mut self, r: &JumpRecord<'_>) {
        self.0.jump(r);
        self.1.jump(r);
    }
}

/// Runs the full system, feeding every tick to `obs`.
pub fn simulate_slow_fast_with(
    spec: &ModelSpec,
    x0: &[f64],
    y0: &[f64],
    cfg: &StepperConfig,
    stream: &RngStream,
    checkpoints: &[f64],
    obs: &mut dyn Observer,
) -> Result<RunSummary, IntegrateError> {
    cfg.validate(true)?;
    check_dims(spec, Some(x0), Some(y0))?;
    check_scheme(spec, cfg.scheme)?;
    Engine {
        spec,
        avg: None,
        mode: Mode::SlowFast,
        scheme: cfg.scheme,
        fast_scale: 1.0 / cfg.epsilon,
        horizon: cfg.horizon,
        delta: cfg.delta,
    }
    .run(x0, y0, stream, checkpoints, obs)
}

/// One path of `(X^ε, Y^ε)`.
pub fn simulate_slow_fast(
    spec: &ModelSpec,
    x0: &[f64],
    y0: &[f64],
    cfg: &StepperConfig,
    stream: &RngStream,
) -> Result<PathSample, IntegrateError> {
    let mut rec = Recorder::new(Lane::X, true, spec.n(), spec.m(), None);
    simulate_slow_fast_with(spec, x0, y0, cfg, stream, &[], &mut rec)?;
    Ok(rec.path)
}

/// Runs the frozen fast equation at slow value `x` with unit time scale.
#[allow(clippy::too_many_arguments)]
pub fn simulate_frozen_with(
    spec: &ModelSpec,
    x: &[f64],
    y0: &[f64],
    horizon: f64,
    delta: f64,
    scheme: Scheme,
    stream: &RngStream,
    checkpoints: &[f64],
    obs: &mut dyn Observer,
) -> Result<RunSummary, IntegrateError> {
    let cfg = StepperConfig { epsilon: 1.0, delta, scheme, horizon };
    cfg.validate(true)?;
    check_dims(spec, Some(x), Some(y0))?;
    check_scheme(spec, scheme)?;
    Engine {
        spec,
        avg: None,
        mode: Mode::Frozen,
        scheme,
        fast_scale: 1.0,
        horizon,
        delta,
    }
    .run(x, y0, stream, checkpoints, obs)
}

/// One path of the frozen equation `dY = f(x, Y)dt + g(x, Y)dW + ∫h₂ Ñ`.
pub fn simulate_frozen(
    spec: &ModelSpec,
    x: &[f64],
    y0: &[f64],
    horizon: f64,
    delta: f64,
    stream: &RngStream,
) -> Result<PathSample, IntegrateError> {
    let mut rec = Recorder::new(Lane::None, true, spec.n(), spec.m(), Some(x.to_vec()));
    simulate_frozen_with(spec, x, y0, horizon, delta, Scheme::TamedEuler, stream, &[], &mut rec)?;
    Ok(rec.path)
}

/// Runs `X^ε` and the averaged `X̄` on shared `W¹` and `N¹` noise.
///
/// `X̄` uses `b̄` from the table and the model's `σ`, which must not depend
/// on `y`.
#[allow(clippy::too_many_arguments)]
pub fn coupled_pair_with(
    spec: &ModelSpec,
    avg: &dyn AveragedField,
    x0: &[f64],
    y0: &[f64],
    cfg: &StepperConfig,
    stream: &RngStream,
    checkpoints: &[f64],
    obs: &mut dyn Observer,
) -> Result<RunSummary, IntegrateError> {
    if !spec.sigma_y_independent() {
        return Err(IntegrateError::Config(
            "pathwise coupling needs a slow diffusion that does not depend on y".into(),
        ));
    }
    cfg.validate(true)?;
    check_dims(spec, Some(x0), Some(y0))?;
    check_scheme(spec, cfg.scheme)?;
    check_table(spec, avg)?;
    Engine {
        spec,
        avg: Some(avg),
        mode: Mode::Pair,
        scheme: cfg.scheme,
        fast_scale: 1.0 / cfg.epsilon,
        horizon: cfg.horizon,
        delta: cfg.delta,
    }
    .run(x0, y0, stream, checkpoints, obs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPaths {
    /// `(X^ε, Y^ε)` rows.
    pub slow_fast: PathSample,
    /// `X̄` rows on the same grid.
    pub averaged: PathSample,
    pub sup_distance: f64,
    pub terminal_slow: Vec<f64>,
    pub terminal_averaged: Vec<f64>,
    pub extrapolated: usize,
}

/// Recorded version of [`coupled_pair_with`].
pub fn simulate_pair_coupled(
    spec: &ModelSpec,
    avg: &dyn AveragedField,
    x0: &[f64],
    y0: &[f64],
    cfg: &StepperConfig,
    stream: &RngStream,
) -> Result<CoupledPaths, IntegrateError> {
    let mut a = Recorder::new(Lane::X, true, spec.n(), spec.m(), None);
    let mut b = Recorder::new(Lane::XBar, false, spec.n(), spec.m(), None);
    let summary = coupled_pair_with(spec, avg, x0, y0, cfg, stream, &[], &mut Both(&mut a, &mut b))?;
    a.path.extrapolated = summary.extrapolated;
    b.path.extrapolated = summary.extrapolated;
    Ok(CoupledPaths {
        slow_fast: a.path,
        averaged: b.path,
        sup_distance: summary.sup_distance,
        terminal_slow: summary.terminal.x,
        terminal_averaged: summary.terminal.xbar,
        extrapolated: summary.extrapolated,
    })
}

/// Runs `dX̄ = b̄ dt + σ̄ dW + ∫h₁ Ñ¹` with `σ̄` the PSD root of the tabulated
/// `σσ*‾` and `W` an `n`-dimensional Wiener process of its own.
pub fn simulate_averaged_weak_with(
    spec: &ModelSpec,
    avg: &dyn AveragedField,
    x0: &[f64],
    cfg: &StepperConfig,
    stream: &RngStream,
    checkpoints: &[f64],
    obs: &mut dyn Observer,
) -> Result<RunSummary, IntegrateError> {
    cfg.validate(false)?;
    check_dims(spec, Some(x0), None)?;
    check_scheme(spec, cfg.scheme)?;
    check_table(spec, avg)?;
    Engine {
        spec,
        avg: Some(avg),
        mode: Mode::Averaged,
        scheme: cfg.scheme,
        fast_scale: 1.0,
        horizon: cfg.horizon,
        delta: cfg.delta,
    }
    .run(x0, &[], stream, checkpoints, obs)
}

pub fn simulate_averaged_weak(
    spec: &ModelSpec,
    avg: &dyn AveragedField,
    x0: &[f64],
    cfg: &StepperConfig,
    stream: &RngStream,
) -> Result<PathSample, IntegrateError> {
    let mut rec = Recorder::new(Lane::XBar, false, spec.n(), spec.m(), None);
    let s = simulate_averaged_weak_with(spec, avg, x0, cfg, stream, &[], &mut rec)?;
    rec.path.extrapolated = s.extrapolated;
    Ok(rec.path)
}
