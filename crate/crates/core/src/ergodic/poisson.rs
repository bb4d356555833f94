use serde::{Deserialize, Serialize};

use super::{ErgodicError, InvariantSample, LEVEL};
use crate::integrate::{simulate_frozen_with, OnStep, Scheme, Snapshot};
use crate::levy_rng::{Purpose, RngStream};
use crate::model::ModelSpec;
use crate::stats::{fit_exponential, mc_mean_ci, sample_sd, shifted_mean, z_for_level, ExpFit};

/// Tail of the truncated corrector integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailDiagnostic {
    /// `|E b(x, Y_t) − b̄(x)| ≈ C e^{−rate·t}`; `tail_bound = C/rate · e^{−rate·t_cut}`.
    Fitted { rate: f64, prefactor: f64, r2: f64, tail_bound: f64 },
    /// Fewer than three points of the centered curve rise above its noise.
    BelowNoise { max_abs: f64, noise: f64 },
    /// The curve rises above noise but sinks back under it at `drops_at`,
    /// before `t_cut`, too early to resolve a rate.
    Unresolved { drops_at: f64, max_abs: f64, noise: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonEstimate {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub phi: Vec<f64>,
    /// Half-width including the uncertainty of `b̄`.
    pub ci: Vec<f64>,
    /// Monte Carlo half-width alone.
    pub mc_ci: Vec<f64>,
    pub t_cut: f64,
    pub n_traj: usize,
    pub tail: TailDiagnostic,
}

/// Per-path centered integrals and the mean centered curve on the grid.
struct Flow {
    times: Vec<f64>,
    /// `times × n`: mean of `b(x, Y_t) − b̄`.
    mean: Vec<f64>,
    /// `times × n`: standard error of `mean`.
    se: Vec<f64>,
    /// `paths × n`: `∫₀^T (b(x, Y_t) − b̄) dt` by the trapezoid rule.
    integrals: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn drift_flow(
    spec: &ModelSpec,
    x: &[f64],
    y: &[f64],
    horizon: f64,
    n_traj: usize,
    delta: f64,
    avg_b: &[f64],
    stream: &RngStream,
) -> Result<Flow, ErgodicError> {
    let n = spec.n();
    let mut times = Vec::new();
    let mut mean: Vec<f64> = Vec::new();
    let mut m2: Vec<f64> = Vec::new();
    let mut integrals = Vec::with_capacity(n_traj * n);
    let mut buf = vec![0.0; n];
    for p in 0..n_traj {
        let mut k = 0usize;
        let mut prev: Option<(f64, Vec<f64>)> = None;
        let mut integral = vec![0.0; n];
        let count = (p + 1) as f64;
        let mut on_step = |s: &Snapshot<'_>| {
            if !s.grid {
                return;
            }
            spec.b(x, s.y, &mut buf);
            for (v, b) in buf.iter_mut().zip(avg_b) {
                *v -= b;
            }
            if p == 0 {
                times.push(s.t);
                mean.extend_from_slice(&buf);
                m2.extend(std::iter::repeat_n(0.0, n));
            } else {
                for i in 0..n {
                    // Welford update across paths
                    let j = k * n + i;
                    let d = buf[i] - mean[j];
                    mean[j] += d / count;
                    m2[j] += d * (buf[i] - mean[j]);
                }
            }
            if let Some((t0, v0)) = &prev {
                for i in 0..n {
                    integral[i] += 0.5 * (s.t - t0) * (v0[i] + buf[i]);
                }
            }
            prev = Some((s.t, buf.clone()));
            k += 1;
        };
        simulate_frozen_with(
            spec,
            x,
            y,
            horizon,
            delta,
            Scheme::TamedEuler,
            &stream.child(p as u64),
            &[],
            &mut OnStep(&mut on_step),
        )?;
        integrals.extend(integral);
    }
    let denom = (n_traj.max(2) - 1) as f64;
    let se = m2.iter().map(|v| (v / denom / n_traj as f64).sqrt()).collect();
    Ok(Flow { times, mean, se, integrals })
}

fn tail_of(flow: &Flow, n: usize, ci_b: &[f64], t_cut: f64) -> Result<TailDiagnostic, ErgodicError> {
    let nt = flow.times.len();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let curve: Vec<f64> = (0..nt).map(|k| norm(&flow.mean[k * n..(k + 1) * n])).collect();
    let noise: Vec<f64> = (0..nt).map(|k| 3.0 * norm(&flow.se[k * n..(k + 1) * n]) + norm(ci_b)).collect();
    // contiguous run above noise starting at the peak; isolated late
    // crossings are noise and would bend the fit
    let peak = (0..nt).fold(0, |best, k| if curve[k] > curve[best] { k } else { best });
    let (ts, vs): (Vec<f64>, Vec<f64>) = (peak..nt)
        .take_while(|&k| curve[k] > noise[k])
        .map(|k| (flow.times[k], curve[k]))
        .unzip();
    if ts.len() < 3 {
        return Ok(TailDiagnostic::BelowNoise {
            max_abs: curve.iter().copied().fold(0.0, f64::max),
            noise: noise.iter().copied().fold(0.0, f64::max),
        });
    }
    let fit = fit_exponential(&ts, &vs).expect("at least three positive points");
    if !(fit.rate > 0.0) {
        // only a run that lasts to the end of the window says the integrand persists
        let end = peak + ts.len();
        if end < nt {
            return Ok(TailDiagnostic::Unresolved {
                drops_at: flow.times[end],
                max_abs: curve[peak],
                noise: noise[peak],
            });
        }
        return Err(ErgodicError::NotConvergent { rate: fit.rate });
    }
    Ok(TailDiagnostic::Fitted {
        rate: fit.rate,
        prefactor: fit.prefactor,
        r2: fit.r2,
        tail_bound: fit.prefactor / fit.rate * (-fit.rate * t_cut).exp(),
    })
}

/// `Φ(x, y) = ∫₀^{t_cut} [E b(x, Y_t^{x,y}) − b̄(x)] dt`, averaged over
/// `n_traj` frozen paths and integrated by the trapezoid rule.
///
/// `avg_b` is `(b̄(x), half-width)`; its uncertainty enters the reported
/// half-width as `t_cut × half-width`.
#[allow(clippy::too_many_arguments)]
pub fn poisson_cell(
    spec: &ModelSpec,
    x: &[f64],
    y: &[f64],
    t_cut: f64,
    n_traj: usize,
    delta: f64,
    avg_b: (&[f64], &[f64]),
    stream: &RngStream,
) -> Result<PoissonEstimate, ErgodicError> {
    if !(t_cut > 0.0) {
        return Err(ErgodicError::Config(format!("t_cut must be > 0, got {t_cut}")));
    }
    if n_traj < 2 {
        return Err(ErgodicError::Config("need at least 2 trajectories".into()));
    }
    let n = spec.n();
    let flow = drift_flow(spec, x, y, t_cut, n_traj, delta, avg_b.0, stream)?;
    let mut phi = Vec::with_capacity(n);
    let mut ci = Vec::with_capacity(n);
    let mut mc_ci = Vec::with_capacity(n);
    for i in 0..n {
        let samples: Vec<f64> = flow.integrals.iter().skip(i).step_by(n).copied().collect();
        let (mean, hw) = mc_mean_ci(&samples, LEVEL)?;
        phi.push(mean);
        mc_ci.push(hw);
        ci.push(hw.hypot(t_cut * avg_b.1[i]));
    }
    let tail = tail_of(&flow, n, avg_b.1, t_cut)?;
    Ok(PoissonEstimate { x: x.to_vec(), y: y.to_vec(), phi, ci, mc_ci, t_cut, n_traj, tail })
}

/// Curve `|E b(x, Y_t^{x,y}) − b̄(x)|` on requested times, with an
/// exponential envelope fitted to the points above noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftCurve {
    pub times: Vec<f64>,
    pub value: Vec<f64>,
    pub ci: Vec<f64>,
    pub fit: Option<ExpFit>,
}

#[allow(clippy::too_many_arguments)]
pub fn convergence_to_average(
    spec: &ModelSpec,
    x: &[f64],
    y: &[f64],
    times: &[f64],
    n_traj: usize,
    avg_b: (&[f64], &[f64]),
    delta: f64,
    stream: &RngStream,
) -> Result<DriftCurve, ErgodicError> {
    let n = spec.n();
    let positive: Vec<f64> = times.iter().copied().filter(|&t| t > 0.0).collect();
    let horizon = positive.iter().copied().fold(0.0, f64::max);
    let z = z_for_level(LEVEL)?;
    // per requested time and component, centered values over paths
    let mut per: Vec<Vec<f64>> = vec![Vec::with_capacity(n_traj); positive.len() * n];
    let mut buf = vec![0.0; n];
    if horizon > 0.0 {
        for p in 0..n_traj {
            let s = simulate_frozen_with(
                spec,
                x,
                y,
                horizon,
                delta,
                Scheme::TamedEuler,
                &stream.child(p as u64),
                &positive,
                &mut (),
            )?;
            for (k, st) in s.checkpoints.iter().enumerate() {
                spec.b(x, &st.y, &mut buf);
                for i in 0..n {
                    per[k * n + i].push(buf[i] - avg_b.0[i]);
                }
            }
        }
    }
    let ci_b = avg_b.1.iter().map(|c| c * c).sum::<f64>().sqrt();
    let mut value = Vec::with_capacity(times.len());
    let mut ci = Vec::with_capacity(times.len());
    let mut kp = 0;
    for &t in times {
        if t > 0.0 {
            let mut v2 = 0.0;
            let mut se2 = 0.0;
            for i in 0..n {
                let s = &per[kp * n + i];
                let mean = shifted_mean(s);
                v2 += mean * mean;
                se2 += sample_sd(s).powi(2) / s.len() as f64;
            }
            value.push(v2.sqrt());
            ci.push(z * se2.sqrt() + ci_b);
            kp += 1;
        } else {
            spec.b(x, y, &mut buf);
            value.push(buf.iter().zip(avg_b.0).map(|(b, a)| (b - a) * (b - a)).sum::<f64>().sqrt());
            ci.push(ci_b);
        }
    }
    let (ts, vs): (Vec<f64>, Vec<f64>) = (0..times.len())
        .filter(|&k| value[k] > 1.5 * ci[k])
        .map(|k| (times[k], value[k]))
        .unzip();
    let fit = if ts.len() >= 3 { fit_exponential(&ts, &vs) } else { None };
    Ok(DriftCurve { times: times.to_vec(), value, ci, fit })
}

/// Mean squared distance of synchronously coupled frozen paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub times: Vec<f64>,
    pub mean_sq: Vec<f64>,
    pub ci: Vec<f64>,
    pub n_pairs: usize,
    /// Fit of `mean_sq ≈ C e^{−γ̂ t}`; `None` when the curve is identically 0.
    pub fit: Option<ExpFit>,
}

/// Runs `n_pairs` pairs from `y1` and `y2` sharing every noise draw and
/// fits the decay of `E|Y_t^{y1} − Y_t^{y2}|²`.
#[allow(clippy::too_many_arguments)]
pub fn ergodicity_decay(
    spec: &ModelSpec,
    x: &[f64],
    y1: &[f64],
    y2: &[f64],
    times: &[f64],
    n_pairs: usize,
    delta: f64,
    stream: &RngStream,
) -> Result<DecayCurve, ErgodicError> {
    if n_pairs < 2 {
        return Err(ErgodicError::Config("need at least 2 pairs".into()));
    }
    let positive: Vec<f64> = times.iter().copied().filter(|&t| t > 0.0).collect();
    let horizon = positive.iter().copied().fold(0.0, f64::max);
    let mut per: Vec<Vec<f64>> = vec![Vec::with_capacity(n_pairs); positive.len()];
    if horizon > 0.0 {
        for p in 0..n_pairs {
            let s = stream.child(p as u64);
            let a = simulate_frozen_with(spec, x, y1, horizon, delta, Scheme::TamedEuler, &s, &positive, &mut ())?;
            let b = simulate_frozen_with(spec, x, y2, horizon, delta, Scheme::TamedEuler, &s, &positive, &mut ())?;
            for (k, (u, v)) in a.checkpoints.iter().zip(&b.checkpoints).enumerate() {
                per[k].push(u.y.iter().zip(&v.y).map(|(p, q)| (p - q) * (p - q)).sum());
            }
        }
    }
    let d0: f64 = y1.iter().zip(y2).map(|(p, q)| (p - q) * (p - q)).sum();
    let mut mean_sq = Vec::with_capacity(times.len());
    let mut ci = Vec::with_capacity(times.len());
    let mut kp = 0;
    for &t in times {
        if t > 0.0 {
            let (m, hw) = mc_mean_ci(&per[kp], LEVEL)?;
            mean_sq.push(m);
            ci.push(hw);
            kp += 1;
        } else {
            mean_sq.push(d0);
            ci.push(0.0);
        }
    }
    let fit = fit_exponential(times, &mean_sq);
    Ok(DecayCurve { times: times.to_vec(), mean_sq, ci, n_pairs, fit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteringCheck {
    /// Mean of `Φ(x, y_j)` over points of the invariant sample.
    pub mean: Vec<f64>,
    pub ci: Vec<f64>,
    pub points: usize,
}

/// Averages [`poisson_cell`] over `n_points` evenly spaced points of `inv`.
#[allow(clippy::too_many_arguments)]
pub fn poisson_centering(
    spec: &ModelSpec,
    inv: &InvariantSample,
    n_points: usize,
    t_cut: f64,
    n_traj: usize,
    delta: f64,
    avg_b: (&[f64], &[f64]),
    stream: &RngStream,
) -> Result<CenteringCheck, ErgodicError> {
    let all: Vec<&[f64]> = inv.points().collect();
    if n_points < 2 || all.len() < n_points {
        return Err(ErgodicError::Config(format!("cannot pick {n_points} points from {} samples", all.len())));
    }
    let n = spec.n();
    let stride = all.len() / n_points;
    let mut values = vec![Vec::with_capacity(n_points); n];
    for j in 0..n_points {
        let y = all[j * stride];
        let est = poisson_cell(spec, &inv.x, y, t_cut, n_traj, delta, avg_b, &stream.child(j as u64))?;
        for i in 0..n {
            values[i].push(est.phi[i]);
        }
    }
    let mut mean = Vec::with_capacity(n);
    let mut ci = Vec::with_capacity(n);
    for i in 0..n {
        let (m, hw) = mc_mean_ci(&values[i], LEVEL)?;
        mean.push(m);
        // every Φ̂_j shares the same b̄, so its error does not average out
        ci.push(hw.hypot(t_cut * avg_b.1[i]));
    }
    Ok(CenteringCheck { mean, ci, points: n_points })
}

/// Both sides of `Φ(x, y) − E Φ(x, Y_s) = ∫₀^s [E b(x, Y_t) − b̄(x)] dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemigroupCheck {
    pub s: f64,
    pub lhs: Vec<f64>,
    pub lhs_ci: Vec<f64>,
    pub rhs: Vec<f64>,
    pub rhs_ci: Vec<f64>,
}

impl SemigroupCheck {
    /// Largest `|lhs − rhs|` in units of the combined half-width.
    pub fn worst_ratio(&self) -> f64 {
        (0..self.lhs.len())
            .map(|i| (self.lhs[i] - self.rhs[i]).abs() / self.lhs_ci[i].hypot(self.rhs_ci[i]))
            .fold(0.0, f64::max)
    }
}

/// Estimates `E Φ(x, Y_s)` from `n_endpoints` independent draws of `Y_s`,
/// each followed by its own [`poisson_cell`] with `traj_per_endpoint` paths.
#[allow(clippy::too_many_arguments)]
pub fn semigroup_identity(
    spec: &ModelSpec,
    x: &[f64],
    y: &[f64],
    s: f64,
    t_cut: f64,
    n_traj: usize,
    n_endpoints: usize,
    traj_per_endpoint: usize,
    delta: f64,
    avg_b: (&[f64], &[f64]),
    stream: &RngStream,
) -> Result<SemigroupCheck, ErgodicError> {
    let n = spec.n();
    let phi_y = poisson_cell(spec, x, y, t_cut, n_traj, delta, avg_b, &stream.purpose(Purpose::Custom(1)))?;
    let ends = stream.purpose(Purpose::Endpoint);
    let cells = stream.purpose(Purpose::Custom(2));
    let mut at_end = vec![Vec::with_capacity(n_endpoints); n];
    for j in 0..n_endpoints {
        let run = simulate_frozen_with(spec, x, y, s, delta, Scheme::TamedEuler, &ends.child(j as u64), &[], &mut ())?;
        let est = poisson_cell(spec, x, &run.terminal.y, t_cut, traj_per_endpoint, delta, avg_b, &cells.child(j as u64))?;
        for i in 0..n {
            at_end[i].push(est.phi[i]);
        }
    }
    let flow = drift_flow(spec, x, y, s, n_traj, delta, avg_b.0, &stream.purpose(Purpose::Custom(3)))?;
    let mut check = SemigroupCheck { s, lhs: Vec::new(), lhs_ci: Vec::new(), rhs: Vec::new(), rhs_ci: Vec::new() };
    for i in 0..n {
        let (m_end, hw_end) = mc_mean_ci(&at_end[i], LEVEL)?;
        check.lhs.push(phi_y.phi[i] - m_end);
        // b̄ cancels between the two corrector values
        check.lhs_ci.push(phi_y.mc_ci[i].hypot(hw_end));
        let ints: Vec<f64> = flow.integrals.iter().skip(i).step_by(n).copied().collect();
        let (m, hw) = mc_mean_ci(&ints, LEVEL)?;
        check.rhs.push(m);
        check.rhs_ci.push(hw.hypot(s * avg_b.1[i]));
    }
    Ok(check)
}

#[cfg(test)]
mod tail_tests {
    use super::*;

    fn flow(curve: &[f64], se: f64) -> Flow {
        Flow {
            times: (0..curve.len()).map(|k| 0.5 * k as f64).collect(),
            mean: curve.to_vec(),
            se: vec![se; curve.len()],
            integrals: Vec::new(),
        }
    }

    #[test]
    fn brief_flat_excursion_is_unresolved() {
        let f = flow(&[0.0, 0.40, 0.30, 0.39, 0.39, 0.39, 0.0, 0.01], 0.05);
        assert!(matches!(tail_of(&f, 1, &[0.0], 3.5).unwrap(), TailDiagnostic::Unresolved { drops_at, .. } if drops_at == 3.0));
    }

    #[test]
    fn persistent_growth_is_not_convergent() {
        let f = flow(&[0.0, 0.40, 0.30, 0.39, 0.39, 0.39], 0.05);
        assert!(matches!(tail_of(&f, 1, &[0.0], 2.5), Err(ErgodicError::NotConvergent { .. })));
    }

    #[test]
    fn decay_is_fitted() {
        let c: Vec<f64> = (0..8).map(|k| (-(0.5 * k as f64)).exp()).collect();
        match tail_of(&flow(&c, 1e-4), 1, &[0.0], 3.5).unwrap() {
            TailDiagnostic::Fitted { rate, r2, .. } => assert!((rate - 1.0).abs() < 1e-9 && r2 > 0.999999),
            other => panic!("{other:?}"),
        }
    }
}
