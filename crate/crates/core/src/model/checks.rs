//! Probe-based checks of the structural assumptions.
//!
//! A pass is evidence on the probe box, not a proof. A fail always carries
//! a witness whose value can be recomputed with [`AssumptionReport::witness_value`].

use serde::{Deserialize, Serialize};

use super::{AssumptionParams, ModelSpec};
use crate::levy_rng::{Purpose, RngStream};

const SLACK: f64 = 0.1;
const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionId {
    /// One-sided Lipschitz bound of `b` in `x`.
    A1Monotonicity,
    /// Polynomial growth of `b`.
    A3Growth,
    /// Strong monotonicity of the fast dynamics in `y`.
    B1StrongMonotonicity,
    /// Dissipativity of the fast drift.
    B2Dissipativity,
    /// Polynomial growth of `∂_y f`.
    B3DerivativeGrowth,
    /// Sublinear growth of `g`.
    B3NoiseGrowth,
    /// `σ(x, y) = σ(x)`.
    SigmaYIndependence,
}

/// Sampling region: each coordinate uniform on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeBox {
    pub lo: f64,
    pub hi: f64,
}

impl Default for ProbeBox {
    fn default() -> Self {
        Self { lo: -5.0, hi: 5.0 }
    }
}

impl ProbeBox {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo < hi, "empty probe box");
        Self { lo, hi }
    }

    fn fill(&self, s: &mut RngStream, v: &mut [f64]) {
        v.iter_mut().for_each(|c| *c = self.lo + (self.hi - self.lo) * s.uniform());
    }

    fn grid(&self, points: usize) -> impl Iterator<Item = f64> + '_ {
        let step = (self.hi - self.lo) / (points - 1) as f64;
        (0..points).map(move |i| if i + 1 == points { self.hi } else { self.lo + step * i as f64 })
    }
}

/// The probe point at which a check attained its reported value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub id: AssumptionId,
    pub probes: usize,
    /// Worst ratio or fitted rate, depending on the check.
    pub observed: f64,
    /// Additive constant fitted alongside `observed` (dissipativity only).
    pub fitted_constant: Option<f64>,
    pub declared: Option<f64>,
    pub pass: bool,
    pub witness: Option<Witness>,
}

impl AssumptionReport {
    /// Re-evaluates the check's quantity at the stored witness.
    pub fn witness_value(&self, spec: &ModelSpec) -> Option<f64> {
        let w = self.witness.as_ref()?;
        let params = effective_params(spec);
        Some(match self.id {
            AssumptionId::A1Monotonicity => mono_ratio(spec, &w.x1, &w.x2, &w.y1),
            AssumptionId::B1StrongMonotonicity => strong_mono_ratio(spec, params.ell, &w.x1, &w.y1, &w.y2),
            AssumptionId::B2Dissipativity => inner_product_f(spec, &w.x1, &w.y1),
            AssumptionId::A3Growth => growth_b(spec, params.k, &w.x1, &w.y1),
            AssumptionId::B3DerivativeGrowth => growth_df(spec, params.k, &w.x1, &w.y1),
            AssumptionId::B3NoiseGrowth => growth_g(spec, params.zeta1, &w.x1, &w.y1),
            AssumptionId::SigmaYIndependence => {
                let len = spec.n() * spec.d1();
                let (mut a, mut b) = (vec![0.0; len], vec![0.0; len]);
                spec.sigma(&w.x1, &w.y1, &mut a);
                spec.sigma(&w.x1, &w.y2, &mut b);
                max_abs_diff(&a, &b)
            }
        })
    }
}

impl Default for AssumptionParams {
    fn default() -> Self {
        Self {
            k: 2.0,
            q: 2.0,
            beta: 1.0,
            lambda_diss: 1.0,
            l_h2: 0.0,
            zeta1: 0.0,
            zeta2: 0.0,
            ell: 9.0,
            mono_c: 1.0,
        }
    }
}

fn effective_params(spec: &ModelSpec) -> AssumptionParams {
    spec.params().copied().unwrap_or_default()
}

fn within(observed: f64, declared: f64) -> bool {
    observed.is_finite() && observed <= declared + SLACK * declared.abs()
}

fn at_least(observed: f64, declared: f64) -> bool {
    observed.is_finite() && observed >= declared - SLACK * declared.abs()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

fn mono_ratio(spec: &ModelSpec, x1: &[f64], x2: &[f64], y: &[f64]) -> f64 {
    let n = spec.n();
    let (mut b1, mut b2) = (vec![0.0; n], vec![0.0; n]);
    spec.b(x1, y, &mut b1);
    spec.b(x2, y, &mut b2);
    let dx: Vec<f64> = x1.iter().zip(x2).map(|(a, b)| a - b).collect();
    let db: Vec<f64> = b1.iter().zip(&b2).map(|(a, b)| a - b).collect();
    dot(&db, &dx) / norm2(&dx)
}

/// Scans a scalar interval in adjacent pairs, where the difference quotient
/// approaches its supremum.
fn scalar_grid() -> (usize, usize) {
    (401, 41)
}

/// Supremum of `⟨b(x₁, y) − b(x₂, y), x₁ − x₂⟩ / |x₁ − x₂|²` over the box.
pub fn check_monotonicity(spec: &ModelSpec, probes: usize, bx: ProbeBox, stream: &RngStream) -> AssumptionReport {
    let mut s = stream.purpose(Purpose::Probe);
    let (n, m) = (spec.n(), spec.m());
    let (mut x1, mut x2, mut y) = (vec![0.0; n], vec![0.0; n], vec![0.0; m]);
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    let mut count = 0;
    let mut consider = |x1: &[f64], x2: &[f64], y: &[f64], count: &mut usize| {
        let r = mono_ratio(spec, x1, x2, y);
        *count += 1;
        if r > worst || r.is_nan() {
            worst = if r.is_nan() { f64::INFINITY } else { r };
            witness = Some(Witness { x1: x1.to_vec(), x2: x2.to_vec(), y1: y.to_vec(), y2: y.to_vec(), value: r });
        }
    };
    for _ in 0..probes.max(1) {
        bx.fill(&mut s, &mut x1);
        loop {
            bx.fill(&mut s, &mut x2);
            if x1 != x2 {
                break;
            }
        }
        bx.fill(&mut s, &mut y);
        consider(&x1, &x2, &y, &mut count);
    }
    if n == 1 && m == 1 {
        let (nx, ny) = scalar_grid();
        let xs: Vec<f64> = bx.grid(nx).collect();
        for yv in bx.grid(ny) {
            for w in xs.windows(2) {
                consider(&[w[1]], &[w[0]], &[yv], &mut count);
            }
        }
    }
    let declared = spec.params().map(|p| p.mono_c);
    AssumptionReport {
        id: AssumptionId::A1Monotonicity,
        probes: count,
        observed: worst,
        fitted_constant: None,
        declared,
        pass: match declared {
            Some(c) => within(worst, c),
            None => worst.is_finite(),
        },
        witness,
    }
}

fn inner_product_f(spec: &ModelSpec, x: &[f64], y: &[f64]) -> f64 {
    let mut f = vec![0.0; spec.m()];
    spec.f(x, y, &mut f);
    dot(&f, y)
}

fn dissipation_weight(y: &[f64], q: f64) -> f64 {
    let r2 = norm2(y);
    if q > 2.0 {
        r2 + r2.sqrt().powf(q)
    } else {
        r2
    }
}

/// Fits `⟨f(x, y), y⟩ ≤ −λ(|y|² + |y|^q) + C` on the box.
///
/// `λ` is the tail rate `min −⟨f, y⟩ / (|y|² + |y|^q)` over probes with `|y|`
/// at least half the box radius; the reported constant is then the smallest
/// `C` that makes the fitted `λ` hold on every probe. With `q = 2` the two
/// terms coincide and are counted once.
pub fn check_fast_dissipativity(
    spec: &ModelSpec,
    probes: usize,
    bx: ProbeBox,
    stream: &RngStream,
) -> AssumptionReport {
    let params = effective_params(spec);
    let q = params.q;
    let mut s = stream.purpose(Purpose::Probe);
    let (n, m) = (spec.n(), spec.m());
    let mut pts: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(probes);
    for _ in 0..probes.max(1) {
        let (mut x, mut y) = (vec![0.0; n], vec![0.0; m]);
        bx.fill(&mut s, &mut x);
        bx.fill(&mut s, &mut y);
        pts.push((x, y));
    }
    if n == 1 && m == 1 {
        for xv in bx.grid(21) {
            for yv in bx.grid(401) {
                pts.push((vec![xv], vec![yv]));
            }
        }
    }
    let vals: Vec<f64> = pts.iter().map(|(x, y)| inner_product_f(spec, x, y)).collect();
    let tail = 0.5 * bx.lo.abs().max(bx.hi.abs());
    let mut lambda = f64::INFINITY;
    let mut witness = None;
    for ((x, y), v) in pts.iter().zip(&vals) {
        if norm2(y).sqrt() < tail {
            continue;
        }
        let r = -v / dissipation_weight(y, q);
        if r < lambda || r.is_nan() {
            lambda = if r.is_nan() { f64::NEG_INFINITY } else { r };
            witness = Some(Witness { x1: x.clone(), x2: x.clone(), y1: y.clone(), y2: y.clone(), value: *v });
        }
    }
    if witness.is_none() {
        // no probe reached the tail region
        lambda = f64::NAN;
    }
    let lam_pos = lambda.max(0.0);
    let constant = pts
        .iter()
        .zip(&vals)
        .map(|((_, y), v)| (v + lam_pos * dissipation_weight(y, q)).max(0.0))
        .fold(0.0, f64::max);
    let declared = spec.params().map(|p| p.lambda_diss);
    AssumptionReport {
        id: AssumptionId::B2Dissipativity,
        probes: pts.len(),
        observed: lambda,
        fitted_constant: Some(constant),
        declared,
        pass: lambda > 0.0
            && match declared {
                Some(d) => at_least(lambda, d),
                None => true,
            },
        witness,
    }
}

/// `−LHS / |y₁ − y₂|²` of the fast strong-monotonicity condition at a
/// shared slow state, so the `|x₁ − x₂|²` term vanishes.
fn strong_mono_ratio(spec: &ModelSpec, ell: f64, x: &[f64], y1: &[f64], y2: &[f64]) -> f64 {
    let m = spec.m();
    let d2 = spec.d2();
    let (mut f1, mut f2) = (vec![0.0; m], vec![0.0; m]);
    spec.f(x, y1, &mut f1);
    spec.f(x, y2, &mut f2);
    let dy: Vec<f64> = y1.iter().zip(y2).map(|(a, b)| a - b).collect();
    let df: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| a - b).collect();
    let (mut g1, mut g2) = (vec![0.0; m * d2], vec![0.0; m * d2]);
    spec.g(x, y1, &mut g1);
    spec.g(x, y2, &mut g2);
    let dg: f64 = g1.iter().zip(&g2).map(|(a, b)| (a - b) * (a - b)).sum();
    let jump = jump_difference_l2(spec, x, y1, y2);
    let lhs = 2.0 * dot(&df, &dy) + (ell - 1.0) * dg + 2f64.powf(ell - 3.0) * (ell - 1.0) * jump;
    -lhs / norm2(&dy)
}

/// `∫ |h₂(x, y₁, z) − h₂(x, y₂, z)|² ν₂(dz)`.
fn jump_difference_l2(spec: &ModelSpec, x: &[f64], y1: &[f64], y2: &[f64]) -> f64 {
    let nu = spec.nu2();
    let lam = nu.intensity();
    if lam == 0.0 {
        return 0.0;
    }
    let m = spec.m();
    let (mut a, mut b) = (vec![0.0; m], vec![0.0; m]);
    let diff_at = |z: f64, a: &mut Vec<f64>, b: &mut Vec<f64>| -> Vec<f64> {
        spec.h2(x, y1, z, a);
        spec.h2(x, y2, z, b);
        a.iter().zip(b.iter()).map(|(u, v)| u - v).collect()
    };
    if spec.h2_mark_affine() {
        // difference is a + c z
        let a0 = diff_at(0.0, &mut a, &mut b);
        let a1 = diff_at(1.0, &mut a, &mut b);
        let c: Vec<f64> = a1.iter().zip(&a0).map(|(u, v)| u - v).collect();
        lam * (norm2(&a0) + 2.0 * dot(&a0, &c) * nu.m1() + norm2(&c) * nu.m2())
    } else {
        spec.nu2_rule()
            .iter()
            .map(|&(z, w)| w * norm2(&diff_at(z, &mut a, &mut b)))
            .sum::<f64>()
            * lam
    }
}

/// Fits the fast strong-monotonicity rate `β` on the box.
pub fn check_strong_monotonicity_fast(
    spec: &ModelSpec,
    probes: usize,
    bx: ProbeBox,
    stream: &RngStream,
) -> AssumptionReport {
    let ell = effective_params(spec).ell;
    let mut s = stream.purpose(Purpose::Probe);
    let (n, m) = (spec.n(), spec.m());
    let (mut x, mut y1, mut y2) = (vec![0.0; n], vec![0.0; m], vec![0.0; m]);
    let mut beta = f64::INFINITY;
    let mut witness = None;
    let mut count = 0;
    let mut consider = |x: &[f64], y1: &[f64], y2: &[f64], count: &mut usize| {
        let r = strong_mono_ratio(spec, ell, x, y1, y2);
        *count += 1;
        if r < beta || r.is_nan() {
            beta = if r.is_nan() { f64::NEG_INFINITY } else { r };
            witness = Some(Witness { x1: x.to_vec(), x2: x.to_vec(), y1: y1.to_vec(), y2: y2.to_vec(), value: r });
        }
    };
    for _ in 0..probes.max(1) {
        bx.fill(&mut s, &mut x);
        bx.fill(&mut s, &mut y1);
        loop {
            bx.fill(&mut s, &mut y2);
            if y1 != y2 {
                break;
            }
        }
        consider(&x, &y1, &y2, &mut count);
    }
    if n == 1 && m == 1 {
        let ys: Vec<f64> = bx.grid(121).collect();
        for xv in bx.grid(5) {
            for (i, &a) in ys.iter().enumerate() {
                for &b in &ys[..i] {
                    consider(&[xv], &[a], &[b], &mut count);
                }
            }
        }
    }
    let declared = spec.params().map(|p| p.beta);
    AssumptionReport {
        id: AssumptionId::B1StrongMonotonicity,
        probes: count,
        observed: beta,
        fitted_constant: None,
        declared,
        pass: beta > 0.0
            && match declared {
                Some(d) => at_least(beta, d),
                None => true,
            },
        witness,
    }
}

fn growth_b(spec: &ModelSpec, k: f64, x: &[f64], y: &[f64]) -> f64 {
    let mut b = vec![0.0; spec.n()];
    spec.b(x, y, &mut b);
    norm2(&b).sqrt() / (1.0 + norm2(x).sqrt().powf(k) + norm2(y).sqrt().powf(k))
}

/// Frobenius norm of `∂_y f` by central differences over `1 + |y|^k`.
fn growth_df(spec: &ModelSpec, k: f64, x: &[f64], y: &[f64]) -> f64 {
    let m = spec.m();
    let (mut fp, mut fm) = (vec![0.0; m], vec![0.0; m]);
    let mut yy = y.to_vec();
    let mut total = 0.0;
    for j in 0..m {
        yy[j] = y[j] + FD_STEP;
        spec.f(x, &yy, &mut fp);
        yy[j] = y[j] - FD_STEP;
        spec.f(x, &yy, &mut fm);
        yy[j] = y[j];
        total += fp.iter().zip(&fm).map(|(a, b)| ((a - b) / (2.0 * FD_STEP)).powi(2)).sum::<f64>();
    }
    total.sqrt() / (1.0 + norm2(y).sqrt().powf(k))
}

fn growth_g(spec: &ModelSpec, zeta: f64, x: &[f64], y: &[f64]) -> f64 {
    let mut g = vec![0.0; spec.m() * spec.d2()];
    spec.g(x, y, &mut g);
    norm2(&g).sqrt() / (1.0 + norm2(y).sqrt().powf(zeta))
}

/// Finite-ratio growth reports for `b`, `∂_y f` and `g` on the box.
pub fn check_growth(spec: &ModelSpec, probes: usize, bx: ProbeBox, stream: &RngStream) -> Vec<AssumptionReport> {
    let p = effective_params(spec);
    let mut s = stream.purpose(Purpose::Probe);
    let (n, m) = (spec.n(), spec.m());
    let pts: Vec<(Vec<f64>, Vec<f64>)> = (0..probes.max(1))
        .map(|_| {
            let (mut x, mut y) = (vec![0.0; n], vec![0.0; m]);
            bx.fill(&mut s, &mut x);
            bx.fill(&mut s, &mut y);
            (x, y)
        })
        .collect();
    let mk = |id: AssumptionId, ratio: &dyn Fn(&[f64], &[f64]) -> f64| {
        let mut worst = f64::NEG_INFINITY;
        let mut witness = None;
        for (x, y) in &pts {
            let r = ratio(x, y);
            if r > worst || r.is_nan() {
                worst = if r.is_nan() { f64::INFINITY } else { r };
                witness = Some(Witness { x1: x.clone(), x2: x.clone(), y1: y.clone(), y2: y.clone(), value: r });
            }
        }
        AssumptionReport {
            id,
            probes: pts.len(),
            observed: worst,
            fitted_constant: None,
            declared: None,
            pass: worst.is_finite(),
            witness,
        }
    };
    vec![
        mk(AssumptionId::A3Growth, &|x, y| growth_b(spec, p.k, x, y)),
        mk(AssumptionId::B3DerivativeGrowth, &|x, y| growth_df(spec, p.k, x, y)),
        mk(AssumptionId::B3NoiseGrowth, &|x, y| growth_g(spec, p.zeta1, x, y)),
    ]
}

/// Exact-equality probe of `σ(x, y₁) = σ(x, y₂)`.
pub fn check_sigma_y_independence(
    spec: &ModelSpec,
    probes: usize,
    bx: ProbeBox,
    stream: &RngStream,
) -> AssumptionReport {
    let mut s = stream.purpose(Purpose::Probe);
    let (n, m) = (spec.n(), spec.m());
    let len = n * spec.d1();
    let (mut x, mut y1, mut y2) = (vec![0.0; n], vec![0.0; m], vec![0.0; m]);
    let (mut a, mut b) = (vec![0.0; len], vec![0.0; len]);
    let mut worst = 0.0;
    let mut witness = None;
    for _ in 0..probes.max(1) {
        bx.fill(&mut s, &mut x);
        bx.fill(&mut s, &mut y1);
        bx.fill(&mut s, &mut y2);
        spec.sigma(&x, &y1, &mut a);
        spec.sigma(&x, &y2, &mut b);
        let d = max_abs_diff(&a, &b);
        if d > worst || (d.is_nan() && witness.is_none()) {
            worst = d;
            witness = Some(Witness { x1: x.clone(), x2: x.clone(), y1: y1.clone(), y2: y2.clone(), value: d });
        }
    }
    AssumptionReport {
        id: AssumptionId::SigmaYIndependence,
        probes: probes.max(1),
        observed: worst,
        fitted_constant: None,
        declared: Some(0.0),
        pass: worst == 0.0,
        witness,
    }
}

/// Every check, in a fixed order. The σ-independence check is included only
/// when the model declares it.
pub fn validate_all(spec: &ModelSpec, probes: usize, bx: ProbeBox, stream: &RngStream) -> Vec<AssumptionReport> {
    let mut out = vec![
        check_monotonicity(spec, probes, bx, &stream.child(0)),
        check_strong_monotonicity_fast(spec, probes, bx, &stream.child(1)),
        check_fast_dissipativity(spec, probes, bx, &stream.child(2)),
    ];
    out.extend(check_growth(spec, probes, bx, &stream.child(3)));
    if spec.sigma_y_independent() {
        out.push(check_sigma_y_independence(spec, probes, bx, &stream.child(4)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_example_27, builtin_example_28, SigmaVariant};

    fn scalar(name: &str) -> crate::model::ModelBuilder {
        ModelSpec::builder(name, 1, 1)
    }

    fn params_with(f: impl FnOnce(&mut AssumptionParams)) -> AssumptionParams {
        let mut p = AssumptionParams::default();
        f(&mut p);
        p
    }

    #[test]
    fn linear_drift_has_unit_ratio() {
        let m = scalar("lin").scalar_drift(|x, _| x).build().unwrap();
        let r = check_monotonicity(&m, 200, ProbeBox::default(), &RngStream::new(1, 0));
        assert!((r.observed - 1.0).abs() < 1e-12);
        assert!(r.pass);
    }

    #[test]
    fn cubic_drift_ratio_bounded_by_one() {
        // grid oracle: difference quotient of -x^3 + x on [-3, 3] never exceeds 1
        let grid: Vec<f64> = (0..=6000).map(|i| -3.0 + i as f64 * 1e-3).collect();
        let oracle = grid
            .windows(2)
            .map(|w| {
                let g = |x: f64| -x * x * x + x;
                (g(w[1]) - g(w[0])) / (w[1] - w[0])
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(oracle <= 1.0 + 1e-9);
        let m = builtin_example_27(SigmaVariant::StateLinear);
        let r = check_monotonicity(&m, 2000, ProbeBox::new(-3.0, 3.0), &RngStream::new(2, 0));
        assert!(r.observed <= 1.0 + 1e-9, "{}", r.observed);
        assert!(r.observed > 0.99);
        assert!(r.pass);
    }

    #[test]
    fn quadratic_drift_is_caught_with_reproducible_witness() {
        // grid oracle: ratio is x1 + x2, so it approaches 6 on [0, 3]
        let m = scalar("sq")
            .scalar_drift(|x, _| x * x)
            .params(params_with(|p| p.mono_c = 5.0))
            .build()
            .unwrap();
        let r = check_monotonicity(&m, 2000, ProbeBox::new(0.0, 3.0), &RngStream::new(3, 0));
        assert!(r.observed > 5.9 && r.observed <= 6.0 + 1e-9, "{}", r.observed);
        assert!(!r.pass);
        let w = r.witness.as_ref().unwrap();
        assert_eq!(r.witness_value(&m).unwrap(), w.value);
        assert!((w.value - (w.x1[0] + w.x2[0])).abs() < 1e-9);
    }

    #[test]
    fn dissipativity_linear_cases() {
        let m = scalar("ou")
            .scalar_fast_drift(|_, y| -y)
            .params(params_with(|p| p.q = 2.0))
            .build()
            .unwrap();
        let r = check_fast_dissipativity(&m, 500, ProbeBox::default(), &RngStream::new(4, 0));
        assert_eq!(r.observed, 1.0);
        assert_eq!(r.fitted_constant, Some(0.0));
        assert!(r.pass);

        let anti = scalar("anti")
            .scalar_fast_drift(|_, y| y)
            .params(params_with(|p| p.lambda_diss = 0.01))
            .build()
            .unwrap();
        let r = check_fast_dissipativity(&anti, 500, ProbeBox::default(), &RngStream::new(4, 0));
        assert!(!r.pass);
        assert!(r.observed < 0.0);
    }

    #[test]
    fn dissipativity_example_27() {
        // grid oracle: <f, y> + 0.5 y^2 + 0.5 y^6 stays bounded on [-4, 4]
        let bound = (0..=800)
            .flat_map(|i| (0..=20).map(move |j| (-4.0 + i as f64 * 0.01, -4.0 + j as f64 * 0.4)))
            .map(|(y, x): (f64, f64)| (x.sin() - y - y.powi(5)) * y + 0.5 * y * y + 0.5 * y.powi(6))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(bound < 1.0, "{bound}");
        let m = builtin_example_27(SigmaVariant::StateLinear);
        let r = check_fast_dissipativity(&m, 2000, ProbeBox::new(-4.0, 4.0), &RngStream::new(5, 0));
        assert!(r.observed >= 0.45, "{}", r.observed);
        assert!(r.pass);
    }

    #[test]
    fn strong_monotonicity_examples() {
        let ou = scalar("ou")
            .scalar_fast_drift(|_, y| -y)
            .scalar_fast_sigma(|_, _| 1.0)
            .scalar_fast_jump(|_, _, z| z, true)
            .params(params_with(|p| p.beta = 2.0))
            .build()
            .unwrap();
        let r = check_strong_monotonicity_fast(&ou, 300, ProbeBox::default(), &RngStream::new(6, 0));
        assert!((r.observed - 2.0).abs() < 1e-12);
        assert!(r.pass);

        let ex27 = builtin_example_27(SigmaVariant::StateLinear);
        let r = check_strong_monotonicity_fast(&ex27, 2000, ProbeBox::default(), &RngStream::new(6, 1));
        assert!(r.observed >= 2.0, "{}", r.observed);
        assert!(r.pass);
    }

    #[test]
    fn example_28_fast_drift_degenerates_at_origin() {
        // Exact: -2<f(y1) - f(y2), y1 - y2>/|y1 - y2|^2 = 2 (y1^2 + y1 y2 + y2^2),
        // which tends to 0 as both points approach 0, so a declared beta = 1
        // cannot hold there.
        let m = builtin_example_28();
        let r = check_strong_monotonicity_fast(&m, 2000, ProbeBox::default(), &RngStream::new(7, 0));
        assert!(!r.pass);
        assert!(r.observed < 0.1, "{}", r.observed);
        let w = r.witness.as_ref().unwrap();
        let (a, b) = (w.y1[0], w.y2[0]);
        let exact = 2.0 * (a * a + a * b + b * b);
        assert!((r.witness_value(&m).unwrap() - exact).abs() < 1e-9);
        assert!(r.witness_value(&m).unwrap() < 1.0);
    }

    #[test]
    fn non_affine_jump_uses_quadrature() {
        // h2 = y z^2: difference is (y1 - y2) z^2, so the integral is λ E Z^4 |Δ|^2
        let m = scalar("q")
            .scalar_fast_drift(|_, y| -3.0 * y)
            .scalar_fast_jump(|_, y, z| y * z * z, false)
            .params(params_with(|p| {
                p.ell = 3.0;
                p.beta = 1.0;
            }))
            .build()
            .unwrap();
        let r = check_strong_monotonicity_fast(&m, 50, ProbeBox::default(), &RngStream::new(8, 0));
        // uniform(-1/2, 1/2): E Z^4 = 1/80; LHS/|Δ|^2 = -6 + 2^0 * 2 * (1/80)
        assert!((r.observed - (6.0 - 2.0 / 80.0)).abs() < 1e-10, "{}", r.observed);
    }

    #[test]
    fn built_ins_pass_where_the_claims_hold() {
        for m in [builtin_example_27(SigmaVariant::StateLinear), builtin_example_27(SigmaVariant::SineBounded)] {
            for r in validate_all(&m, 1000, ProbeBox::default(), &RngStream::new(9, 0)) {
                assert!(r.pass, "{} {:?}", m.name(), r);
            }
        }
        let m = builtin_example_28();
        for r in validate_all(&m, 1000, ProbeBox::default(), &RngStream::new(9, 0)) {
            assert_eq!(r.pass, r.id != AssumptionId::B1StrongMonotonicity, "{r:?}");
        }
    }

    #[test]
    fn checks_are_deterministic() {
        let m = builtin_example_28();
        let a = validate_all(&m, 300, ProbeBox::default(), &RngStream::new(10, 0));
        let b = validate_all(&m, 300, ProbeBox::default(), &RngStream::new(10, 0));
        assert_eq!(a, b);
    }
}
