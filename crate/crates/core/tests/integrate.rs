use mslevy::ergodic::{build_averaged_table, InvariantConfig, TableConfig};
use mslevy::estimate::{fast_moment_sweep, mc_mean_ci, DeltaPolicy, Sweep};
use mslevy::integrate::{
    coupled_pair_with, simulate_frozen_with, simulate_slow_fast_with, AveragedField, IntegrateError, OnStep, Scheme,
    Snapshot, StepperConfig,
};
use mslevy::levy_rng::{JumpMeasureSpec, RngStream};
use mslevy::model::{builtin_example_27, ModelSpec, SigmaVariant};

/// `b̄ ≡ 0`, `σ̄ ≡ 0`.
struct Zero;

impl AveragedField for Zero {
    fn slow_dim(&self) -> usize {
        1
    }
    fn drift(&self, _x: &[f64], out: &mut [f64]) -> Result<bool, IntegrateError> {
        out[0] = 0.0;
        Ok(false)
    }
    fn covariance(&self, _x: &[f64], out: &mut [f64]) -> Result<bool, IntegrateError> {
        out[0] = 0.0;
        Ok(false)
    }
}

fn sup_abs_x(spec: &ModelSpec, cfg: &StepperConfig, stream: &RngStream) -> Result<f64, IntegrateError> {
    let mut sup = 0.0f64;
    let mut obs = OnStep(|s: &Snapshot<'_>| sup = sup.max(s.x[0].abs()));
    simulate_slow_fast_with(spec, &[1.0], &[1.0], cfg, stream, &[], &mut obs)?;
    Ok(sup)
}

#[test]
fn superlinear_example_never_blows_up() {
    let spec = builtin_example_27(SigmaVariant::StateLinear);
    let cfg = StepperConfig::new(2f64.powi(-6), 1.0);
    let root = RngStream::new(31, 0);
    for i in 0..1000 {
        let sup = sup_abs_x(&spec, &cfg, &root.child(i)).unwrap_or_else(|e| panic!("path {i}: {e}"));
        assert!(sup.is_finite());
    }
}

#[test]
fn fourth_moment_of_sup_is_stable_under_step_halving() {
    let spec = builtin_example_27(SigmaVariant::StateLinear);
    let eps = 2f64.powi(-4);
    let root = RngStream::new(32, 0);
    let moment = |delta: f64| {
        let cfg = StepperConfig::new(eps, 1.0).with_delta(delta);
        let v: Vec<f64> = (0..200).map(|i| sup_abs_x(&spec, &cfg, &root.child(i)).unwrap().powi(4)).collect();
        mc_mean_ci(&v, 0.95).unwrap()
    };
    let (m1, h1) = moment(eps * 2f64.powi(-6));
    let (m2, h2) = moment(eps * 2f64.powi(-7));
    assert!(m1.is_finite() && m2.is_finite());
    // the two grids draw independent increments, so the estimates can only
    // be compared up to their combined half-width
    assert!((m1 - m2).abs() < h1.hypot(h2), "{m1} ± {h1} vs {m2} ± {h2}");
}

#[test]
fn ou_time_average_matches_closed_form_variance() {
    // b = y, σ = h1 = 0, fast OU without jumps: X^ε_T − X̄_T = ∫₀^T Y ds
    let spec = ModelSpec::builder("ou_time_average", 1, 1)
        .scalar_drift(|_, y| y)
        .scalar_fast_drift(|_, y| -y)
        .scalar_fast_sigma(|_, _| 1.0)
        .nu1(JumpMeasureSpec::none())
        .nu2(JumpMeasureSpec::none())
        .sigma_y_independent(true)
        .build()
        .unwrap();
    let (t, n) = (1.0, 4000);
    let root = RngStream::new(33, 0);
    for eps in [2f64.powi(-3), 2f64.powi(-5)] {
        let cfg = StepperConfig::new(eps, t);
        let sq: Vec<f64> = (0..n)
            .map(|i| {
                let s = coupled_pair_with(&spec, &Zero, &[0.0], &[0.0], &cfg, &root.child(i), &[], &mut ()).unwrap();
                (s.terminal.x[0] - s.terminal.xbar[0]).powi(2)
            })
            .collect();
        let (m, hw) = mc_mean_ci(&sq, 0.95).unwrap();
        let exact = eps * (t - 2.0 * eps * (1.0 - (-t / eps).exp()) + 0.5 * eps * (1.0 - (-2.0 * t / eps).exp()));
        assert!((m - exact).abs() < 1.5 * hw + 0.03 * exact, "eps {eps}: {m} ± {hw} vs {exact}");
    }
}

#[test]
fn sup_distance_shrinks_when_epsilon_halves() {
    let spec = builtin_example_27(SigmaVariant::StateLinear);
    let table = build_averaged_table(
        &spec,
        &TableConfig {
            lo: vec![-3.0],
            hi: vec![3.0],
            nodes: vec![25],
            invariant: InvariantConfig { burn_in: 2.0, horizon: 50.0, ..InvariantConfig::default() },
            policy: Default::default(),
            validate: false,
        },
        &RngStream::new(34, 1),
    )
    .unwrap();
    let root = RngStream::new(34, 2);
    let n = 500;
    let sup = |eps: f64| -> Vec<f64> {
        let cfg = StepperConfig::new(eps, 1.0).with_delta(2f64.powi(-11));
        (0..n)
            .map(|i| {
                coupled_pair_with(&spec, &table, &[1.0], &[1.0], &cfg, &root.child(i), &[], &mut ())
                    .unwrap()
                    .sup_distance
            })
            .collect()
    };
    let (a, b) = (sup(2f64.powi(-3)), sup(2f64.powi(-4)));
    let diff: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
    let (m, hw) = mc_mean_ci(&diff, 0.95).unwrap();
    let se = hw / 1.959963984540054;
    assert!(m > 3.0 * se, "mean decrease {m}, se {se}");
}

#[test]
fn frozen_second_moment_stays_under_its_envelope() {
    // d/dt E Y² = −2E Y² − 2E Y⁶ + 1 + 1/12 ≤ −2E Y² + 13/12
    let spec = builtin_example_27(SigmaVariant::StateLinear);
    let times: Vec<f64> = (1..=20).map(|k| 0.1 * k as f64).collect();
    let y0 = 2.0;
    let root = RngStream::new(35, 0);
    let mut per = vec![Vec::with_capacity(10_000); times.len()];
    for i in 0..10_000 {
        let s = simulate_frozen_with(&spec, &[0.0], &[y0], 2.0, 2f64.powi(-8), Scheme::TamedEuler, &root.child(i), &times, &mut ())
            .unwrap();
        for (k, c) in s.checkpoints.iter().enumerate() {
            per[k].push(c.y[0] * c.y[0]);
        }
    }
    let mut prev = f64::INFINITY;
    for (k, &t) in times.iter().enumerate() {
        let (m, hw) = mc_mean_ci(&per[k], 0.95).unwrap();
        let envelope = (-2.0 * t).exp() * y0 * y0 + 13.0 / 24.0 * (1.0 - (-2.0 * t).exp());
        assert!(m <= envelope + 3.0 * hw, "t = {t}: {m} ± {hw} above {envelope}");
        // the envelope decreases from y0² = 4 toward 13/24; so does the curve, up to noise
        assert!(m <= prev + 3.0 * hw, "t = {t}");
        prev = m;
    }
}

#[test]
fn fast_fourth_moment_is_uniform_in_epsilon() {
    let spec = builtin_example_27(SigmaVariant::StateLinear);
    let sweep = Sweep {
        epsilons: (3..=7).map(|k| 2f64.powi(-k)).collect(),
        horizon: 1.0,
        n_paths: 500,
        delta: DeltaPolicy::GlobalFromMin { shift: 6 },
    };
    let t = fast_moment_sweep(&spec, &[1.0], &[1.0], &sweep, 4.0, Scheme::TamedEuler, &RngStream::new(36, 0)).unwrap();
    assert!(t.marginal_ratio < 2.0, "ratio {}", t.marginal_ratio);
}

#[test]
fn coarse_micro_step_is_refused() {
    let spec = builtin_example_27(SigmaVariant::StateLinear);
    let cfg = StepperConfig::new(2f64.powi(-4), 1.0).with_delta(2f64.powi(-5));
    let err = simulate_slow_fast_with(&spec, &[1.0], &[1.0], &cfg, &RngStream::new(1, 0), &[], &mut ()).unwrap_err();
    assert!(matches!(err, IntegrateError::Config(_)), "{err}");
}
