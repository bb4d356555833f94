use super::*;
use crate::integrate::AveragedField;
use crate::levy_rng::JumpMeasureSpec;
use crate::model::{builtin_example_27, SigmaVariant};

/// `b = y`, `f = x − y`, `g = 1`, `h₂ = z`: stationary law has mean `x`
/// and variance `(1 + λ E z²)/2`.
fn jump_ou() -> ModelSpec {
    ModelSpec::builder("jump-ou", 1, 1)
        .scalar_drift(|_, y| y)
        .scalar_sigma(|_, _| 1.0)
        .sigma_y_independent(true)
        .scalar_fast_drift(|x, y| x - y)
        .scalar_fast_sigma(|_, _| 1.0)
        .scalar_fast_jump(|_, _, z| z, true)
        .nu2(JumpMeasureSpec::default_uniform())
        .build()
        .unwrap()
}

const OU_VAR: f64 = (1.0 + 1.0 / 12.0) / 2.0;

fn quick() -> InvariantConfig {
    InvariantConfig { burn_in: 5.0, horizon: 400.0, ..InvariantConfig::default() }
}

#[test]
fn jump_ou_stationary_moments() {
    let spec = jump_ou();
    let inv = estimate_invariant_measure(&spec, &[0.7], &quick(), &RngStream::new(1, 0)).unwrap();
    assert!(!inv.low_ess);
    assert!((inv.weight() * inv.len() as f64 - 1.0).abs() < 1e-12);
    let m1 = inv.moment(0, 1).unwrap();
    assert!((m1.mean - 0.7).abs() <= 3.0 * m1.half_width, "{m1:?}");
    let m2 = inv.moment(0, 2).unwrap();
    let var = m2.mean - m1.mean * m1.mean;
    assert!((var / OU_VAR - 1.0).abs() < 0.05, "{var}");
    let (bbar, ci) = averaged_drift(&spec, &[0.7], &inv).unwrap();
    assert!((bbar[0] - 0.7).abs() <= 3.0 * ci[0]);
}

#[test]
fn invariant_law_forgets_start() {
    let spec = builtin_example_27(SigmaVariant::StateLinear);
    let a = estimate_invariant_measure(&spec, &[0.5], &InvariantConfig { y0: Some(vec![2.0]), ..quick() }, &RngStream::new(2, 0)).unwrap();
    let b = estimate_invariant_measure(&spec, &[0.5], &InvariantConfig { y0: Some(vec![-2.0]), ..quick() }, &RngStream::new(2, 1)).unwrap();
    for k in 1..=4 {
        let (ma, mb) = (a.moment(0, k).unwrap(), b.moment(0, k).unwrap());
        assert!((ma.mean - mb.mean).abs() <= 3.0 * ma.half_width.hypot(mb.half_width), "moment {k}: {ma:?} {mb:?}");
    }
}

#[test]
fn x_free_fast_dynamics_give_same_law() {
    let spec = ModelSpec::builder("x-free", 1, 1)
        .scalar_fast_drift(|_, y| -y - y * y * y)
        .scalar_fast_sigma(|_, _| 1.0)
        .scalar_fast_jump(|_, _, z| z, true)
        .build()
        .unwrap();
    let a = estimate_invariant_measure(&spec, &[0.0], &quick(), &RngStream::new(3, 0)).unwrap();
    let b = estimate_invariant_measure(&spec, &[2.0], &quick(), &RngStream::new(3, 1)).unwrap();
    for k in 1..=4 {
        let (ma, mb) = (a.moment(0, k).unwrap(), b.moment(0, k).unwrap());
        assert!((ma.mean - mb.mean).abs() <= 3.0 * ma.half_width.hypot(mb.half_width));
    }
}

#[test]
fn y_free_drift_averages_exactly() {
    let spec = ModelSpec::builder("y-free", 1, 1)
        .scalar_drift(|x, _| 0.1 - x.sin())
        .scalar_sigma(|_, _| 1.0)
        .scalar_fast_drift(|_, y| -y)
        .scalar_fast_sigma(|_, _| 1.0)
        .build()
        .unwrap();
    let inv = estimate_invariant_measure(&spec, &[1.3], &quick(), &RngStream::new(4, 0)).unwrap();
    let (b, ci) = averaged_drift(&spec, &[1.3], &inv).unwrap();
    assert_eq!(b[0], 0.1 - 1.3f64.sin());
    assert_eq!(ci[0], 0.0);
    let d = averaged_diffusion(&spec, &[1.3], &inv).unwrap();
    assert_eq!((d.cov[0], d.root.root[0]), (1.0, 1.0));
    assert!(averaged_drift(&spec, &[1.4], &inv).is_err());
}

#[test]
fn odd_symmetry_at_origin() {
    let spec = builtin_example_27(SigmaVariant::StateLinear);
    let inv = estimate_invariant_measure(&spec, &[0.0], &quick(), &RngStream::new(5, 0)).unwrap();
    let (b, ci) = averaged_drift(&spec, &[0.0], &inv).unwrap();
    assert!(b[0].abs() <= 3.0 * ci[0], "{} ± {}", b[0], ci[0]);
}

#[test]
fn exact_table_for_linear_drift() {
    let spec = ModelSpec::builder("linear", 1, 1)
        .scalar_drift(|x, _| -x)
        .scalar_sigma(|_, _| 2.0)
        .sigma_y_independent(true)
        .drift_y_independent(true)
        .build()
        .unwrap();
    let cfg = TableConfig {
        lo: vec![-2.0],
        hi: vec![2.0],
        nodes: vec![9],
        invariant: InvariantConfig::default(),
        policy: Extrapolation::Clamp,
        validate: true,
    };
    let t = build_averaged_table(&spec, &cfg, &RngStream::new(1, 0)).unwrap();
    assert!(t.is_exact());
    for k in 0..9 {
        assert_eq!(t.drift[k], -t.node(k)[0]);
    }
    for x in [-1.9, -0.3, 0.0, 1.77] {
        assert_eq!(t.drift_at(&[x]).unwrap().value[0], -x);
    }
    assert_eq!(t.cov_at(&[0.3]).unwrap().value[0], 4.0);
}

fn ou_table(policy: Extrapolation) -> AveragedTable {
    let cfg = TableConfig {
        lo: vec![-2.0],
        hi: vec![2.0],
        nodes: vec![5],
        invariant: InvariantConfig { burn_in: 5.0, horizon: 200.0, ..InvariantConfig::default() },
        policy,
        validate: true,
    };
    build_averaged_table(&jump_ou(), &cfg, &RngStream::new(6, 0)).unwrap()
}

#[test]
fn table_policies_and_roundtrip() {
    let t = ou_table(Extrapolation::Clamp);
    assert!(!t.is_exact());
    assert!(t.header.validation.as_ref().unwrap().worst_ratio <= 1.0);
    for k in 0..5 {
        let x = t.node(k)[0];
        assert!((t.drift[k] - x).abs() <= 3.0 * t.drift_ci[k], "node {x}");
        assert!(t.drift_ci[k] > 0.0);
    }
    let q = t.drift_at(&[5.0]).unwrap();
    assert!(q.extrapolated);
    assert_eq!(q.value[0], t.drift[4]);
    let inside = t.drift_at(&[0.5]).unwrap();
    assert!(!inside.extrapolated);
    assert_eq!(inside.value[0], 0.5 * (t.drift[2] + t.drift[3]));
    assert_eq!(inside.ci[0], t.drift_ci[2].max(t.drift_ci[3]));

    let mut out = [0.0];
    assert!(!t.drift(&[0.5], &mut out).unwrap());
    assert_eq!(out[0], inside.value[0]);

    let lin = ou_table(Extrapolation::Linear);
    let q = lin.drift_at(&[3.0]).unwrap();
    assert_eq!(q.value[0], lin.drift[4] + (lin.drift[4] - lin.drift[3]));
    assert_eq!(lin.cov_at(&[3.0]).unwrap().value[0], lin.cov[4]);

    let strict = ou_table(Extrapolation::Error);
    assert!(strict.drift_at(&[2.5]).is_err());

    let back = AveragedTable::from_parts(&t.to_csv(), &t.header_json()).unwrap();
    assert_eq!(back.drift, t.drift);
    assert_eq!(back.cov_ci, t.cov_ci);
    assert_eq!(back.header, t.header);
    assert!(AveragedTable::from_parts("x0,oops\n", &t.header_json()).is_err());
}

#[test]
fn noisy_table_is_refused() {
    // a kink the grid cannot resolve
    let spec = ModelSpec::builder("kink", 1, 1)
        .scalar_drift(|x, y| 1e-9 * y + if x.abs() < 0.3 { 5.0 } else { 0.0 })
        .scalar_sigma(|_, _| 1.0)
        .scalar_fast_drift(|_, y| -y)
        .scalar_fast_sigma(|_, _| 1.0)
        .build()
        .unwrap();
    let cfg = TableConfig {
        lo: vec![-2.0],
        hi: vec![2.0],
        nodes: vec![5],
        invariant: InvariantConfig { burn_in: 1.0, horizon: 50.0, ..InvariantConfig::default() },
        policy: Extrapolation::Clamp,
        validate: true,
    };
    assert!(matches!(
        build_averaged_table(&spec, &cfg, &RngStream::new(1, 0)),
        Err(ErgodicError::TableRejected { .. })
    ));
}

#[test]
fn corrector_is_zero_for_y_free_drift() {
    let spec = ModelSpec::builder("y-free", 1, 1)
        .scalar_drift(|x, _| x * x)
        .scalar_fast_drift(|_, y| -y)
        .scalar_fast_sigma(|_, _| 1.0)
        .build()
        .unwrap();
    let est = poisson_cell(&spec, &[0.5], &[1.0], 5.0, 20, 2f64.powi(-6), (&[0.25], &[0.0]), &RngStream::new(1, 0)).unwrap();
    assert_eq!(est.phi, vec![0.0]);
    assert!(matches!(est.tail, TailDiagnostic::BelowNoise { .. }));
}

#[test]
fn corrector_matches_ou_mean_flow() {
    let spec = jump_ou();
    let a = 0.4;
    for y in [1.9, -0.6] {
        let est = poisson_cell(&spec, &[a], &[y], 12.0, 4000, 2f64.powi(-6), (&[a], &[0.0]), &RngStream::new(2, 0)).unwrap();
        let tol = (3.0 * est.ci[0]).max(0.02 * (y - a).abs());
        assert!((est.phi[0] - (y - a)).abs() <= tol, "y = {y}: {} ± {}", est.phi[0], est.ci[0]);
        match est.tail {
            TailDiagnostic::Fitted { rate, tail_bound, .. } => {
                assert!((rate - 1.0).abs() < 0.2, "rate {rate}");
                assert!(tail_bound < 0.01);
            }
            other => panic!("{other:?}"),
        }
    }
    let est = poisson_cell(&spec, &[a], &[a], 12.0, 2000, 2f64.powi(-6), (&[a], &[0.0]), &RngStream::new(3, 0)).unwrap();
    assert!(est.phi[0].abs() <= 3.0 * est.ci[0]);
}

#[test]
fn mean_flow_curve() {
    let spec = jump_ou();
    let a = -0.3;
    let times: Vec<f64> = (0..=8).map(|k| k as f64 * 0.25).collect();
    let c = convergence_to_average(&spec, &[a], &[a + 1.0], &times, 4000, (&[a], &[0.0]), 2f64.powi(-6), &RngStream::new(4, 0)).unwrap();
    assert_eq!(c.value[0], 1.0);
    for (k, &t) in times.iter().enumerate() {
        let want = (-t).exp();
        assert!((c.value[k] - want).abs() <= (3.0 * c.ci[k]).max(0.02 * want), "t = {t}: {} vs {want}", c.value[k]);
    }
    let fit = c.fit.unwrap();
    assert!((fit.rate - 1.0).abs() < 0.1);
}

#[test]
fn linear_contraction_rate() {
    let spec = ModelSpec::builder("contract", 1, 1)
        .scalar_fast_drift(|_, y| -y)
        .scalar_fast_sigma(|_, _| 1.0)
        .scalar_fast_jump(|_, _, z| z, true)
        .build()
        .unwrap();
    let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.2).collect();
    let d = ergodicity_decay(&spec, &[0.0], &[1.0], &[-1.0], &times, 50, 2f64.powi(-9), &RngStream::new(5, 0)).unwrap();
    let fit = d.fit.unwrap();
    assert!((fit.rate / 2.0 - 1.0).abs() < 0.02, "{fit:?}");
    assert!(fit.r2 > 0.999);
    let same = ergodicity_decay(&spec, &[0.0], &[1.0], &[1.0], &times, 10, 2f64.powi(-6), &RngStream::new(5, 0)).unwrap();
    assert!(same.mean_sq.iter().all(|&v| v == 0.0));
    assert!(same.fit.is_none());
}

#[test]
fn pilot_config_scales_with_rate() {
    let c = InvariantConfig::from_pilot(2.0).unwrap();
    assert_eq!((c.burn_in, c.horizon, c.n_chains), (2.5, 50.0, 8));
    assert!(InvariantConfig::from_pilot(0.0).is_err());
}
