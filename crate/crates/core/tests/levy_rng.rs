use mslevy::levy_rng::{
    compensator_rate, sample_jump_size, sample_jump_times, JumpMeasureSpec, Purpose, RngStream, SizeFamily,
};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Poisson};

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

#[test]
fn distinct_stream_ids_are_uncorrelated() {
    let n = 100_000;
    let mut a = RngStream::new(17, 1);
    let mut b = RngStream::new(17, 2);
    let (u, v): (Vec<f64>, Vec<f64>) = (0..n).map(|_| (a.uniform(), b.uniform())).unzip();
    let (mu, su) = mean_sd(&u);
    let (mv, sv) = mean_sd(&v);
    let rho = u.iter().zip(&v).map(|(x, y)| (x - mu) * (y - mv)).sum::<f64>() / ((n - 1) as f64 * su * sv);
    assert!(rho.abs() < 4.0 / (n as f64).sqrt(), "rho = {rho}");
}

#[test]
fn purposes_and_children_are_uncorrelated() {
    let n = 100_000;
    let root = RngStream::new(5, 0);
    let pairs = [
        (root.purpose(Purpose::SlowWiener), root.purpose(Purpose::FastWiener)),
        (root.child(0), root.child(1)),
        (root.purpose(Purpose::SlowJumps).child(3), root.purpose(Purpose::FastJumps).child(3)),
    ];
    for (mut a, mut b) in pairs {
        let (u, v): (Vec<f64>, Vec<f64>) = (0..n).map(|_| (a.normal(), b.normal())).unzip();
        let rho = u.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        assert!(rho.abs() < 4.0 / (n as f64).sqrt(), "rho = {rho}");
    }
}

#[test]
fn zero_event_probability() {
    let n = 100_000;
    let zeros = (0..n)
        .filter(|&i| sample_jump_times(2.0, 1.0, &mut RngStream::new(1, i)).unwrap().is_empty())
        .count();
    let p = (-2.0f64).exp();
    let se = (p * (1.0 - p) / n as f64).sqrt();
    let phat = zeros as f64 / n as f64;
    assert!((phat - p).abs() < 3.0 * se, "{phat} vs {p}");
}

#[test]
fn mean_event_count() {
    let n = 100_000;
    let total: usize = (0..n).map(|i| sample_jump_times(5.0, 2.0, &mut RngStream::new(2, i)).unwrap().len()).sum();
    let mean = total as f64 / n as f64;
    assert!((mean - 10.0).abs() < 3.0 * 10f64.sqrt() / (n as f64).sqrt(), "{mean}");
}

#[test]
fn uniform_second_moment() {
    let spec = JumpMeasureSpec::new(1.0, SizeFamily::Uniform { a: -0.5, b: 0.5 }).unwrap();
    let mut s = RngStream::new(3, 0);
    let m2 = (0..1_000_000).map(|_| sample_jump_size(&spec, &mut s).powi(2)).sum::<f64>() / 1e6;
    assert!((m2 / (1.0 / 12.0) - 1.0).abs() < 0.01, "{m2}");
}

#[test]
fn empirical_moments_match_declared() {
    let families = [
        SizeFamily::PointMass { c: 0.3 },
        SizeFamily::Uniform { a: -0.5, b: 0.5 },
        SizeFamily::Uniform { a: -0.2, b: 0.9 },
        SizeFamily::TruncatedGaussian { mu: 0.1, sd: 0.2, bound: 1.0 },
        SizeFamily::TruncatedGaussian { mu: 0.0, sd: 2.0, bound: 1.0 },
    ];
    for (k, fam) in families.into_iter().enumerate() {
        let spec = JumpMeasureSpec::new(1.0, fam).unwrap();
        let mut s = RngStream::new(4, k as u64);
        let z: Vec<f64> = (0..1_000_000).map(|_| sample_jump_size(&spec, &mut s)).collect();
        let (m1, sd1) = mean_sd(&z);
        let z2: Vec<f64> = z.iter().map(|v| v * v).collect();
        let (m2, sd2) = mean_sd(&z2);
        // the floor absorbs summation rounding for the point mass
        let se = |sd: f64| 4.0 * sd / 1000.0 + 1e-10;
        assert!((m1 - spec.m1()).abs() <= se(sd1), "{fam:?}: m1 {m1} vs {}", spec.m1());
        assert!((m2 - spec.m2()).abs() <= se(sd2), "{fam:?}: m2 {m2} vs {}", spec.m2());
    }
}

#[test]
fn truncated_gaussian_stays_in_support() {
    let spec = JumpMeasureSpec::new(1.0, SizeFamily::TruncatedGaussian { mu: 0.0, sd: 0.2, bound: 1.0 }).unwrap();
    let mut s = RngStream::new(5, 0);
    assert!((0..200_000).all(|_| sample_jump_size(&spec, &mut s).abs() <= 1.0));
}

#[test]
fn compensator_examples() {
    let sym = JumpMeasureSpec::new(1.0, SizeFamily::Uniform { a: -0.5, b: 0.5 }).unwrap();
    assert_eq!(compensator_rate(&sym), 0.0);
    let pm = JumpMeasureSpec::new(2.0, SizeFamily::PointMass { c: 0.3 }).unwrap();
    assert!((compensator_rate(&pm) - 0.6).abs() < 1e-15);

    // composite Simpson on the truncated density, independent of the closed form
    let (mu, sd, bound) = (0.1, 0.2, 1.0);
    let dens = |z: f64| (-(z - mu) * (z - mu) / (2.0 * sd * sd)).exp();
    let n = 20_000;
    let h = 2.0 * bound / n as f64;
    let (mut mass, mut first) = (0.0, 0.0);
    for i in 0..=n {
        let z = -bound + h * i as f64;
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        mass += w * dens(z);
        first += w * z * dens(z);
    }
    let oracle = first / mass;
    let tg = JumpMeasureSpec::new(1.0, SizeFamily::TruncatedGaussian { mu, sd, bound }).unwrap();
    assert!((compensator_rate(&tg) - oracle).abs() < 1e-10, "{} vs {oracle}", compensator_rate(&tg));
}

#[test]
fn superposed_streams_are_poisson_with_summed_rate() {
    let (la, lb, n) = (1.5, 2.5, 50_000u64);
    let mut hist = vec![0usize; 40];
    for i in 0..n {
        let root = RngStream::new(6, i);
        let a = sample_jump_times(la, 1.0, &mut root.purpose(Purpose::Custom(1))).unwrap();
        let b = sample_jump_times(lb, 1.0, &mut root.purpose(Purpose::Custom(2))).unwrap();
        hist[(a.len() + b.len()).min(39)] += 1;
    }
    let law = Poisson::new(la + lb).unwrap();
    // pool cells so that each expected count is at least 5
    let (mut obs, mut exp) = (Vec::new(), Vec::new());
    let (mut o, mut e) = (0.0, 0.0);
    for (k, &c) in hist.iter().enumerate() {
        o += c as f64;
        e += if k == 39 { 1.0 - law.cdf(38) } else { law.pmf(k as u64) } * n as f64;
        if e >= 5.0 {
            obs.push(o);
            exp.push(e);
            (o, e) = (0.0, 0.0);
        }
    }
    if e > 0.0 {
        *obs.last_mut().unwrap() += o;
        *exp.last_mut().unwrap() += e;
    }
    let stat: f64 = obs.iter().zip(&exp).map(|(o, e)| (o - e) * (o - e) / e).sum();
    let p = 1.0 - ChiSquared::new((obs.len() - 1) as f64).unwrap().cdf(stat);
    assert!(p > 0.001, "chi2 = {stat}, p = {p}");
}

proptest! {
    #[test]
    fn same_key_same_draws(seed in any::<u64>(), id in any::<u64>(), child in 0u64..1000) {
        let mut a = RngStream::new(seed, id).child(child);
        let mut b = RngStream::new(seed, id).child(child);
        for _ in 0..16 {
            prop_assert_eq!(a.normal().to_bits(), b.normal().to_bits());
        }
    }

    #[test]
    fn event_times_are_increasing_in_horizon(seed in any::<u64>(), rate in 0.0f64..50.0, horizon in 0.01f64..5.0) {
        let t = sample_jump_times(rate, horizon, &mut RngStream::new(seed, 0)).unwrap();
        prop_assert!(t.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(t.iter().all(|&s| s > 0.0 && s <= horizon));
    }

    #[test]
    fn uniform_draws_in_unit_interval(seed in any::<u64>()) {
        let mut s = RngStream::new(seed, 9);
        for _ in 0..64 {
            let u = s.uniform();
            prop_assert!((0.0..1.0).contains(&u));
            let v = s.uniform_open();
            prop_assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn declared_moments_must_agree(delta in 1e-9f64..1e-3) {
        let fam = SizeFamily::Uniform { a: -0.5, b: 0.5 };
        prop_assert!(JumpMeasureSpec::with_declared(1.0, fam, 0.0, 1.0 / 12.0).is_ok());
        prop_assert!(JumpMeasureSpec::with_declared(1.0, fam, delta, 1.0 / 12.0).is_err());
    }
}
