//! Invariant measure of the frozen fast dynamics and the averaged
//! coefficients at a single slow state.
//!
//! A pilot coupling run sets burn-in and horizon from the fitted contraction
//! rate, then pooled chains give moments with batch-means intervals.
//!
//! ```text
//! cargo run --release --example invariant_measure [x]
//! ```

use mslevy::ergodic::{averaged_diffusion, averaged_drift, ergodicity_decay, estimate_invariant_measure, InvariantConfig};
use mslevy::levy_rng::RngStream;
use mslevy::model::{builtin_example_27, SigmaVariant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0.5);
    let spec = builtin_example_27(SigmaVariant::SineBounded);
    let root = RngStream::new(11, 0);

    let times: Vec<f64> = (0..=20).map(|k| 0.1 * k as f64).collect();
    let pilot = ergodicity_decay(&spec, &[x], &[2.0], &[-2.0], &times, 200, 2f64.powi(-8), &root.child(0))?;
    let rate = pilot.fit.ok_or("pilot curve is identically zero")?.rate;
    let cfg = InvariantConfig::from_pilot(rate)?;
    println!("pilot rate {rate:.3}: burn-in {:.2}, horizon {:.1}, {} chains", cfg.burn_in, cfg.horizon, cfg.n_chains);

    let inv = estimate_invariant_measure(&spec, &[x], &cfg, &root.child(1))?;
    println!("{} pooled samples", inv.len());
    for k in 1..=4 {
        let m = inv.moment(0, k)?;
        println!("  E Y^{k} = {:+.5} ± {:.5} (ess {:.0})", m.mean, m.half_width, m.effective_sample_size);
    }
    let (b, b_ci) = averaged_drift(&spec, &[x], &inv)?;
    let d = averaged_diffusion(&spec, &[x], &inv)?;
    println!("b̄({x}) = {:.5} ± {:.5}", b[0], b_ci[0]);
    println!("σσ*‾({x}) = {:.5} ± {:.5}, root {:.5}", d.cov[0], d.cov_ci[0], d.root.root[0]);
    Ok(())
}
