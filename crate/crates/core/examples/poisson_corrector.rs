//! The corrector `Φ(x, y)` solving the cell problem, with its centering and
//! short-time semigroup identity.
//!
//! ```text
//! cargo run --release --example poisson_corrector
//! ```

use mslevy::ergodic::{
    averaged_drift, estimate_invariant_measure, poisson_cell, poisson_centering, semigroup_identity, InvariantConfig,
};
use mslevy::levy_rng::RngStream;
use mslevy::model::{builtin_example_27, SigmaVariant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = builtin_example_27(SigmaVariant::StateLinear);
    let x = [0.0];
    let delta = 2f64.powi(-6);
    let root = RngStream::new(21, 0);
    let inv = estimate_invariant_measure(&spec, &x, &InvariantConfig { horizon: 2000.0, ..InvariantConfig::default() }, &root.child(0))?;
    let (b, ci) = averaged_drift(&spec, &x, &inv)?;
    println!("b̄(0) = {:.5} ± {:.5}", b[0], ci[0]);

    println!("{:>6} {:>10} {:>10}  tail", "y", "Φ", "ci");
    for (k, y) in [-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5].into_iter().enumerate() {
        let est = poisson_cell(&spec, &x, &[y], 10.0, 1000, delta, (&b, &ci), &root.child(10 + k as u64))?;
        println!("{y:>6.2} {:>10.4} {:>10.4}  {:?}", est.phi[0], est.ci[0], est.tail);
    }

    let c = poisson_centering(&spec, &inv, 64, 10.0, 200, delta, (&b, &ci), &root.child(1))?;
    println!("∫Φ dμ = {:.4} ± {:.4}", c.mean[0], c.ci[0]);
    let s = semigroup_identity(&spec, &x, &[1.0], 0.1, 10.0, 1000, 200, 200, delta, (&b, &ci), &root.child(2))?;
    println!(
        "Φ − E Φ(Y_s) = {:.4} ± {:.4}, ∫₀^s drift = {:.4} ± {:.4}, ratio {:.2}",
        s.lhs[0],
        s.lhs_ci[0],
        s.rhs[0],
        s.rhs_ci[0],
        s.worst_ratio()
    );
    Ok(())
}
