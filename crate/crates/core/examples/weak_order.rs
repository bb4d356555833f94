//! Weak error sweep on the arctan example with `φ(x) = x²`.
//!
//! The averaged drift is tabulated from long frozen chains; the micro step
//! is `ε·2^-6`, so the fast chain of the full system steps exactly like the
//! frozen chains behind the table.
//!
//! ```text
//! cargo run --release --example weak_order [n_paths] [chain_horizon] [nodes]
//! ```

use std::time::Instant;

use mslevy::ergodic::{build_averaged_table, Extrapolation, InvariantConfig, TableConfig};
use mslevy::estimate::{weak_error, DeltaPolicy, ModelSampler, Sweep, TestFunction, WeakMode};
use mslevy::levy_rng::RngStream;
use mslevy::model::builtin_example_28;

fn arg<T: std::str::FromStr>(k: usize, default: T) -> T {
    std::env::args().nth(k).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n_paths: usize = arg(1, 1 << 13);
    let chain_horizon: f64 = arg(2, 2000.0);
    let nodes: usize = arg(3, 361);
    let spec = builtin_example_28();
    let seed = RngStream::new(2024, 0);

    let clock = Instant::now();
    let table = build_averaged_table(
        &spec,
        &TableConfig {
            lo: vec![-6.0],
            hi: vec![12.0],
            nodes: vec![nodes],
            invariant: InvariantConfig { horizon: chain_horizon, ..InvariantConfig::default() },
            policy: Extrapolation::Clamp,
            validate: true,
        },
        &seed.child(1),
    )?;
    let worst = table.drift_ci.iter().cloned().fold(0.0, f64::max);
    println!("table: {} nodes in {:.1?}, widest drift CI {worst:.2e}", table.node_count(), clock.elapsed());

    let sampler = ModelSampler::new(&spec, &table, &[1.0], &[1.0]);
    let sweep = Sweep {
        epsilons: (3..=7).map(|k| 2f64.powi(-k)).collect(),
        horizon: 1.0,
        n_paths,
        delta: DeltaPolicy::PerEpsilon { shift: 6 },
    };
    let clock = Instant::now();
    let phi = TestFunction::square_norm();
    let report = weak_error(&sampler, &phi, &sweep, WeakMode::CoupledDifference, &seed.child(2))?;
    println!("sweep: {:.1?}", clock.elapsed());
    println!("{:>10} {:>12} {:>12}   per checkpoint", "epsilon", "error", "half-width");
    for l in &report.levels {
        let cps: Vec<String> = l.checkpoints.iter().map(|c| format!("{:+.3e}", c.difference)).collect();
        println!("{:>10.5} {:>12.5e} {:>12.5e}   {}", l.epsilon, l.error, l.half_width, cps.join(" "));
    }
    println!("fit: {:?}", report.fit);
    println!("extrapolated table queries: {}", report.extrapolated_queries);
    Ok(())
}
