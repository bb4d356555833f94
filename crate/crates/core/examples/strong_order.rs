//! Strong error sweep on the cubic example with `σ(x) = x`.
//!
//! Builds the averaged-drift table, runs coupled pairs `(X^ε, X̄)` for
//! `ε = 2^-3 … 2^-7` and fits the order of `(E sup|X^ε − X̄|²)^{1/2}`.
//!
//! ```text
//! cargo run --release --example strong_order [n_paths]
//! ```

use std::time::Instant;

use mslevy::ergodic::{build_averaged_table, Extrapolation, InvariantConfig, TableConfig};
use mslevy::estimate::{strong_error, DeltaPolicy, ModelSampler, Sweep};
use mslevy::levy_rng::RngStream;
use mslevy::model::{builtin_example_27, SigmaVariant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n_paths = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1000);
    let spec = builtin_example_27(SigmaVariant::StateLinear);
    let seed = RngStream::new(2024, 0);

    let clock = Instant::now();
    let table = build_averaged_table(
        &spec,
        &TableConfig {
            lo: vec![-4.0],
            hi: vec![4.0],
            nodes: vec![81],
            invariant: InvariantConfig::default(),
            policy: Extrapolation::Clamp,
            validate: true,
        },
        &seed.child(1),
    )?;
    println!("table: {} nodes in {:.1?}", table.node_count(), clock.elapsed());

    let sampler = ModelSampler::new(&spec, &table, &[1.0], &[1.0]);
    let sweep = Sweep {
        epsilons: (3..=7).map(|k| 2f64.powi(-k)).collect(),
        horizon: 1.0,
        n_paths,
        delta: DeltaPolicy::GlobalFromMin { shift: 6 },
    };
    let clock = Instant::now();
    let report = strong_error(&sampler, &sweep, 2.0, &seed.child(2))?;
    println!("sweep: {:.1?}", clock.elapsed());
    println!("{:>10} {:>12} {:>12} {:>12}", "epsilon", "error", "ci_lo", "ci_hi");
    for l in &report.levels {
        println!("{:>10.5} {:>12.5e} {:>12.5e} {:>12.5e}", l.epsilon, l.error, l.ci_lo, l.ci_hi);
    }
    println!("fit: {:?}", report.fit);
    println!("extrapolated table queries: {}", report.extrapolated_queries);
    Ok(())
}
