//! Tabulates `b̄` and `σσ*‾` on a grid and queries the interpolant.
//!
//! With validation on, the builder re-estimates midpoints independently
//! and rejects the table when interpolation error exceeds the noise.
//!
//! ```text
//! cargo run --release --example averaged_table
//! ```

use mslevy::ergodic::{build_averaged_table, Extrapolation, InvariantConfig, TableConfig};
use mslevy::levy_rng::RngStream;
use mslevy::model::{builtin_example_27, SigmaVariant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = builtin_example_27(SigmaVariant::SineBounded);
    let table = build_averaged_table(
        &spec,
        &TableConfig {
            lo: vec![-2.0],
            hi: vec![2.0],
            nodes: vec![65],
            invariant: InvariantConfig { horizon: 200.0, ..InvariantConfig::default() },
            policy: Extrapolation::Linear,
            validate: true,
        },
        &RngStream::new(5, 0),
    )?;
    println!("{} nodes, spacing {:.3}, exact: {}", table.node_count(), table.spacing(0), table.is_exact());
    if let Some(v) = &table.header.validation {
        println!("validation: {v:?}");
    }
    println!("{:>6} {:>10} {:>10} {:>10}", "x", "b̄", "σσ*‾", "extrap");
    for k in 0..=12 {
        let x = -3.0 + 0.5 * k as f64;
        let b = table.drift_at(&[x])?;
        let c = table.cov_at(&[x])?;
        println!("{x:>6.2} {:>10.4} {:>10.4} {:>10}", b.value[0], c.value[0], b.extrapolated);
    }
    Ok(())
}
