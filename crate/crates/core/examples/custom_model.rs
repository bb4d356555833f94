//! A model given by coefficient expressions, simulated next to its
//! averaged limit.
//!
//! ```text
//! cargo run --release --example custom_model
//! ```

use mslevy::ergodic::{build_averaged_table, Extrapolation, InvariantConfig, TableConfig};
use mslevy::integrate::{simulate_pair_coupled, StepperConfig};
use mslevy::levy_rng::RngStream;
use mslevy::model::{validate_all, CustomModel, ProbeBox};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model: CustomModel = serde_json::from_str(
        r#"{
            "name": "damped_cubic",
            "b": "-pow(x,3) + cos(y)",
            "sigma": "0.5",
            "h1": "z",
            "f": "x - 2*y - pow(y,3)",
            "g": "1",
            "h2": "z"
        }"#,
    )?;
    let spec = model.build()?;
    for r in validate_all(&spec, 300, ProbeBox::default(), &RngStream::new(3, 0)) {
        println!("{} {:?}", if r.pass { "pass" } else { "FAIL" }, r.id);
    }

    let table = build_averaged_table(
        &spec,
        &TableConfig {
            lo: vec![-3.0],
            hi: vec![3.0],
            nodes: vec![49],
            invariant: InvariantConfig { horizon: 100.0, ..InvariantConfig::default() },
            policy: Extrapolation::Clamp,
            validate: false,
        },
        &RngStream::new(3, 1),
    )?;
    for eps in [0.1, 0.01] {
        let pair = simulate_pair_coupled(&spec, &table, &[1.0], &[0.0], &StepperConfig::new(eps, 2.0), &RngStream::new(3, 2))?;
        println!(
            "ε = {eps}: X^ε_T = {:.4}, X̄_T = {:.4}, sup distance {:.4}",
            pair.terminal_slow[0], pair.terminal_averaged[0], pair.sup_distance
        );
    }
    Ok(())
}
