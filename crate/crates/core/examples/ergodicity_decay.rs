//! Synchronous coupling of the frozen fast dynamics from two starting points
//! and the fitted exponential contraction of `E|Y^{y1}_t − Y^{y2}_t|²`.
//!
//! ```text
//! cargo run --release --example ergodicity_decay [x]
//! ```

use mslevy::ergodic::ergodicity_decay;
use mslevy::levy_rng::RngStream;
use mslevy::model::{builtin_example_27, SigmaVariant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0.0);
    let spec = builtin_example_27(SigmaVariant::StateLinear);
    let times: Vec<f64> = (0..=20).map(|k| 0.1 * k as f64).collect();
    let curve = ergodicity_decay(&spec, &[x], &[2.0], &[-2.0], &times, 1000, 2f64.powi(-8), &RngStream::new(4, 0))?;
    println!("{:>5} {:>12} {:>12}", "t", "E|ΔY|²", "ci");
    for ((t, m), c) in curve.times.iter().zip(&curve.mean_sq).zip(&curve.ci) {
        println!("{t:>5.2} {m:>12.5e} {c:>12.2e}");
    }
    match curve.fit {
        Some(f) => println!("rate {:.4}, prefactor {:.4}, r2 {:.4} over {} points", f.rate, f.prefactor, f.r2, f.points),
        None => println!("paths merged exactly"),
    }
    Ok(())
}
