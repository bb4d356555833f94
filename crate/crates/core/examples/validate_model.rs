//! Probes the structural assumptions of the built-in models.
//!
//! Every check reports the worst observed ratio or fitted rate and, on
//! failure, the probe pair that witnessed it. The cubic fast drift of
//! `example_2_8` flattens at `y = 0`, so its declared strong-monotonicity
//! rate is expected to fail there.
//!
//! ```text
//! cargo run --example validate_model [probes]
//! ```

use mslevy::levy_rng::RngStream;
use mslevy::model::{builtin_by_name, validate_all, ProbeBox, BUILTIN_NAMES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let probes = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(500);
    for name in BUILTIN_NAMES {
        let spec = builtin_by_name(name)?;
        println!("{name}");
        for r in validate_all(&spec, probes, ProbeBox::default(), &RngStream::new(1, 0)) {
            let verdict = if r.pass { "pass" } else { "FAIL" };
            println!("  {verdict} {:?}: observed {:.4}, declared {:?}", r.id, r.observed, r.declared);
            if let Some(w) = &r.witness {
                println!("       witness x {:?} {:?}, y {:?} {:?}: {:.4}", w.x1, w.x2, w.y1, w.y2, w.value);
            }
        }
    }
    Ok(())
}
