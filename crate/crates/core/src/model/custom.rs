//! Scalar models whose coefficients are given as expression strings.

use serde::{Deserialize, Serialize};

use super::expr::{Expr, Var};
use super::{AssumptionParams, ModelError, ModelSpec};
use crate::levy_rng::{JumpMeasureSpec, Purpose, RngStream};

/// Points at which every coefficient is evaluated at load time.
pub const TOTALITY_PROBES: usize = 10;

fn zero() -> String {
    "0".into()
}

fn uniform() -> JumpMeasureSpec {
    JumpMeasureSpec::default_uniform()
}

/// `n = m = 1` model. `b, sigma, f, g` are functions of `x, y`; `h1` of
/// `x, z`; `h2` of `x, y, z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomModel {
    pub name: String,
    pub b: String,
    pub sigma: String,
    #[serde(default = "zero")]
    pub h1: String,
    pub f: String,
    pub g: String,
    #[serde(default = "zero")]
    pub h2: String,
    #[serde(default = "uniform")]
    pub nu1: JumpMeasureSpec,
    #[serde(default = "uniform")]
    pub nu2: JumpMeasureSpec,
    #[serde(default)]
    pub params: Option<AssumptionParams>,
}

fn parse(field: &str, src: &str, allowed: &[Var]) -> Result<Expr, ModelError> {
    let e = Expr::parse(src).map_err(|err| ModelError::Invalid(format!("{field}: {err}")))?;
    for v in [Var::X, Var::Y, Var::Z] {
        if !allowed.contains(&v) && e.references(v) {
            return Err(ModelError::Invalid(format!("{field} may not depend on {v:?}")));
        }
    }
    Ok(e)
}

impl CustomModel {
    /// Parses every coefficient, evaluates each at [`TOTALITY_PROBES`]
    /// points for finiteness and derives the y-independence flags from the
    /// expressions.
    pub fn build(&self) -> Result<ModelSpec, ModelError> {
        use Var::{X, Y, Z};
        let b = parse("b", &self.b, &[X, Y])?;
        let sigma = parse("sigma", &self.sigma, &[X, Y])?;
        let h1 = parse("h1", &self.h1, &[X, Z])?;
        let f = parse("f", &self.f, &[X, Y])?;
        let g = parse("g", &self.g, &[X, Y])?;
        let h2 = parse("h2", &self.h2, &[X, Y, Z])?;

        let mut s = RngStream::new(0x707a1, 0).purpose(Purpose::Probe);
        let (z1, z2) = (self.nu1.support(), self.nu2.support());
        for _ in 0..TOTALITY_PROBES {
            let x = -5.0 + 10.0 * s.uniform();
            let y = -5.0 + 10.0 * s.uniform();
            let u = s.uniform();
            let za = z1.0 + (z1.1 - z1.0) * u;
            let zb = z2.0 + (z2.1 - z2.0) * u;
            for (name, e, z) in [
                ("b", &b, 0.0),
                ("sigma", &sigma, 0.0),
                ("h1", &h1, za),
                ("f", &f, 0.0),
                ("g", &g, 0.0),
                ("h2", &h2, zb),
            ] {
                let v = e.eval(x, y, z);
                if !v.is_finite() {
                    return Err(ModelError::Invalid(format!(
                        "{name} is not finite at x = {x}, y = {y}, z = {z}"
                    )));
                }
            }
        }

        let (h1_affine, h2_affine) = (h1.is_mark_affine(), h2.is_mark_affine());
        let (sig_free, b_free) = (!sigma.references(Y), !b.references(Y));
        let mut builder = ModelSpec::builder(self.name.clone(), 1, 1)
            .scalar_drift(move |x, y| b.eval(x, y, 0.0))
            .scalar_sigma(move |x, y| sigma.eval(x, y, 0.0))
            .scalar_slow_jump(move |x, z| h1.eval(x, 0.0, z), h1_affine)
            .scalar_fast_drift(move |x, y| f.eval(x, y, 0.0))
            .scalar_fast_sigma(move |x, y| g.eval(x, y, 0.0))
            .scalar_fast_jump(move |x, y, z| h2.eval(x, y, z), h2_affine)
            .nu1(self.nu1.clone())
            .nu2(self.nu2.clone())
            .sigma_y_independent(sig_free)
            .drift_y_independent(b_free);
        if let Some(p) = self.params {
            builder = builder.params(p);
        }
        builder.build()
    }
}
