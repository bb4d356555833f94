use serde::{Deserialize, Serialize};

use super::{AssumptionParams, ModelError, ModelSpec};

pub const BUILTIN_NAMES: [&str; 3] = ["example_2_7_linear", "example_2_7_sine", "example_2_8"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaVariant {
    /// σ(x, y) = x
    StateLinear,
    /// σ(x, y) = sin x + sin y + 3
    SineBounded,
}

/// Cubic slow drift with a quintic fast drift:
/// `b = -x³ + x + y³`, `f = sin x - y - y⁵`, `g = 1`, `h₁ = h₂ = z`.
pub fn builtin_example_27(variant: SigmaVariant) -> ModelSpec {
    let (name, ell) = match variant {
        SigmaVariant::StateLinear => ("example_2_7_linear", 9.0),
        SigmaVariant::SineBounded => ("example_2_7_sine", 17.0),
    };
    let builder = ModelSpec::builder(name, 1, 1)
        .scalar_drift(|x, y| -x * x * x + x + y * y * y)
        .scalar_slow_jump(|_, z| z, true)
        .scalar_fast_drift(|x, y| x.sin() - y - y.powi(5))
        .scalar_fast_sigma(|_, _| 1.0)
        .scalar_fast_jump(|_, _, z| z, true)
        .params(AssumptionParams {
            k: 4.0,
            q: 6.0,
            beta: 2.0,
            lambda_diss: 0.5,
            l_h2: 0.0,
            zeta1: 0.0,
            zeta2: 0.0,
            ell,
            mono_c: 1.0,
        });
    let builder = match variant {
        SigmaVariant::StateLinear => builder.scalar_sigma(|x, _| x).sigma_y_independent(true),
        SigmaVariant::SineBounded => builder.scalar_sigma(|x, y| x.sin() + y.sin() + 3.0),
    };
    builder.build().expect("built-in model is valid")
}

/// `b = x - arctan(x) y² + y`, `σ = 1`, `f = cos x - y³`, `g = 1`, `h₁ = h₂ = z`.
pub fn builtin_example_28() -> ModelSpec {
    ModelSpec::builder("example_2_8", 1, 1)
        .scalar_drift(|x, y| x - x.atan() * y * y + y)
        .scalar_sigma(|_, _| 1.0)
        .sigma_y_independent(true)
        .scalar_slow_jump(|_, z| z, true)
        .scalar_fast_drift(|x, y| x.cos() - y * y * y)
        .scalar_fast_sigma(|_, _| 1.0)
        .scalar_fast_jump(|_, _, z| z, true)
        .params(AssumptionParams {
            k: 2.0,
            q: 4.0,
            beta: 1.0,
            lambda_diss: 0.5,
            l_h2: 0.0,
            zeta1: 0.0,
            zeta2: 0.0,
            ell: 9.0,
            mono_c: 1.0,
        })
        .build()
        .expect("built-in model is valid")
}

pub fn builtin_by_name(name: &str) -> Result<ModelSpec, ModelError> {
    match name {
        "example_2_7_linear" => Ok(builtin_example_27(SigmaVariant::StateLinear)),
        "example_2_7_sine" => Ok(builtin_example_27(SigmaVariant::SineBounded)),
        "example_2_8" => Ok(builtin_example_28()),
        other => Err(ModelError::UnknownBuiltin(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_b(m: &ModelSpec, x: f64, y: f64) -> f64 {
        let mut o = [0.0];
        m.b(&[x], &[y], &mut o);
        o[0]
    }
    fn eval_f(m: &ModelSpec, x: f64, y: f64) -> f64 {
        let mut o = [0.0];
        m.f(&[x], &[y], &mut o);
        o[0]
    }
    fn eval_sigma(m: &ModelSpec, x: f64, y: f64) -> f64 {
        let mut o = [0.0];
        m.sigma(&[x], &[y], &mut o);
        o[0]
    }

    #[test]
    fn example_27_plugged_values() {
        let lin = builtin_example_27(SigmaVariant::StateLinear);
        assert_eq!(eval_b(&lin, 1.0, 1.0), 1.0);
        assert_eq!(eval_f(&lin, 0.0, 0.0), 0.0);
        assert!(lin.sigma_y_independent());
        assert_eq!(eval_sigma(&lin, 2.5, -1.0), 2.5);
        let sine = builtin_example_27(SigmaVariant::SineBounded);
        assert_eq!(eval_sigma(&sine, 0.0, 0.0), 3.0);
        assert!(!sine.sigma_y_independent());
        let p = lin.params().unwrap();
        assert_eq!((p.k, p.q, p.beta, p.lambda_diss), (4.0, 6.0, 2.0, 0.5));
        assert_eq!((p.l_h2, p.zeta1, p.zeta2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn example_28_plugged_values() {
        let m = builtin_example_28();
        assert_eq!(eval_b(&m, 0.0, 2.0), 2.0);
        assert_eq!(eval_f(&m, 0.0, 1.0), 0.0);
        assert_eq!(eval_sigma(&m, 5.0, -3.0), 1.0);
        let p = m.params().unwrap();
        assert_eq!((p.k, p.q, p.beta, p.lambda_diss), (2.0, 4.0, 1.0, 0.5));
    }

    #[test]
    fn lookup_by_name() {
        for n in BUILTIN_NAMES {
            assert_eq!(builtin_by_name(n).unwrap().name(), n);
        }
        assert!(builtin_by_name("nope").is_err());
    }
}
