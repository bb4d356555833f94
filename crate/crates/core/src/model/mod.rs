//! Coefficient maps of a slow-fast jump-diffusion
//!
//! ```text
//! dX = b(X, Y) dt + σ(X, Y) dW¹ + ∫ h₁(X₋, z) Ñ¹(dz, dt)
//! dY = ε⁻¹ f(X, Y) dt + ε^{-1/2} g(X, Y) dW² + ∫ h₂(X₋, Y₋, z) Ñ^{2,ε}(dz, dt)
//! ```
//!
//! together with the built-in examples and the randomized assumption checkers.

mod builtin;
mod checks;
mod custom;
pub mod expr;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::levy_rng::{JumpMeasureSpec, Purpose, RngStream};

pub use builtin::{builtin_example_27, builtin_example_28, builtin_by_name, SigmaVariant, BUILTIN_NAMES};
pub use custom::{CustomModel, TOTALITY_PROBES};
pub use checks::{
    check_fast_dissipativity, check_growth, check_monotonicity, check_sigma_y_independence,
    check_strong_monotonicity_fast, validate_all, AssumptionId, AssumptionReport, ProbeBox, Witness,
};

pub type FieldFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
pub type SlowJumpFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;
pub type FastJumpFn = Arc<dyn Fn(&[f64], &[f64], f64, &mut [f64]) + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("model declares {flag} but probe ({x:?}, {y1:?}) vs ({x:?}, {y2:?}) disagrees")]
    FlagViolated {
        flag: &'static str,
        x: Vec<f64>,
        y1: Vec<f64>,
        y2: Vec<f64>,
    },
    #[error(transparent)]
    Expr(#[from] expr::ExprError),
    #[error("unknown built-in model '{0}'")]
    UnknownBuiltin(String),
}

/// Structural constants of the slow and fast coefficients.
///
/// These are declarations only; the checkers in this module compare them
/// against what the coefficients actually do on a probe box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionParams {
    /// Polynomial growth exponent.
    pub k: f64,
    /// Coercivity exponent shared by the slow and fast conditions.
    pub q: f64,
    /// Strong monotonicity rate of the fast drift.
    pub beta: f64,
    /// Dissipativity rate of the fast drift.
    pub lambda_diss: f64,
    /// Jump-Lipschitz constant of `h2`.
    pub l_h2: f64,
    pub zeta1: f64,
    pub zeta2: f64,
    /// Moment index.
    pub ell: f64,
    /// One-sided Lipschitz constant of `b` in `x`.
    #[serde(default = "default_mono_c")]
    pub mono_c: f64,
}

fn default_mono_c() -> f64 {
    1.0
}

impl AssumptionParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.q >= 2.0
            && self.k >= 2.0
            && self.l_h2 >= 0.0
            && self.l_h2 < self.beta
            && (0.0..1.0).contains(&self.zeta1)
            && (0.0..1.0).contains(&self.zeta2)
            && self.lambda_diss > 0.0;
        if ok {
            Ok(())
        } else {
            Err(ModelError::Invalid(format!("assumption parameters out of range: {self:?}")))
        }
    }
}

/// An immutable slow-fast model. Cheap to clone; all maps are shared.
#[derive(Clone)]
pub struct ModelSpec {
    name: String,
    n: usize,
    m: usize,
    d1: usize,
    d2: usize,
    b: FieldFn,
    sigma: FieldFn,
    h1: SlowJumpFn,
    f: FieldFn,
    g: FieldFn,
    h2: FastJumpFn,
    h1_affine: bool,
    h2_affine: bool,
    nu1: JumpMeasureSpec,
    nu2: JumpMeasureSpec,
    nu1_rule: Arc<Vec<(f64, f64)>>,
    nu2_rule: Arc<Vec<(f64, f64)>>,
    sigma_y_independent: bool,
    drift_y_independent: bool,
    params: Option<AssumptionParams>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("d1", &self.d1)
            .field("d2", &self.d2)
            .field("nu1", &self.nu1)
            .field("nu2", &self.nu2)
            .field("sigma_y_independent", &self.sigma_y_independent)
            .field("drift_y_independent", &self.drift_y_independent)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    pub fn builder(name: impl Into<String>, n: usize, m: usize) -> ModelBuilder {
        ModelBuilder::new(name, n, m)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn d1(&self) -> usize {
        self.d1
    }
    pub fn d2(&self) -> usize {
        self.d2
    }
    pub fn nu1(&self) -> &JumpMeasureSpec {
        &self.nu1
    }
    pub fn nu2(&self) -> &JumpMeasureSpec {
        &self.nu2
    }
    pub fn sigma_y_independent(&self) -> bool {
        self.sigma_y_independent
    }
    pub fn drift_y_independent(&self) -> bool {
        self.drift_y_independent
    }
    pub fn params(&self) -> Option<&AssumptionParams> {
        self.params.as_ref()
    }
    pub fn h1_mark_affine(&self) -> bool {
        self.h1_affine
    }
    pub fn h2_mark_affine(&self) -> bool {
        self.h2_affine
    }

    #[inline]
    pub fn b(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        (self.b)(x, y, out)
    }
    /// `n × d1`, row-major.
    #[inline]
    pub fn sigma(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        (self.sigma)(x, y, out)
    }
    #[inline]
    pub fn h1(&self, x: &[f64], z: f64, out: &mut [f64]) {
        (self.h1)(x, z, out)
    }
    #[inline]
    pub fn f(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        (self.f)(x, y, out)
    }
    /// `m × d2`, row-major.
    #[inline]
    pub fn g(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        (self.g)(x, y, out)
    }
    #[inline]
    pub fn h2(&self, x: &[f64], y: &[f64], z: f64, out: &mut [f64]) {
        (self.h2)(x, y, z, out)
    }

    /// `∫ h₁(x, z) ν₁(dz)`: closed form when `h₁` is affine in the mark,
    /// Gauss–Legendre over the jump law otherwise.
    pub fn slow_compensator(&self, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        let lam = self.nu1.intensity();
        if lam == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        if self.h1_affine {
            self.h1(x, self.nu1.m1(), out);
            out.iter_mut().for_each(|v| *v *= lam);
            return;
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(z, w) in self.nu1_rule.iter() {
            self.h1(x, z, scratch);
            for (o, s) in out.iter_mut().zip(scratch.iter()) {
                *o += lam * w * s;
            }
        }
    }

    /// `∫ h₂(x, y, z) ν₂(dz)`, same rules as [`ModelSpec::slow_compensator`].
    pub fn fast_compensator(&self, x: &[f64], y: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        let lam = self.nu2.intensity();
        if lam == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        if self.h2_affine {
            self.h2(x, y, self.nu2.m1(), out);
            out.iter_mut().for_each(|v| *v *= lam);
            return;
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(z, w) in self.nu2_rule.iter() {
            self.h2(x, y, z, scratch);
            for (o, s) in out.iter_mut().zip(scratch.iter()) {
                *o += lam * w * s;
            }
        }
    }

    pub(crate) fn nu2_rule(&self) -> &[(f64, f64)] {
        &self.nu2_rule
    }

    /// Replaces both jump measures, keeping everything else.
    pub fn with_jump_measures(&self, nu1: JumpMeasureSpec, nu2: JumpMeasureSpec) -> ModelSpec {
        let mut out = self.clone();
        out.nu1_rule = Arc::new(nu1.size().law_rule());
        out.nu2_rule = Arc::new(nu2.size().law_rule());
        out.nu1 = nu1;
        out.nu2 = nu2;
        out
    }
}

fn zero_field() -> FieldFn {
    Arc::new(|_, _, out: &mut [f64]| out.iter_mut().for_each(|v| *v = 0.0))
}

/// Builder for [`ModelSpec`]. Unset maps are identically zero.
pub struct ModelBuilder {
    name: String,
    n: usize,
    m: usize,
    d1: usize,
    d2: usize,
    b: FieldFn,
    sigma: FieldFn,
    h1: SlowJumpFn,
    f: FieldFn,
    g: FieldFn,
    h2: FastJumpFn,
    h1_affine: bool,
    h2_affine: bool,
    nu1: JumpMeasureSpec,
    nu2: JumpMeasureSpec,
    sigma_y_independent: bool,
    drift_y_independent: bool,
    params: Option<AssumptionParams>,
}

impl ModelBuilder {
    pub fn new(name: impl Into<String>, n: usize, m: usize) -> Self {
        Self {
            name: name.into(),
            n,
            m,
            d1: n,
            d2: m,
            b: zero_field(),
            sigma: zero_field(),
            h1: Arc::new(|_, _, out: &mut [f64]| out.iter_mut().for_each(|v| *v = 0.0)),
            f: zero_field(),
            g: zero_field(),
            h2: Arc::new(|_, _, _, out: &mut [f64]| out.iter_mut().for_each(|v| *v = 0.0)),
            h1_affine: true,
            h2_affine: true,
            nu1: JumpMeasureSpec::default_uniform(),
            nu2: JumpMeasureSpec::default_uniform(),
            sigma_y_independent: false,
            drift_y_independent: false,
            params: None,
        }
    }

    pub fn noise_dims(mut self, d1: usize, d2: usize) -> Self {
        self.d1 = d1;
        self.d2 = d2;
        self
    }

    pub fn drift(mut self, b: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.b = Arc::new(b);
        self
    }
    pub fn sigma(mut self, s: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.sigma = Arc::new(s);
        self
    }
    pub fn slow_jump(mut self, h: impl Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static, mark_affine: bool) -> Self {
        self.h1 = Arc::new(h);
        self.h1_affine = mark_affine;
        self
    }
    pub fn fast_drift(mut self, f: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.f = Arc::new(f);
        self
    }
    pub fn fast_sigma(mut self, g: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.g = Arc::new(g);
        self
    }
    pub fn fast_jump(
        mut self,
        h: impl Fn(&[f64], &[f64], f64, &mut [f64]) + Send + Sync + 'static,
        mark_affine: bool,
    ) -> Self {
        self.h2 = Arc::new(h);
        self.h2_affine = mark_affine;
        self
    }

    // Scalar conveniences for n = m = d1 = d2 = 1 models.

    pub fn scalar_drift(self, b: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.drift(move |x, y, o| o[0] = b(x[0], y[0]))
    }
    pub fn scalar_sigma(self, s: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.sigma(move |x, y, o| o[0] = s(x[0], y[0]))
    }
    pub fn scalar_slow_jump(self, h: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, mark_affine: bool) -> Self {
        self.slow_jump(move |x, z, o| o[0] = h(x[0], z), mark_affine)
    }
    pub fn scalar_fast_drift(self, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.fast_drift(move |x, y, o| o[0] = f(x[0], y[0]))
    }
    pub fn scalar_fast_sigma(self, g: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.fast_sigma(move |x, y, o| o[0] = g(x[0], y[0]))
    }
    pub fn scalar_fast_jump(
        self,
        h: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        mark_affine: bool,
    ) -> Self {
        self.fast_jump(move |x, y, z, o| o[0] = h(x[0], y[0], z), mark_affine)
    }

    pub fn nu1(mut self, nu: JumpMeasureSpec) -> Self {
        self.nu1 = nu;
        self
    }
    pub fn nu2(mut self, nu: JumpMeasureSpec) -> Self {
        self.nu2 = nu;
        self
    }
    pub fn sigma_y_independent(mut self, flag: bool) -> Self {
        self.sigma_y_independent = flag;
        self
    }
    pub fn drift_y_independent(mut self, flag: bool) -> Self {
        self.drift_y_independent = flag;
        self
    }
    pub fn params(mut self, p: AssumptionParams) -> Self {
        self.params = Some(p);
        self
    }

    /// Validates dimensions and probes declared y-independence flags
    /// (1000 probe pairs, exact equality).
    pub fn build(self) -> Result<ModelSpec, ModelError> {
        if self.n == 0 || self.m == 0 || self.d1 == 0 || self.d2 == 0 {
            return Err(ModelError::Invalid("all dimensions must be positive".into()));
        }
        if let Some(p) = &self.params {
            p.validate()?;
        }
        let spec = ModelSpec {
            nu1_rule: Arc::new(self.nu1.size().law_rule()),
            nu2_rule: Arc::new(self.nu2.size().law_rule()),
            name: self.name,
            n: self.n,
            m: self.m,
            d1: self.d1,
            d2: self.d2,
            b: self.b,
            sigma: self.sigma,
            h1: self.h1,
            f: self.f,
            g: self.g,
            h2: self.h2,
            h1_affine: self.h1_affine,
            h2_affine: self.h2_affine,
            nu1: self.nu1,
            nu2: self.nu2,
            sigma_y_independent: self.sigma_y_independent,
            drift_y_independent: self.drift_y_independent,
            params: self.params,
        };
        if spec.sigma_y_independent {
            probe_y_independence(&spec, "sigma_y_independent", spec.n * spec.d1, |x, y, o| spec.sigma(x, y, o))?;
        }
        if spec.drift_y_independent {
            probe_y_independence(&spec, "drift_y_independent", spec.n, |x, y, o| spec.b(x, y, o))?;
        }
        Ok(spec)
    }
}

const FLAG_PROBES: usize = 1000;

fn probe_y_independence(
    spec: &ModelSpec,
    flag: &'static str,
    len: usize,
    eval: impl Fn(&[f64], &[f64], &mut [f64]),
) -> Result<(), ModelError> {
    let mut s = RngStream::new(0x5eed, 0).purpose(Purpose::Probe);
    let (mut x, mut y1, mut y2) = (vec![0.0; spec.n], vec![0.0; spec.m], vec![0.0; spec.m]);
    let (mut o1, mut o2) = (vec![0.0; len], vec![0.0; len]);
    for _ in 0..FLAG_PROBES {
        x.iter_mut().for_each(|v| *v = -5.0 + 10.0 * s.uniform());
        y1.iter_mut().for_each(|v| *v = -5.0 + 10.0 * s.uniform());
        y2.iter_mut().for_each(|v| *v = -5.0 + 10.0 * s.uniform());
        eval(&x, &y1, &mut o1);
        eval(&x, &y2, &mut o2);
        if o1 != o2 {
            return Err(ModelError::FlagViolated { flag, x, y1, y2 });
        }
    }
    Ok(())
}
