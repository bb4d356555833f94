use crate::integrate::{
    coupled_pair_with, simulate_averaged_weak_with, simulate_slow_fast_with, AveragedField, IntegrateError, Scheme,
    StepperConfig,
};
use crate::levy_rng::RngStream;
use crate::model::ModelSpec;

use super::EstimateError;

/// One coupled draw of `(X^ε, X̄)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledDraw {
    pub sup_distance: f64,
    /// `X^ε` at each requested checkpoint.
    pub slow: Vec<Vec<f64>>,
    /// `X̄` at each requested checkpoint.
    pub averaged: Vec<Vec<f64>>,
    pub extrapolated: usize,
}

/// Source of paths for the estimators. [`ModelSampler`] runs the
/// integrators; tests substitute closed-form stubs.
pub trait PathSampler: Sync {
    fn model_name(&self) -> String;
    fn x0(&self) -> Vec<f64>;
    fn y0(&self) -> Vec<f64>;
    /// Fails if pathwise coupling is not meaningful for this sampler.
    fn check_coupling(&self) -> Result<(), EstimateError> {
        Ok(())
    }
    fn coupled(
        &self,
        epsilon: f64,
        delta: f64,
        horizon: f64,
        checkpoints: &[f64],
        stream: &RngStream,
    ) -> Result<CoupledDraw, IntegrateError>;
    /// `X^ε` at the checkpoints.
    fn slow_fast(
        &self,
        epsilon: f64,
        delta: f64,
        horizon: f64,
        checkpoints: &[f64],
        stream: &RngStream,
    ) -> Result<Vec<Vec<f64>>, IntegrateError>;
    /// `X̄` (weak form) at the checkpoints and the number of extrapolated
    /// table queries.
    fn averaged(
        &self,
        delta: f64,
        horizon: f64,
        checkpoints: &[f64],
        stream: &RngStream,
    ) -> Result<(Vec<Vec<f64>>, usize), IntegrateError>;
}

/// Paths of a model against an averaged field.
pub struct ModelSampler<'a> {
    pub spec: &'a ModelSpec,
    pub avg: &'a dyn AveragedField,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub scheme: Scheme,
}

impl<'a> ModelSampler<'a> {
    pub fn new(spec: &'a ModelSpec, avg: &'a dyn AveragedField, x0: &[f64], y0: &[f64]) -> Self {
        Self { spec, avg, x0: x0.to_vec(), y0: y0.to_vec(), scheme: Scheme::TamedEuler }
    }

    fn cfg(&self, epsilon: f64, delta: f64, horizon: f64) -> StepperConfig {
        StepperConfig::new(epsilon, horizon).with_delta(delta).with_scheme(self.scheme)
    }
}

impl PathSampler for ModelSampler<'_> {
    fn model_name(&self) -> String {
        self.spec.name().to_string()
    }

    fn x0(&self) -> Vec<f64> {
        self.x0.clone()
    }

    fn y0(&self) -> Vec<f64> {
        self.y0.clone()
    }

    fn check_coupling(&self) -> Result<(), EstimateError> {
        if !self.spec.sigma_y_independent() {
            return Err(EstimateError::Config(format!(
                "model {} has a y-dependent slow diffusion; coupled estimators need sigma(x) only",
                self.spec.name()
            )));
        }
        if self.avg.slow_dim() != self.spec.n() {
            return Err(EstimateError::Config(format!(
                "averaged table has slow dimension {}, model has {}",
                self.avg.slow_dim(),
                self.spec.n()
            )));
        }
        Ok(())
    }

    fn coupled(
        &self,
        epsilon: f64,
        delta: f64,
        horizon: f64,
        checkpoints: &[f64],
        stream: &RngStream,
    ) -> Result<CoupledDraw, IntegrateError> {
        let s = coupled_pair_with(
            self.spec,
            self.avg,
            &self.x0,
            &self.y0,
            &self.cfg(epsilon, delta, horizon),
            stream,
            checkpoints,
            &mut (),
        )?;
        Ok(CoupledDraw {
            sup_distance: s.sup_distance,
            slow: s.checkpoints.iter().map(|c| c.x.clone()).collect(),
            averaged: s.checkpoints.into_iter().map(|c| c.xbar).collect(),
            extrapolated: s.extrapolated,
        })
    }

    fn slow_fast(
        &self,
        epsilon: f64,
        delta: f64,
        horizon: f64,
        checkpoints: &[f64],
        stream: &RngStream,
    ) -> Result<Vec<Vec<f64>>, IntegrateError> {
        let s = simulate_slow_fast_with(
            self.spec,
            &self.x0,
            &self.y0,
            &self.cfg(epsilon, delta, horizon),
            stream,
            checkpoints,
            &mut (),
        )?;
        Ok(s.checkpoints.into_iter().map(|c| c.x).collect())
    }

    fn averaged(
        &self,
        delta: f64,
        horizon: f64,
        checkpoints: &[f64],
        stream: &RngStream,
    ) -> Result<(Vec<Vec<f64>>, usize), IntegrateError> {
        // the averaged equation has no fast scale; epsilon only feeds validation
        let s = simulate_averaged_weak_with(
            self.spec,
            self.avg,
            &self.x0,
            &self.cfg(1.0, delta, horizon),
            stream,
            checkpoints,
            &mut (),
        )?;
        Ok((s.checkpoints.into_iter().map(|c| c.xbar).collect(), s.extrapolated))
    }
}
