use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::levy_rng::RngStream;

use super::{fit_order, DeltaPolicy, EstimateError, FitOutcome, PathSampler, Sweep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeakMode {
    CoupledDifference,
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorKind {
    Strong { p: f64 },
    Weak { test_function: String, mode: WeakMode },
}

/// `Eφ(X^ε_t) − Eφ(X̄_t)` at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointError {
    pub t: f64,
    pub difference: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimate {
    pub epsilon: f64,
    pub delta: f64,
    pub error: f64,
    pub half_width: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_paths: usize,
    /// Weak sweeps only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checkpoints: Vec<CheckpointError>,
}

/// Error estimates over an `ε` sweep with the fitted order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub kind: ErrorKind,
    pub model: String,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub horizon: f64,
    pub seed: u64,
    pub stream_id: u64,
    pub delta_policy: DeltaPolicy,
    /// Strictly decreasing in `epsilon`.
    pub levels: Vec<LevelEstimate>,
    pub fit: FitOutcome,
    /// Table queries outside the tabulated box, summed over all paths.
    pub extrapolated_queries: usize,
}

impl ErrorReport {
    pub(super) fn assemble(
        kind: ErrorKind,
        sampler: &dyn PathSampler,
        sweep: &Sweep,
        stream: &RngStream,
        levels: Vec<LevelEstimate>,
        extrapolated_queries: usize,
        withheld: Option<String>,
    ) -> Result<Self, EstimateError> {
        let mut report = ErrorReport {
            kind,
            model: sampler.model_name(),
            x0: sampler.x0(),
            y0: sampler.y0(),
            horizon: sweep.horizon,
            seed: stream.master_seed(),
            stream_id: stream.stream_id(),
            delta_policy: sweep.delta,
            levels,
            fit: FitOutcome::Degenerate { reason: String::new() },
            extrapolated_queries,
        };
        report.fit = match (report.refit()?, withheld) {
            (FitOutcome::Fitted { .. }, Some(reason)) => FitOutcome::Withheld { reason },
            (fit, _) => fit,
        };
        Ok(report)
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.epsilon).collect()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.error).collect()
    }

    /// [`fit_order`] on the stored pairs.
    pub fn refit(&self) -> Result<FitOutcome, EstimateError> {
        fit_order(&self.epsilons(), &self.errors())
    }

    /// Rank correlation between `ε` and the error.
    pub fn spearman(&self) -> f64 {
        super::spearman(&self.epsilons(), &self.errors())
    }

    /// `epsilon,error,ci_lo,ci_hi,n_paths` with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,error,ci_lo,ci_hi,n_paths\n");
        for l in &self.levels {
            s.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
                l.epsilon, l.error, l.ci_lo, l.ci_hi, l.n_paths
            ));
        }
        s
    }

    /// Writes `report.json` and `errors.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), EstimateError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)? + "\n")?;
        fs::write(dir.join("errors.csv"), self.to_csv())?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self, EstimateError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
