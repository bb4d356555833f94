use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{averaged_diffusion, averaged_drift, estimate_invariant_measure, ErgodicError, InvariantConfig};
use crate::integrate::{AveragedField, IntegrateError};
use crate::levy_rng::RngStream;
use crate::linalg::{outer_self, psd_sqrt};
use crate::model::ModelSpec;

pub const TABLE_VERSION: u32 = 1;

/// What a query outside the grid box returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extrapolation {
    /// Value at the nearest point of the box.
    #[default]
    Clamp,
    /// Drift continues the edge cell linearly; the covariance is clamped so it stays PSD.
    Linear,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Nodes per dimension, at least 2.
    pub nodes: Vec<usize>,
    #[serde(default)]
    pub invariant: InvariantConfig,
    #[serde(default)]
    pub policy: Extrapolation,
    /// Run the leave-node-out check and refuse tables that fail it.
    #[serde(default = "yes")]
    pub validate: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableHeader {
    pub version: u32,
    pub model: String,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub nodes: Vec<usize>,
    pub seed: u64,
    pub delta: f64,
    pub burn_in: f64,
    pub horizon: f64,
    pub n_chains: usize,
    pub policy: Extrapolation,
    /// Coefficients do not depend on `y`; values come straight from the model.
    pub exact: bool,
    /// Largest negative eigenvalue magnitude clipped from a node covariance.
    pub max_clip: f64,
    pub validation: Option<Validation>,
}

/// Outcome of the leave-node-out interpolation check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub checked: usize,
    /// Largest `error / tolerance` seen; at most 1 for an accepted table.
    pub worst_ratio: f64,
    pub worst_node: Vec<f64>,
}

/// Interpolated value with the largest half-width among contributing nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TableQuery {
    pub value: Vec<f64>,
    pub ci: Vec<f64>,
    pub extrapolated: bool,
}

/// `b̄` and `σσ*‾` on a uniform grid, interpolated multilinearly.
#[derive(Debug, Clone)]
pub struct AveragedTable {
    pub header: TableHeader,
    pub n: usize,
    /// `nodes × n`, nodes in row-major order (last dimension fastest).
    pub drift: Vec<f64>,
    pub drift_ci: Vec<f64>,
    /// `nodes × n²`.
    pub cov: Vec<f64>,
    pub cov_ci: Vec<f64>,
    exact: Option<ModelSpec>,
}

struct Cell {
    base: usize,
    /// Weight of the upper corner per dimension.
    w: Vec<f64>,
    strides: Vec<usize>,
}

impl AveragedTable {
    pub fn node_count(&self) -> usize {
        self.header.nodes.iter().product()
    }

    pub fn is_exact(&self) -> bool {
        self.header.exact
    }

    fn strides(&self) -> Vec<usize> {
        let dims = &self.header.nodes;
        let mut s = vec![1; dims.len()];
        for d in (0..dims.len().saturating_sub(1)).rev() {
            s[d] = s[d + 1] * dims[d + 1];
        }
        s
    }

    pub fn spacing(&self, d: usize) -> f64 {
        (self.header.hi[d] - self.header.lo[d]) / (self.header.nodes[d] - 1) as f64
    }

    fn coordinate(&self, d: usize, i: usize) -> f64 {
        if i + 1 == self.header.nodes[d] {
            self.header.hi[d]
        } else {
            self.header.lo[d] + i as f64 * self.spacing(d)
        }
    }

    pub fn node(&self, k: usize) -> Vec<f64> {
        let strides = self.strides();
        (0..self.n).map(|d| self.coordinate(d, (k / strides[d]) % self.header.nodes[d])).collect()
    }

    fn outside(&self, x: &[f64]) -> bool {
        x.iter().enumerate().any(|(d, &v)| !(v >= self.header.lo[d] && v <= self.header.hi[d]))
    }

    fn cell(&self, x: &[f64], clamp: bool) -> Cell {
        let strides = self.strides();
        let mut base = 0;
        let mut w = Vec::with_capacity(self.n);
        for d in 0..self.n {
            let nd = self.header.nodes[d];
            let u = (x[d] - self.header.lo[d]) / self.spacing(d);
            let uc = if u.is_nan() { 0.0 } else { u.clamp(0.0, (nd - 1) as f64) };
            let i = (uc.floor() as usize).min(nd - 2);
            base += i * strides[d];
            w.push(if clamp { uc - i as f64 } else { u - i as f64 });
        }
        Cell { base, w, strides }
    }

    fn blend(&self, cell: &Cell, values: &[f64], ci: &[f64], width: usize) -> (Vec<f64>, Vec<f64>) {
        let mut out = vec![0.0; width];
        let mut hw = vec![0.0f64; width];
        for mask in 0..(1usize << self.n) {
            let mut idx = cell.base;
            let mut weight = 1.0;
            for d in 0..self.n {
                if mask >> d & 1 == 1 {
                    idx += cell.strides[d];
                    weight *= cell.w[d];
                } else {
                    weight *= 1.0 - cell.w[d];
                }
            }
            if weight == 0.0 {
                continue;
            }
            for j in 0..width {
                out[j] += weight * values[idx * width + j];
                hw[j] = hw[j].max(ci[idx * width + j]);
            }
        }
        (out, hw)
    }

    fn guard(&self, x: &[f64]) -> Result<bool, IntegrateError> {
        let outside = self.outside(x);
        if outside && self.header.policy == Extrapolation::Error && !self.header.exact {
            return Err(IntegrateError::OutOfTable { x: x.to_vec() });
        }
        Ok(outside)
    }

    /// `b̄(x)` with its inherited half-width.
    pub fn drift_at(&self, x: &[f64]) -> Result<TableQuery, IntegrateError> {
        let extrapolated = self.guard(x)?;
        if let Some(spec) = &self.exact {
            let mut value = vec![0.0; self.n];
            spec.b(x, &vec![0.0; spec.m()], &mut value);
            return Ok(TableQuery { value, ci: vec![0.0; self.n], extrapolated });
        }
        let cell = self.cell(x, self.header.policy != Extrapolation::Linear);
        let (value, ci) = self.blend(&cell, &self.drift, &self.drift_ci, self.n);
        Ok(TableQuery { value, ci, extrapolated })
    }

    /// `σσ*‾(x)`, row-major `n × n`.
    pub fn cov_at(&self, x: &[f64]) -> Result<TableQuery, IntegrateError> {
        let extrapolated = self.guard(x)?;
        let nn = self.n * self.n;
        if let Some(spec) = &self.exact {
            let mut sig = vec![0.0; self.n * spec.d1()];
            spec.sigma(x, &vec![0.0; spec.m()], &mut sig);
            let mut value = vec![0.0; nn];
            outer_self(&sig, self.n, spec.d1(), &mut value);
            return Ok(TableQuery { value, ci: vec![0.0; nn], extrapolated });
        }
        let cell = self.cell(x, true);
        let (value, ci) = self.blend(&cell, &self.cov, &self.cov_ci, nn);
        Ok(TableQuery { value, ci, extrapolated })
    }

    /// Re-attaches the model to an exact table read from disk.
    pub fn attach_model(&mut self, spec: &ModelSpec) -> Result<(), ErgodicError> {
        if spec.name() != self.header.model {
            return Err(ErgodicError::Format(format!(
                "table was built for '{}', not '{}'",
                self.header.model,
                spec.name()
            )));
        }
        if self.header.exact {
            self.exact = Some(spec.clone());
        }
        Ok(())
    }

    fn column_names(&self) -> Vec<String> {
        let n = self.n;
        let mut cols: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        cols.extend((0..n).map(|i| format!("bbar{i}")));
        cols.extend((0..n).map(|i| format!("bbar{i}_ci")));
        for pre in ["cov", "cov_ci"] {
            for i in 0..n {
                for j in 0..n {
                    cols.push(format!("{pre}{i}{j}"));
                }
            }
        }
        cols
    }

    pub fn to_csv(&self) -> String {
        let (n, nn) = (self.n, self.n * self.n);
        let mut s = self.column_names().join(",");
        s.push('\n');
        for k in 0..self.node_count() {
            let row: Vec<String> = self
                .node(k)
                .iter()
                .chain(&self.drift[k * n..(k + 1) * n])
                .chain(&self.drift_ci[k * n..(k + 1) * n])
                .chain(&self.cov[k * nn..(k + 1) * nn])
                .chain(&self.cov_ci[k * nn..(k + 1) * nn])
                .map(|v| format!("{v:.16e}"))
                .collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }

    pub fn header_json(&self) -> String {
        serde_json::to_string_pretty(&self.header).expect("header serializes")
    }

    /// Parses the pair written by [`AveragedTable::to_csv`] and
    /// [`AveragedTable::header_json`]. Exact tables need [`AveragedTable::attach_model`].
    pub fn from_parts(csv: &str, header_json: &str) -> Result<Self, ErgodicError> {
        let header: TableHeader = serde_json::from_str(header_json).map_err(|e| ErgodicError::Format(e.to_string()))?;
        if header.version != TABLE_VERSION {
            return Err(ErgodicError::Format(format!("unsupported table version {}", header.version)));
        }
        let n = header.nodes.len();
        let nn = n * n;
        let mut t = AveragedTable {
            n,
            drift: Vec::new(),
            drift_ci: Vec::new(),
            cov: Vec::new(),
            cov_ci: Vec::new(),
            exact: None,
            header,
        };
        let mut lines = csv.lines();
        let head = lines.next().ok_or_else(|| ErgodicError::Format("empty table".into()))?;
        if head != t.column_names().join(",") {
            return Err(ErgodicError::Format(format!("unexpected columns '{head}'")));
        }
        for (k, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.parse::<f64>().map_err(|e| ErgodicError::Format(format!("row {k}: {e}"))))
                .collect::<Result<_, _>>()?;
            if vals.len() != 3 * n + 2 * nn {
                return Err(ErgodicError::Format(format!("row {k} has {} fields", vals.len())));
            }
            t.drift.extend_from_slice(&vals[n..2 * n]);
            t.drift_ci.extend_from_slice(&vals[2 * n..3 * n]);
            t.cov.extend_from_slice(&vals[3 * n..3 * n + nn]);
            t.cov_ci.extend_from_slice(&vals[3 * n + nn..]);
        }
        if t.drift.len() != t.node_count() * n {
            return Err(ErgodicError::Format("row count does not match the header".into()));
        }
        Ok(t)
    }

    /// Leave-node-out check: every interior node must be predicted by the
    /// midpoint of its two neighbours along each axis to within
    /// `max(3 × combined half-width, 1% of the component's largest |value|)`.
    fn validate(&self) -> Result<Validation, ErgodicError> {
        let strides = self.strides();
        let mut worst = Validation { checked: 0, worst_ratio: 0.0, worst_node: Vec::new() };
        let nn = self.n * self.n;
        for (values, ci, width) in [(&self.drift, &self.drift_ci, self.n), (&self.cov, &self.cov_ci, nn)] {
            let scale: Vec<f64> = (0..width)
                .map(|j| (0..self.node_count()).map(|k| values[k * width + j].abs()).fold(0.0, f64::max))
                .collect();
            for k in 0..self.node_count() {
                for d in 0..self.n {
                    let i = (k / strides[d]) % self.header.nodes[d];
                    if i == 0 || i + 1 == self.header.nodes[d] {
                        continue;
                    }
                    let (lo, hi) = (k - strides[d], k + strides[d]);
                    for j in 0..width {
                        let pred = 0.5 * (values[lo * width + j] + values[hi * width + j]);
                        let err = (values[k * width + j] - pred).abs();
                        let c = ci[k * width + j].powi(2)
                            + 0.25 * (ci[lo * width + j].powi(2) + ci[hi * width + j].powi(2));
                        let tol = (3.0 * c.sqrt()).max(0.01 * scale[j]).max(1e-12 * scale[j].max(1.0));
                        worst.checked += 1;
                        let ratio = err / tol;
                        if ratio > worst.worst_ratio {
                            worst.worst_ratio = ratio;
                            worst.worst_node = self.node(k);
                        }
                        if ratio > 1.0 {
                            return Err(ErgodicError::TableRejected { node: self.node(k), error: err, tolerance: tol });
                        }
                    }
                }
            }
        }
        Ok(worst)
    }
}

impl AveragedField for AveragedTable {
    fn slow_dim(&self) -> usize {
        self.n
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) -> Result<bool, IntegrateError> {
        let extrapolated = self.guard(x)?;
        if let Some(spec) = &self.exact {
            spec.b(x, &vec![0.0; spec.m()], out);
            return Ok(extrapolated);
        }
        let cell = self.cell(x, self.header.policy != Extrapolation::Linear);
        // hot path: same blend as `drift_at` without the half-widths
        out.iter_mut().for_each(|v| *v = 0.0);
        for mask in 0..(1usize << self.n) {
            let mut idx = cell.base;
            let mut weight = 1.0;
            for d in 0..self.n {
                if mask >> d & 1 == 1 {
                    idx += cell.strides[d];
                    weight *= cell.w[d];
                } else {
                    weight *= 1.0 - cell.w[d];
                }
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += weight * self.drift[idx * self.n + j];
            }
        }
        Ok(extrapolated)
    }

    fn covariance(&self, x: &[f64], out: &mut [f64]) -> Result<bool, IntegrateError> {
        let q = self.cov_at(x)?;
        out.copy_from_slice(&q.value);
        Ok(q.extrapolated)
    }
}

struct NodeValue {
    drift: Vec<f64>,
    drift_ci: Vec<f64>,
    cov: Vec<f64>,
    cov_ci: Vec<f64>,
    clip: f64,
}

/// Estimates `b̄` and `σσ*‾` at every grid node (each with its own child
/// stream) and validates the interpolant.
///
/// When both `b` and `σ` are declared `y`-independent no chains are run:
/// node values are the coefficients themselves and queries evaluate the
/// model directly.
pub fn build_averaged_table(spec: &ModelSpec, cfg: &TableConfig, stream: &RngStream) -> Result<AveragedTable, ErgodicError> {
    let n = spec.n();
    if cfg.lo.len() != n || cfg.hi.len() != n || cfg.nodes.len() != n {
        return Err(ErgodicError::Config(format!("grid box must have dimension n = {n}")));
    }
    if cfg.lo.iter().zip(&cfg.hi).any(|(l, h)| !(l < h)) {
        return Err(ErgodicError::Config("grid box is empty".into()));
    }
    if cfg.nodes.iter().any(|&k| k < 2) {
        return Err(ErgodicError::Config("need at least 2 nodes per dimension".into()));
    }
    cfg.invariant.validate(spec.m())?;
    let exact = spec.drift_y_independent() && spec.sigma_y_independent();
    let mut table = AveragedTable {
        header: TableHeader {
            version: TABLE_VERSION,
            model: spec.name().to_string(),
            lo: cfg.lo.clone(),
            hi: cfg.hi.clone(),
            nodes: cfg.nodes.clone(),
            seed: stream.master_seed(),
            delta: cfg.invariant.delta,
            burn_in: cfg.invariant.burn_in,
            horizon: cfg.invariant.horizon,
            n_chains: cfg.invariant.n_chains,
            policy: cfg.policy,
            exact,
            max_clip: 0.0,
            validation: None,
        },
        n,
        drift: Vec::new(),
        drift_ci: Vec::new(),
        cov: Vec::new(),
        cov_ci: Vec::new(),
        exact: None,
    };
    let nn = n * n;
    let m = spec.m();
    let values: Vec<NodeValue> = (0..table.node_count())
        .into_par_iter()
        .map(|k| {
            let x = table.node(k);
            if exact {
                let y = vec![0.0; m];
                let mut drift = vec![0.0; n];
                spec.b(&x, &y, &mut drift);
                let mut sig = vec![0.0; n * spec.d1()];
                spec.sigma(&x, &y, &mut sig);
                let mut cov = vec![0.0; nn];
                outer_self(&sig, n, spec.d1(), &mut cov);
                return Ok(NodeValue { drift, drift_ci: vec![0.0; n], cov, cov_ci: vec![0.0; nn], clip: 0.0 });
            }
            let inv = estimate_invariant_measure(spec, &x, &cfg.invariant, &stream.child(k as u64))?;
            let (drift, drift_ci) = averaged_drift(spec, &x, &inv)?;
            let diff = averaged_diffusion(spec, &x, &inv)?;
            let mut cov = diff.cov;
            if diff.root.clipped > 0.0 {
                // store the clipped matrix so every node is PSD
                let r = psd_sqrt(&cov, n).root;
                for i in 0..n {
                    for j in 0..n {
                        cov[i * n + j] = (0..n).map(|l| r[i * n + l] * r[l * n + j]).sum();
                    }
                }
            }
            Ok(NodeValue { drift, drift_ci, cov, cov_ci: diff.cov_ci, clip: diff.root.clipped })
        })
        .collect::<Result<_, ErgodicError>>()?;
    for v in values {
        table.drift.extend(v.drift);
        table.drift_ci.extend(v.drift_ci);
        table.cov.extend(v.cov);
        table.cov_ci.extend(v.cov_ci);
        table.header.max_clip = table.header.max_clip.max(v.clip);
    }
    if exact {
        table.exact = Some(spec.clone());
    } else if cfg.validate {
        table.header.validation = Some(table.validate()?);
    }
    Ok(table)
}
