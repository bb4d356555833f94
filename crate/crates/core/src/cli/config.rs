//! Run configuration: one JSON object with the model, the seed and one block
//! per command.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use super::{CliError, Command};
use crate::ergodic::{InvariantConfig, TableConfig};
use crate::estimate::{DeltaPolicy, TestFunction, WeakMode};
use crate::integrate::Scheme;
use crate::model::expr::Expr;
use crate::model::{builtin_by_name, CustomModel, ModelSpec, ProbeBox};

/// A built-in model by name, or an expression-defined one.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelRef {
    Builtin(String),
    Custom(CustomModel),
}

impl ModelRef {
    pub fn build(&self) -> Result<ModelSpec, CliError> {
        match self {
            ModelRef::Builtin(name) => builtin_by_name(name).map_err(|e| CliError::Config(e.to_string())),
            ModelRef::Custom(m) => m.build().map_err(|e| CliError::Config(format!("model: {e}"))),
        }
    }
}

impl Serialize for ModelRef {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ModelRef::Builtin(name) => s.serialize_str(name),
            ModelRef::Custom(m) => m.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for ModelRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match Value::deserialize(d)? {
            Value::String(name) => Ok(ModelRef::Builtin(name)),
            v @ Value::Object(_) => CustomModel::deserialize(v).map(ModelRef::Custom).map_err(D::Error::custom),
            other => Err(D::Error::custom(format!("expected a built-in name or a model object, got {other}"))),
        }
    }
}

/// Observable for weak-order runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunctionSpec {
    SquareNorm,
    Constant(f64),
    Power { component: usize, k: i32 },
    /// Scalar expression in `x` with a declared growth exponent.
    Expr { src: String, growth: f64 },
}

impl TestFunctionSpec {
    pub fn build(&self, n: usize) -> Result<TestFunction, CliError> {
        let phi = match self {
            TestFunctionSpec::SquareNorm => TestFunction::square_norm(),
            TestFunctionSpec::Constant(c) => TestFunction::constant(*c),
            TestFunctionSpec::Power { component, k } => {
                if *component >= n {
                    return Err(CliError::Config(format!("test function component {component} >= n = {n}")));
                }
                TestFunction::power(*component, *k)
            }
            TestFunctionSpec::Expr { src, growth } => {
                if n != 1 {
                    return Err(CliError::Config("expression test functions need n = 1".into()));
                }
                let e = Expr::parse(src).map_err(|e| CliError::Config(format!("weak.test_function: {e}")))?;
                TestFunction::new(src.clone(), *growth, move |x| e.eval(x[0], 0.0, 0.0))
            }
        };
        phi.check_growth(n).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(phi)
    }
}

fn default_probes() -> usize {
    1000
}
fn ones() -> Vec<f64> {
    vec![1.0]
}
fn two() -> f64 {
    2.0
}
fn one() -> f64 {
    1.0
}
fn frozen_delta() -> f64 {
    2f64.powi(-6)
}
fn fine_delta() -> f64 {
    2f64.powi(-8)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateBlock {
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default, rename = "box")]
    pub probe_box: ProbeBox,
}

impl Default for ValidateBlock {
    fn default() -> Self {
        Self { probes: default_probes(), probe_box: ProbeBox::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrozenBlock {
    pub x: Vec<f64>,
    #[serde(default)]
    pub invariant: InvariantConfig,
    /// Highest moment written to `invariant_moments.csv`.
    #[serde(default = "four")]
    pub moments: i32,
}

fn four() -> i32 {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CenteringBlock {
    #[serde(default = "sixty_four")]
    pub n_points: usize,
    #[serde(default = "two_hundred")]
    pub n_traj: usize,
}

fn sixty_four() -> usize {
    64
}
fn two_hundred() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemigroupBlock {
    pub y: Vec<f64>,
    #[serde(default = "tenth")]
    pub s: f64,
    #[serde(default = "thousand")]
    pub n_traj: usize,
    #[serde(default = "two_hundred")]
    pub n_endpoints: usize,
    #[serde(default = "two_hundred")]
    pub traj_per_endpoint: usize,
}

fn tenth() -> f64 {
    0.1
}
fn thousand() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonBlock {
    pub x: Vec<f64>,
    /// Fast states at which `Φ(x, ·)` is evaluated.
    pub y: Vec<Vec<f64>>,
    #[serde(default = "ten")]
    pub t_cut: f64,
    #[serde(default = "thousand")]
    pub n_traj: usize,
    #[serde(default = "frozen_delta")]
    pub delta: f64,
    /// Sampler for `b̄(x)` and for the centering points.
    #[serde(default)]
    pub invariant: InvariantConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centering: Option<CenteringBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semigroup: Option<SemigroupBlock>,
}

fn ten() -> f64 {
    10.0
}

/// Pass thresholds for an exponential fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateCheck {
    pub min_rate: f64,
    pub min_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicityBlock {
    pub x: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    #[serde(default = "two")]
    pub t_max: f64,
    #[serde(default = "twenty_one")]
    pub points: usize,
    #[serde(default = "hundred")]
    pub n_pairs: usize,
    #[serde(default = "fine_delta")]
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance: Option<RateCheck>,
}

fn twenty_one() -> usize {
    21
}
fn hundred() -> usize {
    100
}

/// Pass window for a fitted order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderWindow {
    pub slope: [f64; 2],
    pub min_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrongBlock {
    pub epsilon: Vec<f64>,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "thousand")]
    pub n_paths: usize,
    #[serde(default = "ones")]
    pub x0: Vec<f64>,
    #[serde(default = "ones")]
    pub y0: Vec<f64>,
    #[serde(default)]
    pub delta: DeltaPolicy,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance: Option<OrderWindow>,
}

fn per_epsilon() -> DeltaPolicy {
    DeltaPolicy::PerEpsilon { shift: 6 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakBlock {
    pub epsilon: Vec<f64>,
    pub test_function: TestFunctionSpec,
    #[serde(default = "coupled")]
    pub mode: WeakMode,
    #[serde(default = "one")]
    pub horizon: f64,
    /// Defaults to `25/min ε` rounded up to a power of two.
    #[serde(default)]
    pub n_paths: Option<usize>,
    #[serde(default = "ones")]
    pub x0: Vec<f64>,
    #[serde(default = "ones")]
    pub y0: Vec<f64>,
    #[serde(default = "per_epsilon")]
    pub delta: DeltaPolicy,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance: Option<OrderWindow>,
}

fn coupled() -> WeakMode {
    WeakMode::CoupledDifference
}

/// Pass thresholds for the fast-moment sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentCheck {
    pub max_ratio: f64,
    pub pathwise_increasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FastMomentsBlock {
    pub epsilon: Vec<f64>,
    #[serde(default = "four_f")]
    pub p: f64,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "thousand")]
    pub n_paths: usize,
    #[serde(default = "ones")]
    pub x0: Vec<f64>,
    #[serde(default = "ones")]
    pub y0: Vec<f64>,
    #[serde(default)]
    pub delta: DeltaPolicy,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance: Option<MomentCheck>,
}

fn four_f() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelRef,
    #[serde(default)]
    pub seed: u64,
    /// Output directory when `--out` is not given. Never echoed, so replays
    /// into another directory produce identical files.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    /// Where averaged tables are cached; defaults to `<out>/cache`.
    #[serde(default, skip_serializing)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validate: Option<ValidateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen: Option<FrozenBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<TableConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poisson: Option<PoissonBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ergodicity: Option<ErgodicityBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strong: Option<StrongBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weak: Option<WeakBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fast_moments: Option<FastMomentsBlock>,
}

/// Dotted key paths that must be present for `cmd`.
pub fn required_keys(cmd: Command) -> &'static [&'static str] {
    const TABLE: [&str; 3] = ["table.lo", "table.hi", "table.nodes"];
    match cmd {
        Command::ValidateModel => &["model"],
        Command::FrozenStats => &["model", "frozen.x"],
        Command::AvgTable => &["model", TABLE[0], TABLE[1], TABLE[2]],
        Command::PoissonCheck => &["model", "poisson.x", "poisson.y"],
        Command::Ergodicity => &["model", "ergodicity.x", "ergodicity.y1", "ergodicity.y2"],
        Command::StrongOrder => &["model", "strong.epsilon", TABLE[0], TABLE[1], TABLE[2]],
        Command::WeakOrder => &["model", "weak.epsilon", "weak.test_function", TABLE[0], TABLE[1], TABLE[2]],
        Command::FastMoments => &["model", "fast_moments.epsilon"],
    }
}

fn lookup<'a>(v: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(v, |cur, key| cur.get(key))
}

/// Missing keys, listed together so one run reports all of them.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingKeys(pub Vec<String>);

impl fmt::Display for MissingKeys {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "missing required keys: {}", self.0.join(", "))
    }
}

/// Parses `text` for `cmd`: required keys first, then the typed schema with
/// the failing key path in the message.
pub fn parse_config(text: &str, cmd: Command) -> Result<RunConfig, CliError> {
    let value: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("malformed JSON: {e}")))?;
    if !value.is_object() {
        return Err(CliError::Config("config must be a JSON object".into()));
    }
    let missing: Vec<String> =
        required_keys(cmd).iter().filter(|k| lookup(&value, k).is_none()).map(|k| k.to_string()).collect();
    if !missing.is_empty() {
        return Err(CliError::Config(MissingKeys(missing).to_string()));
    }
    let cfg: RunConfig = serde_path_to_error::deserialize(value)
        .map_err(|e| CliError::Config(format!("at '{}': {}", e.path(), e.inner())))?;
    Ok(cfg)
}

/// Next power of two at or above `25/eps_min`.
pub fn default_weak_paths(eps_min: f64) -> usize {
    ((25.0 / eps_min).ceil() as usize).next_power_of_two()
}

impl RunConfig {
    /// Fills defaults that depend on other keys and on the command.
    pub fn resolve(&mut self, cmd: Command) {
        if cmd == Command::ValidateModel && self.validate.is_none() {
            self.validate = Some(ValidateBlock::default());
        }
        if let Some(w) = self.weak.as_mut() {
            if w.n_paths.is_none() {
                let eps_min = w.epsilon.iter().copied().fold(f64::INFINITY, f64::min);
                if eps_min > 0.0 && eps_min.is_finite() {
                    w.n_paths = Some(default_weak_paths(eps_min));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_lists_missing_keys() {
        let err = parse_config("{}", Command::StrongOrder).unwrap_err();
        let msg = err.to_string();
        for k in ["model", "strong.epsilon", "table.lo", "table.hi", "table.nodes"] {
            assert!(msg.contains(k), "{msg}");
        }
    }

    #[test]
    fn epsilon_list_round_trips() {
        let text = r#"{"model":"example_2_7_linear","seed":7,
            "table":{"lo":[-3.0],"hi":[3.0],"nodes":[13]},
            "strong":{"epsilon":[0.125,0.0625,0.03125]}}"#;
        let cfg = parse_config(text, Command::StrongOrder).unwrap();
        assert_eq!(cfg.strong.as_ref().unwrap().epsilon, vec![0.125, 0.0625, 0.03125]);
        let again = parse_config(&serde_json::to_string(&cfg).unwrap(), Command::StrongOrder).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_are_named() {
        let text = r#"{"model":"example_2_8","frozen":{"x":[0.0],"invariant":{"burn_in":1,"horizon":5,"chians":3}}}"#;
        let msg = parse_config(text, Command::FrozenStats).unwrap_err().to_string();
        assert!(msg.contains("frozen.invariant") && msg.contains("chians"), "{msg}");
        let text = r#"{"model":"example_2_8","sed":3}"#;
        assert!(parse_config(text, Command::ValidateModel).unwrap_err().to_string().contains("sed"));
    }

    #[test]
    fn custom_models_parse() {
        let text = r#"{"model":{"name":"c","b":"-pow(x,3)+x+pow(y,3)","sigma":"x","f":"sin(x)-y-y^5","g":"1","h1":"z","h2":"z"}}"#;
        let cfg = parse_config(text, Command::ValidateModel).unwrap();
        assert!(cfg.model.build().unwrap().sigma_y_independent());
        let bad = r#"{"model":{"name":"c","b":"x","sigma":"1","f":"-y","g":"1","q":"z"}}"#;
        assert!(parse_config(bad, Command::ValidateModel).is_err());
        assert!(parse_config(r#"{"model":3}"#, Command::ValidateModel).is_err());
    }

    #[test]
    fn weak_path_default() {
        assert_eq!(default_weak_paths(2f64.powi(-7)), 4096);
        let text = r#"{"model":"example_2_8","table":{"lo":[-1],"hi":[1],"nodes":[3]},
            "weak":{"epsilon":[0.125,0.0625,0.03125],"test_function":"square_norm"}}"#;
        let mut cfg = parse_config(text, Command::WeakOrder).unwrap();
        cfg.resolve(Command::WeakOrder);
        assert_eq!(cfg.weak.unwrap().n_paths, Some(1024));
        assert!(parse_config(r#"{"model":"example_2_8", "weak":{"epsilon":[0.1],"test_function":{"power":{"component":0,"k":2}}},"table":{"lo":[-1],"hi":[1],"nodes":[3]}}"#, Command::WeakOrder).is_ok());
    }
}
