//! Strict JSON configuration files.
//!
//! Every config struct rejects unknown keys. After parsing, the struct is
//! serialised back and compared with the raw document so the manifest can
//! list which values came from defaults.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::expr::{BinOp, CoefficientField, Expr, FieldError, Var};
use crate::fpe::{BoundaryCondition, Convention, FpCoefficients, Grid1D, Integrator};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// JSON pointer of the offending value, or the file path.
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error at {}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    pub fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// A parsed config with its provenance.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub config: T,
    /// Directory of the config file; relative paths resolve against it.
    pub base_dir: PathBuf,
    /// JSON pointers of values filled from defaults.
    pub defaults: Vec<String>,
}

impl<T> Loaded<T> {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    let mut out = String::new();
    for seg in path.iter() {
        use serde_path_to_error::Segment;
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{key}")),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        "/".into()
    } else {
        out
    }
}

fn collect_defaults(raw: &Value, full: &Value, prefix: &str, out: &mut Vec<String>) {
    if let (Value::Object(r), Value::Object(f)) = (raw, full) {
        for (k, v) in f {
            let path = format!("{prefix}/{k}");
            match r.get(k) {
                None => out.push(path),
                Some(rv) => collect_defaults(rv, v, &path, out),
            }
        }
    }
}

pub fn parse_config<T: DeserializeOwned + Serialize>(text: &str, base_dir: PathBuf) -> Result<Loaded<T>, ConfigError> {
    let raw: Value = serde_json::from_str(text).map_err(|e| ConfigError::at("/", e.to_string()))?;
    let config: T = serde_path_to_error::deserialize(raw.clone())
        .map_err(|e| ConfigError::at(pointer(e.path()), e.inner().to_string()))?;
    let full = serde_json::to_value(&config).map_err(|e| ConfigError::at("/", e.to_string()))?;
    let mut defaults = Vec::new();
    collect_defaults(&raw, &full, "", &mut defaults);
    Ok(Loaded {
        config,
        base_dir,
        defaults,
    })
}

pub fn load_config<T: DeserializeOwned + Serialize>(path: &Path) -> Result<Loaded<T>, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::at(path.display().to_string(), e.to_string()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, base)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn check(&self, at: &str) -> Result<(), ConfigError> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(ConfigError::at(
                at,
                format!("need lower < upper, got {} and {}", self.lower, self.upper),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcName {
    #[serde(alias = "dirichlet")]
    Absorbing,
    #[serde(alias = "neumann")]
    Reflecting,
    Robin,
}

impl BcName {
    pub fn build(self, beta: [f64; 2]) -> BoundaryCondition {
        match self {
            BcName::Absorbing => BoundaryCondition::Absorbing,
            BcName::Reflecting => BoundaryCondition::Reflecting,
            BcName::Robin => BoundaryCondition::Robin {
                left: beta[0],
                right: beta[1],
            },
        }
    }
}

pub fn field(src: &str, period: f64, allowed: &[Var], at: &str) -> Result<CoefficientField, ConfigError> {
    CoefficientField::parse_restricted(src, Some(period), allowed).map_err(|e: FieldError| ConfigError::at(at, e.to_string()))
}

/// Operator coefficients shared by `fp-solve`, `eigen`, `stationary` and
/// `semilinear`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorConfig {
    /// Noise amplitude; the diffusion is `sigma^2 / 2`.
    pub sigma: Option<String>,
    /// Effective diffusion given directly; excludes `sigma`.
    pub diffusion: Option<String>,
    pub drift: String,
    pub a0: Option<String>,
    /// Optional time factor multiplying both diffusion and drift.
    pub alpha: Option<String>,
    /// Use `sigma^2` instead of `sigma^2 / 2`.
    pub unhalved_diffusion: bool,
}

fn zero_expr() -> String {
    "0".into()
}

impl OperatorConfig {
    pub fn build(&self, period: f64) -> Result<FpCoefficients, ConfigError> {
        let tx = [Var::T, Var::X];
        let mut diffusion = match (&self.sigma, &self.diffusion) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::at("/diffusion", "give either sigma or diffusion, not both"))
            }
            (None, None) => return Err(ConfigError::at("/sigma", "missing sigma (or diffusion)")),
            (Some(s), None) => {
                let s = field(s, period, &tx, "/sigma")?;
                Expr::binary(
                    BinOp::Mul,
                    Expr::num(0.5),
                    Expr::binary(BinOp::Pow, s.expr().clone(), Expr::num(2.0)),
                )
            }
            (None, Some(a)) => field(a, period, &tx, "/diffusion")?.expr().clone(),
        };
        let mut drift = field(&self.drift, period, &tx, "/drift")?.expr().clone();
        if let Some(alpha) = &self.alpha {
            let alpha = field(alpha, period, &[Var::T], "/alpha")?.expr().clone();
            diffusion = Expr::binary(BinOp::Mul, alpha.clone(), diffusion);
            drift = Expr::binary(BinOp::Mul, alpha, drift);
        }
        let mut coeffs = FpCoefficients::new(
            CoefficientField::from_expr(diffusion, Some(period)),
            CoefficientField::from_expr(drift, Some(period)),
        );
        if let Some(a0) = &self.a0 {
            coeffs.zero_order = Some(field(a0, period, &tx, "/a0")?);
        }
        if self.unhalved_diffusion {
            coeffs.diffusion_scale = 2.0;
        }
        Ok(coeffs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialProfile {
    Uniform,
    Expr(String),
    Csv(PathBuf),
}

fn default_n() -> usize {
    200
}

fn default_period() -> f64 {
    1.0
}

fn default_tol() -> f64 {
    1e-9
}

fn default_max_iter() -> usize {
    100_000
}

fn default_bc() -> BcName {
    BcName::Reflecting
}

fn default_beta() -> [f64; 2] {
    [1.0, 1.0]
}

fn default_periods() -> usize {
    1
}

fn default_decay_periods() -> usize {
    5
}

fn default_initial() -> InitialProfile {
    InitialProfile::Uniform
}

fn default_floor() -> f64 {
    crate::fpe::DEFAULT_ELLIPTICITY_FLOOR
}

/// Config of the grid-based subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpConfig {
    pub domain: Interval,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_period", rename = "period_T")]
    pub period_t: f64,
    /// Time step; defaults to `period_t / 256`.
    pub dt: Option<f64>,
    pub sigma: Option<String>,
    pub diffusion: Option<String>,
    #[serde(default = "zero_expr")]
    pub drift: String,
    pub a0: Option<String>,
    pub alpha: Option<String>,
    #[serde(default)]
    pub unhalved_diffusion: bool,
    #[serde(default = "default_bc")]
    pub bc: BcName,
    /// Robin coefficients `[left, right]`.
    #[serde(default = "default_beta")]
    pub robin_beta: [f64; 2],
    #[serde(default)]
    pub convention: Convention,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default = "default_floor")]
    pub ellipticity_floor: f64,
    /// Constant added to the zero-order term (eigenvalue runs).
    #[serde(default)]
    pub shift: f64,
    #[serde(default = "default_initial")]
    pub initial: InitialProfile,
    /// Number of periods integrated by `fp-solve`.
    #[serde(default = "default_periods")]
    pub periods: usize,
    /// Power iteration tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_decay_periods")]
    pub decay_periods: usize,
    /// Evaluation time of the closed-form stationary density.
    #[serde(default)]
    pub time: f64,
}

impl FpConfig {
    /// Fills `dt` so the manifest echoes the step actually used.
    pub fn resolve(&mut self) {
        self.dt.get_or_insert(self.period_t / 256.0);
    }

    pub fn operator(&self) -> OperatorConfig {
        OperatorConfig {
            sigma: self.sigma.clone(),
            diffusion: self.diffusion.clone(),
            drift: self.drift.clone(),
            a0: self.a0.clone(),
            alpha: self.alpha.clone(),
            unhalved_diffusion: self.unhalved_diffusion,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.domain.check("/domain")?;
        if self.n < 4 {
            return Err(ConfigError::at("/n", "need at least 4 cells"));
        }
        if !(self.period_t > 0.0 && self.period_t.is_finite()) {
            return Err(ConfigError::at("/period_T", "period must be positive"));
        }
        self.steps_per_period()?;
        if !(self.tol > 0.0) {
            return Err(ConfigError::at("/tol", "tolerance must be positive"));
        }
        if !(self.ellipticity_floor >= 0.0) {
            return Err(ConfigError::at("/ellipticity_floor", "must be nonnegative"));
        }
        Ok(())
    }

    pub fn steps_per_period(&self) -> Result<usize, ConfigError> {
        match self.dt {
            None => Ok(256),
            Some(dt) => steps_for(self.period_t, dt, "/dt"),
        }
    }

    pub fn grid(&self) -> Result<Grid1D, ConfigError> {
        Grid1D::new(self.n, self.domain.lower, self.domain.upper).map_err(|e| ConfigError::at("/domain", e.to_string()))
    }
}

pub fn steps_for(period: f64, dt: f64, at: &str) -> Result<usize, ConfigError> {
    if !(dt > 0.0) {
        return Err(ConfigError::at(at, "time step must be positive"));
    }
    let k = (period / dt).round();
    if k < 1.0 || ((k * dt - period) / period).abs() > 1e-12 {
        return Err(ConfigError::at(at, format!("dt = {dt} does not divide the period {period}")));
    }
    Ok(k as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    Point(Vec<f64>),
    /// Rows `x1,...,xd,weight`.
    Csv(PathBuf),
}

fn default_paths() -> usize {
    10_000
}

fn default_sde_periods() -> usize {
    20
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeConfig {
    pub domain: BoxConfig,
    #[serde(default = "default_period", rename = "period_T")]
    pub period_t: f64,
    /// Defaults to `period_T / 256`.
    pub dt: Option<f64>,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_sde_periods")]
    pub periods: usize,
    #[serde(default)]
    pub seed: u64,
    pub drift: Vec<String>,
    /// `d` rows of `m` entries.
    pub sigma: Vec<Vec<String>>,
    pub init: InitConfig,
    /// Snapshots dropped before the periodicity diagnostic; defaults to
    /// half of `periods`.
    pub burn_in: Option<usize>,
    #[serde(default = "default_true")]
    pub diagnostic: bool,
}

impl SdeConfig {
    pub fn resolve(&mut self) {
        self.dt.get_or_insert(self.period_t / 256.0);
        self.burn_in.get_or_insert(self.periods / 2);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = self.domain.lower.len();
        if d == 0 || self.domain.upper.len() != d {
            return Err(ConfigError::at("/domain", "lower and upper need the same nonzero length"));
        }
        for (i, (l, u)) in self.domain.lower.iter().zip(&self.domain.upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(ConfigError::at(format!("/domain/lower/{i}"), format!("need lower < upper, got {l} and {u}")));
            }
        }
        if !(self.period_t > 0.0 && self.period_t.is_finite()) {
            return Err(ConfigError::at("/period_T", "period must be positive"));
        }
        self.steps_per_period()?;
        if self.paths == 0 {
            return Err(ConfigError::at("/paths", "need at least one path"));
        }
        if self.drift.len() != d {
            return Err(ConfigError::at("/drift", format!("need {d} entries")));
        }
        if self.sigma.len() != d {
            return Err(ConfigError::at("/sigma", format!("need {d} rows")));
        }
        let m = self.sigma[0].len();
        if m == 0 {
            return Err(ConfigError::at("/sigma/0", "empty row"));
        }
        if let Some(i) = self.sigma.iter().position(|r| r.len() != m) {
            return Err(ConfigError::at(format!("/sigma/{i}"), format!("need {m} entries")));
        }
        if let InitConfig::Point(p) = &self.init {
            let inside = p.len() == d
                && p.iter()
                    .zip(self.domain.lower.iter().zip(&self.domain.upper))
                    .all(|(x, (l, u))| l <= x && x <= u);
            if !inside {
                return Err(ConfigError::at("/init/point", "initial point must lie in the domain"));
            }
        }
        if self.burn_in() + 1 >= self.periods + 1 && self.diagnostic {
            return Err(ConfigError::at("/burn_in", "burn-in must leave at least two snapshots"));
        }
        Ok(())
    }

    pub fn steps_per_period(&self) -> Result<usize, ConfigError> {
        match self.dt {
            None => Ok(256),
            Some(dt) => steps_for(self.period_t, dt, "/dt"),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(self.period_t / 256.0)
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.periods / 2)
    }
}

fn default_sl_tol() -> f64 {
    1e-9
}

fn default_sl_max_iter() -> usize {
    2000
}

fn default_eps() -> f64 {
    crate::semilinear::DEFAULT_LOWER_EPSILON
}

fn default_snapshot_count() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemilinearConfig {
    pub domain: Interval,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_period", rename = "period_T")]
    pub period_t: f64,
    pub dt: Option<f64>,
    pub sigma: Option<String>,
    pub diffusion: Option<String>,
    #[serde(default = "zero_expr")]
    pub drift: String,
    pub a0: Option<String>,
    pub alpha: Option<String>,
    #[serde(default)]
    pub unhalved_diffusion: bool,
    /// `f(t, x, u)`.
    pub source_f: String,
    #[serde(default = "default_bc")]
    pub bc: BcName,
    #[serde(default = "default_beta")]
    pub robin_beta: [f64; 2],
    #[serde(default)]
    pub integrator: Integrator,
    /// Monotone shift; estimated from `f_u` when absent.
    pub c: Option<f64>,
    #[serde(default = "default_sl_tol")]
    pub tol: f64,
    #[serde(default = "default_sl_max_iter")]
    pub max_iter: usize,
    /// Scale of the lower solution `eps * phi`.
    #[serde(default = "default_eps")]
    pub lower_epsilon: f64,
    /// Number of equally spaced profiles written per period.
    #[serde(default = "default_snapshot_count")]
    pub snapshots: usize,
}

impl SemilinearConfig {
    /// Fills `dt` so the manifest echoes the step actually used.
    pub fn resolve(&mut self) {
        self.dt.get_or_insert(self.period_t / 256.0);
    }

    pub fn operator(&self) -> OperatorConfig {
        OperatorConfig {
            sigma: self.sigma.clone(),
            diffusion: self.diffusion.clone(),
            drift: self.drift.clone(),
            a0: self.a0.clone(),
            alpha: self.alpha.clone(),
            unhalved_diffusion: self.unhalved_diffusion,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.domain.check("/domain")?;
        if self.n < 4 {
            return Err(ConfigError::at("/n", "need at least 4 cells"));
        }
        if !(self.period_t > 0.0 && self.period_t.is_finite()) {
            return Err(ConfigError::at("/period_T", "period must be positive"));
        }
        self.steps_per_period()?;
        if !(self.tol > 0.0) {
            return Err(ConfigError::at("/tol", "tolerance must be positive"));
        }
        if !(self.lower_epsilon > 0.0) {
            return Err(ConfigError::at("/lower_epsilon", "must be positive"));
        }
        if self.snapshots == 0 {
            return Err(ConfigError::at("/snapshots", "need at least one profile"));
        }
        Ok(())
    }

    pub fn steps_per_period(&self) -> Result<usize, ConfigError> {
        match self.dt {
            None => Ok(256),
            Some(dt) => steps_for(self.period_t, dt, "/dt"),
        }
    }

    pub fn grid(&self) -> Result<Grid1D, ConfigError> {
        Grid1D::new(self.n, self.domain.lower, self.domain.upper).map_err(|e| ConfigError::at("/domain", e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_recorded() {
        let l: Loaded<FpConfig> =
            parse_config(r#"{"domain": {"lower": 0, "upper": 1}, "sigma": "1"}"#, PathBuf::new()).unwrap();
        assert_eq!(l.config.n, 200);
        assert_eq!(l.config.steps_per_period().unwrap(), 256);
        assert_eq!(l.config.tol, 1e-9);
        assert!(l.defaults.contains(&"/n".to_string()));
        assert!(l.defaults.contains(&"/tol".to_string()));
        assert!(!l.defaults.contains(&"/domain".to_string()));
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config::<FpConfig>(
            r#"{"domain": {"lower": 0, "upper": 1}, "sgima": "1"}"#,
            PathBuf::new(),
        )
        .unwrap_err();
        assert!(err.message.contains("sgima"), "{err}");
    }

    #[test]
    fn reversed_domain_is_rejected() {
        let l: Loaded<FpConfig> =
            parse_config(r#"{"domain": {"lower": 1, "upper": 0}, "sigma": "1"}"#, PathBuf::new()).unwrap();
        assert_eq!(l.config.validate().unwrap_err().path, "/domain");
    }
}
