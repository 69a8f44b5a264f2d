//! The experiment configuration: one TOML file, every section optional
//! except the top-level name and seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use skelcalc::decomposition::{DriftOracle, EnsembleSpec, Sampling};
use skelcalc::functionals::{FunctionalSpec, ScalarFn};
use skelcalc::operators::Clock;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_functional")]
    pub functional: FunctionalSpec,
    #[serde(default)]
    pub ensemble: Ensemble,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub occupation: OccupationSection,
    #[serde(default)]
    pub pvar: PvarSection,
    #[serde(default)]
    pub young: YoungSection,
    #[serde(default)]
    pub drift: DriftSection,
    #[serde(default)]
    pub ito_check: ItoCheckSection,
    #[serde(default)]
    pub audit: AuditSection,
}

fn default_functional() -> FunctionalSpec {
    FunctionalSpec::Quadratic
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Exact,
    Coupled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ensemble {
    pub k_min: u32,
    pub k_max: u32,
    pub n_paths: usize,
    pub horizon: f64,
    pub sampling: SamplingMode,
    /// `M` in `dt = eps_max^2 / M` for coupled sampling.
    pub dt_divisor: f64,
    pub continuity_correction: bool,
    pub clock: Clock,
    /// Intervals of the time grid for traces and sup-errors.
    pub grid_points: usize,
}

impl Default for Ensemble {
    fn default() -> Self {
        Self {
            k_min: 4,
            k_max: 8,
            n_paths: 100,
            horizon: 1.0,
            sampling: SamplingMode::Exact,
            dt_divisor: 64.0,
            continuity_correction: false,
            clock: Clock::SquareBracket,
            grid_points: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative reconstruction residual of the decomposition.
    pub reconstruction: f64,
    /// Largest acceptable error in the last row of a convergence table.
    pub final_error: f64,
    /// Relative gap between the 2D Young term and its by-parts form.
    pub ibp: f64,
    /// Stopping tolerance of the Young refinement.
    pub young: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { reconstruction: 1e-9, final_error: 0.1, ibp: 1e-6, young: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OccupationSection {
    pub window: (f64, f64),
    pub x_points: usize,
    pub time_points: usize,
    /// Exponent of the space-direction variation.
    pub space_p: f64,
    /// Lattice level whose terminal value is histogrammed.
    pub level: i64,
    pub bins: usize,
}

impl Default for OccupationSection {
    fn default() -> Self {
        Self { window: (-2.0, 2.0), x_points: 64, time_points: 64, space_p: 3.0, level: 0, bins: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PvarSection {
    pub p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
}

impl Default for PvarSection {
    fn default() -> Self {
        Self { p: 2.0, input: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct YoungSection {
    pub integrand: ScalarFn,
    pub integrator: ScalarFn,
    /// The grid on `[0, 1]` has `2^depth + 1` points.
    pub depth: u32,
    /// Variation exponents for the a-priori bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponents: Option<(f64, f64)>,
    /// Report raw left-point sums instead of the extrapolated value.
    pub raw: bool,
}

impl Default for YoungSection {
    fn default() -> Self {
        let sin = ScalarFn::Sin { amplitude: 1.0, frequency: 1.0, phase: 0.0 };
        Self { integrand: sin.clone(), integrator: sin, depth: 12, exponents: None, raw: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftSection {
    pub oracle: DriftOracle,
}

impl Default for DriftSection {
    fn default() -> Self {
        Self { oracle: DriftOracle::ElapsedTime }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ItoCheckSection {
    /// Step of the sampled Brownian path.
    pub dt: f64,
}

impl Default for ItoCheckSection {
    fn default() -> Self {
        Self { dt: 2f64.powi(-18) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    pub dt: f64,
    pub window: (f64, f64),
    /// Declared vertical and horizontal Hölder exponents.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub declared: Option<(f64, f64)>,
}

impl Default for AuditSection {
    fn default() -> Self {
        Self { dt: 2f64.powi(-12), window: (-2.0, 2.0), declared: None }
    }
}

/// A configuration problem, always naming the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub msg: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid config field `{}`: {}", self.field, self.msg)
    }
}

fn bad<T>(field: &str, msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { field: field.into(), msg: msg.into() })
}

impl ExperimentConfig {
    /// A usable configuration when no file is given.
    pub fn named(experiment: &str) -> Self {
        toml::from_str(&format!("experiment = {experiment:?}\nseed = 1\n")).expect("defaults parse")
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .and_then(|span| key_at(text, span.start))
                .or_else(|| field_from_message(e.message()))
                .unwrap_or_else(|| "<document>".into());
            ConfigError { field, msg: e.to_string().trim().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .or_else(|e| bad("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn ks(&self) -> Vec<u32> {
        (self.ensemble.k_min..=self.ensemble.k_max).collect()
    }

    pub fn ensemble_spec(&self) -> EnsembleSpec {
        let e = &self.ensemble;
        EnsembleSpec {
            ks: self.ks(),
            n_paths: e.n_paths,
            horizon: e.horizon,
            sampling: match e.sampling {
                SamplingMode::Exact => Sampling::Exact,
                SamplingMode::Coupled => {
                    Sampling::Coupled { dt_divisor: e.dt_divisor, continuity_correction: e.continuity_correction }
                }
            },
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                bad(field, format!("must be positive and finite, got {v}"))
            }
        };
        let e = &self.ensemble;
        if self.experiment.trim().is_empty() {
            return bad("experiment", "must be a nonempty name");
        }
        if e.k_min == 0 || e.k_min > e.k_max {
            return bad("ensemble.k_min", format!("k range {}..={} is empty or starts at 0", e.k_min, e.k_max));
        }
        if e.k_max > 20 {
            return bad("ensemble.k_max", "levels above 20 are not supported");
        }
        if e.n_paths == 0 {
            return bad("ensemble.n_paths", "must be positive");
        }
        positive("ensemble.horizon", e.horizon)?;
        positive("ensemble.dt_divisor", e.dt_divisor)?;
        if e.dt_divisor < 16.0 {
            return bad("ensemble.dt_divisor", "coupled extraction needs dt <= eps^2/16, i.e. a divisor >= 16");
        }
        if e.grid_points == 0 {
            return bad("ensemble.grid_points", "must be positive");
        }
        positive("tolerances.reconstruction", self.tolerances.reconstruction)?;
        positive("tolerances.final_error", self.tolerances.final_error)?;
        positive("tolerances.ibp", self.tolerances.ibp)?;
        positive("tolerances.young", self.tolerances.young)?;
        let o = &self.occupation;
        if !(o.window.0 < o.window.1) {
            return bad("occupation.window", "lower end must be below the upper end");
        }
        if o.x_points == 0 || o.time_points == 0 {
            return bad("occupation.x_points", "grid sizes must be positive");
        }
        if !(o.space_p >= 1.0) {
            return bad("occupation.space_p", "variation exponent must be >= 1");
        }
        if o.bins == 0 {
            return bad("occupation.bins", "must be positive");
        }
        if !(self.pvar.p >= 1.0) {
            return bad("pvar.p", "variation exponent must be >= 1");
        }
        if self.young.depth == 0 || self.young.depth > 20 {
            return bad("young.depth", "must lie in 1..=20");
        }
        positive("ito_check.dt", self.ito_check.dt)?;
        positive("audit.dt", self.audit.dt)?;
        if !(self.audit.window.0 < self.audit.window.1) {
            return bad("audit.window", "lower end must be below the upper end");
        }
        skelcalc::functionals::build::<f64>(&self.functional).map_err(|err| match err {
            skelcalc::Error::Config { field, msg } => ConfigError { field: format!("functional.{field}"), msg },
            other => ConfigError { field: "functional".into(), msg: other.to_string() },
        })?;
        Ok(())
    }
}

/// The key named in messages such as "unknown field `n_path`".
fn field_from_message(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let end = start + msg[start..].find('`')?;
    Some(msg[start..end].to_string())
}

/// Dotted key of the `key = value` line containing byte `offset`, qualified
/// by the closest table header above it.
fn key_at(text: &str, offset: usize) -> Option<String> {
    let line_start = text[..offset.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next()?;
    let key = line.split('=').next()?.trim();
    let table = text[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('['))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    if key.is_empty() || key.starts_with('[') {
        return table;
    }
    Some(match table {
        Some(t) => format!("{t}.{key}"),
        None => key.to_string(),
    })
}
