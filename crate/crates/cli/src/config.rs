//! Run configuration: the TOML schema, validation into engine types, and
//! the SHA-256 provenance hash stamped into every output file.
//!
//! Command-line overrides are applied to the raw [`RunConfig`] before
//! hashing, so the hash always identifies the configuration that actually
//! ran, not merely the file on disk.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use gts_core::arima::{OrderBounds, RateScale};
use gts_core::hierarchy::{build_hierarchy, GroupedHierarchy};
use gts_core::reconcile::{Method, SProvenance};

use crate::CliError;

fn default_methods() -> Vec<String> {
    Method::ALL.iter().map(|m| m.label().to_string()).collect()
}

fn default_horizon() -> usize {
    20
}

fn default_alpha() -> f64 {
    0.2
}

fn default_replicates() -> usize {
    100
}

fn default_s_mode() -> String {
    "forecast".to_string()
}

fn default_rate_scale() -> String {
    "raw".to_string()
}

/// ARIMA order search limits as they appear in the TOML file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub p_max: usize,
    pub q_max: usize,
    pub d_max: usize,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        let b = OrderBounds::default();
        BoundsConfig { p_max: b.p_max, q_max: b.q_max, d_max: b.d_max }
    }
}

/// One run of the engine, as written by the user.
///
/// `panel` and `hierarchy` are resolved relative to the directory holding
/// the config file. Every field except the three paths has a default, and
/// the struct round-trips through TOML unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Panel CSV: `year,<attr..>,deaths,exposure` rows.
    pub panel: String,
    /// Hierarchy TOML: `[[attribute]]` tables with `name` and `values`.
    pub hierarchy: String,
    pub output_dir: String,
    /// Any of `base`, `bottom_up`, `ols`, `gls`.
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Nominal miss rate of the prediction intervals (0.2 gives 80%).
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Maximum-entropy bootstrap replicates per origin.
    #[serde(default = "default_replicates")]
    pub b_replicates: usize,
    /// Simulated future sample paths per replicate.
    #[serde(default = "default_replicates")]
    pub p_paths: usize,
    /// `forecast` builds future summing matrices from forecast exposures,
    /// `holdout` reads the realized values (backtests only).
    #[serde(default = "default_s_mode")]
    pub s_mode: String,
    /// `raw` models rates directly, `log` models their logarithms.
    #[serde(default = "default_rate_scale")]
    pub rate_scale: String,
    /// Whether bootstrap prediction intervals are produced at all.
    #[serde(default)]
    pub intervals: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub order_bounds: BoundsConfig,
}

/// [`RunConfig`] after validation: paths made absolute, enums parsed, and
/// the provenance hash fixed.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub panel_path: PathBuf,
    pub hierarchy_path: PathBuf,
    pub output_dir: PathBuf,
    pub methods: Vec<Method>,
    pub horizon: usize,
    pub alpha: f64,
    pub b_replicates: usize,
    pub p_paths: usize,
    pub s_mode: SProvenance,
    pub rate_scale: RateScale,
    pub intervals: bool,
    pub seed: u64,
    pub bounds: OrderBounds,
    pub config_hash: String,
}

impl RunConfig {
    /// A config with the given paths and every other field at its default.
    pub fn with_paths(panel: &str, hierarchy: &str, output_dir: &str) -> RunConfig {
        RunConfig {
            panel: panel.to_string(),
            hierarchy: hierarchy.to_string(),
            output_dir: output_dir.to_string(),
            methods: default_methods(),
            horizon: default_horizon(),
            alpha: default_alpha(),
            b_replicates: default_replicates(),
            p_paths: default_replicates(),
            s_mode: default_s_mode(),
            rate_scale: default_rate_scale(),
            intervals: false,
            seed: 0,
            order_bounds: BoundsConfig::default(),
        }
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
        toml::from_str(&text)
            .map_err(|e| CliError::Parse { path: path.display().to_string(), message: e.to_string() })
    }

    /// SHA-256 of the canonical TOML serialization, as lowercase hex.
    pub fn hash(&self) -> Result<String, CliError> {
        let text = toml::to_string(self).map_err(|e| CliError::Emit(e.to_string()))?;
        let digest = Sha256::digest(text.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Validates every field and resolves paths against `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<Resolved, CliError> {
        if self.methods.is_empty() {
            return Err(CliError::Config("methods must not be empty".to_string()));
        }
        let mut methods = Vec::new();
        for name in &self.methods {
            let method: Method = name.parse().map_err(CliError::Config)?;
            if !methods.contains(&method) {
                methods.push(method);
            }
        }
        if self.horizon == 0 {
            return Err(CliError::Config("horizon must be at least 1".to_string()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Config(format!(
                "alpha must lie strictly between 0 and 1, got {}",
                self.alpha
            )));
        }
        if self.intervals && (self.b_replicates == 0 || self.p_paths == 0) {
            return Err(CliError::Config(
                "intervals need b_replicates >= 1 and p_paths >= 1".to_string(),
            ));
        }
        let s_mode = match self.s_mode.as_str() {
            "forecast" => SProvenance::ForecastExposures,
            "holdout" => SProvenance::HoldoutExposures,
            other => {
                return Err(CliError::Config(format!(
                    "unknown s_mode '{other}'; expected forecast or holdout"
                )))
            }
        };
        let rate_scale = match self.rate_scale.as_str() {
            "raw" => RateScale::Raw,
            "log" => RateScale::Log,
            other => {
                return Err(CliError::Config(format!(
                    "unknown rate_scale '{other}'; expected raw or log"
                )))
            }
        };
        let bounds = OrderBounds {
            p_max: self.order_bounds.p_max,
            q_max: self.order_bounds.q_max,
            d_max: self.order_bounds.d_max,
        };
        Ok(Resolved {
            panel_path: base_dir.join(&self.panel),
            hierarchy_path: base_dir.join(&self.hierarchy),
            output_dir: base_dir.join(&self.output_dir),
            methods,
            horizon: self.horizon,
            alpha: self.alpha,
            b_replicates: self.b_replicates,
            p_paths: self.p_paths,
            s_mode,
            rate_scale,
            intervals: self.intervals,
            seed: self.seed,
            bounds,
            config_hash: self.hash()?,
        })
    }
}

/// One attribute of the hierarchy config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeConfig {
    pub name: String,
    pub values: Vec<String>,
}

/// Hierarchy description: one or two `[[attribute]]` tables whose value
/// lists keep declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyConfig {
    pub attribute: Vec<AttributeConfig>,
}

impl HierarchyConfig {
    pub fn load(path: &Path) -> Result<HierarchyConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
        toml::from_str(&text)
            .map_err(|e| CliError::Parse { path: path.display().to_string(), message: e.to_string() })
    }

    pub fn build(&self) -> Result<GroupedHierarchy, CliError> {
        let attrs: Vec<(String, Vec<String>)> =
            self.attribute.iter().map(|a| (a.name.clone(), a.values.clone())).collect();
        Ok(build_hierarchy(&attrs)?)
    }
}
