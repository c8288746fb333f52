//! Per-command run configurations.
//!
//! Every field is echoed, defaults included, into the provenance block of the
//! command's outputs. Relative paths resolve against the config file.

use std::path::PathBuf;

use reifenberg::beta::ProfileConfig;
use reifenberg::flow::BaseGrid;
use reifenberg::nets::{FitConfig, FitMode, DEFAULT_C_AUDIT};
use reifenberg::Result;
use serde::{Deserialize, Serialize};

fn profile_defaults() -> ProfileConfig {
    ProfileConfig::default()
}

fn default_depth() -> usize {
    profile_defaults().depth
}

fn default_q() -> Option<f64> {
    profile_defaults().q
}

fn default_j_q_start() -> usize {
    profile_defaults().j_q_start
}

fn default_alpha_factor() -> f64 {
    profile_defaults().alpha_radius_factor
}

fn one() -> usize {
    1
}

fn default_eps() -> f64 {
    0.1
}

fn default_mode() -> FitMode {
    FitMode::L2
}

fn default_c_audit() -> f64 {
    DEFAULT_C_AUDIT
}

/// Regular grid on a window of the model plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub pitch: f64,
}

impl GridConfig {
    pub fn grid(&self) -> Result<BaseGrid> {
        BaseGrid::new(self.lower.clone(), self.upper.clone(), self.pitch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetasConfig {
    pub cloud: PathBuf,
    /// Parameterization whose ε_k, ε'_k are added to the profile.
    #[serde(default)]
    pub map: Option<PathBuf>,
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// `null` skips the averaged β.
    #[serde(default = "default_q")]
    pub q: Option<f64>,
    #[serde(default = "default_j_q_start")]
    pub j_q_start: usize,
    #[serde(default = "default_alpha_factor")]
    pub alpha_radius_factor: f64,
    /// Explicit sample indices; otherwise every `stride`-th sample.
    #[serde(default)]
    pub base_points: Option<Vec<usize>>,
    #[serde(default = "one")]
    pub stride: usize,
}

impl BetasConfig {
    pub fn profile(&self) -> ProfileConfig {
        ProfileConfig {
            depth: self.depth,
            q: self.q,
            j_q_start: self.j_q_start,
            alpha_radius_factor: self.alpha_radius_factor,
        }
    }
}

/// Explicit model plane: base point and orthonormal frame columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneConfig {
    pub base: Vec<f64>,
    pub frame: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildConfig {
    pub cloud: PathBuf,
    pub depth: usize,
    /// Defaults to the span of the first `d` coordinate axes.
    #[serde(default)]
    pub sigma0: Option<PlaneConfig>,
    #[serde(default = "default_mode")]
    pub mode: FitMode,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub fit_radius_factor: Option<f64>,
    #[serde(default)]
    pub l1_radius_factor: Option<f64>,
    #[serde(default)]
    pub l1_min_level: Option<usize>,
    /// Center separation as a multiple of `r_k`; plain nets when absent.
    #[serde(default)]
    pub separation: Option<f64>,
    #[serde(default = "default_c_audit")]
    pub c_audit: f64,
    /// Isometry field written next to the map.
    #[serde(default)]
    pub field: Option<GridConfig>,
}

impl BuildConfig {
    pub fn fit(&self) -> FitConfig {
        let mut fit = FitConfig::new(self.mode, self.eps);
        if let Some(f) = self.fit_radius_factor {
            fit.fit_radius_factor = f;
        }
        if let Some(f) = self.l1_radius_factor {
            fit.l1_radius_factor = f;
        }
        if let Some(k) = self.l1_min_level {
            fit.l1_min_level = k;
        }
        fit
    }
}

/// Map applied by `eval`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// The parameterization `f` of the model plane.
    F,
    /// Its ambient extension `g`.
    G,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Queries {
    Points(Vec<Vec<f64>>),
    /// Points of a cloud document.
    Cloud(PathBuf),
    /// Nodes of a grid on the model plane.
    Grid(GridConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub map: PathBuf,
    #[serde(default = "default_target")]
    pub target: Target,
    /// Precomputed isometries for `g`; computed exactly when absent.
    #[serde(default)]
    pub field: Option<PathBuf>,
    pub queries: Queries,
}

fn default_target() -> Target {
    Target::F
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub map: PathBuf,
    /// Overrides the multiple recorded at build time.
    #[serde(default)]
    pub c_audit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistortionConfig {
    pub count: usize,
    pub min_separation: f64,
    pub max_separation: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Replaced by `--seed` when given.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatnessConfig {
    /// Grid on which `f` is sampled.
    pub grid: GridConfig,
    pub radii: Vec<f64>,
    /// Every `center_stride`-th node at least the largest radius inside the grid.
    #[serde(default = "one")]
    pub center_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    pub map: PathBuf,
    #[serde(default)]
    pub distortion: Option<DistortionConfig>,
    #[serde(default)]
    pub flatness: Option<FlatnessConfig>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_fields() {
        let c: BuildConfig = serde_json::from_str(r#"{"cloud": "c.json", "depth": 3}"#).unwrap();
        assert_eq!(c.mode, FitMode::L2);
        assert_eq!(c.fit(), FitConfig::new(FitMode::L2, 0.1));
        let b: BetasConfig = serde_json::from_str(r#"{"cloud": "c.json", "q": null}"#).unwrap();
        assert_eq!(b.profile(), ProfileConfig { q: None, ..ProfileConfig::default() });
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<AuditConfig>(r#"{"map": "m.json", "cauidt": 3}"#).is_err());
    }
}
