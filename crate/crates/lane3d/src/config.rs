//! Flat key/value run configuration.
//!
//! One TOML file of top-level keys mirrors every matcher and anchor setting
//! plus the evaluation and occlusion knobs. Values resolve as
//! `--set key=value` flags, then the config file, then the built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use lane3d_core::fixtures::{DepthKind, DEFAULT_OCCLUSION_EPS};
use lane3d_core::{AnchorConfig, EditPenalty, MatchConfig, TopViewGrid};
use lane3d_core::anchor::{DEFAULT_PROB_THRESHOLD, DEFAULT_VIS_THRESHOLD};
use lane3d_core::metrics::default_thresholds;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("override `{0}` is not of the form key=value")]
    BadOverride(String),
    #[error("config value: {0}")]
    BadValue(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub dense_y_positions: Vec<f64>,
    pub d_max: f64,
    pub match_fraction: f64,
    pub near_far_split: f64,
    pub range_end: f64,
    pub edit_penalty: EditPenalty,

    pub anchor_x_positions: Vec<f64>,
    pub y_positions: Vec<f64>,
    pub y_ref: f64,
    pub top_view_x_range: (f64, f64),
    pub top_view_y_range: (f64, f64),
    /// (cols, rows)
    pub top_view_resolution: (usize, usize),

    /// Existence-probability sweep for AP and F-score.
    pub thresholds: Vec<f64>,
    /// Used by `anchors decode` and `--dump-matches`.
    pub prob_threshold: f64,
    pub vis_threshold: f64,

    pub occlusion_eps: f64,
    pub depth_kind: DepthKind,
}

impl Default for Settings {
    fn default() -> Self {
        let m = MatchConfig::default();
        let a = AnchorConfig::default();
        Self {
            dense_y_positions: m.dense_y_positions,
            d_max: m.d_max,
            match_fraction: m.match_fraction,
            near_far_split: m.near_far_split,
            range_end: m.range_end,
            edit_penalty: m.edit_penalty,
            anchor_x_positions: a.anchor_x_positions,
            y_positions: a.y_positions,
            y_ref: a.y_ref,
            top_view_x_range: a.top_view_grid.x_range,
            top_view_y_range: a.top_view_grid.y_range,
            top_view_resolution: a.top_view_grid.resolution,
            thresholds: default_thresholds(),
            prob_threshold: DEFAULT_PROB_THRESHOLD,
            vis_threshold: DEFAULT_VIS_THRESHOLD,
            occlusion_eps: DEFAULT_OCCLUSION_EPS,
            depth_kind: DepthKind::default(),
        }
    }
}

/// Parses the right-hand side of `key=value` as a TOML value, falling back to
/// a plain string for bare words.
fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl Settings {
    /// Defaults, overlaid by the optional file, overlaid by `key=value` overrides.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table = toml::Table::try_from(Settings::default()).expect("defaults serialize");
        let layer = |key: String, value: toml::Value, table: &mut toml::Table| {
            if !table.contains_key(&key) {
                return Err(ConfigError::UnknownKey(key));
            }
            table.insert(key, value);
            Ok(())
        };
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
            let parsed: toml::Table =
                text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax { path: path.to_path_buf(), message: e.to_string() })?;
            for (k, v) in parsed {
                layer(k, v, &mut table)?;
            }
        }
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::BadOverride(o.clone()))?;
            layer(k.trim().to_string(), parse_value(v.trim()), &mut table)?;
        }
        let settings: Settings = table.try_into().map_err(|e: toml::de::Error| ConfigError::BadValue(e.message().to_string()))?;
        settings.validate()?;
        Ok(settings)
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig {
            dense_y_positions: self.dense_y_positions.clone(),
            d_max: self.d_max,
            match_fraction: self.match_fraction,
            near_far_split: self.near_far_split,
            range_end: self.range_end,
            edit_penalty: self.edit_penalty,
        }
    }

    pub fn anchor_config(&self) -> AnchorConfig {
        AnchorConfig {
            anchor_x_positions: self.anchor_x_positions.clone(),
            y_positions: self.y_positions.clone(),
            y_ref: self.y_ref,
            top_view_grid: TopViewGrid {
                x_range: self.top_view_x_range,
                y_range: self.top_view_y_range,
                resolution: self.top_view_resolution,
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.match_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.anchor_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.thresholds.is_empty() || !self.thresholds.iter().all(|t| (0.0..=1.0).contains(t)) {
            return Err(ConfigError::Invalid("thresholds must be a non-empty list within [0, 1]".into()));
        }
        for (name, v) in [("prob_threshold", self.prob_threshold), ("vis_threshold", self.vis_threshold)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::Invalid(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.occlusion_eps >= 0.0 && self.occlusion_eps.is_finite()) {
            return Err(ConfigError::Invalid("occlusion_eps must be a finite non-negative distance".into()));
        }
        Ok(())
    }
}
