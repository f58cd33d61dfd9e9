//! Pipeline configuration shared by the library entry points and the CLI.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ground::RoiSpec;
use crate::loss::LossConfig;
use crate::mask::DownAxisMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Evaluation-side options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Multi-lane filter threshold (lanes after clipping).
    pub min_lanes: usize,
    /// Lookahead horizon in seconds for the distance budget.
    pub horizon_s: f64,
    /// Pool pixels globally instead of averaging per-frame scores.
    pub pooled: bool,
    /// Camera height above ground in the lane scene's units; sets the
    /// ground-truth ribbon width together with `width_factor`.
    pub camera_height: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { min_lanes: 4, horizon_s: 5.0, pooled: false, camera_height: 1.5 }
    }
}

/// All tunables of the pipeline. The defaults are the constants the
/// pipeline was designed around; overriding them is for ablation, not
/// normal operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub roi: RoiSpec,
    /// Radius of the local ground-point query, reconstruction units.
    pub d_max: f64,
    /// Minimum local points before a frame contributes a height intercept.
    pub min_local_points: usize,
    /// Label horizon in frames (assumes 10 fps extraction for 5 s).
    pub horizon_frames: u32,
    /// Ribbon width as a multiple of the camera height.
    pub width_factor: f64,
    /// Inter-frame displacement at or below this is a stationary period.
    pub null_displacement_threshold: f64,
    /// Field-angle cutoff for the fisheye projection, degrees.
    pub max_field_angle_deg: f64,
    pub down_axis: DownAxisMode,
    pub loss: LossConfig,
    pub eval: EvalSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            roi: RoiSpec::default(),
            d_max: 1.0,
            min_local_points: 10,
            horizon_frames: 50,
            width_factor: 1.5,
            null_displacement_threshold: 1e-4,
            max_field_angle_deg: 89.0,
            down_axis: DownAxisMode::PerFrame,
            loss: LossConfig::default(),
            eval: EvalSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| ConfigError::Invalid(m);
        self.roi.validate().map_err(invalid)?;
        if !(self.d_max > 0.0) {
            return Err(invalid(format!("d_max must be positive, got {}", self.d_max)));
        }
        if self.min_local_points < 2 {
            return Err(invalid(format!(
                "min_local_points must be at least 2, got {}",
                self.min_local_points
            )));
        }
        if self.horizon_frames == 0 {
            return Err(invalid("horizon_frames must be positive".to_string()));
        }
        if !(self.width_factor > 0.0) {
            return Err(invalid(format!("width_factor must be positive, got {}", self.width_factor)));
        }
        if !(self.null_displacement_threshold > 0.0) {
            return Err(invalid(format!(
                "null_displacement_threshold must be positive, got {}",
                self.null_displacement_threshold
            )));
        }
        if !(self.max_field_angle_deg > 0.0 && self.max_field_angle_deg < 90.0) {
            return Err(invalid(format!(
                "max_field_angle_deg must lie in (0, 90), got {}",
                self.max_field_angle_deg
            )));
        }
        self.loss.validate().map_err(|e| invalid(e.to_string()))?;
        if self.eval.min_lanes == 0 {
            return Err(invalid("eval.min_lanes must be positive".to_string()));
        }
        if !(self.eval.horizon_s > 0.0) {
            return Err(invalid(format!(
                "eval.horizon_s must be positive, got {}",
                self.eval.horizon_s
            )));
        }
        if !(self.eval.camera_height > 0.0) {
            return Err(invalid(format!(
                "eval.camera_height must be positive, got {}",
                self.eval.camera_height
            )));
        }
        Ok(())
    }
}
