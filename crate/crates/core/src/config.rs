//! Pipeline configuration: every threshold and radius used by the imaging,
//! classical-backend and fusion stages, loadable from a single JSON file.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct PipelineConfig {
    /// Square structuring element radius (1 = 3x3).
    pub kernel_radius: u32,
    /// VS-image binarization threshold, 0-255.
    pub binarize_threshold: u8,
    /// Minimum contour area in pixels.
    pub min_area: u64,
    /// Value channel below this marks a candidate disease-spot pixel.
    pub spot_threshold: u8,
    /// Minimum connected dark-blob area to call a kernel spotted.
    pub spot_min_area: u64,
    /// Yellow hue band in degrees, inclusive.
    pub yellow_hue_min: f64,
    pub yellow_hue_max: f64,
    /// Mean saturation above this (0-255) is needed for a YC call.
    pub yellow_sat_threshold: f64,
    /// Inverted-gray value above this counts as a chalky pixel.
    pub chalk_bright_threshold: u8,
    /// Minimum chalky-pixel fraction to flag a kernel CHALKY.
    pub chalk_min_fraction: f64,
    /// IOU at or above this pairs two detections for a dual property.
    pub iou_threshold: f64,
    /// Centroid-to-box-center distance cap, as a fraction of the box diagonal.
    pub centroid_match_fraction: f64,
    /// Reject unknown fields in exchange files when true.
    pub strict: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            kernel_radius: 1,
            binarize_threshold: 60,
            min_area: 50,
            spot_threshold: 50,
            spot_min_area: 8,
            yellow_hue_min: 20.0,
            yellow_hue_max: 45.0,
            yellow_sat_threshold: 70.0,
            chalk_bright_threshold: 140,
            chalk_min_fraction: 0.08,
            iou_threshold: 0.5,
            centroid_match_fraction: 0.5,
            strict: false,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)?;
        let cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_radius == 0 {
            return Err(Error::Config("kernelRadius must be >= 1".into()));
        }
        if self.binarize_threshold == 0 || self.binarize_threshold == 255 {
            return Err(Error::Config("binarizeThreshold must be in (0, 255)".into()));
        }
        if !(0.0 < self.iou_threshold && self.iou_threshold <= 1.0) {
            return Err(Error::Config("iouThreshold must be in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.chalk_min_fraction) {
            return Err(Error::Config("chalkMinFraction must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// Applies one `key=value` override using the JSON field names.
    pub fn set_override(&mut self, spec: &str) -> Result<()> {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
        let mut doc = serde_json::to_value(&*self)?;
        let obj = doc.as_object_mut().expect("config serializes to object");
        if !obj.contains_key(key) {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        let parsed: serde_json::Value = serde_json::from_str(value)
            .map_err(|e| Error::Config(format!("bad value for `{key}`: {e}")))?;
        obj.insert(key.to_string(), parsed);
        *self = serde_json::from_value(doc)
            .map_err(|e| Error::Config(format!("bad value for `{key}`: {e}")))?;
        self.validate()
    }
}
