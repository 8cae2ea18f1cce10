//! Detector branches: JSON exchange ingestion for external detectors, plus
//! the built-in rule-based color and chalk detectors.

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::imaging::{pixel_hue, GrayImage, RgbImage};
use crate::model::{Branch, Contour, Detection, KernelProperty, RawLabel};
use serde_json::Value;
use std::collections::HashSet;
use std::path::Path;

/// One branch's detections for a single image.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    pub branch: Branch,
    pub width: u32,
    pub height: u32,
    pub image: String,
    pub detections: Vec<Detection>,
}

const SET_FIELDS: [&str; 5] = ["image", "width", "height", "branch", "detections"];
const DET_FIELDS: [&str; 3] = ["bbox", "labels", "confidence"];

fn get_u32(obj: &serde_json::Map<String, Value>, key: &str) -> Result<u32> {
    obj.get(key)
        .and_then(Value::as_u64)
        .and_then(|v| u32::try_from(v).ok())
        .ok_or_else(|| Error::Parse(format!("missing or invalid `{key}`")))
}

/// Loads a detection exchange file and validates it against the expected
/// branch. Unknown fields are rejected in strict mode, warned about
/// otherwise.
pub fn load_detections(path: &Path, expected: Branch, strict: bool) -> Result<DetectionSet> {
    let text = std::fs::read_to_string(path)?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    parse_detections(&value, expected, strict)
}

pub fn parse_detections(value: &Value, expected: Branch, strict: bool) -> Result<DetectionSet> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Parse("top level is not an object".into()))?;
    check_fields(obj, &SET_FIELDS, strict)?;

    let branch: Branch = serde_json::from_value(
        obj.get("branch")
            .cloned()
            .ok_or_else(|| Error::Parse("missing `branch`".into()))?,
    )
    .map_err(|e| Error::Parse(format!("bad branch: {e}")))?;
    if branch != expected {
        return Err(Error::BranchMismatch {
            label: branch.to_string(),
            branch: expected.to_string(),
        });
    }
    let width = get_u32(obj, "width")?;
    let height = get_u32(obj, "height")?;
    let image = obj
        .get("image")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();

    let raw = obj
        .get("detections")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse("missing `detections` array".into()))?;
    let mut detections = Vec::with_capacity(raw.len());
    for (i, d) in raw.iter().enumerate() {
        let dobj = d
            .as_object()
            .ok_or_else(|| Error::Parse(format!("detection {i} is not an object")))?;
        check_fields(dobj, &DET_FIELDS, strict)?;
        let bbox: [f64; 4] = serde_json::from_value(
            dobj.get("bbox")
                .cloned()
                .ok_or_else(|| Error::Parse(format!("detection {i}: missing bbox")))?,
        )
        .map_err(|e| Error::Parse(format!("detection {i}: bad bbox: {e}")))?;
        let bbox = crate::model::BoundingBox::from(bbox);
        if !bbox.within_image(width, height) {
            return Err(Error::OutOfBoundsBox {
                x: bbox.x,
                y: bbox.y,
                w: bbox.w,
                h: bbox.h,
                iw: width,
                ih: height,
            });
        }
        let label_strs: Vec<String> = serde_json::from_value(
            dobj.get("labels")
                .cloned()
                .ok_or_else(|| Error::Parse(format!("detection {i}: missing labels")))?,
        )
        .map_err(|e| Error::Parse(format!("detection {i}: bad labels: {e}")))?;
        if label_strs.is_empty() {
            return Err(Error::Parse(format!("detection {i}: empty label set")));
        }
        let mut labels = Vec::with_capacity(label_strs.len());
        for s in &label_strs {
            let label: RawLabel = serde_json::from_value(Value::String(s.clone()))
                .map_err(|_| Error::Parse(format!("detection {i}: unknown label `{s}`")))?;
            if !label.valid_for(branch) {
                return Err(Error::BranchMismatch {
                    label: s.clone(),
                    branch: branch.to_string(),
                });
            }
            labels.push(label);
        }
        // confidence defaults to 1.0 when a backend supplies none
        let confidence = match dobj.get("confidence") {
            None | Some(Value::Null) => 1.0,
            Some(v) => v
                .as_f64()
                .filter(|c| (0.0..=1.0).contains(c))
                .ok_or_else(|| Error::Parse(format!("detection {i}: bad confidence")))?,
        };
        detections.push(Detection::new(bbox, labels, confidence, branch));
    }
    Ok(DetectionSet {
        branch,
        width,
        height,
        image,
        detections,
    })
}

fn check_fields(
    obj: &serde_json::Map<String, Value>,
    known: &[&str],
    strict: bool,
) -> Result<()> {
    for key in obj.keys() {
        if !known.contains(&key.as_str()) {
            if strict {
                return Err(Error::Parse(format!("unknown field `{key}`")));
            }
            eprintln!("warning: ignoring unknown field `{key}`");
        }
    }
    Ok(())
}

/// Serializes a detection set in the exchange schema.
pub fn detections_to_json(set: &DetectionSet) -> Value {
    serde_json::json!({
        "image": set.image,
        "width": set.width,
        "height": set.height,
        "branch": set.branch.to_string(),
        "detections": set.detections.iter().map(|d| serde_json::json!({
            "bbox": [d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h],
            "labels": d.labels.iter().map(|l| l.as_str()).collect::<Vec<_>>(),
            "confidence": d.confidence,
        })).collect::<Vec<_>>(),
    })
}

pub fn save_detections(set: &DetectionSet, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(&detections_to_json(set))?)?;
    Ok(())
}

/// Chalky-pixel fraction measured over one kernel mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChalkMeasurement {
    /// Index of the kernel mask the measurement refers to.
    pub mask_index: usize,
    /// Fraction of mask pixels brighter than the chalk threshold, in [0, 1].
    pub fraction: f64,
}

/// PC for a chalky fraction of at most one half, MC above.
pub fn classify_chalk(m: &ChalkMeasurement) -> KernelProperty {
    if m.fraction <= 0.5 {
        KernelProperty::PC
    } else {
        KernelProperty::MC
    }
}

/// Fraction of mask pixels whose inverted-gray value exceeds the threshold.
pub fn measure_chalk_fraction(
    gray: &GrayImage,
    mask: &Contour,
    chalk_bright_threshold: u8,
    mask_index: usize,
) -> ChalkMeasurement {
    let mut bright = 0u64;
    let mut total = 0u64;
    for (x, y) in mask.mask_pixels() {
        if x < gray.width && y < gray.height {
            total += 1;
            if gray.get(x, y) > chalk_bright_threshold {
                bright += 1;
            }
        }
    }
    ChalkMeasurement {
        mask_index,
        fraction: if total == 0 {
            0.0
        } else {
            bright as f64 / total as f64
        },
    }
}

/// Two-pass broken rule: flag lengths below 2/3 of the mean, then re-flag
/// against the mean of the provisionally whole kernels.
pub fn broken_rule(lengths: &[f64]) -> Result<Vec<bool>> {
    if lengths.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mean = |flags: Option<&[bool]>| -> f64 {
        let (mut sum, mut n) = (0.0, 0u32);
        for (i, &l) in lengths.iter().enumerate() {
            if flags.map_or(true, |f| !f[i]) {
                sum += l;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    };
    let m0 = mean(None);
    let pass1: Vec<bool> = lengths.iter().map(|&l| l < 2.0 / 3.0 * m0).collect();
    let m1 = mean(Some(&pass1));
    Ok(lengths.iter().map(|&l| l < 2.0 / 3.0 * m1).collect())
}

/// Rule-based stand-in for the color-branch detector: one detection per
/// kernel contour, labeled by spot / yellow / broken cues with SO fallback.
pub fn classical_detect_color(
    img: &RgbImage,
    contours: &[Contour],
    cfg: &PipelineConfig,
) -> Result<DetectionSet> {
    let lengths: Vec<f64> = contours.iter().map(|c| c.major_axis).collect();
    let broken = if contours.is_empty() {
        Vec::new()
    } else {
        broken_rule(&lengths)?
    };

    let mut detections = Vec::with_capacity(contours.len());
    for (i, c) in contours.iter().enumerate() {
        let spotted = has_dark_spot(img, c, cfg);
        let (mean_hue, mean_sat) = mask_hue_sat(img, c);
        let mut yellow = mean_sat > cfg.yellow_sat_threshold
            && mean_hue >= cfg.yellow_hue_min
            && mean_hue <= cfg.yellow_hue_max;
        // SP&YC is not a legal pair; the spot rule wins
        if spotted {
            yellow = false;
        }
        let mut labels = Vec::new();
        if broken[i] {
            labels.push(RawLabel::BR);
        }
        if spotted {
            labels.push(RawLabel::SP);
        } else if yellow {
            labels.push(RawLabel::YC);
        }
        if labels.is_empty() {
            labels.push(RawLabel::SO);
        }
        detections.push(Detection::new(c.bbox, labels, 1.0, Branch::Color));
    }
    Ok(DetectionSet {
        branch: Branch::Color,
        width: img.width,
        height: img.height,
        image: String::new(),
        detections,
    })
}

/// True when the kernel mask contains a connected dark blob (value channel
/// below the spot threshold) of at least the configured area.
fn has_dark_spot(img: &RgbImage, c: &Contour, cfg: &PipelineConfig) -> bool {
    let dark: HashSet<(u32, u32)> = c
        .mask_pixels()
        .filter(|&(x, y)| {
            let (r, g, b) = img.get(x, y);
            r.max(g).max(b) < cfg.spot_threshold
        })
        .collect();
    if (dark.len() as u64) < cfg.spot_min_area {
        return false;
    }
    // 8-connected components over the dark pixel set
    let mut seen: HashSet<(u32, u32)> = HashSet::new();
    let mut stack = Vec::new();
    for &start in &dark {
        if seen.contains(&start) {
            continue;
        }
        let mut size = 0u64;
        seen.insert(start);
        stack.push(start);
        while let Some((x, y)) = stack.pop() {
            size += 1;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    if nx < 0 || ny < 0 {
                        continue;
                    }
                    let p = (nx as u32, ny as u32);
                    if dark.contains(&p) && seen.insert(p) {
                        stack.push(p);
                    }
                }
            }
        }
        if size >= cfg.spot_min_area {
            return true;
        }
    }
    false
}

/// Mean hue (degrees) and saturation (0-255) over the contour mask.
fn mask_hue_sat(img: &RgbImage, c: &Contour) -> (f64, f64) {
    let (mut hue_sum, mut sat_sum, mut n) = (0.0, 0.0, 0u64);
    for (x, y) in c.mask_pixels() {
        if x >= img.width || y >= img.height {
            continue;
        }
        let (r, g, b) = img.get(x, y);
        let max = r.max(g).max(b);
        let min = r.min(g).min(b);
        let sat = if max == 0 {
            0.0
        } else {
            255.0 * (max - min) as f64 / max as f64
        };
        hue_sum += pixel_hue(r, g, b);
        sat_sum += sat;
        n += 1;
    }
    if n == 0 {
        (0.0, 0.0)
    } else {
        (hue_sum / n as f64, sat_sum / n as f64)
    }
}

/// Rule-based stand-in for the gray-branch detector: flags a kernel CHALKY
/// when its bright-pixel fraction clears the floor.
pub fn classical_detect_chalky(
    gray: &GrayImage,
    masks: &[Contour],
    cfg: &PipelineConfig,
) -> DetectionSet {
    let mut detections = Vec::new();
    for (i, mask) in masks.iter().enumerate() {
        let m = measure_chalk_fraction(gray, mask, cfg.chalk_bright_threshold, i);
        if m.fraction > cfg.chalk_min_fraction {
            detections.push(Detection::new(
                mask.bbox,
                vec![RawLabel::Chalky],
                1.0,
                Branch::Gray,
            ));
        }
    }
    DetectionSet {
        branch: Branch::Gray,
        width: gray.width,
        height: gray.height,
        image: String::new(),
        detections,
    }
}
