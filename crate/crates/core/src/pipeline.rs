//! End-to-end orchestration: imaging, detection (built-in or external),
//! fusion and weighing for one image.

use crate::config::PipelineConfig;
use crate::detect::{
    classical_detect_chalky, classical_detect_color, classify_chalk, measure_chalk_fraction,
    DetectionSet,
};
use crate::error::{Error, Result};
use crate::fusion::{fuse, FusionConfig};
use crate::imaging::{extract_contours, split_hsv, to_inverted_gray, vs_image, RgbImage};
use crate::model::{
    AnalysisReport, Contour, DensityTable, KernelProperty, RawLabel,
};
use crate::weigh::weight_ratios;
use std::collections::{BTreeMap, HashMap};

/// Analyzes one image. External detection sets, when given, replace the
/// corresponding built-in classical branch.
pub fn analyze(
    img: &RgbImage,
    external_color: Option<DetectionSet>,
    external_gray: Option<DetectionSet>,
    densities: &DensityTable,
    cfg: &PipelineConfig,
) -> Result<AnalysisReport> {
    let (s, v) = split_hsv(img);
    let vs = vs_image(&s, &v, cfg.kernel_radius)?;
    let contours = extract_contours(&vs, cfg.binarize_threshold, cfg.kernel_radius, cfg.min_area);
    let gray = to_inverted_gray(img);

    let color = match external_color {
        Some(set) => {
            check_dims(&set, img)?;
            set
        }
        None => classical_detect_color(img, &contours, cfg)?,
    };
    let gray_set = match external_gray {
        Some(set) => {
            check_dims(&set, img)?;
            set
        }
        None => classical_detect_chalky(&gray, &contours, cfg),
    };

    // classify CHALKY detections into PC/MC from the segmented gray pixels
    let fusion_cfg = FusionConfig::from(cfg);
    let mut chalk_classes: HashMap<usize, KernelProperty> = HashMap::new();
    for (gi, det) in gray_set.detections.iter().enumerate() {
        if !det.labels.contains(&RawLabel::Chalky) {
            continue;
        }
        if let Some(ci) = match_contour(&det.bbox, &contours, &fusion_cfg) {
            let m = measure_chalk_fraction(&gray, &contours[ci], cfg.chalk_bright_threshold, ci);
            chalk_classes.insert(gi, classify_chalk(&m));
        }
    }

    let (instances, unresolved) = fuse(&color, &gray_set, &contours, &chalk_classes, &fusion_cfg);
    if instances.is_empty() {
        return Ok(AnalysisReport {
            kernels: vec![],
            per_type_weight: zero_map(),
            total_weight: 0.0,
            ratios: zero_map(),
            unresolved,
        });
    }
    weight_ratios(&instances, densities, unresolved)
}

fn zero_map() -> BTreeMap<KernelProperty, f64> {
    KernelProperty::ALL.iter().map(|&p| (p, 0.0)).collect()
}

fn check_dims(set: &DetectionSet, img: &RgbImage) -> Result<()> {
    if set.width != img.width || set.height != img.height {
        return Err(Error::DimensionMismatch(
            set.width, set.height, img.width, img.height,
        ));
    }
    Ok(())
}

/// Same centroid-match rule as fusion, from a box to its contour.
fn match_contour(
    bbox: &crate::model::BoundingBox,
    contours: &[Contour],
    cfg: &FusionConfig,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (ci, c) in contours.iter().enumerate() {
        let (cx, cy) = c.centroid;
        if !bbox.contains_point(cx, cy) {
            continue;
        }
        let (bx, by) = bbox.center();
        let dist = ((cx - bx).powi(2) + (cy - by).powi(2)).sqrt();
        if dist > cfg.centroid_match_fraction * bbox.diagonal() {
            continue;
        }
        if best.map_or(true, |(_, bd)| dist < bd) {
            best = Some((ci, dist));
        }
    }
    best.map(|(ci, _)| ci)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PropertySet;
    use crate::synth::{generate_scene, SceneSpec};

    #[test]
    fn analyze_empty_scene_gives_empty_report() {
        let spec = SceneSpec {
            width: 320,
            height: 240,
            count_min: 0,
            count_max: 0,
            ..SceneSpec::default()
        };
        let (img, _) = generate_scene(&spec).unwrap();
        let d = DensityTable::uniform("t", 5e-6);
        let r = analyze(&img, None, None, &d, &PipelineConfig::default()).unwrap();
        assert!(r.kernels.is_empty());
        assert_eq!(r.total_weight, 0.0);
        assert!(r.unresolved.is_empty());
    }

    #[test]
    fn analyze_sound_scene_classifies_all_so() {
        let spec = SceneSpec {
            width: 640,
            height: 480,
            count_min: 10,
            count_max: 10,
            type_weights: [(KernelProperty::SO, 1.0)].into(),
            seed: 9,
            ..SceneSpec::default()
        };
        let (img, gt) = generate_scene(&spec).unwrap();
        let d = DensityTable::uniform("t", 5e-6);
        let r = analyze(&img, None, None, &d, &PipelineConfig::default()).unwrap();
        assert_eq!(r.kernels.len(), gt.len());
        for k in &r.kernels {
            assert_eq!(k.properties, PropertySet::single(KernelProperty::SO));
        }
        assert!((r.ratios[&KernelProperty::SO] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn analyze_mixed_scene_matches_ground_truth_classes() {
        let spec = SceneSpec {
            width: 960,
            height: 720,
            count_min: 18,
            count_max: 18,
            dual_probability: 0.5,
            seed: 1234,
            ..SceneSpec::default()
        };
        let (img, gt) = generate_scene(&spec).unwrap();
        let d = crate::weigh::reference_density_table();
        let r = analyze(&img, None, None, &d, &PipelineConfig::default()).unwrap();
        assert_eq!(r.kernels.len(), gt.len());
        // every predicted kernel's class equals the ground truth at its center
        for k in &r.kernels {
            let (cx, cy) = k.bbox.center();
            let truth = gt
                .iter()
                .find(|g| g.contains(cx, cy))
                .expect("kernel center lies in a ground-truth ellipse");
            assert_eq!(
                k.properties, truth.properties,
                "at ({cx:.0},{cy:.0})"
            );
        }
    }
}
