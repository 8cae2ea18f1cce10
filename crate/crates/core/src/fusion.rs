//! Fusion of the color and gray detection branches onto extracted contours,
//! producing kernel instances with whitelist-legal property sets.

use crate::config::PipelineConfig;
use crate::detect::DetectionSet;
use crate::imaging::build_contour_from_mask;
use crate::model::{
    is_mutually_exclusive, BoundingBox, Contour, Detection, KernelInstance,
    KernelProperty, PropertySet, RawLabel, UnresolvedDetection,
};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Two boxes pair into a dual property at or above this IOU.
    pub iou_threshold: f64,
    /// Contour-centroid to box-center distance cap as a diagonal fraction.
    pub centroid_match_fraction: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            iou_threshold: 0.5,
            centroid_match_fraction: 0.5,
        }
    }
}

impl From<&PipelineConfig> for FusionConfig {
    fn from(cfg: &PipelineConfig) -> Self {
        FusionConfig {
            iou_threshold: cfg.iou_threshold,
            centroid_match_fraction: cfg.centroid_match_fraction,
        }
    }
}

/// Intersection over union of two axis-aligned boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// One candidate property with its supporting detection.
#[derive(Debug, Clone)]
struct Candidate {
    property: KernelProperty,
    confidence: f64,
    det: usize, // index into the flat detection list
    bbox: BoundingBox,
}

/// Merges the two branches with the contours into classified kernels.
///
/// `chalk_classes` maps a gray-branch detection index to its PC/MC class;
/// gray detections already labeled PC/MC directly need no entry.
pub fn fuse(
    color: &DetectionSet,
    gray: &DetectionSet,
    contours: &[Contour],
    chalk_classes: &HashMap<usize, KernelProperty>,
    cfg: &FusionConfig,
) -> (Vec<KernelInstance>, Vec<UnresolvedDetection>) {
    // flat detection list: color first, then gray, remembering gray indices
    let mut dets: Vec<(Detection, Option<usize>)> = Vec::new();
    for d in &color.detections {
        dets.push((d.clone(), None));
    }
    for (gi, d) in gray.detections.iter().enumerate() {
        dets.push((d.clone(), Some(gi)));
    }

    let mut unresolved: Vec<UnresolvedDetection> = Vec::new();
    let mut per_contour: Vec<Vec<usize>> = vec![Vec::new(); contours.len()];

    // step 1: assign each detection to the contour matching its box
    for (di, (d, _)) in dets.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (ci, c) in contours.iter().enumerate() {
            let (cx, cy) = c.centroid;
            if !d.bbox.contains_point(cx, cy) {
                continue;
            }
            let (bx, by) = d.bbox.center();
            let dist = ((cx - bx).powi(2) + (cy - by).powi(2)).sqrt();
            if dist > cfg.centroid_match_fraction * d.bbox.diagonal() {
                continue;
            }
            if best.map_or(true, |(_, bd)| dist < bd) {
                best = Some((ci, dist));
            }
        }
        match best {
            Some((ci, _)) => per_contour[ci].push(di),
            None => unresolved.push(UnresolvedDetection {
                detection: d.clone(),
                reason: "no matching contour".into(),
            }),
        }
    }

    let mut instances = Vec::new();
    for (ci, assigned) in per_contour.iter().enumerate() {
        resolve_contour(
            &contours[ci],
            assigned,
            &dets,
            chalk_classes,
            cfg,
            &mut instances,
            &mut unresolved,
        );
    }
    (instances, unresolved)
}

#[allow(clippy::too_many_arguments)]
fn resolve_contour(
    contour: &Contour,
    assigned: &[usize],
    dets: &[(Detection, Option<usize>)],
    chalk_classes: &HashMap<usize, KernelProperty>,
    cfg: &FusionConfig,
    instances: &mut Vec<KernelInstance>,
    unresolved: &mut Vec<UnresolvedDetection>,
) {
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut other_dets: Vec<usize> = Vec::new();
    let mut unclassified_chalk: Vec<usize> = Vec::new();

    for &di in assigned {
        let (d, gray_idx) = &dets[di];
        for &label in &d.labels {
            match label {
                RawLabel::Other => other_dets.push(di),
                RawLabel::Chalky => match gray_idx.and_then(|gi| chalk_classes.get(&gi)) {
                    Some(&p) => candidates.push(Candidate {
                        property: p,
                        confidence: d.confidence,
                        det: di,
                        bbox: d.bbox,
                    }),
                    None => unclassified_chalk.push(di),
                },
                _ => {
                    if let Some(p) = label.property() {
                        candidates.push(Candidate {
                            property: p,
                            confidence: d.confidence,
                            det: di,
                            bbox: d.bbox,
                        });
                    }
                }
            }
        }
    }

    // deterministic ranking: confidence desc, then box coords, then label
    candidates.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.bbox.sort_key().cmp(&b.bbox.sort_key()))
            .then_with(|| a.property.as_str().cmp(b.property.as_str()))
    });

    // duplicate properties collapse onto their best-ranked supporter;
    // the extra supporting detections are still consumed
    let mut kept: Vec<Candidate> = Vec::new();
    let mut extra_support: Vec<usize> = Vec::new();
    let mut discarded: Vec<Candidate> = Vec::new();
    for c in candidates {
        if kept.iter().any(|k| k.property == c.property) {
            extra_support.push(c.det);
            continue;
        }
        if discarded.iter().any(|k| k.property == c.property) {
            discarded.push(c);
            continue;
        }
        let compatible = kept
            .iter()
            .all(|k| !is_mutually_exclusive(k.property, c.property));
        let overlaps = kept.iter().all(|k| {
            k.det == c.det || iou(&k.bbox, &c.bbox) >= cfg.iou_threshold
        });
        if kept.len() < 2 && compatible && overlaps {
            kept.push(c);
        } else {
            discarded.push(c);
        }
    }

    let has_chalk = kept
        .iter()
        .any(|k| matches!(k.property, KernelProperty::PC | KernelProperty::MC));

    let props: Vec<KernelProperty> = kept.iter().map(|k| k.property).collect();
    let property_set = match props.len() {
        0 => None,
        _ => PropertySet::from_slice(&props).ok(),
    };

    if let Some(ps) = property_set {
        let mut sources: Vec<usize> = kept.iter().map(|k| k.det).collect();
        sources.extend(extra_support.iter().copied());
        // an OTHER placeholder is consumed when a chalk class resolved it
        if has_chalk {
            sources.extend(other_dets.iter().copied());
        } else {
            for &di in &other_dets {
                unresolved.push(UnresolvedDetection {
                    detection: dets[di].0.clone(),
                    reason: "OTHER with no chalk match".into(),
                });
            }
        }
        sources.sort_unstable();
        sources.dedup();
        let confidence = kept.iter().map(|k| k.confidence).sum::<f64>() / kept.len() as f64;
        let source_detections: Vec<Detection> =
            sources.iter().map(|&di| dets[di].0.clone()).collect();
        // detections whose only candidates were filtered out stay unresolved
        let mut reported: Vec<usize> = Vec::new();
        for c in &discarded {
            if !sources.contains(&c.det) && !reported.contains(&c.det) {
                reported.push(c.det);
                unresolved.push(UnresolvedDetection {
                    detection: dets[c.det].0.clone(),
                    reason: format!("{} discarded by mutual-exclusion filter", c.property),
                });
            }
        }
        for &di in &unclassified_chalk {
            unresolved.push(UnresolvedDetection {
                detection: dets[di].0.clone(),
                reason: "CHALKY without PC/MC classification".into(),
            });
        }
        instances.push(KernelInstance {
            contour: contour.clone(),
            properties: ps,
            source_detections,
            confidence,
        });
    } else {
        // nothing usable on this contour
        for &di in assigned {
            unresolved.push(UnresolvedDetection {
                detection: dets[di].0.clone(),
                reason: "contour yielded no legal property set".into(),
            });
        }
    }
}

/// Baseline single-branch postprocessing: group detections by IOU and apply
/// the same whitelist filtering, with box-shaped stand-in contours.
pub fn naive_postprocess(
    detections: &DetectionSet,
    cfg: &FusionConfig,
) -> (Vec<KernelInstance>, Vec<UnresolvedDetection>) {
    let n = detections.detections.len();
    // union-find over pairwise IOU
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if iou(&detections.detections[i].bbox, &detections.detections[j].bbox)
                >= cfg.iou_threshold
            {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut roots: Vec<usize> = groups.keys().copied().collect();
    roots.sort_unstable();

    let mut instances = Vec::new();
    let mut unresolved = Vec::new();
    for root in roots {
        let members = &groups[&root];
        // synthesize a contour from the best-confidence box of the group
        let lead = members
            .iter()
            .copied()
            .max_by(|&a, &b| {
                let da = &detections.detections[a];
                let db = &detections.detections[b];
                da.confidence
                    .total_cmp(&db.confidence)
                    .then_with(|| db.bbox.sort_key().cmp(&da.bbox.sort_key()))
            })
            .unwrap();
        let contour = rect_contour(&detections.detections[lead].bbox);
        let dets: Vec<(Detection, Option<usize>)> = detections
            .detections
            .iter()
            .map(|d| (d.clone(), None))
            .collect();
        resolve_contour(
            &contour,
            members,
            &dets,
            &HashMap::new(),
            cfg,
            &mut instances,
            &mut unresolved,
        );
    }
    (instances, unresolved)
}

/// Filled rectangular contour covering a box, for synthesized instances.
pub fn rect_contour(bbox: &BoundingBox) -> Contour {
    let x0 = bbox.x.floor().max(0.0) as u32;
    let y0 = bbox.y.floor().max(0.0) as u32;
    let w = (bbox.w.round() as usize).max(1);
    let h = (bbox.h.round() as usize).max(1);
    let mask = vec![true; w * h];
    build_contour_from_mask(&mask, w, h, x0, y0).expect("non-empty rectangle")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Branch;
    use crate::model::KernelProperty::*;

    fn det(bbox: [f64; 4], labels: Vec<RawLabel>, conf: f64, branch: Branch) -> Detection {
        Detection::new(BoundingBox::from(bbox), labels, conf, branch)
    }

    fn set(branch: Branch, detections: Vec<Detection>) -> DetectionSet {
        DetectionSet {
            branch,
            width: 200,
            height: 200,
            image: String::new(),
            detections,
        }
    }

    #[test]
    fn iou_examples() {
        let a = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        let far = BoundingBox::new(50.0, 50.0, 10.0, 10.0);
        assert_eq!(iou(&a, &far), 0.0);
        let b = BoundingBox::new(5.0, 0.0, 10.0, 10.0);
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou(&a, &b), iou(&b, &a));
    }

    #[test]
    fn single_detection_single_property() {
        let c = rect_contour(&BoundingBox::new(10.0, 10.0, 30.0, 12.0));
        let color = set(
            Branch::Color,
            vec![det([10.0, 10.0, 30.0, 12.0], vec![RawLabel::SO], 1.0, Branch::Color)],
        );
        let gray = set(Branch::Gray, vec![]);
        let (inst, unres) = fuse(&color, &gray, &[c], &HashMap::new(), &FusionConfig::default());
        assert_eq!(inst.len(), 1);
        assert!(unres.is_empty());
        assert_eq!(inst[0].properties, PropertySet::single(SO));
    }

    #[test]
    fn dual_pairing_yc_plus_chalk() {
        let c = rect_contour(&BoundingBox::new(10.0, 10.0, 30.0, 12.0));
        let color = set(
            Branch::Color,
            vec![det([10.0, 10.0, 30.0, 12.0], vec![RawLabel::YC], 0.9, Branch::Color)],
        );
        let gray = set(
            Branch::Gray,
            vec![det([11.0, 10.0, 30.0, 12.0], vec![RawLabel::Chalky], 0.8, Branch::Gray)],
        );
        let chalk: HashMap<usize, KernelProperty> = [(0, PC)].into();
        let (inst, unres) = fuse(&color, &gray, &[c], &chalk, &FusionConfig::default());
        assert_eq!(inst.len(), 1);
        assert!(unres.is_empty());
        assert_eq!(inst[0].properties, PropertySet::dual(PC, YC).unwrap());
        assert_eq!(inst[0].source_detections.len(), 2);
    }

    #[test]
    fn illegal_pair_lower_confidence_loses() {
        let c = rect_contour(&BoundingBox::new(10.0, 10.0, 30.0, 12.0));
        let color = set(
            Branch::Color,
            vec![det([10.0, 10.0, 30.0, 12.0], vec![RawLabel::BR], 0.8, Branch::Color)],
        );
        let gray = set(
            Branch::Gray,
            vec![det([10.0, 10.0, 30.0, 12.0], vec![RawLabel::Chalky], 0.6, Branch::Gray)],
        );
        let chalk: HashMap<usize, KernelProperty> = [(0, PC)].into();
        let (inst, unres) = fuse(&color, &gray, &[c], &chalk, &FusionConfig::default());
        assert_eq!(inst.len(), 1);
        assert_eq!(inst[0].properties, PropertySet::single(BR));
        assert_eq!(unres.len(), 1);
        assert_eq!(unres[0].detection.labels, vec![RawLabel::Chalky]);
    }

    #[test]
    fn other_consumed_by_chalk_or_unresolved() {
        let c = rect_contour(&BoundingBox::new(10.0, 10.0, 30.0, 12.0));
        let gray_det = det([10.0, 10.0, 30.0, 12.0], vec![RawLabel::Chalky], 1.0, Branch::Gray);
        let other = det([10.0, 10.0, 30.0, 12.0], vec![RawLabel::Other], 1.0, Branch::Color);
        let chalk: HashMap<usize, KernelProperty> = [(0, MC)].into();

        // with a chalk match: OTHER consumed
        let (inst, unres) = fuse(
            &set(Branch::Color, vec![other.clone()]),
            &set(Branch::Gray, vec![gray_det]),
            std::slice::from_ref(&c),
            &chalk,
            &FusionConfig::default(),
        );
        assert_eq!(inst.len(), 1);
        assert_eq!(inst[0].properties, PropertySet::single(MC));
        assert!(unres.is_empty());
        assert_eq!(inst[0].source_detections.len(), 2);

        // without: OTHER reported unresolved
        let (inst, unres) = fuse(
            &set(Branch::Color, vec![other]),
            &set(Branch::Gray, vec![]),
            &[c],
            &HashMap::new(),
            &FusionConfig::default(),
        );
        assert!(inst.is_empty());
        assert_eq!(unres.len(), 1);
    }

    #[test]
    fn detection_without_contour_unresolved() {
        let color = set(
            Branch::Color,
            vec![det([100.0, 100.0, 20.0, 10.0], vec![RawLabel::SO], 1.0, Branch::Color)],
        );
        let (inst, unres) = fuse(
            &color,
            &set(Branch::Gray, vec![]),
            &[],
            &HashMap::new(),
            &FusionConfig::default(),
        );
        assert!(inst.is_empty());
        assert_eq!(unres.len(), 1);
        assert_eq!(unres[0].reason, "no matching contour");
    }

    #[test]
    fn deterministic_rerun() {
        let c1 = rect_contour(&BoundingBox::new(10.0, 10.0, 30.0, 12.0));
        let c2 = rect_contour(&BoundingBox::new(60.0, 10.0, 30.0, 12.0));
        let color = set(
            Branch::Color,
            vec![
                det([10.0, 10.0, 30.0, 12.0], vec![RawLabel::YC], 0.7, Branch::Color),
                det([60.0, 10.0, 30.0, 12.0], vec![RawLabel::BR, RawLabel::SP], 0.9, Branch::Color),
            ],
        );
        let gray = set(
            Branch::Gray,
            vec![det([10.0, 10.0, 30.0, 12.0], vec![RawLabel::Chalky], 0.8, Branch::Gray)],
        );
        let chalk: HashMap<usize, KernelProperty> = [(0, PC)].into();
        let cfg = FusionConfig::default();
        let a = fuse(&color, &gray, &[c1.clone(), c2.clone()], &chalk, &cfg);
        let b = fuse(&color, &gray, &[c1, c2], &chalk, &cfg);
        assert_eq!(a.0.len(), b.0.len());
        for (x, y) in a.0.iter().zip(&b.0) {
            assert_eq!(x.properties, y.properties);
            assert_eq!(x.source_detections, y.source_detections);
        }
        assert_eq!(a.1, b.1);
        // the dual-labeled single detection forms a legal pair on its own box
        assert_eq!(a.0[1].properties, PropertySet::dual(BR, SP).unwrap());
    }

    #[test]
    fn naive_postprocess_matches_fuse_shape() {
        let color = set(
            Branch::Color,
            vec![
                det([10.0, 10.0, 30.0, 12.0], vec![RawLabel::YC], 0.9, Branch::Color),
                det([11.0, 10.0, 30.0, 12.0], vec![RawLabel::BR], 0.8, Branch::Color),
                det([60.0, 50.0, 30.0, 12.0], vec![RawLabel::SO], 1.0, Branch::Color),
            ],
        );
        let (inst, unres) = naive_postprocess(&color, &FusionConfig::default());
        assert_eq!(inst.len(), 2);
        assert!(unres.is_empty());
        let labels: Vec<String> = inst.iter().map(|i| i.properties.label()).collect();
        assert!(labels.contains(&"BR&YC".to_string()));
        assert!(labels.contains(&"SO".to_string()));
    }

    #[test]
    fn naive_postprocess_illegal_triple_reduced() {
        // YC (0.9) + SP (0.8) + BR (0.7) all overlapping: YC kept, SP illegal
        // with YC, BR legal with YC -> BR&YC; SP discarded
        let color = set(
            Branch::Color,
            vec![
                det([10.0, 10.0, 30.0, 12.0], vec![RawLabel::YC], 0.9, Branch::Color),
                det([10.0, 10.0, 30.0, 12.0], vec![RawLabel::SP], 0.8, Branch::Color),
                det([10.0, 10.0, 30.0, 12.0], vec![RawLabel::BR], 0.7, Branch::Color),
            ],
        );
        let (inst, unres) = naive_postprocess(&color, &FusionConfig::default());
        assert_eq!(inst.len(), 1);
        assert_eq!(inst[0].properties.label(), "BR&YC");
        assert_eq!(unres.len(), 1);
        assert_eq!(unres[0].detection.labels, vec![RawLabel::SP]);
    }
}
