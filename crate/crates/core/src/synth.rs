//! Synthetic scene generator: rice-like ellipses with exact per-kernel
//! ground truth, for end-to-end testing without real imagery.

use crate::error::{Error, Result};
use crate::imaging::RgbImage;
use crate::model::{AnalysisReport, BoundingBox, DensityTable, KernelProperty, PropertySet};
use crate::weigh::{report_from_items, ReportItem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub count_min: u32,
    pub count_max: u32,
    /// Relative frequency per single type; duals draw the partner on top.
    pub type_weights: BTreeMap<KernelProperty, f64>,
    /// Probability that a non-sound kernel gains a compatible second defect.
    pub dual_probability: f64,
    pub seed: u64,
    /// Semi-major axis range, pixels.
    pub semi_major_min: f64,
    pub semi_major_max: f64,
    /// Length-to-width aspect ratio range.
    pub aspect_min: f64,
    pub aspect_max: f64,
    /// Chalk-patch fraction ranges for PC and MC.
    pub pc_fraction_min: f64,
    pub pc_fraction_max: f64,
    pub mc_fraction_min: f64,
    pub mc_fraction_max: f64,
    /// Broken kernels keep this fraction of the full length.
    pub broken_fraction_min: f64,
    pub broken_fraction_max: f64,
    /// Background mean intensity and additive uniform noise amplitude.
    pub background_level: u8,
    pub background_noise: u8,
    /// Minimum gap between kernel bounding boxes, pixels.
    pub placement_gap: u32,
    /// Rejection-sampling attempts per kernel before giving up.
    pub max_attempts: u32,
}

impl Default for SceneSpec {
    fn default() -> Self {
        let mut type_weights = BTreeMap::new();
        type_weights.insert(KernelProperty::SO, 5.0);
        type_weights.insert(KernelProperty::PC, 1.0);
        type_weights.insert(KernelProperty::MC, 1.0);
        type_weights.insert(KernelProperty::YC, 1.0);
        type_weights.insert(KernelProperty::SP, 1.0);
        type_weights.insert(KernelProperty::BR, 1.0);
        SceneSpec {
            width: 1280,
            height: 960,
            count_min: 40,
            count_max: 80,
            type_weights,
            dual_probability: 0.15,
            seed: 0,
            semi_major_min: 38.0,
            semi_major_max: 48.0,
            aspect_min: 2.5,
            aspect_max: 4.0,
            pc_fraction_min: 0.12,
            pc_fraction_max: 0.42,
            mc_fraction_min: 0.58,
            mc_fraction_max: 0.92,
            broken_fraction_min: 0.30,
            broken_fraction_max: 0.50,
            background_level: 25,
            background_noise: 10,
            placement_gap: 5,
            max_attempts: 400,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("scene dimensions must be positive".into()));
        }
        if self.count_min > self.count_max {
            return Err(Error::Config("countMin > countMax".into()));
        }
        let total: f64 = self.type_weights.values().sum();
        if self.type_weights.values().any(|&w| w < 0.0) || total <= 0.0 {
            return Err(Error::Config(
                "type weights must be non-negative and not all zero".into(),
            ));
        }
        Ok(())
    }
}

/// True geometry and class of one generated kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtKernel {
    /// [cx, cy, semi_major, semi_minor, theta_radians]
    pub ellipse: [f64; 5],
    pub properties: PropertySet,
    /// Exact rasterized mask pixel count.
    pub area: u64,
    #[serde(rename = "chalkyFraction")]
    pub chalky_fraction: f64,
}

impl GtKernel {
    /// Tight bounding box of the (untruncated) rotated ellipse.
    pub fn bbox(&self) -> BoundingBox {
        let [cx, cy, a, b, theta] = self.ellipse;
        let ex = ((a * theta.cos()).powi(2) + (b * theta.sin()).powi(2)).sqrt();
        let ey = ((a * theta.sin()).powi(2) + (b * theta.cos()).powi(2)).sqrt();
        BoundingBox::new(cx - ex, cy - ey, 2.0 * ex, 2.0 * ey)
    }

    /// Whether an image point falls inside the (untruncated) ellipse.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let [cx, cy, a, b, theta] = self.ellipse;
        let (dx, dy) = (x - cx, y - cy);
        let u = dx * theta.cos() + dy * theta.sin();
        let v = -dx * theta.sin() + dy * theta.cos();
        (u / a).powi(2) + (v / b).powi(2) <= 1.0
    }
}

pub type GroundTruth = Vec<GtKernel>;

pub fn save_ground_truth(gt: &GroundTruth, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(gt)?)?;
    Ok(())
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

// appearance constants; luma and saturation placed so the rule-based
// detectors separate the classes
const BODY_PLAIN: (u8, u8, u8) = (200, 198, 190);
const BODY_YELLOW: (u8, u8, u8) = (220, 180, 110);
const CHALK_PLAIN: (u8, u8, u8) = (95, 90, 85);
const CHALK_YELLOW: (u8, u8, u8) = (120, 95, 40);
const SPOT_COLOR: (u8, u8, u8) = (45, 22, 8);

fn jitter(rng: &mut ChaCha8Rng, c: (u8, u8, u8), amp: i16) -> (u8, u8, u8) {
    // equal shift on all channels keeps saturation stable
    let d = rng.gen_range(-amp..=amp);
    let adj = |v: u8| (v as i16 + d).clamp(0, 255) as u8;
    (adj(c.0), adj(c.1), adj(c.2))
}

struct PlannedKernel {
    gt: GtKernel,
    /// mask pixels in image coordinates
    pixels: Vec<(u32, u32)>,
    /// chalk pixel indices into `pixels`
    chalk: Vec<usize>,
    spots: Vec<(f64, f64, f64)>, // (x, y, radius)
    body: (u8, u8, u8),
    chalk_color: (u8, u8, u8),
}

/// Generates a scene and its exact ground truth; deterministic per seed.
pub fn generate_scene(spec: &SceneSpec) -> Result<(RgbImage, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let count = rng.gen_range(spec.count_min..=spec.count_max);
    let mut placed_boxes: Vec<BoundingBox> = Vec::new();
    let mut kernels: Vec<PlannedKernel> = Vec::new();

    for _ in 0..count {
        let properties = sample_property_set(spec, &mut rng);
        let mut attempts = 0;
        let planned = loop {
            attempts += 1;
            if attempts > spec.max_attempts {
                return Err(Error::PlacementFailure {
                    attempts: attempts as usize,
                    placed: kernels.len(),
                    requested: count as usize,
                });
            }
            if let Some(k) = try_place(spec, properties, &placed_boxes, &mut rng) {
                break k;
            }
        };
        placed_boxes.push(pad_box(&planned.gt.bbox(), spec.placement_gap as f64));
        kernels.push(planned);
    }

    // paint: noisy dark background, then kernel bodies, chalk, spots
    let mut img = RgbImage::new(spec.width, spec.height);
    let noise = spec.background_noise as i16;
    for y in 0..spec.height {
        for x in 0..spec.width {
            let d = rng.gen_range(-noise..=noise);
            let v = (spec.background_level as i16 + d).clamp(0, 255) as u8;
            img.put(x, y, (v, v, v));
        }
    }
    for k in &kernels {
        for (i, &(x, y)) in k.pixels.iter().enumerate() {
            let color = if k.chalk.binary_search(&i).is_ok() {
                k.chalk_color
            } else {
                k.body
            };
            img.put(x, y, color);
        }
        for &(sx, sy, r) in &k.spots {
            for &(x, y) in &k.pixels {
                if (x as f64 - sx).powi(2) + (y as f64 - sy).powi(2) <= r * r {
                    img.put(x, y, SPOT_COLOR);
                }
            }
        }
    }

    let gt = kernels.into_iter().map(|k| k.gt).collect();
    Ok((img, gt))
}

fn pad_box(b: &BoundingBox, gap: f64) -> BoundingBox {
    BoundingBox::new(b.x - gap, b.y - gap, b.w + 2.0 * gap, b.h + 2.0 * gap)
}

fn boxes_overlap(a: &BoundingBox, b: &BoundingBox) -> bool {
    a.x < b.x + b.w && b.x < a.x + a.w && a.y < b.y + b.h && b.y < a.y + a.h
}

fn sample_property_set(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> PropertySet {
    let total: f64 = spec.type_weights.values().sum();
    let mut pick = rng.gen_range(0.0..total);
    let mut base = KernelProperty::SO;
    for (&p, &w) in &spec.type_weights {
        if pick < w {
            base = p;
            break;
        }
        pick -= w;
    }
    if base != KernelProperty::SO && rng.gen_bool(spec.dual_probability) {
        let partners: Vec<KernelProperty> = KernelProperty::ALL
            .iter()
            .copied()
            .filter(|&q| q != base && !crate::model::is_mutually_exclusive(base, q))
            .collect();
        if !partners.is_empty() {
            let partner = partners[rng.gen_range(0..partners.len())];
            return PropertySet::dual(base, partner).expect("partner drawn from whitelist");
        }
    }
    PropertySet::single(base)
}

fn try_place(
    spec: &SceneSpec,
    properties: PropertySet,
    placed: &[BoundingBox],
    rng: &mut ChaCha8Rng,
) -> Option<PlannedKernel> {
    let a = rng.gen_range(spec.semi_major_min..=spec.semi_major_max);
    let b = a / rng.gen_range(spec.aspect_min..=spec.aspect_max);
    let theta = rng.gen_range(0.0..std::f64::consts::PI);
    let broken = properties.contains(KernelProperty::BR);
    // broken kernels keep the [cut, a] slab of the major axis
    let cut = if broken {
        let keep = rng.gen_range(spec.broken_fraction_min..=spec.broken_fraction_max);
        a * (1.0 - 2.0 * keep)
    } else {
        -a
    };

    let margin = a + spec.placement_gap as f64 + 1.0;
    if 2.0 * margin >= spec.width as f64 || 2.0 * margin >= spec.height as f64 {
        return None;
    }
    let cx = rng.gen_range(margin..spec.width as f64 - margin);
    let cy = rng.gen_range(margin..spec.height as f64 - margin);

    let gt_probe = GtKernel {
        ellipse: [cx, cy, a, b, theta],
        properties,
        area: 0,
        chalky_fraction: 0.0,
    };
    let bbox = pad_box(&gt_probe.bbox(), spec.placement_gap as f64);
    if placed.iter().any(|p| boxes_overlap(p, &bbox)) {
        return None;
    }

    // rasterize; remember the along-axis coordinate for chalk placement
    let raw = gt_probe.bbox();
    let (x0, y0) = (raw.x.floor().max(0.0) as u32, raw.y.floor().max(0.0) as u32);
    let x1 = ((raw.x + raw.w).ceil() as u32).min(spec.width - 1);
    let y1 = ((raw.y + raw.h).ceil() as u32).min(spec.height - 1);
    let (cos_t, sin_t) = (theta.cos(), theta.sin());
    let mut pixels = Vec::new();
    let mut along = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let u = dx * cos_t + dy * sin_t;
            let v = -dx * sin_t + dy * cos_t;
            if (u / a).powi(2) + (v / b).powi(2) <= 1.0 && u >= cut {
                pixels.push((x, y));
                along.push(u);
            }
        }
    }
    if pixels.len() < 16 {
        return None;
    }
    let area = pixels.len() as u64;

    let yellow = properties.contains(KernelProperty::YC);
    let chalky = properties.contains(KernelProperty::PC) || properties.contains(KernelProperty::MC);
    let spotted = properties.contains(KernelProperty::SP);

    let mut chalk: Vec<usize> = Vec::new();
    let mut chalky_fraction = 0.0;
    if chalky {
        let target = if properties.contains(KernelProperty::PC) {
            rng.gen_range(spec.pc_fraction_min..=spec.pc_fraction_max)
        } else {
            rng.gen_range(spec.mc_fraction_min..=spec.mc_fraction_max)
        };
        let k = ((target * pixels.len() as f64).round() as usize).min(pixels.len());
        // chalk patch = the k pixels furthest along the major axis
        let mut order: Vec<usize> = (0..pixels.len()).collect();
        order.sort_by(|&i, &j| along[j].total_cmp(&along[i]));
        chalk = order[..k].to_vec();
        chalk.sort_unstable();
        chalky_fraction = k as f64 / pixels.len() as f64;
    }

    let mut spots = Vec::new();
    if spotted {
        let n_spots = if pixels.len() < 1200 { 1 } else { rng.gen_range(1..=2) };
        for _ in 0..n_spots {
            // keep the spot, plus a body margin wide enough to survive the
            // morphological opening, strictly interior
            for _ in 0..40 {
                let r = rng.gen_range(2.0..=3.0);
                let lo = (cut + r + 4.5).max(-a * 0.7);
                let hi = a * 0.7;
                if lo >= hi {
                    break;
                }
                let su = rng.gen_range(lo..hi);
                let sv = rng.gen_range(-b * 0.5..b * 0.5);
                let sx = cx + su * cos_t - sv * sin_t;
                let sy = cy + su * sin_t + sv * cos_t;
                if spot_fits(sx, sy, r, cx, cy, cos_t, sin_t, a, b, cut) {
                    spots.push((sx, sy, r));
                    break;
                }
            }
        }
        if spots.is_empty() {
            return None; // could not seat a spot; retry placement
        }
    }

    let body = jitter(rng, if yellow { BODY_YELLOW } else { BODY_PLAIN }, 5);
    let chalk_color = jitter(rng, if yellow { CHALK_YELLOW } else { CHALK_PLAIN }, 4);

    Some(PlannedKernel {
        gt: GtKernel {
            ellipse: [cx, cy, a, b, theta],
            properties,
            area,
            chalky_fraction,
        },
        pixels,
        chalk,
        spots,
        body,
        chalk_color,
    })
}

/// True when every pixel of the spot disc, padded by a 3.5 px body margin,
/// lies inside the (possibly truncated) kernel body. The padding keeps the
/// saturation rim around the spot enclosed by body pixels even after the
/// pipeline's opening step erodes it.
#[allow(clippy::too_many_arguments)]
fn spot_fits(
    sx: f64,
    sy: f64,
    r: f64,
    cx: f64,
    cy: f64,
    cos_t: f64,
    sin_t: f64,
    a: f64,
    b: f64,
    cut: f64,
) -> bool {
    let pad = r + 3.5;
    let (px0, px1) = ((sx - pad).floor() as i64, (sx + pad).ceil() as i64);
    let (py0, py1) = ((sy - pad).floor() as i64, (sy + pad).ceil() as i64);
    for y in py0..=py1 {
        for x in px0..=px1 {
            let (fx, fy) = (x as f64, y as f64);
            if (fx - sx).powi(2) + (fy - sy).powi(2) > pad * pad {
                continue;
            }
            let (dx, dy) = (fx - cx, fy - cy);
            let u = dx * cos_t + dy * sin_t;
            let v = -dx * sin_t + dy * cos_t;
            if (u / a).powi(2) + (v / b).powi(2) > 0.92 || u < cut + 1.0 {
                return false;
            }
        }
    }
    true
}

/// The report a perfect detector would produce: Eq-style ratios over the
/// true areas and property sets.
pub fn ground_truth_report(gt: &GroundTruth, d: &DensityTable) -> Result<AnalysisReport> {
    let items: Vec<ReportItem> = gt
        .iter()
        .map(|k| ReportItem {
            bbox: k.bbox(),
            properties: k.properties,
            area: k.area,
            confidence: 1.0,
        })
        .collect();
    report_from_items(&items, d, vec![])
}
