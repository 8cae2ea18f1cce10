//! Shared domain types: kernel properties, the dual-property whitelist,
//! detections, contours and the analysis report.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// The six single kernel properties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum KernelProperty {
    /// Partial-chalky: opaque patch covering at most half the body.
    PC,
    /// Mass-chalky: opaque patch covering more than half the body.
    MC,
    /// Yellow-colored body.
    YC,
    /// Spotted: disease spot on the surface.
    SP,
    /// Broken: shorter than 2/3 of the mean whole-kernel length.
    BR,
    /// Sound: none of the defects above.
    SO,
}

impl KernelProperty {
    pub const ALL: [KernelProperty; 6] = [
        KernelProperty::PC,
        KernelProperty::MC,
        KernelProperty::YC,
        KernelProperty::SP,
        KernelProperty::BR,
        KernelProperty::SO,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelProperty::PC => "PC",
            KernelProperty::MC => "MC",
            KernelProperty::YC => "YC",
            KernelProperty::SP => "SP",
            KernelProperty::BR => "BR",
            KernelProperty::SO => "SO",
        }
    }

    pub fn parse(s: &str) -> Option<KernelProperty> {
        match s {
            "PC" => Some(KernelProperty::PC),
            "MC" => Some(KernelProperty::MC),
            "YC" => Some(KernelProperty::YC),
            "SP" => Some(KernelProperty::SP),
            "BR" => Some(KernelProperty::BR),
            "SO" => Some(KernelProperty::SO),
            _ => None,
        }
    }
}

impl fmt::Display for KernelProperty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The six dual combinations that are allowed; every other pair is rejected.
///
/// Stored canonically as (PC|MC|BR, YC|SP).
pub const ALLOWED_PAIRS: [(KernelProperty, KernelProperty); 6] = [
    (KernelProperty::PC, KernelProperty::YC),
    (KernelProperty::MC, KernelProperty::YC),
    (KernelProperty::BR, KernelProperty::YC),
    (KernelProperty::PC, KernelProperty::SP),
    (KernelProperty::MC, KernelProperty::SP),
    (KernelProperty::BR, KernelProperty::SP),
];

/// True iff `{a, b}` is not one of the six allowed dual combinations.
pub fn is_mutually_exclusive(a: KernelProperty, b: KernelProperty) -> bool {
    debug_assert_ne!(a, b);
    !ALLOWED_PAIRS
        .iter()
        .any(|&(p, q)| (p == a && q == b) || (p == b && q == a))
}

/// A kernel's classification: one single property, or one allowed dual pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PropertySet {
    first: KernelProperty,
    second: Option<KernelProperty>,
}

impl PropertySet {
    /// A singleton set; always valid.
    pub fn single(p: KernelProperty) -> PropertySet {
        PropertySet {
            first: p,
            second: None,
        }
    }

    /// A dual set; rejects pairs outside the whitelist.
    pub fn dual(a: KernelProperty, b: KernelProperty) -> Result<PropertySet> {
        if a == b {
            return Err(Error::BadPropertyCount(1));
        }
        if is_mutually_exclusive(a, b) {
            return Err(Error::RejectedCombination(a, b));
        }
        // canonical order: the PC/MC/BR side first
        let (first, second) = if matches!(a, KernelProperty::YC | KernelProperty::SP) {
            (b, a)
        } else {
            (a, b)
        };
        Ok(PropertySet {
            first,
            second: Some(second),
        })
    }

    /// Builds a set from 1 or 2 distinct properties.
    pub fn from_slice(props: &[KernelProperty]) -> Result<PropertySet> {
        match props {
            [p] => Ok(PropertySet::single(*p)),
            [a, b] => PropertySet::dual(*a, *b),
            _ => Err(Error::BadPropertyCount(props.len())),
        }
    }

    pub fn is_dual(&self) -> bool {
        self.second.is_some()
    }

    pub fn contains(&self, p: KernelProperty) -> bool {
        self.first == p || self.second == Some(p)
    }

    /// Members in canonical order (chalk/BR side first for duals).
    pub fn members(&self) -> impl Iterator<Item = KernelProperty> + '_ {
        std::iter::once(self.first).chain(self.second)
    }

    /// Display label, e.g. "SO" or "PC&YC".
    pub fn label(&self) -> String {
        match self.second {
            None => self.first.to_string(),
            Some(s) => format!("{}&{}", self.first, s),
        }
    }
}

impl Serialize for PropertySet {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<KernelProperty> = self.members().collect();
        v.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for PropertySet {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<KernelProperty>::deserialize(de)?;
        PropertySet::from_slice(&v).map_err(serde::de::Error::custom)
    }
}

/// Axis-aligned box in pixel coordinates, top-left corner plus extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn diagonal(&self) -> f64 {
        (self.w * self.w + self.h * self.h).sqrt()
    }

    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        px >= self.x && px < self.x + self.w && py >= self.y && py < self.y + self.h
    }

    pub fn within_image(&self, width: u32, height: u32) -> bool {
        self.w > 0.0
            && self.h > 0.0
            && self.x >= 0.0
            && self.y >= 0.0
            && self.x + self.w <= width as f64
            && self.y + self.h <= height as f64
    }

    /// Lexicographic key for deterministic tie-breaking.
    pub fn sort_key(&self) -> [ordered::F64; 4] {
        [
            ordered::F64(self.x),
            ordered::F64(self.y),
            ordered::F64(self.w),
            ordered::F64(self.h),
        ]
    }
}

impl From<[f64; 4]> for BoundingBox {
    fn from(a: [f64; 4]) -> Self {
        BoundingBox::new(a[0], a[1], a[2], a[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

pub(crate) mod ordered {
    /// Total-order wrapper for finite f64 sort keys.
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct F64(pub f64);
    impl Eq for F64 {}
    impl PartialOrd for F64 {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for F64 {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0)
        }
    }
}

/// Which detector branch a detection came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Branch {
    Color,
    Gray,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Color => "COLOR",
            Branch::Gray => "GRAY",
        })
    }
}

/// Raw label emitted by a detector backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RawLabel {
    PC,
    MC,
    YC,
    SP,
    BR,
    SO,
    #[serde(rename = "CHALKY")]
    Chalky,
    #[serde(rename = "OTHER")]
    Other,
}

impl RawLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RawLabel::PC => "PC",
            RawLabel::MC => "MC",
            RawLabel::YC => "YC",
            RawLabel::SP => "SP",
            RawLabel::BR => "BR",
            RawLabel::SO => "SO",
            RawLabel::Chalky => "CHALKY",
            RawLabel::Other => "OTHER",
        }
    }

    /// The property this label maps to, if it maps directly to one.
    pub fn property(self) -> Option<KernelProperty> {
        match self {
            RawLabel::PC => Some(KernelProperty::PC),
            RawLabel::MC => Some(KernelProperty::MC),
            RawLabel::YC => Some(KernelProperty::YC),
            RawLabel::SP => Some(KernelProperty::SP),
            RawLabel::BR => Some(KernelProperty::BR),
            RawLabel::SO => Some(KernelProperty::SO),
            RawLabel::Chalky | RawLabel::Other => None,
        }
    }

    pub fn valid_for(self, branch: Branch) -> bool {
        match branch {
            Branch::Color => matches!(
                self,
                RawLabel::YC | RawLabel::SP | RawLabel::BR | RawLabel::SO | RawLabel::Other
            ),
            Branch::Gray => matches!(self, RawLabel::Chalky | RawLabel::PC | RawLabel::MC),
        }
    }
}

impl fmt::Display for RawLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One detector output: a box, a non-empty label set and a confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub labels: Vec<RawLabel>,
    pub confidence: f64,
    pub branch: Branch,
}

impl Detection {
    pub fn new(bbox: BoundingBox, labels: Vec<RawLabel>, confidence: f64, branch: Branch) -> Detection {
        Detection {
            bbox,
            labels,
            confidence,
            branch,
        }
    }
}

/// A closed kernel outline with its filled-mask geometry cached.
///
/// The mask is stored as horizontal runs so chalk measurement and area
/// queries can iterate interior pixels without re-rasterizing.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    /// Outer boundary, closed 8-connected pixel polyline.
    pub boundary: Vec<(u32, u32)>,
    /// Filled-mask rows: (y, x_start, x_end) inclusive.
    pub runs: Vec<(u32, u32, u32)>,
    /// Interior + boundary pixel count.
    pub area: u64,
    /// Mask centroid in pixel coordinates.
    pub centroid: (f64, f64),
    /// Major-axis length of the moment-fit ellipse, pixels.
    pub major_axis: f64,
    /// Tight bounding box of the mask.
    pub bbox: BoundingBox,
}

impl Contour {
    /// Iterates every pixel of the filled mask.
    pub fn mask_pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.runs
            .iter()
            .flat_map(|&(y, x0, x1)| (x0..=x1).map(move |x| (x, y)))
    }

    pub fn contains_point(&self, x: u32, y: u32) -> bool {
        self.runs
            .iter()
            .any(|&(ry, x0, x1)| ry == y && x >= x0 && x <= x1)
    }
}

/// A fused, located kernel.
#[derive(Debug, Clone)]
pub struct KernelInstance {
    pub contour: Contour,
    pub properties: PropertySet,
    pub source_detections: Vec<Detection>,
    pub confidence: f64,
}

impl KernelInstance {
    pub fn area(&self) -> u64 {
        self.contour.area
    }
}

/// Per-type weight-per-pixel densities in grams/pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    #[serde(rename = "scaleTag")]
    pub scale_tag: String,
    pub densities: BTreeMap<KernelProperty, f64>,
    /// Calibration sample counts per type, when known.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub counts: BTreeMap<KernelProperty, u64>,
}

impl DensityTable {
    pub fn new(scale_tag: &str, densities: BTreeMap<KernelProperty, f64>) -> Result<DensityTable> {
        let table = DensityTable {
            scale_tag: scale_tag.to_string(),
            densities,
            counts: BTreeMap::new(),
        };
        table.validate()?;
        Ok(table)
    }

    /// A table with the same density for every type.
    pub fn uniform(scale_tag: &str, rho: f64) -> DensityTable {
        DensityTable {
            scale_tag: scale_tag.to_string(),
            densities: KernelProperty::ALL.iter().map(|&p| (p, rho)).collect(),
            counts: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in KernelProperty::ALL {
            match self.densities.get(&p) {
                None => return Err(Error::MissingType(p)),
                Some(&rho) if rho <= 0.0 || !rho.is_finite() => {
                    return Err(Error::NonpositiveInput(p))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn rho(&self, p: KernelProperty) -> f64 {
        self.densities[&p]
    }
}

/// A detection the fusion stage could not attach to a final kernel class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnresolvedDetection {
    pub detection: Detection,
    pub reason: String,
}

/// One classified kernel in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRecord {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub properties: PropertySet,
    pub area: u64,
    /// Contribution to the grand total (mean of the two sides for duals).
    pub weight: f64,
    /// Type-priced weight per member property.
    #[serde(rename = "sideWeights")]
    pub side_weights: Vec<(KernelProperty, f64)>,
    pub confidence: f64,
}

/// Final per-image analysis: per-kernel records, per-type totals and ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub kernels: Vec<KernelRecord>,
    /// Eq.-style per-type numerators: full type-priced dual terms included.
    #[serde(rename = "perTypeWeight")]
    pub per_type_weight: BTreeMap<KernelProperty, f64>,
    /// Grand total with the half-weight rule applied to duals.
    #[serde(rename = "totalWeight")]
    pub total_weight: f64,
    pub ratios: BTreeMap<KernelProperty, f64>,
    pub unresolved: Vec<UnresolvedDetection>,
}
