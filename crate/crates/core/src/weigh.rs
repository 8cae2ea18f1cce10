//! Density calibration and weight-ratio estimation from projected area,
//! including the half-weight rule for dual-property kernels.

use crate::error::{Error, Result};
use crate::model::{
    AnalysisReport, DensityTable, KernelInstance, KernelProperty, KernelRecord,
    UnresolvedDetection,
};
use std::collections::BTreeMap;
use std::path::Path;

/// One manually weighed single-property sample group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample {
    pub kernel_type: KernelProperty,
    /// Measured total weight in grams.
    pub weight: f64,
    /// Summed projected area in pixels.
    pub area: f64,
    pub kernel_count: u64,
}

/// Computes per-type densities rho = W / A from one sample per type.
pub fn calibrate(samples: &[CalibrationSample], scale_tag: &str) -> Result<DensityTable> {
    let mut densities = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for s in samples {
        if s.weight <= 0.0 || s.area <= 0.0 || s.kernel_count == 0 {
            return Err(Error::NonpositiveInput(s.kernel_type));
        }
        if densities.insert(s.kernel_type, s.weight / s.area).is_some() {
            return Err(Error::Config(format!(
                "duplicate calibration sample for {}",
                s.kernel_type
            )));
        }
        counts.insert(s.kernel_type, s.kernel_count);
    }
    let mut table = DensityTable::new(scale_tag, densities)?;
    table.counts = counts;
    Ok(table)
}

pub fn load_density_table(path: &Path) -> Result<DensityTable> {
    let text = std::fs::read_to_string(path)?;
    let table: DensityTable = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    table.validate()?;
    Ok(table)
}

pub fn save_density_table(table: &DensityTable, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(table)?)?;
    Ok(())
}

/// Type-priced side weights and total contribution of one kernel.
///
/// A single-property kernel contributes rho_t * area; a dual kernel records
/// both type-priced weights and contributes their mean to the grand total.
pub fn kernel_weight(k: &KernelInstance, d: &DensityTable) -> Result<KernelRecord> {
    if k.area() == 0 {
        return Err(Error::NonpositiveArea);
    }
    let area = k.area() as f64;
    let side_weights: Vec<(KernelProperty, f64)> = k
        .properties
        .members()
        .map(|p| (p, d.rho(p) * area))
        .collect();
    let weight =
        side_weights.iter().map(|(_, w)| w).sum::<f64>() / side_weights.len() as f64;
    Ok(KernelRecord {
        bbox: k.contour.bbox,
        properties: k.properties,
        area: k.area(),
        weight,
        side_weights,
        confidence: k.confidence,
    })
}

/// A located, classified kernel reduced to what Eq-style accounting needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportItem {
    pub bbox: crate::model::BoundingBox,
    pub properties: crate::model::PropertySet,
    pub area: u64,
    pub confidence: f64,
}

/// Builds the report: per-type numerators carry full type-priced dual
/// terms, the denominator uses the half-weight rule.
pub fn report_from_items(
    items: &[ReportItem],
    d: &DensityTable,
    unresolved: Vec<UnresolvedDetection>,
) -> Result<AnalysisReport> {
    if items.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut records = Vec::with_capacity(items.len());
    let mut per_type: BTreeMap<KernelProperty, f64> =
        KernelProperty::ALL.iter().map(|&p| (p, 0.0)).collect();
    let mut total = 0.0;
    for item in items {
        if item.area == 0 {
            return Err(Error::NonpositiveArea);
        }
        let area = item.area as f64;
        let side_weights: Vec<(KernelProperty, f64)> = item
            .properties
            .members()
            .map(|p| (p, d.rho(p) * area))
            .collect();
        let weight =
            side_weights.iter().map(|(_, w)| w).sum::<f64>() / side_weights.len() as f64;
        total += weight;
        for &(p, w) in &side_weights {
            *per_type.get_mut(&p).unwrap() += w;
        }
        records.push(KernelRecord {
            bbox: item.bbox,
            properties: item.properties,
            area: item.area,
            weight,
            side_weights,
            confidence: item.confidence,
        });
    }
    let ratios: BTreeMap<KernelProperty, f64> = per_type
        .iter()
        .map(|(&p, &w)| (p, if total > 0.0 { w / total } else { 0.0 }))
        .collect();
    Ok(AnalysisReport {
        kernels: records,
        per_type_weight: per_type,
        total_weight: total,
        ratios,
        unresolved,
    })
}

/// Weight ratios over fused kernel instances.
pub fn weight_ratios(
    kernels: &[KernelInstance],
    d: &DensityTable,
    unresolved: Vec<UnresolvedDetection>,
) -> Result<AnalysisReport> {
    let items: Vec<ReportItem> = kernels
        .iter()
        .map(|k| ReportItem {
            bbox: k.contour.bbox,
            properties: k.properties,
            area: k.area(),
            confidence: k.confidence,
        })
        .collect();
    report_from_items(&items, d, unresolved)
}

/// Weight of a classified group from its summed area: area * rho_type.
pub fn estimate_group_weight(total_area: f64, kernel_type: KernelProperty, d: &DensityTable) -> f64 {
    total_area * d.rho(kernel_type)
}

/// One weighed and measured group for the density-mode comparison.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WeighedGroup {
    #[serde(rename = "type")]
    pub kernel_type: KernelProperty,
    #[serde(rename = "accurateWeight")]
    pub accurate_weight: f64,
    pub area: f64,
}

/// Per-group relative errors of the two density modes against the
/// accurate weight percentage.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DensityModeRow {
    #[serde(rename = "type")]
    pub kernel_type: KernelProperty,
    /// Accurate weight relative to the sound reference.
    pub accurate_pct: f64,
    /// Area relative to the sound reference (single-density mode).
    pub area_pct: f64,
    /// Per-type density estimate relative to the sound reference.
    pub estimated_pct: f64,
    pub single_density_error: f64,
    pub various_density_error: f64,
}

/// Compares single-density (area ratio) and per-type-density estimation
/// against accurate weights, each defective group measured relative to the
/// pooled sound-kernel groups.
pub fn compare_density_modes(
    groups: &[WeighedGroup],
    d: &DensityTable,
) -> Result<Vec<DensityModeRow>> {
    let (mut so_weight, mut so_area) = (0.0, 0.0);
    for g in groups {
        if g.kernel_type == KernelProperty::SO {
            so_weight += g.accurate_weight;
            so_area += g.area;
        }
    }
    if so_weight <= 0.0 || so_area <= 0.0 {
        return Err(Error::MissingType(KernelProperty::SO));
    }
    let so_est = estimate_group_weight(so_area, KernelProperty::SO, d);
    let mut rows = Vec::new();
    for g in groups {
        if g.kernel_type == KernelProperty::SO {
            continue;
        }
        let accurate_pct = g.accurate_weight / so_weight;
        let area_pct = g.area / so_area;
        let estimated_pct = estimate_group_weight(g.area, g.kernel_type, d) / so_est;
        rows.push(DensityModeRow {
            kernel_type: g.kernel_type,
            accurate_pct,
            area_pct,
            estimated_pct,
            single_density_error: (area_pct - accurate_pct).abs() / accurate_pct,
            various_density_error: (estimated_pct - accurate_pct).abs() / accurate_pct,
        });
    }
    Ok(rows)
}

/// Printed inputs of the paper-style calibration table, used by tests and
/// the CLI's area-override mode.
pub const REFERENCE_CALIBRATION: [(KernelProperty, u64, f64, f64, f64); 6] = [
    (KernelProperty::SO, 1227, 21.94, 4.11e6, 5.32e-6),
    (KernelProperty::PC, 952, 17.48, 3.22e6, 5.42e-6),
    (KernelProperty::MC, 1088, 15.85, 2.98e6, 5.31e-6),
    (KernelProperty::YC, 810, 9.26, 1.84e6, 5.03e-6),
    (KernelProperty::SP, 1014, 10.39, 2.1e6, 4.93e-6),
    (KernelProperty::BR, 1425, 12.67, 2.42e6, 5.23e-6),
];

/// The calibration table built from [`REFERENCE_CALIBRATION`].
pub fn reference_density_table() -> DensityTable {
    let samples: Vec<CalibrationSample> = REFERENCE_CALIBRATION
        .iter()
        .map(|&(t, n, w, a, _)| CalibrationSample {
            kernel_type: t,
            weight: w,
            area: a,
            kernel_count: n,
        })
        .collect();
    calibrate(&samples, "reference").expect("reference inputs are valid")
}
