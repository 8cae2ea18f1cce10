//! Report serialization and the annotated-overlay renderer.

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::imaging::RgbImage;
use crate::model::{AnalysisReport, DensityTable, KernelProperty, PropertySet};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

/// On-disk analysis report: the analysis plus enough context (config echo,
/// densities) to re-derive every number in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReportFile {
    pub schema_version: u32,
    pub image: String,
    pub config: PipelineConfig,
    pub densities: DensityTable,
    #[serde(flatten)]
    pub analysis: AnalysisReport,
}

impl ReportFile {
    pub fn new(
        analysis: AnalysisReport,
        image: &str,
        config: &PipelineConfig,
        densities: &DensityTable,
    ) -> ReportFile {
        ReportFile {
            schema_version: SCHEMA_VERSION,
            image: image.to_string(),
            config: config.clone(),
            densities: densities.clone(),
            analysis,
        }
    }

    /// Checks that the stored totals and ratios equal what the per-kernel
    /// records imply.
    pub fn verify_consistency(&self) -> Result<()> {
        let mut total = 0.0;
        for k in &self.analysis.kernels {
            total += k.weight;
        }
        if (total - self.analysis.total_weight).abs() > 1e-9 * total.max(1.0) {
            return Err(Error::Parse("totalWeight does not match records".into()));
        }
        for (&t, &r) in &self.analysis.ratios {
            let num: f64 = self
                .analysis
                .kernels
                .iter()
                .flat_map(|k| k.side_weights.iter())
                .filter(|(p, _)| *p == t)
                .map(|(_, w)| w)
                .sum();
            let expect = if total > 0.0 { num / total } else { 0.0 };
            if (r - expect).abs() > 1e-9 {
                return Err(Error::Parse(format!("ratio for {t} does not match records")));
            }
        }
        Ok(())
    }
}

pub fn write_report(report: &ReportFile, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<ReportFile> {
    let text = std::fs::read_to_string(path)?;
    let report: ReportFile = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(report)
}

fn type_color(p: KernelProperty) -> (u8, u8, u8) {
    match p {
        KernelProperty::SO => (0, 200, 0),
        KernelProperty::BR => (220, 40, 40),
        KernelProperty::PC | KernelProperty::MC => (255, 140, 0),
        KernelProperty::YC => (230, 200, 30),
        KernelProperty::SP => (160, 60, 200),
    }
}

fn set_color(ps: &PropertySet) -> (u8, u8, u8) {
    type_color(ps.members().next().expect("non-empty set"))
}

/// Renders boxes, labels and the ratio block onto a copy of the image.
/// Pixels outside those annotations are untouched; an empty report returns
/// the input unchanged.
pub fn render_overlay(img: &RgbImage, report: &AnalysisReport) -> RgbImage {
    let mut out = img.clone();
    if report.kernels.is_empty() && report.unresolved.is_empty() {
        return out;
    }
    for k in &report.kernels {
        let color = set_color(&k.properties);
        draw_rect(&mut out, &k.bbox, color);
        let label = k.properties.label();
        let lx = k.bbox.x.max(0.0) as i64;
        let ly = k.bbox.y as i64 - (GLYPH_H as i64 + 4);
        draw_text_block(&mut out, lx, ly.max(0), &label, color);
    }
    // ratio table, upper right
    let lines: Vec<String> = KernelProperty::ALL
        .iter()
        .map(|t| format!("{}: {:>6.2}%", t, report.ratios.get(t).copied().unwrap_or(0.0) * 100.0))
        .collect();
    let width_px = lines
        .iter()
        .map(|l| l.chars().count() * (GLYPH_W + 1) + 4)
        .max()
        .unwrap_or(0) as i64;
    let x0 = out.width as i64 - width_px - 4;
    let mut y = 4i64;
    for line in &lines {
        draw_text_block(&mut out, x0, y, line, (255, 255, 255));
        y += GLYPH_H as i64 + 3;
    }
    out
}

fn draw_rect(img: &mut RgbImage, b: &crate::model::BoundingBox, color: (u8, u8, u8)) {
    let x0 = b.x.floor() as i64;
    let y0 = b.y.floor() as i64;
    let x1 = (b.x + b.w).ceil() as i64 - 1;
    let y1 = (b.y + b.h).ceil() as i64 - 1;
    let mut put = |x: i64, y: i64| {
        if x >= 0 && y >= 0 && (x as u32) < img.width && (y as u32) < img.height {
            img.put(x as u32, y as u32, color);
        }
    };
    for x in x0..=x1 {
        put(x, y0);
        put(x, y0 + 1);
        put(x, y1);
        put(x, y1 - 1);
    }
    for y in y0..=y1 {
        put(x0, y);
        put(x0 + 1, y);
        put(x1, y);
        put(x1 - 1, y);
    }
}

const GLYPH_W: usize = 5;
const GLYPH_H: usize = 7;

/// 5x7 glyphs for the characters the overlay needs.
fn glyph(c: char) -> [u8; GLYPH_H] {
    match c {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1E, 0x01, 0x01, 0x0E, 0x01, 0x01, 0x1E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'Y' => [0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04],
        '&' => [0x0C, 0x12, 0x14, 0x08, 0x15, 0x12, 0x0D],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x04],
        '%' => [0x19, 0x1A, 0x02, 0x04, 0x08, 0x0B, 0x13],
        ':' => [0x00, 0x04, 0x00, 0x00, 0x04, 0x00, 0x00],
        ' ' => [0; GLYPH_H],
        _ => [0x1F, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1F], // unknown: box
    }
}

/// Text on a dark filled background, clipped to the image.
fn draw_text_block(img: &mut RgbImage, x0: i64, y0: i64, text: &str, color: (u8, u8, u8)) {
    let w = (text.chars().count() * (GLYPH_W + 1) + 3) as i64;
    let h = GLYPH_H as i64 + 4;
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            if x >= 0 && y >= 0 && (x as u32) < img.width && (y as u32) < img.height {
                img.put(x as u32, y as u32, (20, 20, 20));
            }
        }
    }
    let mut cx = x0 + 2;
    let cy = y0 + 2;
    for c in text.chars() {
        let g = glyph(c);
        for (row, bits) in g.iter().enumerate() {
            for col in 0..GLYPH_W {
                if bits & (1 << (GLYPH_W - 1 - col)) != 0 {
                    let (px, py) = (cx + col as i64, cy + row as i64);
                    if px >= 0 && py >= 0 && (px as u32) < img.width && (py as u32) < img.height {
                        img.put(px as u32, py as u32, color);
                    }
                }
            }
        }
        cx += (GLYPH_W + 1) as i64;
    }
}
