//! Classification and weight-ratio metrics against synthetic ground truth.

use crate::error::{Error, Result};
use crate::model::{AnalysisReport, KernelProperty};
use crate::synth::{ground_truth_report, GroundTruth};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TypeMetrics {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    /// Mean absolute weight-ratio error across files, in ratio units.
    pub ratio_mean_error: f64,
    pub ratio_max_error: f64,
}

impl TypeMetrics {
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    pub per_type: BTreeMap<KernelProperty, TypeMetrics>,
    pub files: usize,
}

/// Scores reports against their ground truths.
///
/// A predicted kernel matches the ground-truth kernel whose ellipse
/// contains its box center (nearest center on ties); dual-property kernels
/// count into each of their single types. Ratio errors compare the
/// report's ratios with the perfect-detection ratios under the same
/// densities.
pub fn evaluate(
    pairs: &[(AnalysisReport, GroundTruth, crate::model::DensityTable)],
) -> Result<EvaluationResult> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut per_type: BTreeMap<KernelProperty, TypeMetrics> = KernelProperty::ALL
        .iter()
        .map(|&p| (p, TypeMetrics::default()))
        .collect();
    let mut ratio_errors: BTreeMap<KernelProperty, Vec<f64>> =
        KernelProperty::ALL.iter().map(|&p| (p, Vec::new())).collect();

    for (report, gt, densities) in pairs {
        // greedy center-in-ellipse matching, one gt per prediction
        let mut gt_used = vec![false; gt.len()];
        let mut matches: Vec<Option<usize>> = Vec::with_capacity(report.kernels.len());
        for k in &report.kernels {
            let (cx, cy) = k.bbox.center();
            let mut best: Option<(usize, f64)> = None;
            for (gi, g) in gt.iter().enumerate() {
                if gt_used[gi] || !g.contains(cx, cy) {
                    continue;
                }
                let d = (g.ellipse[0] - cx).powi(2) + (g.ellipse[1] - cy).powi(2);
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((gi, d));
                }
            }
            if let Some((gi, _)) = best {
                gt_used[gi] = true;
                matches.push(Some(gi));
            } else {
                matches.push(None);
            }
        }

        for t in KernelProperty::ALL {
            let m = per_type.get_mut(&t).unwrap();
            for (k, matched) in report.kernels.iter().zip(&matches) {
                let pred_has = k.properties.contains(t);
                match matched {
                    Some(gi) => {
                        let gt_has = gt[*gi].properties.contains(t);
                        if pred_has && gt_has {
                            m.tp += 1;
                        } else if pred_has {
                            m.fp += 1;
                        }
                    }
                    None => {
                        if pred_has {
                            m.fp += 1;
                        }
                    }
                }
            }
            for (gi, g) in gt.iter().enumerate() {
                if !g.properties.contains(t) {
                    continue;
                }
                let found = matches.iter().enumerate().any(|(pi, m)| {
                    *m == Some(gi) && report.kernels[pi].properties.contains(t)
                });
                if !found {
                    m.fn_ += 1;
                }
            }
        }

        let truth = ground_truth_report(gt, densities)?;
        for t in KernelProperty::ALL {
            let pred = report.ratios.get(&t).copied().unwrap_or(0.0);
            let err = (pred - truth.ratios[&t]).abs();
            ratio_errors.get_mut(&t).unwrap().push(err);
        }
    }

    for (t, errs) in ratio_errors {
        let m = per_type.get_mut(&t).unwrap();
        m.ratio_mean_error = errs.iter().sum::<f64>() / errs.len() as f64;
        m.ratio_max_error = errs.iter().copied().fold(0.0, f64::max);
    }
    Ok(EvaluationResult {
        per_type,
        files: pairs.len(),
    })
}

impl EvaluationResult {
    pub fn to_table(&self) -> String {
        let mut s = String::from(
            "type  precision   recall       F1  meanRatioErr%  maxRatioErr%\n",
        );
        for (t, m) in &self.per_type {
            s.push_str(&format!(
                "{:<4}  {:>8.2}%  {:>6.2}%  {:>6.2}%  {:>12.4}  {:>12.4}\n",
                t.to_string(),
                m.precision() * 100.0,
                m.recall() * 100.0,
                m.f1() * 100.0,
                m.ratio_mean_error * 100.0,
                m.ratio_max_error * 100.0,
            ));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("type,tp,fp,fn,precision,recall,f1,mean_ratio_error,max_ratio_error\n");
        for (t, m) in &self.per_type {
            s.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                t, m.tp, m.fp, m.fn_,
                m.precision(), m.recall(), m.f1(),
                m.ratio_mean_error, m.ratio_max_error,
            ));
        }
        s
    }
}
