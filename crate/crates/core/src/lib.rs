//! Rice kernel quality inspection: defect classification of scene images
//! into six single types and six allowed dual combinations, plus weight
//! ratio estimation from projected area via calibrated weight-per-pixel
//! densities.
//!
//! Pipeline stages:
//!
//! 1. **imaging** – inverted-gray conversion, HSV channels, VS image,
//!    morphology and contour extraction.
//! 2. **detect** – detection exchange format ingestion and the built-in
//!    rule-based color/chalk detectors.
//! 3. **fusion** – merging both branches onto contours with the
//!    dual-property whitelist.
//! 4. **weigh** – density calibration and weight-ratio computation.
//! 5. **synthgen/eval/reporting** – synthetic benchmark scenes, metrics
//!    and report/overlay output.

pub mod config;
pub mod detect;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod imaging;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod synth;
pub mod weigh;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use model::{
    AnalysisReport, BoundingBox, Branch, Contour, DensityTable, Detection, KernelInstance,
    KernelProperty, PropertySet, RawLabel,
};
