//! ECG wave delineation.
//!
//! Single-lead signals at 500 Hz go through a 1D U-Net with full-scale skip
//! connections that labels every sample as none, P, QRS or T. Runs of labels
//! are cleaned up and turned into onset/offset boundaries, optionally with
//! P waves suppressed when a classifier branch detects atrial fibrillation
//! or flutter. Boundaries are scored against references with the usual
//! 150 ms tolerance metrics.

pub mod augment;
pub mod csvio;
pub mod labels;
pub mod mask;
pub mod model;
pub mod pipeline;
pub mod plot;
pub mod postprocess;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod record;
pub mod resample;
pub mod synth;
pub mod train;
pub mod wfdb;

pub use error::{EcgError, Result};
pub use record::{AnnotationSet, BoundaryAnnotation, BoundaryKind, BoundaryType, EcgRecord, Lead, Wave, GLOBAL_LEAD};
