//! End-to-end delineation of records of any length.
//!
//! Signals are resampled to 500 Hz and cut into 10 s windows that overlap by
//! 1 s, the last one aligned to the end of the record. Each window is
//! segmented (and guided by its own rhythm prediction when requested), then
//! every sample takes its class probabilities from the window whose centre is
//! closest. Post-processing runs once on the stitched mask and boundaries are
//! mapped back to the record's sampling rate. A record no longer than one
//! window is a single direct pass.

use log::debug;

use crate::error::{EcgError, Result};
use crate::labels::N_CLASSES;
use crate::mask::{ClassifierOutput, SegmentationMask};
use crate::model::{EcgModel, LENGTH_MULTIPLE, MODEL_FS};
use crate::postprocess::{apply_guidance, delineate_mask};
use crate::record::{AnnotationSet, EcgRecord};
use crate::resample::{resample_annotations, resample_samples};

pub const WINDOW_SECONDS: f64 = 10.0;
pub const OVERLAP_SECONDS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelineateOptions {
    /// Suppress P waves in windows the classifier calls afib/flutter.
    pub guidance: bool,
    pub window_s: f64,
    pub overlap_s: f64,
}

impl Default for DelineateOptions {
    fn default() -> Self {
        Self {
            guidance: false,
            window_s: WINDOW_SECONDS,
            overlap_s: OVERLAP_SECONDS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowInfo {
    /// First sample at 500 Hz.
    pub start: usize,
    pub len: usize,
    pub classifier: Option<ClassifierOutput>,
    /// P output was suppressed in this window.
    pub guided: bool,
}

/// Window start positions covering `len` samples, in increasing order.
pub fn window_starts(len: usize, window: usize, hop: usize) -> Vec<usize> {
    if len <= window {
        return vec![0];
    }
    let mut starts: Vec<usize> = (0..).map(|k| k * hop).take_while(|&s| s + window <= len).collect();
    if starts.last().copied() != Some(len - window) {
        starts.push(len - window);
    }
    starts
}

fn window_params(opts: &DelineateOptions) -> Result<(usize, usize)> {
    let window = (opts.window_s * MODEL_FS).round() as usize;
    let overlap = (opts.overlap_s * MODEL_FS).round() as usize;
    if window < LENGTH_MULTIPLE || overlap >= window {
        return Err(EcgError::Config(format!(
            "window of {} s with {} s overlap is not usable",
            opts.window_s, opts.overlap_s
        )));
    }
    Ok((window, window - overlap))
}

/// Stitched class probabilities of a 500 Hz signal.
pub fn infer_mask(model: &EcgModel, signal: &[f32], opts: &DelineateOptions) -> Result<(SegmentationMask, Vec<WindowInfo>)> {
    if signal.len() < LENGTH_MULTIPLE {
        return Err(EcgError::InputTooShort { len: signal.len(), min: LENGTH_MULTIPLE });
    }
    if opts.guidance && !model.has_classifier() {
        return Err(EcgError::Config("guidance needs a model with a classifier branch".into()));
    }
    let (window, hop) = window_params(opts)?;
    let len = signal.len();
    let starts = window_starts(len, window, hop);
    let mut probs = vec![0.0f32; N_CLASSES * len];
    let mut infos = Vec::with_capacity(starts.len());
    for (w, &start) in starts.iter().enumerate() {
        let wlen = window.min(len - start);
        let (mut masks, cls) = model.infer_batch(&[&signal[start..start + wlen]])?;
        let mut mask = masks.remove(0);
        let classifier = cls.map(|mut c| c.remove(0));
        let guided = opts.guidance && classifier.is_some_and(|c| c.is_afib());
        if guided {
            mask = apply_guidance(&mask, classifier.as_ref().expect("classifier present"));
        }
        // samples owned by this window: closer to its centre than to a neighbour's
        let centre2 = |i: usize| 2 * starts[i] + wlen;
        let lo = if w == 0 { 0 } else { ((centre2(w - 1) + centre2(w)) / 4 + 1).max(start) };
        let hi = if w + 1 == starts.len() { len } else { ((centre2(w) + centre2(w + 1)) / 4 + 1).min(start + wlen) };
        for c in 0..N_CLASSES {
            let src = &mask.channel(c)[lo - start..hi - start];
            probs[c * len + lo..c * len + hi].copy_from_slice(src);
        }
        debug!("window {w} at {start}: owns [{lo}, {hi}), guided={guided}");
        infos.push(WindowInfo { start, len: wlen, classifier, guided });
    }
    Ok((SegmentationMask::new(probs, len)?, infos))
}

#[derive(Debug, Clone)]
pub struct LeadDelineation {
    pub lead: String,
    pub windows: Vec<WindowInfo>,
    pub no_qrs: bool,
}

/// Delineate the named leads (all leads when `leads` is empty). Boundaries
/// are at the record's sampling rate.
pub fn delineate_record(
    model: &EcgModel,
    record: &EcgRecord,
    leads: &[String],
    opts: &DelineateOptions,
) -> Result<(AnnotationSet, Vec<LeadDelineation>)> {
    let names: Vec<String> = if leads.is_empty() {
        record.leads.iter().map(|l| l.name.clone()).collect()
    } else {
        leads.to_vec()
    };
    let mut at_model = AnnotationSet::new(record.record_id.clone(), MODEL_FS);
    let mut per_lead = Vec::with_capacity(names.len());
    for name in &names {
        let lead = record
            .lead(name)
            .ok_or_else(|| EcgError::Signal(format!("record {} has no lead {name}", record.record_id)))?;
        let signal = if record.fs == MODEL_FS {
            lead.samples.clone()
        } else {
            resample_samples(&lead.samples, record.fs, MODEL_FS)
        };
        let (mask, windows) = infer_mask(model, &signal, opts)?;
        let d = delineate_mask(&mask, MODEL_FS, &lead.name);
        at_model.items.extend(d.boundaries);
        per_lead.push(LeadDelineation { lead: lead.name.clone(), windows, no_qrs: d.no_qrs });
    }
    let mut out = if record.fs == MODEL_FS {
        at_model
    } else {
        resample_annotations(&at_model, record.fs, Some(record.len()))
    };
    out.sort();
    Ok((out, per_lead))
}
