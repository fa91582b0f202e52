//! Synthetic ECG with exact ground-truth boundaries.
//!
//! Each beat is built from raised-cosine bumps: one for P, three for the
//! Q, R and S deflections and one for T. A bump is zero at its first and last
//! sample, so the annotated onset and offset are the support of the wave.
//! Atrial fibrillation records drop the P wave, draw irregular RR intervals
//! and add a low-amplitude fibrillatory oscillation.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{self, ManifestEntry};
use crate::error::{EcgError, Result};
use crate::record::{AnnotationSet, BoundaryAnnotation, BoundaryKind, EcgRecord, Lead, Wave};
use crate::wfdb::{self, boundaries_to_raw, encode_annotations, SignalFormat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub fs: f64,
    pub duration_s: f64,
    /// Heart rate range in beats per minute.
    pub hr_min: f64,
    pub hr_max: f64,
    pub leads: Vec<String>,
    /// Standard deviation of white noise, mV.
    pub noise_mv: f64,
    /// Peak amplitude of slow baseline drift, mV.
    pub wander_mv: f64,
    pub afib: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            fs: 500.0,
            duration_s: 10.0,
            hr_min: 55.0,
            hr_max: 95.0,
            leads: vec!["i".into(), "ii".into()],
            noise_mv: 0.01,
            wander_mv: 0.05,
            afib: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthRecord {
    pub record: EcgRecord,
    /// Boundaries repeated for every lead.
    pub annotations: AnnotationSet,
}

/// Beat timing in seconds.
#[derive(Debug, Clone, Copy)]
struct Beat {
    p: Option<(f64, f64, f64)>,
    qrs: (f64, f64),
    r_amp: f64,
    t: (f64, f64, f64),
}

fn bump(out: &mut [f64], fs: f64, on: f64, off: f64, amp: f64) {
    let (a, b) = ((on * fs).round() as usize, (off * fs).round() as usize);
    if b <= a {
        return;
    }
    let w = (b - a) as f64;
    for i in a..=b.min(out.len() - 1) {
        let x = (i - a) as f64 / w;
        out[i] += amp * (PI * x).sin().powi(2);
    }
}

fn beats<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> Vec<Beat> {
    let mut out: Vec<Beat> = Vec::new();
    let hr = rng.random_range(cfg.hr_min..=cfg.hr_max);
    let mean_rr = 60.0 / hr;
    let pr = rng.random_range(0.04..0.08);
    let p_w = rng.random_range(0.08..0.11);
    let qrs_w = rng.random_range(0.075..0.105);
    let st = rng.random_range(0.06..0.11);
    let t_w = rng.random_range(0.15..0.22);
    let p_amp = rng.random_range(0.08..0.2);
    let t_amp = rng.random_range(0.15..0.4) * if rng.random_bool(0.1) { -1.0 } else { 1.0 };
    let lead_margin = p_w + pr + 0.02;
    let mut qrs_on = rng.random_range(0.3..0.3 + mean_rr);
    let mut prev_end = 0.0f64;
    loop {
        let jitter = if cfg.afib { rng.random_range(0.6..1.4) } else { 1.0 + rng.random_range(-0.04..0.04) };
        let rr = mean_rr * jitter;
        let qrs = (qrs_on, qrs_on + qrs_w * rng.random_range(0.95..1.05));
        let t_on = qrs.1 + st;
        let t = (t_on, t_on + t_w * rng.random_range(0.95..1.05), t_amp);
        let p = (!cfg.afib).then(|| {
            let off = qrs.0 - pr;
            (off - p_w, off, p_amp)
        });
        if t.1 + 0.05 >= cfg.duration_s {
            break;
        }
        let start = p.map_or(qrs.0, |p| p.0);
        if start > prev_end + 0.02 && start > 0.05 {
            out.push(Beat { p, qrs, r_amp: rng.random_range(0.8..1.4), t });
            prev_end = t.1;
        }
        qrs_on += rr.max(t.1 - qrs.0 + lead_margin + 0.03);
    }
    out
}

/// One synthetic record; all randomness comes from `seed`.
pub fn synth_record(id: &str, cfg: &SynthConfig, seed: u64) -> Result<SynthRecord> {
    if !(cfg.fs > 0.0 && cfg.duration_s > 0.0 && cfg.hr_min > 0.0 && cfg.hr_min <= cfg.hr_max) {
        return Err(EcgError::Config("invalid synthetic record settings".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (cfg.duration_s * cfg.fs).round() as usize;
    let beats = beats(cfg, &mut rng);
    let mut clean = vec![0.0f64; n];
    let fs = cfg.fs;
    for b in &beats {
        if let Some((on, off, amp)) = b.p {
            bump(&mut clean, fs, on, off, amp);
        }
        let (on, off) = b.qrs;
        let w = off - on;
        bump(&mut clean, fs, on, on + 0.25 * w, -0.08 * b.r_amp);
        bump(&mut clean, fs, on + 0.15 * w, on + 0.7 * w, b.r_amp);
        bump(&mut clean, fs, on + 0.6 * w, off, -0.2 * b.r_amp);
        bump(&mut clean, fs, b.t.0, b.t.1, b.t.2);
    }
    if cfg.afib {
        let f = rng.random_range(4.0..8.0);
        let ph: f64 = rng.random_range(0.0..2.0 * PI);
        let amp = rng.random_range(0.02..0.06);
        for (i, x) in clean.iter_mut().enumerate() {
            let t = i as f64 / fs;
            *x += amp * ((2.0 * PI * f * t + ph).sin() + 0.5 * (2.0 * PI * 1.7 * f * t).sin());
        }
    }

    let noise = Normal::new(0.0, cfg.noise_mv.max(0.0)).map_err(|e| EcgError::Config(e.to_string()))?;
    let mut leads = Vec::with_capacity(cfg.leads.len());
    for (k, name) in cfg.leads.iter().enumerate() {
        let gain = match name.to_ascii_lowercase().as_str() {
            "i" => 0.6,
            "ii" => 1.0,
            _ => 0.5 + 0.1 * (k % 5) as f64,
        };
        let wf = rng.random_range(0.1..0.4);
        let wp: f64 = rng.random_range(0.0..2.0 * PI);
        let samples = clean
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let t = i as f64 / fs;
                (gain * x + cfg.wander_mv * (2.0 * PI * wf * t + wp).sin() + noise.sample(&mut rng)) as f32
            })
            .collect();
        leads.push(Lead { name: name.clone(), samples });
    }
    let mut record = EcgRecord::new(id, fs, leads)?;
    record.comments.push(format!("Rhythm: {}.", if cfg.afib { "Atrial fibrillation" } else { "Sinus rhythm" }));

    let mut annotations = AnnotationSet::new(id, fs);
    let to_sample = |t: f64| ((t * fs).round() as usize).min(n - 1);
    for lead in &cfg.leads {
        for b in &beats {
            let mut push = |wave, on: f64, off: f64| {
                annotations.items.push(BoundaryAnnotation::new(wave, BoundaryKind::Onset, to_sample(on), lead));
                annotations.items.push(BoundaryAnnotation::new(wave, BoundaryKind::Offset, to_sample(off), lead));
            };
            if let Some((on, off, _)) = b.p {
                push(Wave::P, on, off);
            }
            push(Wave::Qrs, b.qrs.0, b.qrs.1);
            push(Wave::T, b.t.0, b.t.1);
        }
    }
    annotations.sort();
    Ok(SynthRecord { record, annotations })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthDatasetConfig {
    pub n_records: usize,
    pub test_fraction: f64,
    pub afib_fraction: f64,
    pub record: SynthConfig,
}

impl Default for SynthDatasetConfig {
    fn default() -> Self {
        Self {
            n_records: 20,
            test_fraction: 0.2,
            afib_fraction: 0.2,
            record: SynthConfig::default(),
        }
    }
}

fn peak_symbol(w: Wave) -> &'static str {
    match w {
        Wave::P => "p",
        Wave::Qrs => "N",
        Wave::T => "t",
    }
}

/// Write one record as WFDB files with one annotation file per lead, named by
/// the lead (`<id>.i`, `<id>.ii`).
pub fn write_synth_record(dir: &Path, synth: &SynthRecord) -> Result<()> {
    wfdb::write_record(dir, &synth.record, SignalFormat::F16, 1000.0)?;
    for lead in &synth.record.leads {
        let set = synth.annotations.for_lead(&lead.name);
        let raw = boundaries_to_raw(&set.items, &peak_symbol);
        let base = dir.join(&synth.record.record_id);
        std::fs::write(wfdb::with_ext(&base, &lead.name), encode_annotations(&raw)?)?;
    }
    Ok(())
}

/// A directory of synthetic WFDB records plus `manifest.csv`. Records are
/// named `1..=n`, the last `test_fraction` of them form the test split and
/// the group column carries the rhythm.
pub fn write_synth_dataset(dir: &Path, cfg: &SynthDatasetConfig, seed: u64) -> Result<Vec<ManifestEntry>> {
    dataset::ensure_dir(dir)?;
    let n_test = (cfg.n_records as f64 * cfg.test_fraction).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(cfg.n_records);
    for k in 1..=cfg.n_records {
        let afib = rng.random_bool(cfg.afib_fraction.clamp(0.0, 1.0));
        let rc = SynthConfig { afib, ..cfg.record.clone() };
        let id = k.to_string();
        let synth = synth_record(&id, &rc, rng.random())?;
        write_synth_record(dir, &synth)?;
        entries.push(ManifestEntry {
            record: id,
            split: if k > cfg.n_records - n_test { "test" } else { "train" }.into(),
            group: Some(if afib { "AFIB" } else { "NSR" }.into()),
        });
    }
    dataset::write_manifest(&dir.join("manifest.csv"), &entries)?;
    Ok(entries)
}
