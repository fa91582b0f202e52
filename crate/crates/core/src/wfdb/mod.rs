//! Reading and writing WFDB records: `.hea` headers, format 212/16 signal
//! files and MIT-format annotation files.

mod annotation;
mod header;
mod signal;

use std::fs;
use std::path::{Path, PathBuf};

pub use annotation::{
    boundaries_to_raw, code_symbol, decode_annotations, encode_annotations, read_annotations, symbol_code,
    LeadAssignment, RawAnnotation, SymbolMap, BEAT_SYMBOLS,
};
pub use header::{parse_header, HeaderDescriptor, SignalFormat, SignalSpec, DEFAULT_FS, DEFAULT_GAIN};
pub use signal::{decode_raw, decode_signal, encode_raw, encode_signal};

use crate::error::{EcgError, Result};
use crate::record::{AnnotationSet, EcgRecord, Lead};

/// Path of `<base>.<ext>` where `base` is a record path without extension.
pub fn with_ext(base: &Path, ext: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| EcgError::Dataset(format!("cannot read {}: {e}", path.display())))
}

pub fn read_header(base: &Path) -> Result<HeaderDescriptor> {
    parse_header(&read_file(&with_ext(base, "hea"))?)
}

/// Load a record given its path without extension (`data/100` for `data/100.hea`).
/// Signals stored in several files are decoded file by file.
pub fn read_record(base: &Path) -> Result<(HeaderDescriptor, EcgRecord)> {
    let desc = read_header(base)?;
    let dir = base.parent().unwrap_or(Path::new(""));
    let mut leads: Vec<Option<Lead>> = vec![None; desc.n_sig()];
    let mut files: Vec<&str> = desc.signals.iter().map(|s| s.file_name.as_str()).collect();
    files.dedup();
    for file in files {
        let idx: Vec<usize> = (0..desc.n_sig()).filter(|&i| desc.signals[i].file_name == file).collect();
        let group = HeaderDescriptor {
            signals: idx.iter().map(|&i| desc.signals[i].clone()).collect(),
            ..desc.clone()
        };
        let rec = decode_signal(&read_file(&dir.join(file))?, &group)?;
        for (i, lead) in idx.into_iter().zip(rec.leads) {
            leads[i] = Some(lead);
        }
    }
    let leads: Vec<Lead> = leads.into_iter().map(|l| l.expect("every signal decoded")).collect();
    let mut record = EcgRecord::new(desc.record_name.clone(), desc.fs, leads)?;
    record.comments = desc.comments.clone();
    Ok((desc, record))
}

/// Read `<base>.<ext>` as an annotation file.
pub fn read_annotation_file(
    base: &Path,
    ext: &str,
    desc: &HeaderDescriptor,
    map: &SymbolMap,
    lead: &LeadAssignment,
) -> Result<AnnotationSet> {
    read_annotations(&read_file(&with_ext(base, ext))?, desc, map, lead)
}

/// Write `<dir>/<record_id>.hea` and `.dat` with one shared signal file.
pub fn write_record(dir: &Path, record: &EcgRecord, format: SignalFormat, gain: f64) -> Result<HeaderDescriptor> {
    let file_name = format!("{}.dat", record.record_id);
    let signals = record
        .leads
        .iter()
        .map(|l| SignalSpec {
            file_name: file_name.clone(),
            format,
            samples_per_frame: 1,
            skew: 0,
            byte_offset: 0,
            gain,
            baseline: 0,
            units: "mV".into(),
            adc_resolution: Some(if format == SignalFormat::F212 { 12 } else { 16 }),
            adc_zero: 0,
            initial_value: None,
            checksum: None,
            block_size: Some(0),
            description: l.name.clone(),
        })
        .collect();
    let desc = HeaderDescriptor {
        record_name: record.record_id.clone(),
        fs: record.fs,
        counter_freq: None,
        base_counter: None,
        n_samples: Some(record.len()),
        base_time: None,
        base_date: None,
        signals,
        comments: record.comments.clone(),
    };
    fs::create_dir_all(dir)?;
    fs::write(dir.join(&file_name), encode_signal(record, &desc)?)?;
    fs::write(dir.join(format!("{}.hea", record.record_id)), desc.to_text())?;
    Ok(desc)
}
