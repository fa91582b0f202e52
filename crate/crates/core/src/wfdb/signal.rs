//! Sample payloads in formats 212 and 16.

use crate::error::{EcgError, Result};
use crate::record::{EcgRecord, Lead};

use super::header::{HeaderDescriptor, SignalFormat};

/// Decode a payload into interleaved raw ADC values.
///
/// Format 212 payloads must hold whole three-byte groups and format 16
/// payloads whole two-byte words.
pub fn decode_raw(bytes: &[u8], format: SignalFormat) -> Result<Vec<i32>> {
    match format {
        SignalFormat::F16 => {
            if bytes.len() % 2 != 0 {
                return Err(EcgError::Signal(format!(
                    "format 16 payload of {} bytes is not a whole number of 2-byte samples",
                    bytes.len()
                )));
            }
            Ok(bytes
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]) as i32)
                .collect())
        }
        SignalFormat::F212 => {
            if bytes.len() % 3 != 0 {
                return Err(EcgError::Signal(format!(
                    "format 212 payload of {} bytes is not a whole number of 3-byte groups",
                    bytes.len()
                )));
            }
            let mut out = Vec::with_capacity(bytes.len() / 3 * 2);
            for c in bytes.chunks_exact(3) {
                let a = c[0] as i32 | ((c[1] as i32 & 0x0F) << 8);
                let b = c[2] as i32 | ((c[1] as i32 & 0xF0) << 4);
                out.push(sign12(a));
                out.push(sign12(b));
            }
            Ok(out)
        }
    }
}

fn sign12(v: i32) -> i32 {
    if v & 0x800 != 0 {
        v - 0x1000
    } else {
        v
    }
}

/// Encode interleaved raw ADC values. Values are truncated to the format's bit
/// width; an odd 212 sample count is padded with a zero slot.
pub fn encode_raw(samples: &[i32], format: SignalFormat) -> Vec<u8> {
    match format {
        SignalFormat::F16 => samples.iter().flat_map(|&s| (s as i16).to_le_bytes()).collect(),
        SignalFormat::F212 => {
            let mut out = Vec::with_capacity(samples.len().div_ceil(2) * 3);
            for pair in samples.chunks(2) {
                let a = pair[0] & 0xFFF;
                let b = pair.get(1).copied().unwrap_or(0) & 0xFFF;
                out.push((a & 0xFF) as u8);
                out.push((((a >> 8) & 0x0F) | ((b >> 4) & 0xF0)) as u8);
                out.push((b & 0xFF) as u8);
            }
            out
        }
    }
}

/// Decode one signal file carrying every signal of `desc`, interleaved frame by frame.
///
/// All signals must share the file's format. When the header states a sample
/// count the payload must be long enough for it; surplus slots are ignored.
pub fn decode_signal(bytes: &[u8], desc: &HeaderDescriptor) -> Result<EcgRecord> {
    let n_sig = desc.n_sig();
    if n_sig == 0 {
        return EcgRecord::new(desc.record_name.clone(), desc.fs, Vec::new());
    }
    let first = &desc.signals[0];
    if desc.signals.iter().any(|s| s.format != first.format || s.file_name != first.file_name) {
        return Err(EcgError::Signal(
            "signals spread over several files or formats; decode each group separately".into(),
        ));
    }
    if desc.signals.iter().any(|s| s.samples_per_frame != 1) {
        return Err(EcgError::UnsupportedFormat("multi-sample frames".into()));
    }
    if desc.signals.iter().any(|s| s.skew != 0) {
        log::warn!("record {}: signal skew ignored", desc.record_name);
    }
    let offset = first.byte_offset;
    if bytes.len() < offset {
        return Err(EcgError::Signal(format!(
            "payload of {} bytes is shorter than its {offset}-byte prolog",
            bytes.len()
        )));
    }
    let raw = decode_raw(&bytes[offset..], first.format)?;
    let available = raw.len() / n_sig;
    let n = match desc.n_samples {
        Some(n) if available < n => {
            return Err(EcgError::Signal(format!(
                "truncated payload: {available} frames present, header declares {n}"
            )))
        }
        Some(n) => n,
        None => available,
    };
    let surplus = raw.len() - n * n_sig;
    if surplus > 0 {
        if first.format == SignalFormat::F212 && surplus == 1 {
            log::warn!("record {}: odd format 212 payload, last 12-bit slot ignored", desc.record_name);
        } else {
            log::warn!("record {}: {surplus} trailing samples ignored", desc.record_name);
        }
    }
    let leads = desc
        .signals
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let scale = s.millivolt_scale() / s.gain;
            let base = s.baseline as f64;
            Lead {
                name: s.description.clone(),
                samples: (0..n)
                    .map(|i| ((raw[i * n_sig + j] as f64 - base) * scale) as f32)
                    .collect(),
            }
        })
        .collect();
    EcgRecord::new(desc.record_name.clone(), desc.fs, leads)
}

/// Inverse of [`decode_signal`]: quantize physical samples with each signal's
/// gain and baseline and interleave them.
pub fn encode_signal(record: &EcgRecord, desc: &HeaderDescriptor) -> Result<Vec<u8>> {
    if record.leads.len() != desc.n_sig() {
        return Err(EcgError::Signal(format!(
            "record has {} leads, header {} signals",
            record.leads.len(),
            desc.n_sig()
        )));
    }
    let Some(first) = desc.signals.first() else {
        return Ok(Vec::new());
    };
    let (lo, hi) = match first.format {
        SignalFormat::F212 => (-2048, 2047),
        SignalFormat::F16 => (i16::MIN as i32, i16::MAX as i32),
    };
    let n = record.len();
    let mut raw = Vec::with_capacity(n * desc.n_sig());
    for i in 0..n {
        for (lead, s) in record.leads.iter().zip(&desc.signals) {
            let v = (lead.samples[i] as f64 / s.millivolt_scale() * s.gain + s.baseline as f64).round();
            raw.push((v as i64).clamp(lo as i64, hi as i64) as i32);
        }
    }
    let mut out = vec![0u8; first.byte_offset];
    out.extend(encode_raw(&raw, first.format));
    Ok(out)
}
