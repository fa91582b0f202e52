//! Linear-interpolation resampling of records and annotation rescaling.

use crate::record::{AnnotationSet, EcgRecord, Lead};

/// Number of output samples for `len` input samples.
pub fn resampled_len(len: usize, fs: f64, target_fs: f64) -> usize {
    (len as f64 * target_fs / fs).round() as usize
}

/// Resample one channel onto the uniform grid of `target_fs`.
///
/// Output sample `j` sits at input position `j * fs / target_fs` and takes the
/// linear interpolation of its two neighbours; positions past the last input
/// sample hold that sample's value.
pub fn resample_samples(samples: &[f32], fs: f64, target_fs: f64) -> Vec<f32> {
    assert!(fs > 0.0 && target_fs > 0.0, "sampling rates must be positive");
    if fs == target_fs || samples.is_empty() {
        return samples.to_vec();
    }
    let n = resampled_len(samples.len(), fs, target_fs);
    let last = samples.len() - 1;
    let ratio = fs / target_fs;
    (0..n)
        .map(|j| {
            let x = j as f64 * ratio;
            let i = x.floor() as usize;
            if i >= last {
                return samples[last];
            }
            let t = x - i as f64;
            let (a, b) = (samples[i] as f64, samples[i + 1] as f64);
            (a + (b - a) * t) as f32
        })
        .collect()
}

pub fn resample(record: &EcgRecord, target_fs: f64) -> EcgRecord {
    EcgRecord {
        record_id: record.record_id.clone(),
        fs: target_fs,
        leads: record
            .leads
            .iter()
            .map(|l| Lead {
                name: l.name.clone(),
                samples: resample_samples(&l.samples, record.fs, target_fs),
            })
            .collect(),
        comments: record.comments.clone(),
    }
}

/// Rescale annotation positions with `round(sample * target_fs / source_fs)`.
/// With `length` given, results are clamped to the last valid index.
pub fn resample_annotations(set: &AnnotationSet, target_fs: f64, length: Option<usize>) -> AnnotationSet {
    let mut out = set.clone_empty();
    out.source_fs = target_fs;
    out.items = set
        .items
        .iter()
        .map(|a| {
            let mut a = a.clone();
            let s = (a.sample as f64 * target_fs / set.source_fs).round() as usize;
            a.sample = match length {
                Some(n) if n > 0 => s.min(n - 1),
                _ => s,
            };
            a
        })
        .collect();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{BoundaryAnnotation, BoundaryKind, Wave};

    #[test]
    fn doubling_rate_doubles_length() {
        let rec = EcgRecord::single_lead("r", 250.0, "ii", (0..2500).map(|i| i as f32).collect()).unwrap();
        let up = resample(&rec, 500.0);
        assert_eq!(up.len(), 5000);
        assert_eq!(up.fs, 500.0);
        assert_eq!(up.leads[0].samples[1], 0.5);
        assert_eq!(up.leads[0].samples[4000], 2000.0);
    }

    #[test]
    fn annotation_scaling() {
        let mut set = AnnotationSet::new("r", 250.0);
        set.items.push(BoundaryAnnotation::new(Wave::P, BoundaryKind::Onset, 100, "ii"));
        let up = resample_annotations(&set, 500.0, None);
        assert_eq!(up.items[0].sample, 200);
        assert_eq!(up.source_fs, 500.0);
    }

    #[test]
    fn constant_stays_constant() {
        let v = vec![1.25f32; 777];
        for fs in [100.0, 360.0, 500.0, 1000.0] {
            assert!(resample_samples(&v, 250.0, fs).iter().all(|&x| x == 1.25));
        }
    }

    #[test]
    fn same_rate_is_identity() {
        let v: Vec<f32> = (0..50).map(|i| (i as f32 * 0.3).sin()).collect();
        assert_eq!(resample_samples(&v, 500.0, 500.0), v);
        assert_eq!(resampled_len(5000, 500.0, 500.0), 5000);
    }
}
