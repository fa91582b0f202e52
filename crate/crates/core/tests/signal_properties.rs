use ecgseg::resample::{resample_annotations, resample_samples};
use ecgseg::wfdb::{decode_raw, encode_raw, SignalFormat};
use ecgseg::{AnnotationSet, BoundaryAnnotation, BoundaryKind, Wave};
use proptest::prelude::*;

proptest! {
    #[test]
    fn format_212_round_trip(groups in prop::collection::vec(any::<[u8; 3]>(), 0..200)) {
        let bytes: Vec<u8> = groups.concat();
        let raw = decode_raw(&bytes, SignalFormat::F212).unwrap();
        prop_assert_eq!(encode_raw(&raw, SignalFormat::F212), bytes);
    }

    #[test]
    fn format_16_round_trip(words in prop::collection::vec(any::<[u8; 2]>(), 0..300)) {
        let bytes: Vec<u8> = words.concat();
        let raw = decode_raw(&bytes, SignalFormat::F16).unwrap();
        prop_assert_eq!(encode_raw(&raw, SignalFormat::F16), bytes);
    }

    #[test]
    fn resampling_stays_within_bounds(
        v in prop::collection::vec(-5.0f32..5.0, 1..400),
        fs in prop::sample::select(vec![128.0, 250.0, 360.0, 500.0, 1000.0]),
        target in prop::sample::select(vec![250.0, 500.0, 257.0]),
    ) {
        let lo = v.iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = v.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let out = resample_samples(&v, fs, target);
        prop_assert_eq!(out.len(), (v.len() as f64 * target / fs).round() as usize);
        for x in out {
            prop_assert!(x >= lo && x <= hi);
        }
    }

    #[test]
    fn same_rate_is_identity(v in prop::collection::vec(-5.0f32..5.0, 0..100), samples in prop::collection::vec(0usize..100, 0..10)) {
        prop_assert_eq!(resample_samples(&v, 500.0, 500.0), v);
        let mut set = AnnotationSet::new("r", 500.0);
        set.items = samples.iter().map(|&s| BoundaryAnnotation::new(Wave::T, BoundaryKind::Offset, s, "ii")).collect();
        prop_assert_eq!(resample_annotations(&set, 500.0, None), set);
    }
}
