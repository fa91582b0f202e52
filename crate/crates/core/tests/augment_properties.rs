use ecgseg::augment::{augment, baseline_shift, baseline_wander, gaussian_noise, powerline_noise, random_resize, record_rng, AugmentConfig};
use proptest::prelude::*;

fn always() -> AugmentConfig {
    AugmentConfig {
        p_wander: 1.0,
        p_powerline: 1.0,
        p_shift: 1.0,
        p_resize: 1.0,
        p_gaussian: 1.0,
        ..AugmentConfig::default()
    }
}

proptest! {
    #[test]
    fn lengths_preserved(len in 1usize..2000, seed in any::<u64>()) {
        let s: Vec<f32> = (0..len).map(|i| (i as f32 * 0.03).cos()).collect();
        let l: Vec<u8> = (0..len).map(|i| ((i / 40) % 4) as u8).collect();
        let c = always();
        let mut r = record_rng(seed, "rec", 0);
        prop_assert_eq!(baseline_wander(&s, 500.0, &mut r, &c).len(), len);
        prop_assert_eq!(powerline_noise(&s, 500.0, &mut r, &c).len(), len);
        prop_assert_eq!(baseline_shift(&s, &mut r, &c).len(), len);
        prop_assert_eq!(gaussian_noise(&s, &mut r, &c).len(), len);
        let (s2, l2) = random_resize(&s, &l, &mut r, &c);
        prop_assert_eq!((s2.len(), l2.len()), (len, len));
        let (s3, l3) = augment(&s, &l, 500.0, &mut r, &c);
        prop_assert_eq!((s3.len(), l3.len()), (len, len));
    }

    #[test]
    fn only_resize_touches_labels(len in 1usize..1000, seed in any::<u64>()) {
        let s: Vec<f32> = vec![0.0; len];
        let l: Vec<u8> = (0..len).map(|i| ((i / 25) % 4) as u8).collect();
        let c = AugmentConfig { p_resize: 0.0, ..always() };
        let (_, out) = augment(&s, &l, 500.0, &mut record_rng(seed, "x", 3), &c);
        prop_assert_eq!(out, l);
    }

    #[test]
    fn deterministic_per_record(seed in any::<u64>(), epoch in 0u64..10) {
        let s: Vec<f32> = (0..500).map(|i| i as f32 / 500.0).collect();
        let l = vec![0u8; 500];
        let c = always();
        let a = augment(&s, &l, 500.0, &mut record_rng(seed, "r1", epoch), &c);
        let b = augment(&s, &l, 500.0, &mut record_rng(seed, "r1", epoch), &c);
        prop_assert_eq!(a, b);
    }
}
