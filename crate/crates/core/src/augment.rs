//! Training-time signal perturbations: baseline wander, powerline noise,
//! baseline shift, random resizing and Gaussian noise.

use std::f64::consts::TAU;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{EcgError, Result};

/// Closed range `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }

    fn valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub p_wander: f64,
    /// Amplitude of each wander component, mV.
    pub wander_amp: Range,
    pub wander_freq: Range,
    pub p_powerline: f64,
    pub powerline_amp: Range,
    pub p_shift: f64,
    /// Magnitude of each offset, mV; the sign is random.
    pub shift_amp: Range,
    pub p_resize: f64,
    pub resize: Range,
    pub p_gaussian: f64,
    pub gaussian_sigma: Range,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            p_wander: 0.5,
            wander_amp: Range::new(0.0, 0.3),
            wander_freq: Range::new(0.05, 0.5),
            p_powerline: 0.5,
            powerline_amp: Range::new(0.0, 0.1),
            p_shift: 0.5,
            shift_amp: Range::new(0.0, 0.5),
            p_resize: 0.5,
            resize: Range::new(0.8, 1.2),
            p_gaussian: 0.5,
            gaussian_sigma: Range::new(0.0, 0.05),
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// Every transform switched off.
    pub fn disabled() -> Self {
        Self {
            p_wander: 0.0,
            p_powerline: 0.0,
            p_shift: 0.0,
            p_resize: 0.0,
            p_gaussian: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [self.p_wander, self.p_powerline, self.p_shift, self.p_resize, self.p_gaussian];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(EcgError::Config("augmentation probabilities must be in [0, 1]".into()));
        }
        let ranges = [self.wander_amp, self.wander_freq, self.powerline_amp, self.shift_amp, self.resize, self.gaussian_sigma];
        if ranges.iter().any(|r| !r.valid()) {
            return Err(EcgError::Config("augmentation ranges must satisfy lo <= hi".into()));
        }
        let amps = [self.wander_amp, self.powerline_amp, self.shift_amp, self.gaussian_sigma];
        if amps.iter().any(|r| r.lo < 0.0) || self.resize.lo <= 0.0 || self.wander_freq.lo < 0.0 {
            return Err(EcgError::Config("amplitudes, frequencies and resize factors must be non-negative".into()));
        }
        Ok(())
    }
}

/// Independent stream for one record and epoch.
pub fn record_rng(seed: u64, record_id: &str, epoch: u64) -> ChaCha8Rng {
    // FNV-1a keeps the derivation stable across platforms and toolchains.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(record_id.as_bytes()).chain(&epoch.to_le_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(h)
}

fn add_sine(signal: &mut [f32], fs: f64, freq: f64, amp: f64, phase: f64) {
    for (i, x) in signal.iter_mut().enumerate() {
        *x += (amp * (TAU * freq * i as f64 / fs + phase).sin()) as f32;
    }
}

/// Sum of one to three slow sinusoids.
pub fn baseline_wander<R: Rng + ?Sized>(signal: &[f32], fs: f64, rng: &mut R, cfg: &AugmentConfig) -> Vec<f32> {
    let mut out = signal.to_vec();
    let k = rng.random_range(1..=3);
    for _ in 0..k {
        let f = cfg.wander_freq.sample(rng);
        let a = cfg.wander_amp.sample(rng);
        let ph = rng.random_range(0.0..TAU);
        add_sine(&mut out, fs, f, a, ph);
    }
    out
}

/// A 50 or 60 Hz sinusoid.
pub fn powerline_noise<R: Rng + ?Sized>(signal: &[f32], fs: f64, rng: &mut R, cfg: &AugmentConfig) -> Vec<f32> {
    let mut out = signal.to_vec();
    let f = if rng.random_bool(0.5) { 50.0 } else { 60.0 };
    let a = cfg.powerline_amp.sample(rng);
    let ph = rng.random_range(0.0..TAU);
    add_sine(&mut out, fs, f, a, ph);
    out
}

/// Constant offsets over one or two disjoint random stretches.
pub fn baseline_shift<R: Rng + ?Sized>(signal: &[f32], rng: &mut R, cfg: &AugmentConfig) -> Vec<f32> {
    let mut out = signal.to_vec();
    let len = signal.len();
    if len < 2 {
        return out;
    }
    let n = rng.random_range(1..=2usize);
    let mut cuts: Vec<usize> = (0..2 * n).map(|_| rng.random_range(0..=len)).collect();
    cuts.sort_unstable();
    for pair in cuts.chunks(2) {
        let mag = cfg.shift_amp.sample(rng);
        let a = if rng.random_bool(0.5) { mag } else { -mag } as f32;
        for x in &mut out[pair[0]..pair[1]] {
            *x += a;
        }
    }
    out
}

/// Stretch time by `factor`, keeping the original length: the signal is
/// linearly interpolated, labels take the nearest source sample; the tail is
/// cropped or padded with the last value.
pub fn resize_by(signal: &[f32], labels: &[u8], factor: f64) -> (Vec<f32>, Vec<u8>) {
    let len = signal.len();
    if len == 0 || factor == 1.0 {
        return (signal.to_vec(), labels.to_vec());
    }
    let last = len - 1;
    let stretched = ((len as f64) * factor).round() as usize;
    let mut s = Vec::with_capacity(len);
    let mut l = Vec::with_capacity(len);
    for j in 0..len.min(stretched) {
        let x = j as f64 / factor;
        let i = x.floor() as usize;
        s.push(if i >= last {
            signal[last]
        } else {
            let t = (x - i as f64) as f32;
            signal[i] + (signal[i + 1] - signal[i]) * t
        });
        l.push(labels[(x.round() as usize).min(last)]);
    }
    let (ls, ll) = (*s.last().unwrap_or(&signal[last]), *l.last().unwrap_or(&labels[last]));
    s.resize(len, ls);
    l.resize(len, ll);
    (s, l)
}

pub fn random_resize<R: Rng + ?Sized>(signal: &[f32], labels: &[u8], rng: &mut R, cfg: &AugmentConfig) -> (Vec<f32>, Vec<u8>) {
    let f = cfg.resize.sample(rng);
    resize_by(signal, labels, f)
}

/// I.i.d. normal noise with a standard deviation drawn from the range.
pub fn gaussian_noise<R: Rng + ?Sized>(signal: &[f32], rng: &mut R, cfg: &AugmentConfig) -> Vec<f32> {
    let sigma = cfg.gaussian_sigma.sample(rng);
    if sigma == 0.0 {
        return signal.to_vec();
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    signal.iter().map(|&x| x + normal.sample(rng) as f32).collect()
}

/// Apply each transform with its probability, in a fixed order.
pub fn augment(signal: &[f32], labels: &[u8], fs: f64, rng: &mut dyn RngCore, cfg: &AugmentConfig) -> (Vec<f32>, Vec<u8>) {
    let mut s = signal.to_vec();
    let mut l = labels.to_vec();
    if rng.random_bool(cfg.p_resize) {
        (s, l) = random_resize(&s, &l, rng, cfg);
    }
    if rng.random_bool(cfg.p_wander) {
        s = baseline_wander(&s, fs, rng, cfg);
    }
    if rng.random_bool(cfg.p_shift) {
        s = baseline_shift(&s, rng, cfg);
    }
    if rng.random_bool(cfg.p_powerline) {
        s = powerline_noise(&s, fs, rng, cfg);
    }
    if rng.random_bool(cfg.p_gaussian) {
        s = gaussian_noise(&s, rng, cfg);
    }
    (s, l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(n: usize) -> Vec<f32> {
        (0..n).map(|i| (i as f32 * 0.02).sin()).collect()
    }

    fn zero_amp() -> AugmentConfig {
        AugmentConfig {
            wander_amp: Range::new(0.0, 0.0),
            powerline_amp: Range::new(0.0, 0.0),
            shift_amp: Range::new(0.0, 0.0),
            gaussian_sigma: Range::new(0.0, 0.0),
            resize: Range::new(1.0, 1.0),
            ..AugmentConfig::default()
        }
    }

    #[test]
    fn zero_amplitudes_are_identity() {
        let s = sig(1000);
        let l = vec![1u8; 1000];
        let c = zero_amp();
        let mut r = record_rng(1, "a", 0);
        assert_eq!(baseline_wander(&s, 500.0, &mut r, &c), s);
        assert_eq!(powerline_noise(&s, 500.0, &mut r, &c), s);
        assert_eq!(baseline_shift(&s, &mut r, &c), s);
        assert_eq!(gaussian_noise(&s, &mut r, &c), s);
        assert_eq!(random_resize(&s, &l, &mut r, &c), (s.clone(), l));
    }

    #[test]
    fn wander_is_bounded_and_reproducible() {
        let s = vec![0.0f32; 5000];
        let c = AugmentConfig::default();
        let a = baseline_wander(&s, 500.0, &mut record_rng(3, "r", 0), &c);
        let b = baseline_wander(&s, 500.0, &mut record_rng(3, "r", 0), &c);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.abs() as f64 <= 3.0 * 0.3 + 1e-6));
        assert_ne!(a, baseline_wander(&s, 500.0, &mut record_rng(3, "q", 0), &c));
    }

    #[test]
    fn shift_has_few_levels() {
        let s = sig(777);
        let c = AugmentConfig {
            shift_amp: Range::new(0.1, 0.5),
            ..AugmentConfig::default()
        };
        for seed in 0..50 {
            let out = baseline_shift(&s, &mut record_rng(seed, "x", 0), &c);
            let mut d: Vec<i64> = out.iter().zip(&s).map(|(a, b)| ((a - b) * 1e4).round() as i64).collect();
            d.sort_unstable();
            d.dedup();
            assert!(d.len() <= 3, "{d:?}");
            assert_eq!(out.len(), s.len());
        }
    }

    #[test]
    fn resize_stretches_runs() {
        let mut l = vec![0u8; 400];
        l[100..150].fill(2);
        let s: Vec<f32> = l.iter().map(|&c| c as f32).collect();
        let (s2, l2) = resize_by(&s, &l, 1.2);
        let run = l2.iter().filter(|&&c| c == 2).count();
        assert!((59..=61).contains(&run), "{run}");
        assert_eq!((s2.len(), l2.len()), (400, 400));
        let (_, l3) = resize_by(&s, &l, 0.8);
        assert!((39..=41).contains(&l3.iter().filter(|&&c| c == 2).count()));
        assert_eq!(resize_by(&s, &l, 1.0), (s, l));
    }

    #[test]
    fn gaussian_std_close_to_sigma() {
        let s = vec![0.0f32; 5000];
        let c = AugmentConfig {
            gaussian_sigma: Range::new(0.05, 0.05),
            ..AugmentConfig::default()
        };
        let out = gaussian_noise(&s, &mut record_rng(5, "g", 0), &c);
        let mean = out.iter().map(|&x| x as f64).sum::<f64>() / 5000.0;
        let sd = (out.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / 5000.0).sqrt();
        assert!((sd - 0.05).abs() < 0.005, "{sd}");
    }

    #[test]
    fn powerline_spectrum_peak() {
        let fs = 500.0;
        let s = vec![0.0f32; 5000];
        let c = AugmentConfig {
            powerline_amp: Range::new(0.1, 0.1),
            ..AugmentConfig::default()
        };
        let out = powerline_noise(&s, fs, &mut record_rng(8, "p", 0), &c);
        let power = |f: f64| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &x) in out.iter().enumerate() {
                let ph = TAU * f * i as f64 / fs;
                re += x as f64 * ph.cos();
                im += x as f64 * ph.sin();
            }
            re * re + im * im
        };
        let best = (1..250).map(|f| f as f64).max_by(|a, b| power(*a).total_cmp(&power(*b))).unwrap();
        assert!(best == 50.0 || best == 60.0, "{best}");
    }

    #[test]
    fn disabled_pipeline_is_identity() {
        let s = sig(300);
        let l: Vec<u8> = (0..300).map(|i| (i % 4) as u8).collect();
        let mut r = record_rng(0, "z", 1);
        assert_eq!(augment(&s, &l, 500.0, &mut r, &AugmentConfig::disabled()), (s, l));
    }

    #[test]
    fn config_validation() {
        assert!(AugmentConfig::default().validate().is_ok());
        let bad = AugmentConfig {
            p_wander: 1.5,
            ..AugmentConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = AugmentConfig {
            shift_amp: Range::new(0.5, 0.1),
            ..AugmentConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
