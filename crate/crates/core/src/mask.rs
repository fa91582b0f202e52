//! Model outputs: per-sample class probabilities and rhythm probabilities.

use crate::error::{EcgError, Result};
use crate::labels::N_CLASSES;

/// Class probabilities, class-major: `probs[c * len + t]`, channels ordered
/// (none, P, QRS, T).
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMask {
    probs: Vec<f32>,
    len: usize,
}

impl SegmentationMask {
    pub fn new(probs: Vec<f32>, len: usize) -> Result<Self> {
        if probs.len() != N_CLASSES * len {
            return Err(EcgError::Config(format!(
                "mask of {} values does not hold {N_CLASSES} x {len}",
                probs.len()
            )));
        }
        Ok(Self { probs, len })
    }

    /// One-hot mask of a label sequence.
    pub fn from_labels(labels: &[u8]) -> Self {
        let len = labels.len();
        let mut probs = vec![0.0; N_CLASSES * len];
        for (t, &c) in labels.iter().enumerate() {
            probs[c as usize * len + t] = 1.0;
        }
        Self { probs, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn probs(&self) -> &[f32] {
        &self.probs
    }

    pub fn channel(&self, class: usize) -> &[f32] {
        &self.probs[class * self.len..(class + 1) * self.len]
    }

    pub fn channel_mut(&mut self, class: usize) -> &mut [f32] {
        &mut self.probs[class * self.len..(class + 1) * self.len]
    }

    pub fn get(&self, class: usize, t: usize) -> f32 {
        self.probs[class * self.len + t]
    }

    /// Per-sample argmax; ties go to the lower class index.
    pub fn argmax(&self) -> Vec<u8> {
        (0..self.len)
            .map(|t| {
                let mut best = 0;
                for c in 1..N_CLASSES {
                    if self.get(c, t) > self.get(best, t) {
                        best = c;
                    }
                }
                best as u8
            })
            .collect()
    }

    /// Samples `[start, start + len)` as a new mask.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        let mut probs = Vec::with_capacity(N_CLASSES * len);
        for c in 0..N_CLASSES {
            probs.extend_from_slice(&self.channel(c)[start..start + len]);
        }
        Self { probs, len }
    }

    /// Largest deviation of a column sum from one.
    pub fn max_column_error(&self) -> f64 {
        (0..self.len)
            .map(|t| ((0..N_CLASSES).map(|c| self.get(c, t) as f64).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Probabilities of the rhythm classes (afib/flutter, other).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierOutput {
    pub p_afib: f32,
    pub p_other: f32,
}

impl ClassifierOutput {
    pub fn new(p_afib: f32, p_other: f32) -> Self {
        Self { p_afib, p_other }
    }

    /// Argmax decision; an exact tie counts as "other".
    pub fn is_afib(&self) -> bool {
        self.p_afib > self.p_other
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_prefer_lower_class() {
        let m = SegmentationMask::new(vec![0.25; 8], 2).unwrap();
        assert_eq!(m.argmax(), vec![0, 0]);
        let m = SegmentationMask::new(vec![0.1, 0.0, 0.4, 0.1, 0.4, 0.1, 0.1, 0.8], 2).unwrap();
        assert_eq!(m.argmax(), vec![1, 3]);
    }

    #[test]
    fn one_hot_round_trip() {
        let l = vec![0, 3, 2, 1, 1];
        let m = SegmentationMask::from_labels(&l);
        assert_eq!(m.argmax(), l);
        assert_eq!(m.max_column_error(), 0.0);
        assert_eq!(m.slice(1, 2).argmax(), vec![3, 2]);
    }

    #[test]
    fn shape_checked() {
        assert!(SegmentationMask::new(vec![0.0; 7], 2).is_err());
    }
}
