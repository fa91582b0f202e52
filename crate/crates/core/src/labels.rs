//! Per-sample class labels and their conversion to and from boundaries.

use std::fmt;

use crate::record::{AnnotationSet, BoundaryAnnotation, BoundaryKind, Wave};

/// Segmentation classes in canonical channel order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Class {
    None = 0,
    P = 1,
    Qrs = 2,
    T = 3,
}

pub const N_CLASSES: usize = 4;

impl Class {
    pub const ALL: [Class; N_CLASSES] = [Class::None, Class::P, Class::Qrs, Class::T];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Class> {
        Class::ALL.get(id as usize).copied()
    }

    pub fn wave(self) -> Option<Wave> {
        match self {
            Class::None => None,
            Class::P => Some(Wave::P),
            Class::Qrs => Some(Wave::Qrs),
            Class::T => Some(Wave::T),
        }
    }
}

impl From<Wave> for Class {
    fn from(w: Wave) -> Self {
        match w {
            Wave::P => Class::P,
            Wave::Qrs => Class::Qrs,
            Wave::T => Class::T,
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.wave() {
            Some(w) => w.fmt(f),
            None => f.write_str("none"),
        }
    }
}

/// Pair onsets with offsets per wave. An onset is closed by the next offset at
/// or after it; a second onset before that replaces the first. Returns the
/// pairs and the number of events that could not be paired.
pub fn pair_boundaries(items: &[BoundaryAnnotation], wave: Wave) -> (Vec<(usize, usize)>, usize) {
    let mut ev: Vec<(usize, BoundaryKind)> = items.iter().filter(|a| a.wave == wave).map(|a| (a.sample, a.kind)).collect();
    ev.sort();
    let mut pairs = Vec::new();
    let mut open = None;
    let mut dropped = 0;
    for (s, kind) in ev {
        match kind {
            BoundaryKind::Onset => {
                if open.replace(s).is_some() {
                    dropped += 1;
                }
            }
            BoundaryKind::Offset => match open.take() {
                Some(on) => pairs.push((on, s)),
                None => dropped += 1,
            },
        }
    }
    if open.is_some() {
        dropped += 1;
    }
    (pairs, dropped)
}

/// Paint closed `[onset, offset]` intervals into a label sequence.
///
/// Annotations must already be at the target sampling rate and belong to a
/// single lead. Overlaps resolve as QRS over P over T. Unpaired events are
/// dropped with a warning.
pub fn rasterize_labels(set: &AnnotationSet, length: usize) -> Vec<u8> {
    let mut labels = vec![Class::None.id(); length];
    if length == 0 {
        return labels;
    }
    let mut dropped = 0;
    for wave in [Wave::T, Wave::P, Wave::Qrs] {
        let (pairs, d) = pair_boundaries(&set.items, wave);
        dropped += d;
        for (on, off) in pairs {
            if on >= length {
                continue;
            }
            let off = off.min(length - 1);
            labels[on..=off].fill(Class::from(wave).id());
        }
    }
    if dropped > 0 {
        log::warn!("record {}: {dropped} unpaired boundar{} not rasterized", set.record_id, if dropped == 1 { "y" } else { "ies" });
    }
    labels
}

/// Maximal runs of equal labels as `(class id, start, end_exclusive)`.
pub fn runs(labels: &[u8]) -> Vec<(u8, usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=labels.len() {
        if i == labels.len() || labels[i] != labels[start] {
            out.push((labels[start], start, i));
            start = i;
        }
    }
    out
}

/// Onset (first sample) and offset (last sample) of every wave run.
pub fn boundaries_from_labels(labels: &[u8], lead: &str) -> Vec<BoundaryAnnotation> {
    let mut out = Vec::new();
    for (c, s, e) in runs(labels) {
        if let Some(w) = Class::from_id(c).and_then(Class::wave) {
            out.push(BoundaryAnnotation::new(w, BoundaryKind::Onset, s, lead));
            out.push(BoundaryAnnotation::new(w, BoundaryKind::Offset, e - 1, lead));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pairs: &[(Wave, usize, usize)]) -> AnnotationSet {
        let mut s = AnnotationSet::new("r", 500.0);
        for &(w, on, off) in pairs {
            s.items.push(BoundaryAnnotation::new(w, BoundaryKind::Onset, on, "ii"));
            s.items.push(BoundaryAnnotation::new(w, BoundaryKind::Offset, off, "ii"));
        }
        s
    }

    #[test]
    fn direct_rasterization() {
        let l = rasterize_labels(&set(&[(Wave::P, 10, 20), (Wave::Qrs, 30, 40)]), 50);
        for (i, &c) in l.iter().enumerate() {
            let want = match i {
                10..=20 => 1,
                30..=40 => 2,
                _ => 0,
            };
            assert_eq!(c, want, "sample {i}");
        }
    }

    #[test]
    fn qrs_wins_overlap() {
        let l = rasterize_labels(&set(&[(Wave::P, 10, 20), (Wave::Qrs, 18, 30)]), 50);
        assert_eq!(&l[10..18], &[1; 8]);
        assert_eq!(&l[18..=20], &[2; 3]);
        let l = rasterize_labels(&set(&[(Wave::T, 10, 20), (Wave::P, 15, 25)]), 50);
        assert_eq!(l[15], 1);
    }

    #[test]
    fn empty_set_all_none() {
        assert_eq!(rasterize_labels(&AnnotationSet::new("r", 500.0), 7), vec![0; 7]);
    }

    #[test]
    fn offset_before_onset_dropped() {
        let mut s = AnnotationSet::new("r", 500.0);
        s.items.push(BoundaryAnnotation::new(Wave::T, BoundaryKind::Offset, 5, "ii"));
        s.items.push(BoundaryAnnotation::new(Wave::T, BoundaryKind::Onset, 10, "ii"));
        assert_eq!(rasterize_labels(&s, 20), vec![0; 20]);
        assert_eq!(pair_boundaries(&s.items, Wave::T), (vec![], 2));
    }

    #[test]
    fn runs_and_boundaries() {
        let l = [0, 0, 2, 2, 2, 0, 3];
        assert_eq!(runs(&l), vec![(0, 0, 2), (2, 2, 5), (0, 5, 6), (3, 6, 7)]);
        let b = boundaries_from_labels(&l, "ii");
        assert_eq!(b.iter().map(|a| a.sample).collect::<Vec<_>>(), vec![2, 4, 6, 6]);
        assert!(runs(&[]).is_empty());
    }
}
