//! From class probabilities to wave boundaries: connected runs, removal of
//! short regions, one P and one T per beat, and optional P suppression.

use std::collections::{BTreeMap, BTreeSet};

use crate::labels::{runs, Class, N_CLASSES};
use crate::mask::{ClassifierOutput, SegmentationMask};
use crate::record::{BoundaryAnnotation, BoundaryKind};

/// Shortest wave region kept, in seconds.
pub const MIN_WAVE_SECONDS: f64 = 0.040;

/// A maximal run of one class over samples `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaveInterval {
    pub class: Class,
    pub start: usize,
    pub end: usize,
}

impl WaveInterval {
    pub fn new(class: Class, start: usize, end: usize) -> Self {
        debug_assert!(start < end);
        Self { class, start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Boundaries for one lead.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Delineation {
    pub boundaries: Vec<BoundaryAnnotation>,
    /// No QRS complex was found, so nothing was emitted.
    pub no_qrs: bool,
}

/// Minimum region length in samples at `fs`.
pub fn min_wave_samples(fs: f64) -> usize {
    (MIN_WAVE_SECONDS * fs).round() as usize
}

pub fn intervals_from_labels(labels: &[u8]) -> Vec<WaveInterval> {
    runs(labels)
        .into_iter()
        .map(|(c, s, e)| WaveInterval::new(Class::from_id(c).expect("valid class id"), s, e))
        .collect()
}

pub fn labels_from_intervals(intervals: &[WaveInterval]) -> Vec<u8> {
    let mut out = Vec::new();
    for iv in intervals {
        out.resize(iv.end, iv.class.id());
    }
    out
}

/// Connected runs of the per-sample argmax, none-runs included.
pub fn extract_intervals(mask: &SegmentationMask) -> Vec<WaveInterval> {
    intervals_from_labels(&mask.argmax())
}

/// Remove wave regions shorter than `min_len` samples.
///
/// The shortest such region (leftmost on ties) is handled first: if its two
/// neighbours share a class it takes that class and the three merge,
/// otherwise it becomes none and merges with adjacent none-runs. Regions at
/// either end have one neighbour and always become none. Repeats until no
/// short wave region is left. Short none-runs are left alone.
pub fn denoise(intervals: &[WaveInterval], min_len: usize) -> Vec<WaveInterval> {
    let mut map: BTreeMap<usize, (usize, Class)> = intervals.iter().map(|iv| (iv.start, (iv.end, iv.class))).collect();
    let is_short = |len: usize, c: Class| c != Class::None && len < min_len;
    let mut short: BTreeSet<(usize, usize)> = intervals
        .iter()
        .filter(|iv| is_short(iv.len(), iv.class))
        .map(|iv| (iv.len(), iv.start))
        .collect();

    while let Some((_, start)) = short.pop_first() {
        let (end, _) = map[&start];
        let prev = map.range(..start).next_back().map(|(&s, &(e, c))| (s, e, c));
        let next = map.get(&end).map(|&(e, c)| (end, e, c));
        let class = match (prev, next) {
            (Some(p), Some(n)) if p.2 == n.2 => p.2,
            _ => Class::None,
        };
        let mut lo = start;
        let mut hi = end;
        for nb in [prev, next].into_iter().flatten() {
            if nb.2 == class {
                map.remove(&nb.0);
                short.remove(&(nb.1 - nb.0, nb.0));
                lo = lo.min(nb.0);
                hi = hi.max(nb.1);
            }
        }
        map.remove(&start);
        map.insert(lo, (hi, class));
        if is_short(hi - lo, class) {
            short.insert((hi - lo, lo));
        }
    }
    map.into_iter().map(|(s, (e, c))| WaveInterval::new(c, s, e)).collect()
}

fn longest(gap: &[WaveInterval], class: Class) -> Option<WaveInterval> {
    let mut best: Option<WaveInterval> = None;
    for iv in gap.iter().filter(|iv| iv.class == class) {
        if best.is_none_or(|b| iv.len() > b.len()) {
            best = Some(*iv);
        }
    }
    best
}

/// Keep every QRS, the longest P and T between consecutive QRS complexes,
/// the longest P before the first QRS and the longest T after the last one.
/// Ties go to the earliest interval. Without any QRS nothing is kept.
pub fn select_intervals(intervals: &[WaveInterval]) -> Vec<WaveInterval> {
    let qrs: Vec<usize> = (0..intervals.len()).filter(|&i| intervals[i].class == Class::Qrs).collect();
    let (Some(&first), Some(&last)) = (qrs.first(), qrs.last()) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    out.extend(longest(&intervals[..first], Class::P));
    for (k, &q) in qrs.iter().enumerate() {
        out.push(intervals[q]);
        let gap_end = qrs.get(k + 1).copied().unwrap_or(intervals.len());
        let gap = &intervals[q + 1..gap_end];
        let t = longest(gap, Class::T);
        let p = if q == last { None } else { longest(gap, Class::P) };
        let mut pair: Vec<WaveInterval> = t.into_iter().chain(p).collect();
        pair.sort_by_key(|iv| iv.start);
        out.extend(pair);
    }
    out
}

/// Boundary events of selected intervals: onset at the first sample, offset at
/// the last.
pub fn interval_boundaries(selected: &[WaveInterval], lead: &str) -> Vec<BoundaryAnnotation> {
    let mut out = Vec::with_capacity(selected.len() * 2);
    for iv in selected {
        if let Some(w) = iv.class.wave() {
            out.push(BoundaryAnnotation::new(w, BoundaryKind::Onset, iv.start, lead));
            out.push(BoundaryAnnotation::new(w, BoundaryKind::Offset, iv.end - 1, lead));
        }
    }
    out
}

pub fn select_waves(intervals: &[WaveInterval], lead: &str) -> Delineation {
    let selected = select_intervals(intervals);
    Delineation {
        no_qrs: selected.is_empty(),
        boundaries: interval_boundaries(&selected, lead),
    }
}

/// Zero the P channel when the classifier favours afib/flutter and
/// renormalize each column. A column left with no mass becomes pure none.
pub fn apply_guidance(mask: &SegmentationMask, classifier: &ClassifierOutput) -> SegmentationMask {
    let mut out = mask.clone();
    if !classifier.is_afib() {
        return out;
    }
    let p = Class::P as usize;
    out.channel_mut(p).fill(0.0);
    for t in 0..out.len() {
        let sum: f32 = (0..N_CLASSES).map(|c| out.get(c, t)).sum();
        if sum > 0.0 {
            for c in 0..N_CLASSES {
                let v = out.get(c, t) / sum;
                out.channel_mut(c)[t] = v;
            }
        } else {
            out.channel_mut(Class::None as usize)[t] = 1.0;
        }
    }
    out
}

/// Full post-processing of one mask.
pub fn delineate_mask(mask: &SegmentationMask, fs: f64, lead: &str) -> Delineation {
    let intervals = denoise(&extract_intervals(mask), min_wave_samples(fs));
    select_waves(&intervals, lead)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::Wave;

    fn seq(parts: &[(Class, usize)]) -> Vec<WaveInterval> {
        let mut s = 0;
        parts
            .iter()
            .map(|&(c, n)| {
                s += n;
                WaveInterval::new(c, s - n, s)
            })
            .collect()
    }

    fn shape(iv: &[WaveInterval]) -> Vec<(Class, usize)> {
        iv.iter().map(|i| (i.class, i.len())).collect()
    }

    use Class::{None as N, Qrs as Q, P, T};

    #[test]
    fn three_runs() {
        let mut l = vec![0u8; 5];
        l.extend([2; 10]);
        l.extend([0; 5]);
        let iv = extract_intervals(&SegmentationMask::from_labels(&l));
        assert_eq!(shape(&iv), vec![(N, 5), (Q, 10), (N, 5)]);
    }

    #[test]
    fn uniform_mask_is_one_none_run() {
        let m = SegmentationMask::new(vec![0.25; 40], 10).unwrap();
        assert_eq!(shape(&extract_intervals(&m)), vec![(N, 10)]);
    }

    #[test]
    fn alternating_singletons() {
        let l: Vec<u8> = (0..9).map(|i| (i % 2) as u8 * 2).collect();
        assert_eq!(extract_intervals(&SegmentationMask::from_labels(&l)).len(), 9);
    }

    #[test]
    fn glue_between_equal_neighbours() {
        assert_eq!(shape(&denoise(&seq(&[(Q, 60), (P, 10), (Q, 60)]), 20)), vec![(Q, 130)]);
    }

    #[test]
    fn short_region_becomes_none() {
        assert_eq!(shape(&denoise(&seq(&[(T, 100), (P, 15), (N, 100)]), 20)), vec![(T, 100), (N, 115)]);
    }

    #[test]
    fn long_enough_region_untouched() {
        let s = seq(&[(Q, 60), (P, 25), (Q, 60)]);
        assert_eq!(denoise(&s, 20), s);
    }

    #[test]
    fn edges_and_short_none_runs() {
        assert_eq!(shape(&denoise(&seq(&[(P, 5), (T, 50), (N, 3), (T, 40), (Q, 4)]), 20)), vec![(N, 5), (T, 50), (N, 3), (T, 40), (N, 4)]);
        assert_eq!(shape(&denoise(&seq(&[(P, 5)]), 20)), vec![(N, 5)]);
        assert!(denoise(&[], 20).is_empty());
    }

    #[test]
    fn merged_short_region_is_revisited() {
        // the glued P of 13 is still short and has no equal neighbours
        assert_eq!(shape(&denoise(&seq(&[(N, 30), (P, 5), (Q, 3), (P, 5), (T, 30)]), 20)), vec![(N, 43), (T, 30)]);
    }

    #[test]
    fn longest_p_per_gap() {
        let s = seq(&[(Q, 40), (N, 10), (P, 30), (N, 10), (P, 50), (N, 10), (Q, 40)]);
        let kept = select_intervals(&s);
        assert_eq!(shape(&kept), vec![(Q, 40), (P, 50), (Q, 40)]);
    }

    #[test]
    fn missing_p_is_allowed() {
        let s = seq(&[(Q, 40), (N, 20), (T, 60), (N, 30), (Q, 40)]);
        let d = select_waves(&s, "ii");
        assert!(!d.no_qrs);
        assert!(d.boundaries.iter().all(|b| b.wave != Wave::P));
        assert_eq!(d.boundaries.len(), 6);
    }

    #[test]
    fn beat_with_t_and_p() {
        let s = seq(&[(P, 30), (N, 10), (Q, 40), (N, 20), (T, 60), (N, 30), (P, 25), (N, 10), (Q, 40), (T, 50), (P, 22)]);
        let d = select_waves(&s, "ii");
        let got: Vec<(Wave, BoundaryKind, usize)> = d.boundaries.iter().map(|b| (b.wave, b.kind, b.sample)).collect();
        use BoundaryKind::*;
        assert_eq!(
            got,
            vec![
                (Wave::P, Onset, 0),
                (Wave::P, Offset, 29),
                (Wave::Qrs, Onset, 40),
                (Wave::Qrs, Offset, 79),
                (Wave::T, Onset, 100),
                (Wave::T, Offset, 159),
                (Wave::P, Onset, 190),
                (Wave::P, Offset, 214),
                (Wave::Qrs, Onset, 225),
                (Wave::Qrs, Offset, 264),
                (Wave::T, Onset, 265),
                (Wave::T, Offset, 314),
            ]
        );
    }

    #[test]
    fn no_qrs_flag() {
        let d = select_waves(&seq(&[(P, 30), (T, 60)]), "ii");
        assert!(d.no_qrs && d.boundaries.is_empty());
    }

    #[test]
    fn ties_keep_earliest() {
        let s = seq(&[(Q, 40), (T, 30), (N, 5), (T, 30), (Q, 40)]);
        assert_eq!(select_intervals(&s)[1].start, 40);
    }

    fn mask_with_p() -> SegmentationMask {
        SegmentationMask::new(vec![0.1, 0.4, 0.0, 0.5, 0.6, 1.0, 0.2, 0.0, 0.0, 0.2, 0.0, 0.0], 3).unwrap()
    }

    #[test]
    fn guidance_suppresses_p() {
        let g = apply_guidance(&mask_with_p(), &ClassifierOutput::new(0.9, 0.1));
        assert!(g.channel(1).iter().all(|&v| v == 0.0));
        assert!(g.max_column_error() < 1e-6);
        assert!(g.argmax().iter().all(|&c| c != 1));
        assert_eq!(g.get(0, 2), 1.0, "column with only P mass becomes none");
    }

    #[test]
    fn guidance_identity_for_other() {
        let m = mask_with_p();
        assert_eq!(apply_guidance(&m, &ClassifierOutput::new(0.1, 0.9)), m);
        assert_eq!(apply_guidance(&m, &ClassifierOutput::new(0.5, 0.5)), m);
        let no_p = SegmentationMask::from_labels(&[0, 2, 3]);
        assert_eq!(apply_guidance(&no_p, &ClassifierOutput::new(0.9, 0.1)), no_p);
    }
}
