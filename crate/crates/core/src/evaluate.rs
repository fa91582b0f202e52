//! Tolerance matching of predicted against reference boundaries and the
//! derived sensitivity, positive predictive value and F1 score.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::record::{AnnotationSet, BoundaryKind, BoundaryType, Wave, GLOBAL_LEAD};

/// Matching neighbourhood in milliseconds.
pub const TOLERANCE_MS: f64 = 150.0;
/// A prediction with no reference of any type this close is ignored under the
/// QT-database convention.
pub const QTDB_EXCLUSION_MS: f64 = 300.0;

/// Counts and signed deviations (predicted minus reference, ms) for one boundary type.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub deviations: Vec<f64>,
}

impl MatchResult {
    pub fn merge(&mut self, other: &MatchResult) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.deviations.extend_from_slice(&other.deviations);
    }

    pub fn swapped(&self) -> MatchResult {
        MatchResult {
            tp: self.tp,
            fp: self.fn_,
            fn_: self.fp,
            deviations: self.deviations.iter().map(|d| -d).collect(),
        }
    }
}

/// Pairs `(pred index, ref index)` of a one-to-one matching with every
/// `|pred - ref| <= tol`.
///
/// The matching has the largest possible number of pairs and, among those,
/// the smallest total absolute deviation. Both inputs must be sorted.
pub fn match_pairs(pred: &[f64], refs: &[f64], tol: f64) -> Vec<(usize, usize)> {
    debug_assert!(pred.windows(2).all(|w| w[0] <= w[1]) && refs.windows(2).all(|w| w[0] <= w[1]));
    let mut pairs = Vec::new();
    // Split at gaps wider than the tolerance; no pair can straddle one.
    let (mut i0, mut j0) = (0, 0);
    while i0 < pred.len() && j0 < refs.len() {
        let (mut i1, mut j1) = (i0, j0);
        let mut reach = f64::NEG_INFINITY;
        loop {
            let next_p = pred.get(i1).copied();
            let next_r = refs.get(j1).copied();
            let take_p = match (next_p, next_r) {
                (Some(p), Some(r)) => p <= r,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => break,
            };
            let v = if take_p { next_p.unwrap() } else { next_r.unwrap() };
            if i1 + j1 > i0 + j0 && v - reach > tol {
                break;
            }
            reach = v;
            if take_p {
                i1 += 1;
            } else {
                j1 += 1;
            }
        }
        component_pairs(&pred[i0..i1], &refs[j0..j1], tol, &mut |a, b| pairs.push((i0 + a, j0 + b)));
        i0 = i1;
        j0 = j1;
    }
    pairs
}

/// Order-preserving dynamic program: crossing pairs can always be uncrossed
/// without losing a pair or increasing the total deviation.
fn component_pairs(p: &[f64], r: &[f64], tol: f64, emit: &mut dyn FnMut(usize, usize)) {
    let (n, m) = (p.len(), r.len());
    if n == 0 || m == 0 {
        return;
    }
    // best[i][j]: (pairs, -cost) over p[i..], r[j..]
    let w = m + 1;
    let mut best = vec![(0usize, 0.0f64); (n + 1) * w];
    let better = |a: (usize, f64), b: (usize, f64)| a.0 > b.0 || (a.0 == b.0 && a.1 < b.1);
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            let mut v = best[(i + 1) * w + j];
            let skip_r = best[i * w + j + 1];
            if better(skip_r, v) {
                v = skip_r;
            }
            let d = (p[i] - r[j]).abs();
            if d <= tol {
                let nxt = best[(i + 1) * w + j + 1];
                let take = (nxt.0 + 1, nxt.1 + d);
                if better(take, v) {
                    v = take;
                }
            }
            best[i * w + j] = v;
        }
    }
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        let here = best[i * w + j];
        let d = (p[i] - r[j]).abs();
        if d <= tol {
            let nxt = best[(i + 1) * w + j + 1];
            if here == (nxt.0 + 1, nxt.1 + d) {
                emit(i, j);
                i += 1;
                j += 1;
                continue;
            }
        }
        if best[(i + 1) * w + j] == here {
            i += 1;
        } else {
            j += 1;
        }
    }
}

/// Match one boundary type; times in milliseconds, both lists sorted.
pub fn match_boundaries(pred: &[f64], refs: &[f64], tol: f64) -> MatchResult {
    let pairs = match_pairs(pred, refs, tol);
    MatchResult {
        tp: pairs.len(),
        fp: pred.len() - pairs.len(),
        fn_: refs.len() - pairs.len(),
        deviations: pairs.iter().map(|&(i, j)| pred[i] - refs[j]).collect(),
    }
}

/// Scores for one boundary type; `None` marks an empty denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub mean_ms: Option<f64>,
    pub std_ms: Option<f64>,
    pub se: Option<f64>,
    pub ppv: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

/// Mean and population standard deviation of the deviations; F1 from counts,
/// `2 TP / (2 TP + FP + FN)`.
pub fn metrics(m: &MatchResult) -> BoundaryMetrics {
    let (mean, std) = if m.deviations.is_empty() {
        (None, None)
    } else {
        let n = m.deviations.len() as f64;
        let mean = m.deviations.iter().sum::<f64>() / n;
        let var = m.deviations.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        (Some(mean), Some(var.sqrt()))
    };
    BoundaryMetrics {
        tp: m.tp,
        fp: m.fp,
        fn_: m.fn_,
        mean_ms: mean,
        std_ms: std,
        se: ratio(m.tp, m.tp + m.fn_),
        ppv: ratio(m.tp, m.tp + m.fp),
        f1: ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn_),
    }
}

/// Harmonic mean of sensitivity and positive predictive value.
pub fn f1_from_rates(se: f64, ppv: f64) -> Option<f64> {
    (se + ppv > 0.0).then(|| 2.0 * se * ppv / (se + ppv))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Convention {
    #[default]
    Generic,
    Qtdb,
    Ludb,
}

impl FromStr for Convention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "generic" => Ok(Convention::Generic),
            "qtdb" => Ok(Convention::Qtdb),
            "ludb" => Ok(Convention::Ludb),
            other => Err(format!("unknown dataset convention {other:?} (generic, qtdb, ludb)")),
        }
    }
}

impl Convention {
    /// Boundary types scored under this convention; the QT database has no T onsets.
    pub fn boundary_types(self) -> Vec<BoundaryType> {
        BoundaryType::ALL
            .into_iter()
            .filter(|t| self != Convention::Qtdb || *t != BoundaryType::new(Wave::T, BoundaryKind::Onset))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub tolerance_ms: f64,
    pub qtdb_exclusion_ms: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            tolerance_ms: TOLERANCE_MS,
            qtdb_exclusion_ms: QTDB_EXCLUSION_MS,
        }
    }
}

/// Match results per boundary type, mergeable across records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalCounts {
    pub by_type: BTreeMap<BoundaryType, MatchResult>,
}

impl EvalCounts {
    pub fn merge(&mut self, other: &EvalCounts) {
        for (t, m) in &other.by_type {
            self.by_type.entry(*t).or_default().merge(m);
        }
    }

    pub fn get(&self, t: BoundaryType) -> MatchResult {
        self.by_type.get(&t).cloned().unwrap_or_default()
    }

    pub fn report(&self, types: &[BoundaryType]) -> MetricsReport {
        MetricsReport {
            rows: types.iter().map(|&t| (t, metrics(&self.get(t)))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<(BoundaryType, BoundaryMetrics)>,
}

impl MetricsReport {
    pub fn get(&self, t: BoundaryType) -> Option<&BoundaryMetrics> {
        self.rows.iter().find(|(ty, _)| *ty == t).map(|(_, m)| m)
    }

    pub fn to_csv(&self, group: &str) -> String {
        let mut out = String::new();
        for (t, m) in &self.rows {
            out.push_str(&format!(
                "{group},{},{},{},{},{},{},{},{},{},{}\n",
                t.wave,
                t.kind,
                m.tp,
                m.fp,
                m.fn_,
                opt(m.mean_ms, 3),
                opt(m.std_ms, 3),
                opt(m.se, 6),
                opt(m.ppv, 6),
                opt(m.f1, 6)
            ));
        }
        out
    }

    pub const CSV_HEADER: &'static str = "group,wave,kind,tp,fp,fn,mean_ms,std_ms,se,ppv,f1";
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.digits$}"))
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "   n/a".to_string(), |x| format!("{:6.2}", x * 100.0))
}

fn ms(v: Option<f64>) -> String {
    v.map_or_else(|| "    n/a".to_string(), |x| format!("{x:7.2}"))
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>6} {:>6} {:>6} {:>7} {:>7} {:>6} {:>6} {:>6}", "boundary", "TP", "FP", "FN", "m(ms)", "s(ms)", "Se%", "PPV%", "F1%")?;
        for (t, m) in &self.rows {
            writeln!(
                f,
                "{:<12} {:>6} {:>6} {:>6} {} {} {} {} {}",
                t.to_string(),
                m.tp,
                m.fp,
                m.fn_,
                ms(m.mean_ms),
                ms(m.std_ms),
                pct(m.se),
                pct(m.ppv),
                pct(m.f1)
            )?;
        }
        Ok(())
    }
}

fn times(set: &AnnotationSet, lead: &str, t: BoundaryType) -> Vec<f64> {
    let mut v: Vec<f64> = set
        .items
        .iter()
        .filter(|a| a.boundary_type() == t && (a.lead.eq_ignore_ascii_case(lead) || a.lead == GLOBAL_LEAD))
        .map(|a| a.sample as f64 * 1000.0 / set.source_fs)
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

fn leads_of(set: &AnnotationSet) -> BTreeSet<String> {
    set.items
        .iter()
        .filter(|a| a.lead != GLOBAL_LEAD)
        .map(|a| a.lead.to_ascii_lowercase())
        .collect()
}

/// Score one record. `leads` restricts which predicted leads are scored
/// (empty: every lead present in either set).
pub fn evaluate_record(
    pred: &AnnotationSet,
    reference: &AnnotationSet,
    convention: Convention,
    leads: &[String],
    opts: &EvalOptions,
) -> EvalCounts {
    let mut lead_set: BTreeSet<String> = if leads.is_empty() {
        leads_of(pred).union(&leads_of(reference)).cloned().collect()
    } else {
        leads.iter().map(|l| l.to_ascii_lowercase()).collect()
    };
    if lead_set.is_empty() {
        lead_set.insert(GLOBAL_LEAD.to_string());
    }
    let lead_list: Vec<String> = lead_set.into_iter().collect();
    match convention {
        Convention::Qtdb => evaluate_qtdb(pred, reference, &lead_list, opts),
        Convention::Generic | Convention::Ludb => {
            let mut counts = EvalCounts::default();
            for lead in &lead_list {
                let span = (convention == Convention::Ludb).then(|| annotated_span(reference, lead, opts.tolerance_ms)).flatten();
                for t in convention.boundary_types() {
                    let mut p = times(pred, lead, t);
                    if let Some((lo, hi)) = span {
                        p.retain(|&x| x >= lo && x <= hi);
                    } else if convention == Convention::Ludb {
                        p.clear();
                    }
                    let r = times(reference, lead, t);
                    counts.by_type.entry(t).or_default().merge(&match_boundaries(&p, &r, opts.tolerance_ms));
                }
            }
            counts
        }
    }
}

/// Time range covered by a lead's reference annotations, widened by the tolerance.
fn annotated_span(reference: &AnnotationSet, lead: &str, tol: f64) -> Option<(f64, f64)> {
    let all: Vec<f64> = BoundaryType::ALL.iter().flat_map(|&t| times(reference, lead, t)).collect();
    let lo = all.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo <= hi).then(|| (lo - tol, hi + tol))
}

/// QT-database scoring over (up to) two leads against lead-independent references.
///
/// Predictions with no reference boundary of any type within the exclusion
/// radius are dropped. Each reference point takes the deviation of whichever
/// lead matched it more closely; false positives are the smaller count of the
/// two leads.
pub fn evaluate_qtdb(pred: &AnnotationSet, reference: &AnnotationSet, leads: &[String], opts: &EvalOptions) -> EvalCounts {
    let leads: Vec<&String> = leads.iter().filter(|l| l.as_str() != GLOBAL_LEAD).take(2).collect();
    if leads.len() < 2 {
        log::warn!("record {}: fewer than two leads, scoring a single lead", pred.record_id);
    }
    let all_refs: Vec<f64> = {
        let mut v: Vec<f64> = reference.items.iter().map(|a| a.sample as f64 * 1000.0 / reference.source_fs).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let near_ref = |x: f64| {
        let k = all_refs.partition_point(|&r| r < x - opts.qtdb_exclusion_ms);
        all_refs.get(k).is_some_and(|&r| r <= x + opts.qtdb_exclusion_ms)
    };
    let mut counts = EvalCounts::default();
    for t in Convention::Qtdb.boundary_types() {
        // Reference times are lead independent; use every item of the type.
        let mut r: Vec<f64> = reference
            .items
            .iter()
            .filter(|a| a.boundary_type() == t)
            .map(|a| a.sample as f64 * 1000.0 / reference.source_fs)
            .collect();
        r.sort_by(f64::total_cmp);
        let per_lead: Vec<(Vec<f64>, Vec<(usize, usize)>)> = if leads.is_empty() {
            vec![(Vec::new(), Vec::new())]
        } else {
            leads
                .iter()
                .map(|lead| {
                    let mut p: Vec<f64> = pred
                        .items
                        .iter()
                        .filter(|a| a.boundary_type() == t && a.lead.eq_ignore_ascii_case(lead))
                        .map(|a| a.sample as f64 * 1000.0 / pred.source_fs)
                        .collect();
                    p.sort_by(f64::total_cmp);
                    p.retain(|&x| near_ref(x));
                    let pairs = match_pairs(&p, &r, opts.tolerance_ms);
                    (p, pairs)
                })
                .collect()
        };
        let mut best: Vec<Option<f64>> = vec![None; r.len()];
        for (p, pairs) in &per_lead {
            for &(i, j) in pairs {
                let d = p[i] - r[j];
                if best[j].is_none_or(|b: f64| d.abs() < b.abs()) {
                    best[j] = Some(d);
                }
            }
        }
        let deviations: Vec<f64> = best.iter().flatten().copied().collect();
        let fp = per_lead.iter().map(|(p, pairs)| p.len() - pairs.len()).min().unwrap_or(0);
        counts.by_type.insert(
            t,
            MatchResult {
                tp: deviations.len(),
                fp,
                fn_: r.len() - deviations.len(),
                deviations,
            },
        );
    }
    counts
}

/// Pooled scores per group plus an `"All"` row. Groups with no records still
/// appear when listed in `groups` and report undefined metrics.
pub fn evaluate_by_group(
    records: &[(String, EvalCounts)],
    groups: &[String],
    types: &[BoundaryType],
) -> Vec<(String, MetricsReport)> {
    let mut per: BTreeMap<String, EvalCounts> = groups.iter().map(|g| (g.clone(), EvalCounts::default())).collect();
    let mut all = EvalCounts::default();
    for (g, c) in records {
        per.entry(g.clone()).or_default().merge(c);
        all.merge(c);
    }
    let mut out: Vec<(String, MetricsReport)> = per.into_iter().map(|(g, c)| (g, c.report(types))).collect();
    out.push(("All".to_string(), all.report(types)));
    out
}

/// Score predicted sets against references record by record. Records are
/// paired by id; a reference with no predictions scores as all misses.
/// `group_of` names the group of each record (`None` pools it in "All" only).
pub fn evaluate_sets(
    pred: &[AnnotationSet],
    reference: &[AnnotationSet],
    convention: Convention,
    leads: &[String],
    opts: &EvalOptions,
    group_of: &dyn Fn(&str) -> Option<String>,
) -> Vec<(String, MetricsReport)> {
    let mut per_record = Vec::with_capacity(reference.len());
    let mut groups = BTreeSet::new();
    for r in reference {
        let empty = AnnotationSet::new(r.record_id.clone(), r.source_fs);
        let p = pred.iter().find(|p| p.record_id == r.record_id).unwrap_or(&empty);
        let counts = evaluate_record(p, r, convention, leads, opts);
        let g = group_of(&r.record_id);
        if let Some(g) = &g {
            groups.insert(g.clone());
        }
        per_record.push((g.unwrap_or_default(), counts));
    }
    let groups: Vec<String> = groups.into_iter().collect();
    let mut out = evaluate_by_group(&per_record, &groups, &convention.boundary_types());
    out.retain(|(g, _)| !g.is_empty());
    out
}
