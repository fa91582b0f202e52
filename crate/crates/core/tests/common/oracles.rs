//! Independent reference implementations used as test oracles. They work on
//! plain arrays and favour obviousness over speed.
#![allow(dead_code)]

/// `(class, onset, offset)` triples with offset the last sample of the run.
pub type Boundary = (u8, usize, usize);

fn runs_of(labels: &[u8]) -> Vec<(u8, usize, usize)> {
    let mut out: Vec<(u8, usize, usize)> = Vec::new();
    for (i, &c) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(last) if last.0 == c => last.2 = i + 1,
            _ => out.push((c, i, i + 1)),
        }
    }
    out
}

/// Rewrite short wave runs in place until none is left.
pub fn brute_denoise(labels: &mut [u8], min_len: usize) {
    loop {
        let r = runs_of(labels);
        let mut pick: Option<usize> = None;
        for (k, &(c, s, e)) in r.iter().enumerate() {
            if c == 0 || e - s >= min_len {
                continue;
            }
            match pick {
                Some(p) if r[p].2 - r[p].1 <= e - s => {}
                _ => pick = Some(k),
            }
        }
        let Some(k) = pick else { return };
        let (_, s, e) = r[k];
        let left = if k > 0 { Some(r[k - 1].0) } else { None };
        let right = r.get(k + 1).map(|x| x.0);
        let new = match (left, right) {
            (Some(a), Some(b)) if a == b => a,
            _ => 0,
        };
        for x in &mut labels[s..e] {
            *x = new;
        }
    }
}

/// Every QRS run; per stretch between two QRS runs the longest P and the
/// longest T (earliest on ties); the longest P before the first QRS and the
/// longest T after the last.
pub fn brute_select(labels: &[u8]) -> Vec<Boundary> {
    let r = runs_of(labels);
    let n_qrs = r.iter().filter(|x| x.0 == 2).count();
    if n_qrs == 0 {
        return Vec::new();
    }
    // stretch index = number of QRS runs before the run
    let stretch = |k: usize| r[..k].iter().filter(|x| x.0 == 2).count();
    let mut out = Vec::new();
    for (k, &(c, s, e)) in r.iter().enumerate() {
        let keep = match c {
            2 => true,
            1 | 3 => {
                let st = stretch(k);
                let allowed = if c == 1 { st < n_qrs } else { st >= 1 };
                let rivals_ok = r.iter().enumerate().all(|(k2, &(c2, s2, e2))| {
                    if k2 == k || c2 != c || stretch(k2) != st {
                        return true;
                    }
                    let (l, l2) = (e - s, e2 - s2);
                    l > l2 || (l == l2 && s < s2)
                });
                allowed && rivals_ok
            }
            _ => false,
        };
        if keep {
            out.push((c, s, e - 1));
        }
    }
    out
}

pub fn brute_postprocess(labels: &[u8], min_len: usize) -> Vec<Boundary> {
    let mut l = labels.to_vec();
    brute_denoise(&mut l, min_len);
    brute_select(&l)
}

/// Maximum-cardinality bipartite matching by augmenting paths.
pub fn kuhn_max_matching(pred: &[f64], refs: &[f64], tol: f64) -> usize {
    fn augment(i: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &j in &adj[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none() || augment(owner[j].unwrap(), adj, seen, owner) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    let adj: Vec<Vec<usize>> = pred
        .iter()
        .map(|&p| (0..refs.len()).filter(|&j| (p - refs[j]).abs() <= tol).collect())
        .collect();
    let mut owner = vec![None; refs.len()];
    (0..pred.len())
        .filter(|&i| augment(i, &adj, &mut vec![false; refs.len()], &mut owner))
        .count()
}

/// Learnable scalars from layer shapes: bias-free conv blocks with batch norm
/// over five encoder levels, four full-scale decoder levels with kernel-1
/// source convs and a fusion block, a kernel-1 head over four classes and the
/// optional rhythm classifier `(filters, kernel)`.
pub fn param_count_formula(widths: [usize; 5], kernel: usize, skip: usize, classifier: Option<(usize, usize)>) -> usize {
    let block = |ci: usize, co: usize, k: usize| ci * co * k + 2 * co;
    let mut total = 0;
    let mut ci = 1;
    for &w in &widths {
        total += block(ci, w, kernel) + block(w, w, kernel);
        ci = w;
    }
    let fused = 5 * skip;
    for d in 0..4 {
        for k in 0..5 {
            let w = if k <= d || k == 4 { widths[k] } else { fused };
            total += block(w, skip, 1);
        }
        total += block(fused, fused, kernel);
    }
    total += fused * 4 + 4;
    if let Some((f, k)) = classifier {
        total += block(widths.iter().sum(), f, k) + block(f, f, k) + f * 2 + 2;
    }
    total
}
