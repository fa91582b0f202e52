mod common;

use common::oracles::kuhn_max_matching;
use ecgseg::evaluate::{f1_from_rates, match_boundaries, match_pairs, metrics, TOLERANCE_MS};
use proptest::prelude::*;

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn points() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..3000.0, 0..=20).prop_map(sorted)
}

/// Integer millisecond grids make exact-tolerance ties common.
fn grid_points() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0u32..60).prop_map(|x| x as f64 * 50.0), 0..=20).prop_map(sorted)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cardinality_is_maximum(p in points(), r in points()) {
        prop_assert_eq!(match_boundaries(&p, &r, TOLERANCE_MS).tp, kuhn_max_matching(&p, &r, TOLERANCE_MS));
    }

    #[test]
    fn cardinality_is_maximum_with_ties(p in grid_points(), r in grid_points()) {
        prop_assert_eq!(match_boundaries(&p, &r, TOLERANCE_MS).tp, kuhn_max_matching(&p, &r, TOLERANCE_MS));
    }

    #[test]
    fn pairs_are_one_to_one_and_within_tolerance(p in grid_points(), r in grid_points()) {
        let pairs = match_pairs(&p, &r, TOLERANCE_MS);
        let mut pi: Vec<usize> = pairs.iter().map(|x| x.0).collect();
        let mut ri: Vec<usize> = pairs.iter().map(|x| x.1).collect();
        pi.dedup();
        ri.dedup();
        prop_assert_eq!(pi.len(), pairs.len());
        prop_assert_eq!(ri.len(), pairs.len());
        prop_assert!(pairs.iter().all(|&(i, j)| (p[i] - r[j]).abs() <= TOLERANCE_MS));
    }

    #[test]
    fn swap_symmetry(p in points(), r in points()) {
        let a = match_boundaries(&p, &r, TOLERANCE_MS);
        let b = match_boundaries(&r, &p, TOLERANCE_MS);
        prop_assert_eq!((a.tp, a.fp, a.fn_), (b.tp, b.fn_, b.fp));
        let mut da = a.deviations.clone();
        let mut db: Vec<f64> = b.deviations.iter().map(|d| -d).collect();
        da.sort_by(f64::total_cmp);
        db.sort_by(f64::total_cmp);
        for (x, y) in da.iter().zip(&db) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn rates_shift_invariant(p in grid_points(), r in grid_points(), shift in -5000i32..5000) {
        let s = shift as f64;
        let a = metrics(&match_boundaries(&p, &r, TOLERANCE_MS));
        let ps: Vec<f64> = p.iter().map(|x| x + s).collect();
        let rs: Vec<f64> = r.iter().map(|x| x + s).collect();
        let b = metrics(&match_boundaries(&ps, &rs, TOLERANCE_MS));
        prop_assert_eq!((a.se, a.ppv, a.f1), (b.se, b.ppv, b.f1));
    }

    #[test]
    fn f1_identity(p in points(), r in points()) {
        let m = metrics(&match_boundaries(&p, &r, TOLERANCE_MS));
        if let (Some(se), Some(ppv)) = (m.se, m.ppv) {
            if let Some(f) = f1_from_rates(se, ppv) {
                prop_assert!((f - m.f1.unwrap()).abs() <= 1e-12);
            }
            for v in [se, ppv, m.f1.unwrap()] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
