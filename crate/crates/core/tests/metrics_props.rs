mod common;

use common::{oracle_binary, one_vs_rest, random_records, rng};
use fairsketch::metrics::{
    self, audit, average_odds_difference, equal_opportunity_difference, equalized_odds_difference,
    group_confusion, per_group_prf, statistical_parity_difference, FprMode, Group, PredictionLog, PredictionRecord,
};
use proptest::prelude::*;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

fn check(lib: Result<f64, metrics::MetricError>, oracle: Option<f64>, what: &str) {
    match (lib, oracle) {
        (Ok(a), Some(b)) => assert!(close(a, b), "{what}: {a} vs {b}"),
        (Err(_), None) => {}
        (l, o) => panic!("{what}: library {l:?}, oracle {o:?}"),
    }
}

#[test]
fn binary_metrics_match_enumeration_oracle() {
    let mut r = rng(1234);
    for _ in 0..500 {
        let n = r.random_range(1..=16);
        let log = PredictionLog::new(random_records(&mut r, n, 2), 2).unwrap();
        let o = oracle_binary(log.records(), 1);
        check(statistical_parity_difference(&log, 1), o.spd, "spd");
        check(equal_opportunity_difference(&log, 1), o.eod, "eod");
        check(equalized_odds_difference(&log, 1), o.deo, "deo");
        check(average_odds_difference(&log, 1, FprMode::Standard), o.aod_standard, "aod");
        check(average_odds_difference(&log, 1, FprMode::AsWritten), o.aod_as_written, "aod as written");
        let prf = per_group_prf(&log, 1).unwrap();
        assert_eq!(prf.len(), o.prf.len());
        for (g, want) in &o.prf {
            let got = &prf[g];
            assert!(close(got.precision, want.precision) && close(got.recall, want.recall) && close(got.f1, want.f1));
        }
    }
}

use rand::Rng;

#[test]
fn group_confusion_matches_tally() {
    let mut r = rng(5);
    let recs = random_records(&mut r, 200, 2);
    let log = PredictionLog::new(recs.clone(), 2).unwrap();
    let conf = group_confusion(&log, 1).unwrap();
    for g in Group::ALL {
        let mut tally = [0u64; 4];
        for rec in recs.iter().filter(|x| x.z == g) {
            let idx = match (rec.y_true == 1, rec.y_pred == 1) {
                (true, true) => 0,
                (false, true) => 1,
                (false, false) => 2,
                (true, false) => 3,
            };
            tally[idx] += 1;
        }
        let c = &conf[&g];
        assert_eq!([c.tp, c.fp, c.tn, c.fn_], tally);
        assert_eq!(c.n, tally.iter().sum::<u64>());
    }
}

#[test]
fn multiclass_audit_is_mean_of_one_vs_rest() {
    let mut r = rng(77);
    let recs = random_records(&mut r, 400, 7);
    let log = PredictionLog::new(recs.clone(), 7).unwrap();
    let report = audit(&log, 1, FprMode::Standard).unwrap();
    let per_class: Vec<_> = (0..7).map(|c| oracle_binary(&one_vs_rest(&recs, c), 1)).collect();
    let mean = |f: &dyn Fn(&common::OracleMetrics) -> Option<f64>| {
        per_class.iter().map(|o| f(o).unwrap()).sum::<f64>() / 7.0
    };
    assert!(close(report.spd, mean(&|o| o.spd)));
    assert!(close(report.eod, mean(&|o| o.eod)));
    assert!(close(report.deo, mean(&|o| o.deo)));
    assert!(close(report.aod, mean(&|o| o.aod_standard)));

    // per-group macro PRF over the classes present in each group
    for g in Group::ALL {
        let members: Vec<PredictionRecord> = recs.iter().filter(|x| x.z == g).cloned().collect();
        let present: Vec<usize> = (0..7)
            .filter(|&c| members.iter().any(|m| m.y_true == c || m.y_pred == c))
            .collect();
        let mut sums = [0.0; 3];
        for &c in &present {
            let o = oracle_binary(&one_vs_rest(&members, c), 1);
            let p = o.prf[0].1;
            sums[0] += p.precision;
            sums[1] += p.recall;
            sums[2] += p.f1;
        }
        let k = present.len() as f64;
        let got = &report.per_group[&g];
        assert!(close(got.precision, sums[0] / k));
        assert!(close(got.recall, sums[1] / k));
        assert!(close(got.f1, sums[2] / k));
    }
}

#[test]
fn audit_fields_equal_standalone_operations() {
    let mut r = rng(9);
    let mut done = 0;
    while done < 50 {
        let log = PredictionLog::new(random_records(&mut r, 16, 2), 2).unwrap();
        let Ok(report) = audit(&log, 1, FprMode::Standard) else {
            continue;
        };
        assert_eq!(report.spd, statistical_parity_difference(&log, 1).unwrap());
        assert_eq!(report.eod, equal_opportunity_difference(&log, 1).unwrap());
        assert_eq!(report.deo, equalized_odds_difference(&log, 1).unwrap());
        assert_eq!(report.aod, average_odds_difference(&log, 1, FprMode::Standard).unwrap());
        assert_eq!(report.accuracy, metrics::accuracy(&log));
        done += 1;
    }
}

fn record_strategy() -> impl Strategy<Value = PredictionRecord> {
    (0usize..2, 0usize..2, any::<bool>()).prop_map(|(y, yhat, z)| {
        PredictionRecord::new("", y, yhat, if z { Group::Protected } else { Group::Unprotected })
    })
}

/// Logs where every (y, z) cell is occupied, so all metrics are defined.
fn full_log() -> impl Strategy<Value = Vec<PredictionRecord>> {
    let anchors = (0usize..2, 0usize..2, 0usize..2, 0usize..2).prop_map(|(a, b, c, d)| {
        vec![
            PredictionRecord::new("", 0, a, Group::Unprotected),
            PredictionRecord::new("", 1, b, Group::Unprotected),
            PredictionRecord::new("", 0, c, Group::Protected),
            PredictionRecord::new("", 1, d, Group::Protected),
        ]
    });
    (anchors, prop::collection::vec(record_strategy(), 0..12)).prop_map(|(mut a, rest)| {
        a.extend(rest);
        a
    })
}

fn all_metrics(recs: Vec<PredictionRecord>) -> [f64; 5] {
    let log = PredictionLog::new(recs, 2).unwrap();
    [
        statistical_parity_difference(&log, 1).unwrap(),
        equal_opportunity_difference(&log, 1).unwrap(),
        equalized_odds_difference(&log, 1).unwrap(),
        average_odds_difference(&log, 1, FprMode::Standard).unwrap(),
        average_odds_difference(&log, 1, FprMode::AsWritten).unwrap(),
    ]
}

proptest! {
    #[test]
    fn metrics_stay_in_range(recs in full_log()) {
        let [spd, eod, deo, aod, aod_w] = all_metrics(recs);
        for v in [spd, eod, deo, aod] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!((-0.5..=0.5).contains(&aod_w));
        prop_assert!(eod <= deo && aod <= deo);
    }

    #[test]
    fn swapping_groups_changes_nothing(recs in full_log()) {
        let swapped = recs.iter().cloned().map(|mut r| { r.z = r.z.other(); r }).collect();
        prop_assert_eq!(all_metrics(recs), all_metrics(swapped));
    }

    #[test]
    fn record_order_is_irrelevant(recs in full_log(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = recs.clone();
        shuffled.shuffle(&mut rng(seed));
        let a = all_metrics(recs);
        let b = all_metrics(shuffled);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(close(*x, *y));
        }
    }

    #[test]
    fn flipping_predictions_keeps_spd(recs in full_log()) {
        let flipped: Vec<_> = recs.iter().cloned().map(|mut r| { r.y_pred = 1 - r.y_pred; r }).collect();
        let a = statistical_parity_difference(&PredictionLog::new(recs, 2).unwrap(), 1).unwrap();
        let b = statistical_parity_difference(&PredictionLog::new(flipped, 2).unwrap(), 1).unwrap();
        prop_assert!(close(a, b));
    }

    #[test]
    fn identical_group_distributions_give_zero(cells in prop::collection::vec(record_strategy(), 0..8), anchors in full_log()) {
        // mirror one set of (y, ŷ) pairs into both groups
        let base: Vec<(usize, usize)> = anchors.iter().chain(&cells).map(|r| (r.y_true, r.y_pred)).collect();
        let recs: Vec<_> = base
            .iter()
            .flat_map(|&(y, p)| Group::ALL.map(|g| PredictionRecord::new("", y, p, g)))
            .collect();
        for v in all_metrics(recs) {
            prop_assert_eq!(v, 0.0);
        }
    }
}

#[test]
fn missing_group_is_reported() {
    let recs = (0..8).map(|i| PredictionRecord::new("", i % 2, 1, Group::Protected)).collect();
    let log = PredictionLog::new(recs, 2).unwrap();
    let conf = group_confusion(&log, 1).unwrap();
    assert_eq!(conf.keys().copied().collect::<Vec<_>>(), [Group::Protected]);
    assert!(matches!(
        statistical_parity_difference(&log, 1),
        Err(metrics::MetricError::MissingGroup { .. })
    ));
}
