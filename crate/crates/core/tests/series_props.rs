//! Property tests for the series transforms: interpolation, windowing,
//! splitting, and standardization.

use proptest::prelude::*;

use pluvio_core::data::{
    interpolate_missing, make_samples, split_chronological, standardize, DailyRecord, Day,
    Station,
};

fn station(id: &str, alt: f64) -> Station {
    Station {
        station_id: id.to_string(),
        name: id.to_string(),
        latitude_deg: -16.0,
        longitude_deg: -68.0,
        altitude_m: alt,
    }
}

fn records_from(series: &[Option<f64>]) -> Vec<DailyRecord> {
    series
        .iter()
        .enumerate()
        .map(|(d, v)| DailyRecord {
            station_id: "A".to_string(),
            date: Day(d as i64),
            precip_mm: *v,
        })
        .collect()
}

/// A series of optional values with at least one observation.
fn arb_series() -> impl Strategy<Value = Vec<Option<f64>>> {
    proptest::collection::vec(proptest::option::of(0.0..60.0f64), 2..80)
        .prop_filter("needs one observation", |s| s.iter().any(Option::is_some))
}

proptest! {
    #[test]
    fn interpolation_is_total_and_bounded(series in arb_series()) {
        let out = interpolate_missing(records_from(&series)).unwrap();
        prop_assert_eq!(out.len(), series.len());

        let observed: Vec<f64> = series.iter().flatten().copied().collect();
        let lo = observed.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = observed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (i, r) in out.iter().enumerate() {
            let v = r.precip_mm.expect("interpolation leaves no gaps");
            // Observed points survive bit for bit; filled points stay
            // between the observed extremes (linear segments cannot
            // overshoot their endpoints).
            match series[i] {
                Some(orig) => prop_assert_eq!(v, orig),
                None => prop_assert!((lo..=hi).contains(&v), "day {}: {} not in [{},{}]", i, v, lo, hi),
            }
        }
    }

    #[test]
    fn interpolation_of_complete_series_is_identity(
        values in proptest::collection::vec(0.0..60.0f64, 2..60),
    ) {
        let series: Vec<Option<f64>> = values.iter().copied().map(Some).collect();
        let out = interpolate_missing(records_from(&series)).unwrap();
        let back: Vec<f64> = out.iter().map(|r| r.precip_mm.unwrap()).collect();
        prop_assert_eq!(back, values);
    }

    #[test]
    fn split_blocks_partition_chronologically(n in 3usize..400) {
        match split_chronological(n, (0.7, 0.2, 0.1)) {
            Ok(s) => {
                prop_assert_eq!(s.train.start, 0);
                prop_assert_eq!(s.train.end, s.val.start);
                prop_assert_eq!(s.val.end, s.test.start);
                prop_assert_eq!(s.test.end, n);
                prop_assert_eq!(s.val.len(), (n as f64 * 0.2) as usize);
                prop_assert_eq!(s.test.len(), (n as f64 * 0.1) as usize);
                prop_assert!(!s.train.is_empty());
            }
            // Small n can legitimately produce an empty block.
            Err(_) => prop_assert!(n < 10),
        }
    }

    #[test]
    fn windows_never_leak_the_target(
        n_days in 10usize..60,
        window in 1usize..8,
    ) {
        prop_assume!(n_days > window);
        // Value == day index makes leakage visible: every feature in sample
        // k must predate its target day.
        let series: Vec<Option<f64>> = (0..n_days).map(|d| Some(d as f64)).collect();
        let set = make_samples(&records_from(&series), &[station("A", 0.0)], window).unwrap();
        prop_assert_eq!(set.len(), n_days - window);
        for k in 0..set.len() {
            let target_day = set.targets[k][0];
            prop_assert_eq!(target_day, (k + window) as f64);
            for col in 0..window {
                prop_assert!(set.features[k][(0, col)] < target_day);
            }
        }
    }

    #[test]
    fn standardize_then_invert_recovers_features(
        seed_vals in proptest::collection::vec(0.0..40.0f64, 30..60),
    ) {
        let series: Vec<Option<f64>> = seed_vals.iter().copied().map(Some).collect();
        let records = records_from(&series);
        let mut set = make_samples(&records, &[station("A", 812.0)], 4).unwrap();
        let originals = set.features.clone();
        let split = split_chronological(set.len(), (0.7, 0.2, 0.1)).unwrap();
        let stats = standardize(&mut set, &split.train).unwrap();
        for (f, orig) in set.features.iter().zip(&originals) {
            let mut back = f.clone();
            stats.invert(&mut back);
            for (a, b) in back.data().iter().zip(orig.data()) {
                prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
        }
    }
}
