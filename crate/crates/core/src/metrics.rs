//! Evaluation metrics: regression error, correlation, heavy-rain event
//! scores, and per-station heavy-day climatology.

use alloc::string::String;
use alloc::vec::Vec;

use crate::data::DailyRecord;

/// Days per Julian year, used to turn heavy-day counts into annual rates.
pub const DAYS_PER_YEAR: f64 = 365.25;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("LengthMismatch: y has {left} values, y_hat has {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("EmptyInput: metrics need at least {needed} value(s)")]
    EmptyInput { needed: usize },
    #[error("ZeroVariance: correlation is undefined for a constant series")]
    ZeroVariance,
    #[error("EmptyDataset: climatology needs at least one record")]
    EmptyDataset,
}

fn check_pair(y: &[f64], y_hat: &[f64], needed: usize) -> Result<(), MetricsError> {
    if y.len() != y_hat.len() {
        return Err(MetricsError::LengthMismatch {
            left: y.len(),
            right: y_hat.len(),
        });
    }
    if y.len() < needed {
        return Err(MetricsError::EmptyInput { needed });
    }
    Ok(())
}

/// Mean squared error.
pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricsError> {
    check_pair(y, y_hat, 1)?;
    let sum: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / y.len() as f64)
}

/// Mean absolute error.
pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricsError> {
    check_pair(y, y_hat, 1)?;
    let sum: f64 = y.iter().zip(y_hat).map(|(a, b)| libm::fabs(a - b)).sum();
    Ok(sum / y.len() as f64)
}

/// Pearson correlation coefficient, sample convention (n-1 denominators,
/// which cancel between covariance and the standard deviations). Constant
/// input on either side is an error rather than a NaN.
pub fn pearson_r(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricsError> {
    check_pair(y, y_hat, 2)?;
    let n = y.len() as f64;
    let mean_y = y.iter().sum::<f64>() / n;
    let mean_yh = y_hat.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_y = 0.0;
    let mut var_yh = 0.0;
    for (a, b) in y.iter().zip(y_hat) {
        let da = a - mean_y;
        let db = b - mean_yh;
        cov += da * db;
        var_y += da * da;
        var_yh += db * db;
    }
    if var_y == 0.0 || var_yh == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    Ok(cov / libm::sqrt(var_y * var_yh))
}

/// Precision and recall of heavy-rain events, with their raw counts.
/// A score whose denominator is zero (no predicted events, or no actual
/// events) is `None` — undefined, not 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct HeavyScores {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Classifies each day as heavy (value >= threshold, inclusive) in both the
/// observed and predicted series, then scores the prediction as a detector.
pub fn heavy_event_scores(
    y: &[f64],
    y_hat: &[f64],
    threshold_mm: f64,
) -> Result<HeavyScores, MetricsError> {
    check_pair(y, y_hat, 1)?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (a, b) in y.iter().zip(y_hat) {
        let actual = *a >= threshold_mm;
        let predicted = *b >= threshold_mm;
        match (actual, predicted) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(HeavyScores {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
    })
}

/// A full evaluation of predictions against observations.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mse: f64,
    pub mae: f64,
    pub pearson_r: f64,
    /// Number of (observation, prediction) pairs scored.
    pub n: usize,
    pub heavy_precision: Option<f64>,
    pub heavy_recall: Option<f64>,
}

/// Computes every metric in one pass over a prediction series.
pub fn evaluate(y: &[f64], y_hat: &[f64], threshold_mm: f64) -> Result<EvalReport, MetricsError> {
    let mse = mse(y, y_hat)?;
    let mae = mae(y, y_hat)?;
    let r = pearson_r(y, y_hat)?;
    let heavy = heavy_event_scores(y, y_hat, threshold_mm)?;
    // sqrt(MSE) bounds MAE from above for any error distribution.
    debug_assert!(mae * mae <= mse * (1.0 + 1e-12));
    debug_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
    Ok(EvalReport {
        mse,
        mae,
        pearson_r: r,
        n: y.len(),
        heavy_precision: heavy.precision,
        heavy_recall: heavy.recall,
    })
}

/// How often a station historically sees heavy rain.
#[derive(Debug, Clone, PartialEq)]
pub struct StationClimatology {
    pub station_id: String,
    /// Observed days at or above the threshold (missing days count nothing).
    pub heavy_days: u64,
    /// Days in the dataset-wide span, first to last record.
    pub span_days: i64,
    /// heavy_days / (span_days / 365.25).
    pub avg_heavy_days_per_year: f64,
}

/// Counts observed heavy days per station and normalizes by the span of the
/// whole dataset in years. Stations come back sorted by id.
pub fn heavy_climatology(
    records: &[DailyRecord],
    threshold_mm: f64,
) -> Result<Vec<StationClimatology>, MetricsError> {
    let first = records.iter().map(|r| r.date).min().ok_or(MetricsError::EmptyDataset)?;
    let last = records.iter().map(|r| r.date).max().ok_or(MetricsError::EmptyDataset)?;
    let span_days = last.0 - first.0 + 1;

    let mut counts: alloc::collections::BTreeMap<&str, u64> = alloc::collections::BTreeMap::new();
    for r in records {
        let entry = counts.entry(r.station_id.as_str()).or_insert(0);
        if let Some(v) = r.precip_mm {
            if v >= threshold_mm {
                *entry += 1;
            }
        }
    }
    let years = span_days as f64 / DAYS_PER_YEAR;
    Ok(counts
        .into_iter()
        .map(|(station_id, heavy_days)| StationClimatology {
            station_id: String::from(station_id),
            heavy_days,
            span_days,
            avg_heavy_days_per_year: heavy_days as f64 / years,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Day;
    use alloc::borrow::ToOwned;
    use alloc::vec;

    #[test]
    fn mse_tabulated_examples() {
        assert_eq!(mse(&[0.0, 4.0], &[2.0, 2.0]).unwrap(), 4.0);
        assert_eq!(mse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(mse(&[3.0], &[0.0]).unwrap(), 9.0);
    }

    #[test]
    fn mae_tabulated_examples() {
        assert_eq!(mae(&[0.0, 4.0], &[2.0, 2.0]).unwrap(), 2.0);
        assert_eq!(mae(&[1.0, -1.0], &[-1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(mae(&[5.0], &[5.0]).unwrap(), 0.0);
    }

    #[test]
    fn pearson_exact_endpoints() {
        // y_hat = 2y is exactly 1; the variances are perfect squares so no
        // rounding sneaks in.
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0], &[-2.0, -4.0, -6.0]).unwrap(), -1.0);
        // An exactly uncorrelated pair: y symmetric, y_hat even function.
        assert_eq!(pearson_r(&[-1.0, 0.0, 1.0], &[1.0, 0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn pearson_rejects_bad_input() {
        assert_eq!(
            pearson_r(&[1.0, 2.0], &[1.0]).unwrap_err(),
            MetricsError::LengthMismatch { left: 2, right: 1 }
        );
        assert_eq!(
            pearson_r(&[1.0], &[1.0]).unwrap_err(),
            MetricsError::EmptyInput { needed: 2 }
        );
        assert_eq!(
            pearson_r(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap_err(),
            MetricsError::ZeroVariance
        );
    }

    #[test]
    fn empty_input_is_rejected_everywhere() {
        assert!(matches!(mse(&[], &[]), Err(MetricsError::EmptyInput { .. })));
        assert!(matches!(mae(&[], &[]), Err(MetricsError::EmptyInput { .. })));
        assert!(matches!(
            heavy_event_scores(&[], &[], 8.0),
            Err(MetricsError::EmptyInput { .. })
        ));
    }

    #[test]
    fn heavy_scores_count_the_confusion_quadrants() {
        // actual:    [9, 9, 1, 1, 8]  -> heavy at 0, 1, 4
        // predicted: [9, 1, 9, 1, 8]  -> heavy at 0, 2, 4
        let y = [9.0, 9.0, 1.0, 1.0, 8.0];
        let y_hat = [9.0, 1.0, 9.0, 1.0, 8.0];
        let s = heavy_event_scores(&y, &y_hat, 8.0).unwrap();
        assert_eq!((s.true_positives, s.false_positives, s.false_negatives), (2, 1, 1));
        assert_eq!(s.precision, Some(2.0 / 3.0));
        assert_eq!(s.recall, Some(2.0 / 3.0));
    }

    #[test]
    fn heavy_scores_are_undefined_not_zero() {
        // Nothing predicted heavy: precision undefined, recall 0.
        let s = heavy_event_scores(&[9.0, 1.0], &[1.0, 1.0], 8.0).unwrap();
        assert_eq!(s.precision, None);
        assert_eq!(s.recall, Some(0.0));
        // Nothing actually heavy: recall undefined.
        let s = heavy_event_scores(&[1.0, 1.0], &[9.0, 1.0], 8.0).unwrap();
        assert_eq!(s.precision, Some(0.0));
        assert_eq!(s.recall, None);
        // Nothing heavy anywhere: both undefined.
        let s = heavy_event_scores(&[1.0, 1.0], &[1.0, 1.0], 8.0).unwrap();
        assert_eq!(s.precision, None);
        assert_eq!(s.recall, None);
    }

    #[test]
    fn threshold_is_inclusive() {
        let s = heavy_event_scores(&[8.0], &[8.0], 8.0).unwrap();
        assert_eq!((s.true_positives, s.false_positives, s.false_negatives), (1, 0, 0));
    }

    #[test]
    fn evaluate_composes_the_metrics() {
        let y = [1.0, 2.0, 3.0, 10.0];
        let y_hat = [1.5, 2.0, 2.5, 9.0];
        let report = evaluate(&y, &y_hat, 8.0).unwrap();
        assert_eq!(report.n, 4);
        assert_eq!(report.mse, mse(&y, &y_hat).unwrap());
        assert_eq!(report.mae, mae(&y, &y_hat).unwrap());
        assert_eq!(report.pearson_r, pearson_r(&y, &y_hat).unwrap());
        assert_eq!(report.heavy_precision, Some(1.0));
        assert_eq!(report.heavy_recall, Some(1.0));
        assert!(report.mae * report.mae <= report.mse);
    }

    fn rec(id: &str, day: i64, v: Option<f64>) -> DailyRecord {
        DailyRecord {
            station_id: id.to_owned(),
            date: Day(day),
            precip_mm: v,
        }
    }

    #[test]
    fn climatology_rate_over_a_leap_year_span() {
        // 366-day span with 10 heavy days: 10 / (366/365.25) = 9.9795...
        let mut records: Vec<DailyRecord> = (0..366)
            .map(|d| rec("A", d, Some(if d < 10 { 9.0 } else { 1.0 })))
            .collect();
        records.push(rec("B", 0, Some(0.0)));
        let clim = heavy_climatology(&records, 8.0).unwrap();
        assert_eq!(clim.len(), 2);
        assert_eq!(clim[0].station_id, "A");
        assert_eq!(clim[0].heavy_days, 10);
        assert_eq!(clim[0].span_days, 366);
        assert!(libm::fabs(clim[0].avg_heavy_days_per_year - 9.979508196721312) < 1e-12);
        assert_eq!(clim[1].heavy_days, 0);
    }

    #[test]
    fn climatology_ignores_missing_days_and_counts_exact_threshold() {
        let records = vec![
            rec("A", 0, Some(8.0)),  // exactly at threshold: heavy
            rec("A", 1, None),       // missing: not heavy
            rec("A", 2, Some(7.99)), // below
        ];
        let clim = heavy_climatology(&records, 8.0).unwrap();
        assert_eq!(clim[0].heavy_days, 1);
    }

    #[test]
    fn climatology_requires_records() {
        assert_eq!(
            heavy_climatology(&[], 8.0).unwrap_err(),
            MetricsError::EmptyDataset
        );
    }
}
