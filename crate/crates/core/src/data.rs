//! Daily rainfall series and the transforms that turn them into model inputs.
//!
//! The pipeline order is: drop stations with too many gaps, interpolate the
//! remaining gaps, window the complete grid into samples, split by time, and
//! standardize features on the training block only. Each step is a pure
//! function over plain records so it behaves identically in the CLI and in
//! tests.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::matrix::Matrix;

/// A UTC civil day, counted from 1970-01-01 (day 0). Calendar formatting
/// lives in the companion crate; here a day is just an index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Day(pub i64);

impl Day {
    /// The UTC civil day containing a unix timestamp; correct for negative
    /// timestamps too (seconds before 1970 belong to negative days).
    pub fn from_unix_seconds(ts: i64) -> Day {
        Day(ts.div_euclid(86_400))
    }
}

/// One rain-gauge site.
#[derive(Debug, Clone, PartialEq)]
pub struct Station {
    pub station_id: String,
    pub name: String,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub altitude_m: f64,
}

/// Rainfall observed at one station on one day. `None` marks a day whose
/// value is missing (gauge offline, unparseable report).
#[derive(Debug, Clone, PartialEq)]
pub struct DailyRecord {
    pub station_id: String,
    pub date: Day,
    pub precip_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DataError {
    #[error("EmptyDataset: no usable records remain")]
    EmptyDataset,
    #[error("AllMissingStation: station {station_id} has no observed values")]
    AllMissingStation { station_id: String },
    #[error("Incomplete: station {station_id} is missing values (interpolate first)")]
    Incomplete { station_id: String },
    #[error("SpanTooShort: {span_days} days cannot supply a window of {window_length} plus a target")]
    SpanTooShort { span_days: i64, window_length: usize },
    #[error("EmptySplit: a split block would be empty")]
    EmptySplit,
    #[error("InvalidFractions: split fractions must be positive and sum to 1")]
    InvalidFractions,
}

/// The observed span of a record set: first day, last day, and length.
fn record_span(records: &[DailyRecord]) -> Option<(Day, Day, i64)> {
    let first = records.iter().map(|r| r.date).min()?;
    let last = records.iter().map(|r| r.date).max()?;
    Some((first, last, last.0 - first.0 + 1))
}

/// Removes stations whose missing fraction over the dataset-wide day span is
/// strictly greater than `max_missing_frac`, along with their records. Days
/// with no record at all count as missing. Returns the surviving records and
/// stations, preserving input order.
pub fn drop_sparse_stations(
    records: Vec<DailyRecord>,
    stations: Vec<Station>,
    max_missing_frac: f64,
) -> Result<(Vec<DailyRecord>, Vec<Station>), DataError> {
    let (_, _, span_days) = record_span(&records).ok_or(DataError::EmptyDataset)?;

    let mut observed: BTreeMap<&str, i64> = BTreeMap::new();
    for r in &records {
        if r.precip_mm.is_some() {
            *observed.entry(r.station_id.as_str()).or_insert(0) += 1;
        }
    }
    let keep: Vec<bool> = stations
        .iter()
        .map(|s| {
            let seen = observed.get(s.station_id.as_str()).copied().unwrap_or(0);
            let missing_frac = (span_days - seen) as f64 / span_days as f64;
            missing_frac <= max_missing_frac
        })
        .collect();

    let kept_stations: Vec<Station> = stations
        .into_iter()
        .zip(&keep)
        .filter_map(|(s, &k)| k.then_some(s))
        .collect();
    if kept_stations.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let kept_records = records
        .into_iter()
        .filter(|r| kept_stations.iter().any(|s| s.station_id == r.station_id))
        .collect();
    Ok((kept_records, kept_stations))
}

/// Fills every missing day for every station appearing in `records`, over the
/// dataset-wide span: linear interpolation between the nearest observed
/// neighbours, and nearest-value fill before the first / after the last
/// observation. Output covers the full span for each station, sorted by
/// `(station_id, date)`, with no `None` values left.
pub fn interpolate_missing(records: Vec<DailyRecord>) -> Result<Vec<DailyRecord>, DataError> {
    let (first, _, span_days) = record_span(&records).ok_or(DataError::EmptyDataset)?;
    let span = span_days as usize;

    let mut grids: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    for r in records {
        let slot = (r.date.0 - first.0) as usize;
        grids.entry(r.station_id).or_insert_with(|| vec![None; span])[slot] = r.precip_mm;
    }

    let mut out = Vec::with_capacity(grids.len() * span);
    for (station_id, mut series) in grids {
        fill_series(&mut series).map_err(|_| DataError::AllMissingStation {
            station_id: station_id.clone(),
        })?;
        for (i, v) in series.iter().enumerate() {
            out.push(DailyRecord {
                station_id: station_id.clone(),
                date: Day(first.0 + i as i64),
                precip_mm: *v,
            });
        }
    }
    Ok(out)
}

/// In-place gap fill for one series; `Err(())` if nothing is observed.
fn fill_series(series: &mut [Option<f64>]) -> Result<(), ()> {
    let observed: Vec<usize> = (0..series.len()).filter(|&i| series[i].is_some()).collect();
    let (&first_obs, &last_obs) = match (observed.first(), observed.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(()),
    };
    for i in 0..first_obs {
        series[i] = series[first_obs];
    }
    for i in last_obs + 1..series.len() {
        series[i] = series[last_obs];
    }
    for pair in observed.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let (a, b) = (series[lo].unwrap(), series[hi].unwrap());
        for i in lo + 1..hi {
            let t = (i - lo) as f64 / (hi - lo) as f64;
            series[i] = Some(a + t * (b - a));
        }
    }
    Ok(())
}

/// Per-column standardization statistics, fitted on the training block and
/// reused verbatim at evaluation and prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardization {
    /// z = (x - mean) / std, column-wise.
    pub fn apply(&self, features: &mut Matrix) {
        assert_eq!(features.cols(), self.means.len(), "feature width mismatch");
        let cols = self.means.len();
        for (i, x) in features.data_mut().iter_mut().enumerate() {
            let c = i % cols;
            *x = (*x - self.means[c]) / self.stds[c];
        }
    }

    /// Exact inverse of [`Standardization::apply`].
    pub fn invert(&self, features: &mut Matrix) {
        assert_eq!(features.cols(), self.means.len(), "feature width mismatch");
        let cols = self.means.len();
        for (i, z) in features.data_mut().iter_mut().enumerate() {
            let c = i % cols;
            *z = *z * self.stds[c] + self.means[c];
        }
    }
}

/// Windowed graph-day samples ready for training.
///
/// `features[k]` is a `|V| x (window_length + 1)` matrix: each station's
/// rainfall over the `window_length` days ending at sample day `k`, plus a
/// standardized-altitude column. `targets[k]` is each station's rainfall on
/// the following day (raw millimetres, never standardized). `target_dates[k]`
/// is that following day.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub node_order: Vec<String>,
    pub window_length: usize,
    pub features: Vec<Matrix>,
    pub targets: Vec<Vec<f64>>,
    pub target_dates: Vec<Day>,
    /// Statistics applied to `features`, once [`standardize`] has run.
    pub standardization: Option<Standardization>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.window_length + 1
    }
}

/// Mean and sample standard deviation (n-1 denominator); std is 0 for fewer
/// than two values.
fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, libm::sqrt(ss / (n - 1) as f64))
}

/// Station altitudes z-scored across the given stations, in input order.
/// If every altitude is equal the scores are all zero.
///
/// This is the altitude feature column used by [`make_samples`]; inference
/// paths that assemble their own feature matrix must use it too, so the
/// column matches what the model was trained on.
pub fn altitude_z_scores(stations: &[Station]) -> Vec<f64> {
    let altitudes: Vec<f64> = stations.iter().map(|s| s.altitude_m).collect();
    let (alt_mean, alt_std) = mean_and_sample_std(&altitudes);
    let alt_div = if alt_std == 0.0 { 1.0 } else { alt_std };
    altitudes.iter().map(|a| (a - alt_mean) / alt_div).collect()
}

/// Builds the one inference window that ends on the most recent recorded
/// day, for forecasting the day after.
///
/// Unlike [`make_samples`] this never interpolates: a forecast should rest
/// on measurements, not on values invented next to the gap. Every station
/// must have an observed value on each of the trailing `window_length`
/// days, otherwise the offending station is reported via
/// [`DataError::Incomplete`].
///
/// Returns the raw (unstandardized) feature matrix and the last observed
/// day; the forecast is for the day after.
pub fn latest_feature_matrix(
    records: &[DailyRecord],
    stations: &[Station],
    window_length: usize,
) -> Result<(Matrix, Day), DataError> {
    if stations.is_empty() || records.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let (_, last, span_days) = record_span(records).ok_or(DataError::EmptyDataset)?;
    if span_days < window_length as i64 {
        return Err(DataError::SpanTooShort {
            span_days,
            window_length,
        });
    }
    let window_start = last.0 - window_length as i64 + 1;

    // Station id -> observed values on the trailing days only.
    let mut trailing: BTreeMap<&str, Vec<Option<f64>>> = BTreeMap::new();
    for r in records {
        if r.date.0 >= window_start {
            let slot = (r.date.0 - window_start) as usize;
            trailing
                .entry(r.station_id.as_str())
                .or_insert_with(|| vec![None; window_length])[slot] = r.precip_mm;
        }
    }
    let mut series: Vec<Vec<f64>> = Vec::with_capacity(stations.len());
    for s in stations {
        let grid = trailing.get(s.station_id.as_str());
        let complete: Option<Vec<f64>> =
            grid.and_then(|g| g.iter().copied().collect::<Option<Vec<f64>>>());
        match complete {
            Some(values) => series.push(values),
            None => {
                return Err(DataError::Incomplete {
                    station_id: s.station_id.clone(),
                })
            }
        }
    }

    let altitude_z = altitude_z_scores(stations);
    let features = Matrix::from_fn(stations.len(), window_length + 1, |node, col| {
        if col < window_length {
            series[node][col]
        } else {
            altitude_z[node]
        }
    });
    Ok((features, last))
}

/// Slides a `window_length`-day window over a complete record grid.
///
/// `records` must cover every day of the span for every station in
/// `stations` with an observed value ([`interpolate_missing`] guarantees
/// this). Node order follows `stations` input order. The altitude column is
/// the station altitude z-scored across `stations`; if all altitudes are
/// equal the column is zero.
pub fn make_samples(
    records: &[DailyRecord],
    stations: &[Station],
    window_length: usize,
) -> Result<SampleSet, DataError> {
    if stations.is_empty() || records.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let (first, _, span_days) = record_span(records).ok_or(DataError::EmptyDataset)?;
    if span_days < window_length as i64 + 1 {
        return Err(DataError::SpanTooShort {
            span_days,
            window_length,
        });
    }
    let span = span_days as usize;

    // Station id -> dense day series, then verify completeness.
    let mut by_station: BTreeMap<&str, Vec<Option<f64>>> = BTreeMap::new();
    for r in records {
        let slot = (r.date.0 - first.0) as usize;
        by_station
            .entry(r.station_id.as_str())
            .or_insert_with(|| vec![None; span])[slot] = r.precip_mm;
    }
    let mut series: Vec<&[Option<f64>]> = Vec::with_capacity(stations.len());
    for s in stations {
        let grid = by_station
            .get(s.station_id.as_str())
            .ok_or_else(|| DataError::Incomplete {
                station_id: s.station_id.clone(),
            })?;
        if grid.iter().any(|v| v.is_none()) {
            return Err(DataError::Incomplete {
                station_id: s.station_id.clone(),
            });
        }
        series.push(grid.as_slice());
    }

    let altitude_z = altitude_z_scores(stations);

    let n_samples = span - window_length;
    let mut features = Vec::with_capacity(n_samples);
    let mut targets = Vec::with_capacity(n_samples);
    let mut target_dates = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        // Window covers days k .. k+window_length-1; target is day k+window_length.
        let f = Matrix::from_fn(stations.len(), window_length + 1, |node, col| {
            if col < window_length {
                series[node][k + col].unwrap()
            } else {
                altitude_z[node]
            }
        });
        features.push(f);
        targets.push(
            series
                .iter()
                .map(|s| s[k + window_length].unwrap())
                .collect(),
        );
        target_dates.push(Day(first.0 + (k + window_length) as i64));
    }

    Ok(SampleSet {
        node_order: stations.iter().map(|s| s.station_id.clone()).collect(),
        window_length,
        features,
        targets,
        target_dates,
        standardization: None,
    })
}

/// Contiguous index ranges of a chronological train/validation/test split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Splits `n_samples` chronologically ordered samples into train, validation,
/// and test blocks. Validation and test sizes are `floor(n * fraction)`; the
/// remainder goes to train, so no sample is dropped. Any empty block is an
/// error — a silent empty validation set would disable early stopping.
pub fn split_chronological(
    n_samples: usize,
    fractions: (f64, f64, f64),
) -> Result<Split, DataError> {
    let (f_train, f_val, f_test) = fractions;
    let sum = f_train + f_val + f_test;
    if !(f_train > 0.0 && f_val > 0.0 && f_test > 0.0) || libm::fabs(sum - 1.0) > 1e-9 {
        return Err(DataError::InvalidFractions);
    }
    let n_val = (n_samples as f64 * f_val) as usize;
    let n_test = (n_samples as f64 * f_test) as usize;
    let n_train = n_samples - n_val - n_test;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(DataError::EmptySplit);
    }
    Ok(Split {
        train: 0..n_train,
        val: n_train..n_train + n_val,
        test: n_train + n_val..n_samples,
    })
}

/// Fits per-column standardization on the training block and applies it to
/// every sample's features. Columns with zero variance divide by 1 instead,
/// mapping to zero deviation. Targets stay in raw millimetres. Returns the
/// fitted statistics, which are also recorded on the sample set.
pub fn standardize(samples: &mut SampleSet, train: &Range<usize>) -> Result<Standardization, DataError> {
    if train.is_empty() || train.end > samples.len() {
        return Err(DataError::EmptySplit);
    }
    let cols = samples.feature_dim();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); cols];
    for k in train.clone() {
        for (i, &x) in samples.features[k].data().iter().enumerate() {
            columns[i % cols].push(x);
        }
    }
    let mut means = Vec::with_capacity(cols);
    let mut stds = Vec::with_capacity(cols);
    for col in &columns {
        let (mean, std) = mean_and_sample_std(col);
        means.push(mean);
        stds.push(if std == 0.0 { 1.0 } else { std });
    }
    let stats = Standardization { means, stds };
    apply_standardization(samples, &stats);
    Ok(stats)
}

/// Applies existing statistics (for example, loaded from a checkpoint) to
/// every sample's features.
pub fn apply_standardization(samples: &mut SampleSet, stats: &Standardization) {
    for f in &mut samples.features {
        stats.apply(f);
    }
    samples.standardization = Some(stats.clone());
}
