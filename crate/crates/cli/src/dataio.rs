//! CSV input and output: station registry, daily rainfall records, device
//! maps, and the derived exports.
//!
//! Rainfall CSVs arrive from assorted sources (gateway exports, spreadsheet
//! dumps, archival scrapes), so the record loader normalizes the usual mess:
//! stray whitespace, a trailing "mm" unit, decimal commas, and thousands
//! separators. It does not guess beyond that — anything else is a parse
//! error pointing at the row.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate};

use pluvio_core::data::{DailyRecord, Day, Station};
use pluvio_core::graph::StationGraph;
use pluvio_core::metrics::StationClimatology;

#[derive(Debug, thiserror::Error)]
pub enum DataioError {
    #[error("MalformedRow: {path} row {row}: {reason}")]
    MalformedRow { path: String, row: usize, reason: String },
    #[error("DuplicateStation: {station_id} appears again at {path} row {row}")]
    DuplicateStation { station_id: String, path: String, row: usize },
    #[error("RangeViolation: {path} row {row}: {reason}")]
    RangeViolation { path: String, row: usize, reason: String },
    #[error("DuplicateRecord: {station_id} on {date} appears again at {path} row {row}")]
    DuplicateRecord { station_id: String, date: String, path: String, row: usize },
    #[error("NegativePrecip: {path} row {row}: {value} mm")]
    NegativePrecip { path: String, row: usize, value: f64 },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataioError + '_ {
    move |source| DataioError::Io { path: path.display().to_string(), source }
}

const UNIX_EPOCH_CE_DAYS: i64 = 719_163;

/// Calendar date for a day index.
pub fn day_to_date(day: Day) -> NaiveDate {
    NaiveDate::from_num_days_from_ce_opt((day.0 + UNIX_EPOCH_CE_DAYS) as i32)
        .expect("day index within calendar range")
}

pub fn date_to_day(date: NaiveDate) -> Day {
    Day(i64::from(date.num_days_from_ce()) - UNIX_EPOCH_CE_DAYS)
}

/// `YYYY-MM-DD` for a day index.
pub fn day_to_iso(day: Day) -> String {
    day_to_date(day).format("%Y-%m-%d").to_string()
}

/// Loads the station registry. Expects the exact header
/// `station_id,name,latitude_deg,longitude_deg,altitude_m`.
pub fn load_stations(path: &Path) -> Result<Vec<Station>, DataioError> {
    let p = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DataioError::MalformedRow { path: p.clone(), row: 0, reason: e.to_string() })?;

    expect_header(
        &mut reader,
        &["station_id", "name", "latitude_deg", "longitude_deg", "altitude_m"],
        &p,
    )?;

    let mut stations: Vec<Station> = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 2; // header is row 1
        let record = row.map_err(|e| DataioError::MalformedRow {
            path: p.clone(),
            row: row_no,
            reason: e.to_string(),
        })?;
        if record.len() != 5 {
            return Err(DataioError::MalformedRow {
                path: p.clone(),
                row: row_no,
                reason: format!("expected 5 fields, got {}", record.len()),
            });
        }
        let station_id = record[0].to_string();
        if station_id.is_empty() {
            return Err(DataioError::MalformedRow {
                path: p.clone(),
                row: row_no,
                reason: "empty station_id".to_string(),
            });
        }
        if !seen.insert(station_id.clone()) {
            return Err(DataioError::DuplicateStation { station_id, path: p, row: row_no });
        }
        let parse_f64 = |field: &str, name: &str| -> Result<f64, DataioError> {
            field.parse::<f64>().map_err(|_| DataioError::MalformedRow {
                path: p.clone(),
                row: row_no,
                reason: format!("{name} is not a number: {field:?}"),
            })
        };
        let latitude_deg = parse_f64(&record[2], "latitude_deg")?;
        let longitude_deg = parse_f64(&record[3], "longitude_deg")?;
        let altitude_m = parse_f64(&record[4], "altitude_m")?;
        if !(-90.0..=90.0).contains(&latitude_deg) {
            return Err(DataioError::RangeViolation {
                path: p,
                row: row_no,
                reason: format!("latitude {latitude_deg} outside [-90, 90]"),
            });
        }
        if !(-180.0..=180.0).contains(&longitude_deg) {
            return Err(DataioError::RangeViolation {
                path: p,
                row: row_no,
                reason: format!("longitude {longitude_deg} outside [-180, 180]"),
            });
        }
        if !altitude_m.is_finite() {
            return Err(DataioError::RangeViolation {
                path: p,
                row: row_no,
                reason: format!("altitude {altitude_m} is not finite"),
            });
        }
        stations.push(Station {
            station_id,
            name: record[1].to_string(),
            latitude_deg,
            longitude_deg,
            altitude_m,
        });
    }
    Ok(stations)
}

/// Normalizes one precipitation field to a plain decimal string, or `None`
/// for an explicitly missing value.
///
/// Handles, in order: surrounding whitespace; the empty string and the
/// literal `MISSING`; a trailing `mm` unit (any case); thousands separators
/// and decimal commas. With both `.` and `,` present the last one is the
/// decimal separator. A lone comma is a decimal comma unless the digits
/// group in threes like `1,234,567`.
fn clean_precip_field(raw: &str) -> Option<String> {
    let mut s = raw.trim();
    if s.is_empty() || s == "MISSING" {
        return None;
    }
    if let Some(stripped) = s
        .strip_suffix("mm")
        .or_else(|| s.strip_suffix("MM"))
        .or_else(|| s.strip_suffix("Mm"))
        .or_else(|| s.strip_suffix("mM"))
    {
        s = stripped.trim_end();
    }
    let has_dot = s.contains('.');
    let has_comma = s.contains(',');
    let cleaned = match (has_dot, has_comma) {
        (true, true) => {
            // The later separator is the decimal point; the other kind is
            // grouping and disappears.
            let last_dot = s.rfind('.').unwrap();
            let last_comma = s.rfind(',').unwrap();
            let decimal = if last_dot > last_comma { '.' } else { ',' };
            s.chars()
                .filter_map(|c| match c {
                    '.' | ',' if c != decimal => None,
                    ',' => Some('.'),
                    c => Some(c),
                })
                .collect()
        }
        (false, true) => {
            if is_three_digit_grouping(s) {
                s.chars().filter(|&c| c != ',').collect()
            } else {
                s.replace(',', ".")
            }
        }
        _ => s.to_string(),
    };
    Some(cleaned)
}

/// True for integer strings whose commas group digits in threes: `1,234`,
/// `12,345,678`.
fn is_three_digit_grouping(s: &str) -> bool {
    let digits = s.strip_prefix('-').unwrap_or(s);
    let mut groups = digits.split(',');
    let Some(first) = groups.next() else { return false };
    if first.is_empty() || first.len() > 3 || !first.bytes().all(|b| b.is_ascii_digit()) {
        return false;
    }
    let mut any = false;
    for g in groups {
        any = true;
        if g.len() != 3 || !g.bytes().all(|b| b.is_ascii_digit()) {
            return false;
        }
    }
    any
}

/// Loads daily rainfall records. Expects the exact header
/// `station_id,date,precip_mm` with ISO dates.
pub fn load_records(path: &Path) -> Result<Vec<DailyRecord>, DataioError> {
    let p = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DataioError::MalformedRow { path: p.clone(), row: 0, reason: e.to_string() })?;

    expect_header(&mut reader, &["station_id", "date", "precip_mm"], &p)?;

    let mut records = Vec::new();
    let mut seen: BTreeSet<(String, Day)> = BTreeSet::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 2;
        let record = row.map_err(|e| DataioError::MalformedRow {
            path: p.clone(),
            row: row_no,
            reason: e.to_string(),
        })?;
        if record.len() != 3 {
            return Err(DataioError::MalformedRow {
                path: p.clone(),
                row: row_no,
                reason: format!("expected 3 fields, got {}", record.len()),
            });
        }
        let station_id = record[0].to_string();
        if station_id.is_empty() {
            return Err(DataioError::MalformedRow {
                path: p.clone(),
                row: row_no,
                reason: "empty station_id".to_string(),
            });
        }
        let date = NaiveDate::parse_from_str(&record[1], "%Y-%m-%d").map_err(|_| {
            DataioError::MalformedRow {
                path: p.clone(),
                row: row_no,
                reason: format!("date {:?} is not YYYY-MM-DD", &record[1]),
            }
        })?;
        let day = date_to_day(date);
        if !seen.insert((station_id.clone(), day)) {
            return Err(DataioError::DuplicateRecord {
                station_id,
                date: record[1].to_string(),
                path: p,
                row: row_no,
            });
        }
        let precip_mm = match clean_precip_field(&record[2]) {
            None => None,
            Some(cleaned) => {
                let v: f64 = cleaned.parse().map_err(|_| DataioError::MalformedRow {
                    path: p.clone(),
                    row: row_no,
                    reason: format!("precip_mm {:?} is not a number", &record[2]),
                })?;
                if !v.is_finite() {
                    return Err(DataioError::MalformedRow {
                        path: p.clone(),
                        row: row_no,
                        reason: format!("precip_mm {:?} is not finite", &record[2]),
                    });
                }
                if v < 0.0 {
                    return Err(DataioError::NegativePrecip { path: p, row: row_no, value: v });
                }
                Some(v)
            }
        };
        records.push(DailyRecord { station_id, date: day, precip_mm });
    }
    Ok(records)
}

fn expect_header(
    reader: &mut csv::Reader<std::fs::File>,
    expected: &[&str],
    path: &str,
) -> Result<(), DataioError> {
    let headers = reader.headers().map_err(|e| DataioError::MalformedRow {
        path: path.to_string(),
        row: 1,
        reason: e.to_string(),
    })?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(DataioError::MalformedRow {
            path: path.to_string(),
            row: 1,
            reason: format!("header is {:?}, expected {:?}", got.join(","), expected.join(",")),
        });
    }
    Ok(())
}

/// Writes records as `station_id,date,precip_mm` with one decimal place —
/// the gauges resolve 0.2 mm, so one decimal is lossless for their data.
/// Missing values become empty fields.
pub fn write_records_csv(records: &[DailyRecord], path: &Path) -> Result<(), DataioError> {
    let mut out = String::from("station_id,date,precip_mm\n");
    for r in records {
        match r.precip_mm {
            Some(v) => {
                out.push_str(&format!("{},{},{:.1}\n", r.station_id, day_to_iso(r.date), v))
            }
            None => out.push_str(&format!("{},{},\n", r.station_id, day_to_iso(r.date))),
        }
    }
    write_atomically(path, out.as_bytes())
}

/// Writes per-station heavy-day climatology joined with station coordinates:
/// `station_id,latitude_deg,longitude_deg,avg_heavy_days_per_year`.
pub fn write_climatology_csv(
    rows: &[StationClimatology],
    stations: &[Station],
    path: &Path,
) -> Result<(), DataioError> {
    let coords: BTreeMap<&str, (f64, f64)> = stations
        .iter()
        .map(|s| (s.station_id.as_str(), (s.latitude_deg, s.longitude_deg)))
        .collect();
    let mut out = String::from("station_id,latitude_deg,longitude_deg,avg_heavy_days_per_year\n");
    for row in rows {
        let (lat, lon) = coords.get(row.station_id.as_str()).copied().unwrap_or((f64::NAN, f64::NAN));
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.station_id, lat, lon, row.avg_heavy_days_per_year
        ));
    }
    write_atomically(path, out.as_bytes())
}

/// Writes the undirected station graph, one row per connected pair:
/// `station_i,station_j,distance_km,weight`.
pub fn write_graph_csv(graph: &StationGraph, path: &Path) -> Result<(), DataioError> {
    let mut out = String::from("station_i,station_j,distance_km,weight\n");
    let n = graph.len();
    for i in 0..n {
        for j in i + 1..n {
            let w = graph.adjacency[(i, j)];
            if w > 0.0 {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    graph.node_order[i],
                    graph.node_order[j],
                    graph.distances_km[(i, j)],
                    w
                ));
            }
        }
    }
    write_atomically(path, out.as_bytes())
}

/// Loads a `device_id,station_id` map for exports.
pub fn load_device_map(path: &Path) -> Result<BTreeMap<String, String>, DataioError> {
    let p = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DataioError::MalformedRow { path: p.clone(), row: 0, reason: e.to_string() })?;
    expect_header(&mut reader, &["device_id", "station_id"], &p)?;
    let mut map = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 2;
        let record = row.map_err(|e| DataioError::MalformedRow {
            path: p.clone(),
            row: row_no,
            reason: e.to_string(),
        })?;
        if record.len() != 2 || record[0].is_empty() || record[1].is_empty() {
            return Err(DataioError::MalformedRow {
                path: p.clone(),
                row: row_no,
                reason: "expected device_id,station_id".to_string(),
            });
        }
        if map.insert(record[0].to_string(), record[1].to_string()).is_some() {
            return Err(DataioError::MalformedRow {
                path: p.clone(),
                row: row_no,
                reason: format!("device {:?} mapped twice", &record[0]),
            });
        }
    }
    Ok(map)
}

/// Writes via a sibling temp file and rename, so readers never observe a
/// half-written file.
fn write_atomically(path: &Path, bytes: &[u8]) -> Result<(), DataioError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, content).unwrap();
        (dir, path)
    }

    #[test]
    fn loads_well_formed_stations() {
        let (_d, path) = write_tmp(
            "station_id,name,latitude_deg,longitude_deg,altitude_m\n\
             ST-01,El Alto,-16.51,-68.19,4050\n\
             ST-02,Valle Sur,-16.56,-68.07,3300.5\n",
        );
        let stations = load_stations(&path).unwrap();
        assert_eq!(stations.len(), 2);
        assert_eq!(stations[0].station_id, "ST-01");
        assert_eq!(stations[1].altitude_m, 3300.5);
    }

    #[test]
    fn station_errors_name_the_row() {
        let (_d, path) = write_tmp(
            "station_id,name,latitude_deg,longitude_deg,altitude_m\n\
             ST-01,A,-16.5,-68.1,4000\n\
             ST-01,B,-16.6,-68.2,3900\n",
        );
        match load_stations(&path).unwrap_err() {
            DataioError::DuplicateStation { station_id, row, .. } => {
                assert_eq!(station_id, "ST-01");
                assert_eq!(row, 3);
            }
            other => panic!("unexpected {other}"),
        }

        let (_d, path) = write_tmp(
            "station_id,name,latitude_deg,longitude_deg,altitude_m\n\
             ST-01,A,95.0,-68.1,4000\n",
        );
        assert!(matches!(
            load_stations(&path).unwrap_err(),
            DataioError::RangeViolation { row: 2, .. }
        ));

        let (_d, path) = write_tmp("station_id,name,latitude_deg\nST-01,A,1\n");
        assert!(matches!(
            load_stations(&path).unwrap_err(),
            DataioError::MalformedRow { row: 1, .. }
        ));
    }

    #[test]
    fn cleans_the_usual_precip_mess() {
        // The documented example: " 12,5 mm" means 12.5.
        assert_eq!(clean_precip_field(" 12,5 mm"), Some("12.5".to_string()));
        assert_eq!(clean_precip_field("4.2"), Some("4.2".to_string()));
        assert_eq!(clean_precip_field("7 mm"), Some("7".to_string()));
        assert_eq!(clean_precip_field("3,4"), Some("3.4".to_string()));
        assert_eq!(clean_precip_field("1,234"), Some("1234".to_string()));
        assert_eq!(clean_precip_field("1,234.5"), Some("1234.5".to_string()));
        assert_eq!(clean_precip_field("1.234,5"), Some("1234.5".to_string()));
        assert_eq!(clean_precip_field("12,345,678"), Some("12345678".to_string()));
        assert_eq!(clean_precip_field("0.0MM"), Some("0.0".to_string()));
        assert_eq!(clean_precip_field(""), None);
        assert_eq!(clean_precip_field("   "), None);
        assert_eq!(clean_precip_field("MISSING"), None);
    }

    #[test]
    fn loads_records_with_missing_and_dirty_values() {
        let (_d, path) = write_tmp(
            "station_id,date,precip_mm\n\
             ST-01,2023-01-01,4.2\n\
             ST-01,2023-01-02,\n\
             ST-01,2023-01-03,MISSING\n\
             ST-01,2023-01-04,\" 12,5 mm\"\n",
        );
        let records = load_records(&path).unwrap();
        assert_eq!(records.len(), 4);
        assert_eq!(records[0].precip_mm, Some(4.2));
        assert_eq!(records[1].precip_mm, None);
        assert_eq!(records[2].precip_mm, None);
        assert_eq!(records[3].precip_mm, Some(12.5));
        // Dates map onto consecutive day indices.
        assert_eq!(records[1].date.0, records[0].date.0 + 1);
    }

    #[test]
    fn record_errors_are_precise() {
        let (_d, path) = write_tmp(
            "station_id,date,precip_mm\n\
             ST-01,2023-01-01,4.2\n\
             ST-01,2023-01-01,5.0\n",
        );
        assert!(matches!(
            load_records(&path).unwrap_err(),
            DataioError::DuplicateRecord { row: 3, .. }
        ));

        let (_d, path) = write_tmp("station_id,date,precip_mm\nST-01,2023-01-01,-0.2\n");
        assert!(matches!(
            load_records(&path).unwrap_err(),
            DataioError::NegativePrecip { row: 2, .. }
        ));

        let (_d, path) = write_tmp("station_id,date,precip_mm\nST-01,01/02/2023,1.0\n");
        assert!(matches!(
            load_records(&path).unwrap_err(),
            DataioError::MalformedRow { row: 2, .. }
        ));

        let (_d, path) = write_tmp("station_id,date,precip_mm\nST-01,2023-01-01,wet\n");
        assert!(matches!(
            load_records(&path).unwrap_err(),
            DataioError::MalformedRow { row: 2, .. }
        ));
    }

    #[test]
    fn day_conversions_roundtrip_known_dates() {
        let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();
        assert_eq!(date_to_day(epoch), Day(0));
        assert_eq!(day_to_date(Day(0)), epoch);
        let date = NaiveDate::from_ymd_opt(2024, 2, 29).unwrap();
        assert_eq!(day_to_date(date_to_day(date)), date);
        assert_eq!(day_to_iso(date_to_day(date)), "2024-02-29");
    }

    #[test]
    fn records_csv_roundtrips_through_write_and_load() {
        let records = vec![
            DailyRecord { station_id: "ST-01".into(), date: Day(19723), precip_mm: Some(8.0) },
            DailyRecord { station_id: "ST-01".into(), date: Day(19724), precip_mm: None },
            DailyRecord { station_id: "ST-02".into(), date: Day(19723), precip_mm: Some(0.2) },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        write_records_csv(&records, &path).unwrap();
        let back = load_records(&path).unwrap();
        assert_eq!(back, records);
    }
}
