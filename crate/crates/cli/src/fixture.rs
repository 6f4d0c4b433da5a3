//! Deterministic synthetic dataset for demos and end-to-end tests.
//!
//! Real gauge archives are private, so the repository ships a generated
//! stand-in with the same statistical bones: a handful of Andean stations,
//! daily rainfall driven by a shared regional process plus station noise,
//! a couple percent of missing values, and the occasional messy CSV cell
//! (`" 12,5 mm"`) the loader is expected to cope with. Neighbouring
//! stations influence each other through inverse-distance mixing, so a
//! graph model genuinely has something to learn, and higher stations run
//! slightly wetter so the altitude feature carries signal too.
//!
//! Everything derives from one seed: the same seed always writes
//! byte-identical files.

use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use pluvio_core::data::{altitude_z_scores, Station};
use pluvio_core::graph::haversine_km;
use pluvio_core::telemetry::{encode_telemetry, Dec1, Dec2, TelemetryMessage};

use crate::commands::CmdError;
use crate::dataio::day_to_iso;

pub struct FixtureSpec {
    pub stations: usize,
    pub days: usize,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec { stations: 5, days: 200, seed: 42 }
    }
}

pub struct FixturePaths {
    pub stations_csv: PathBuf,
    pub records_csv: PathBuf,
    pub devices_csv: PathBuf,
    pub frames_txt: PathBuf,
    pub config_toml: PathBuf,
}

/// Day index of 2023-01-01, the first fixture day.
const FIRST_DAY: i64 = 19_358;

const STATION_NAMES: [&str; 8] = [
    "Achocalla",
    "El Alto Norte",
    "Obrajes",
    "Valle de la Luna",
    "Chasquipampa",
    "Mallasa",
    "Cota Cota",
    "Villa Fatima",
];

/// Uniform in [0, 1) from the top 53 bits.
fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal via Box-Muller.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = unit(rng);
    let u2 = unit(rng);
    (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn make_stations(rng: &mut ChaCha8Rng, n: usize) -> Vec<Station> {
    (0..n)
        .map(|i| {
            let name = STATION_NAMES
                .get(i)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("Puesto {}", i + 1));
            Station {
                station_id: format!("ST-{:02}", i + 1),
                name,
                latitude_deg: -16.45 - (i as f64) * 0.055 + (unit(rng) - 0.5) * 0.03,
                longitude_deg: -68.15 + (i % 2) as f64 * 0.14 + (unit(rng) - 0.5) * 0.03,
                altitude_m: (3250.0 + (i as f64) * 190.0 + (unit(rng) - 0.5) * 120.0).round(),
            }
        })
        .collect()
}

/// Row-normalized inverse-distance weights between distinct stations.
fn mixing_weights(stations: &[Station]) -> Vec<Vec<f64>> {
    let n = stations.len();
    let mut weights = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            if i != j {
                let d = haversine_km(
                    stations[i].latitude_deg,
                    stations[i].longitude_deg,
                    stations[j].latitude_deg,
                    stations[j].longitude_deg,
                );
                weights[i][j] = 1.0 / (d + 1.0);
                row_sum += weights[i][j];
            }
        }
        if row_sum > 0.0 {
            for w in &mut weights[i] {
                *w /= row_sum;
            }
        }
    }
    weights
}

/// Daily rainfall per station, built from three layers:
///
/// * a shared 16-day wet/dry oscillation (a storm cycle short enough that
///   any held-out block sees a full swing of it);
/// * a slowly drifting regional level;
/// * per-station deviations that follow themselves and their
///   distance-weighted neighbours — the planted linear spatial signal.
///
/// Every component is linear in the recent past of the network, so
/// tomorrow is largely predictable from a week-long window, while the
/// innovations keep roughly half a millimetre of honest uncertainty.
/// Higher stations run wetter through their base rate. Values are clamped
/// at zero and quantized to 0.1 mm, matching gauge resolution.
fn simulate(rng: &mut ChaCha8Rng, stations: &[Station], days: usize) -> Vec<Vec<f64>> {
    let n = stations.len();
    let weights = mixing_weights(stations);
    let alt_z = altitude_z_scores(stations);
    let base: Vec<f64> = alt_z.iter().map(|z| 6.0 + 0.5 * z).collect();
    let cycle = |d: usize| 2.2 * (2.0 * std::f64::consts::PI * d as f64 / 16.0).sin();

    let mut series = vec![vec![0.0; days]; n];
    let mut drift = 0.0;
    let mut dev: Vec<f64> = (0..n).map(|_| 0.66 * normal(rng)).collect();
    for d in 0..days {
        for (i, s) in series.iter_mut().enumerate() {
            let y = base[i] + cycle(d) + drift + dev[i];
            s[d] = (y.max(0.0) * 10.0).round() / 10.0;
        }
        drift = 0.92 * drift + 0.35 * normal(rng);
        dev = (0..n)
            .map(|i| {
                let mix: f64 = (0..n).map(|j| weights[i][j] * dev[j]).sum();
                0.55 * dev[i] + 0.35 * mix + 0.45 * normal(rng)
            })
            .collect();
    }
    series
}

fn stations_csv(stations: &[Station]) -> String {
    let mut out = String::from("station_id,name,latitude_deg,longitude_deg,altitude_m\n");
    for s in stations {
        out.push_str(&format!(
            "{},{},{:.4},{:.4},{}\n",
            s.station_id, s.name, s.latitude_deg, s.longitude_deg, s.altitude_m
        ));
    }
    out
}

/// Serializes the series with the warts of a real archive: about 2% of the
/// values go missing (as an empty cell, a MISSING marker, or a dropped
/// row), and about 3% of the present ones arrive in a messy-but-parseable
/// spelling.
fn records_csv(rng: &mut ChaCha8Rng, stations: &[Station], series: &[Vec<f64>]) -> String {
    let mut out = String::from("station_id,date,precip_mm\n");
    for (i, station) in stations.iter().enumerate() {
        for (d, &value) in series[i].iter().enumerate() {
            let date = day_to_iso(pluvio_core::data::Day(FIRST_DAY + d as i64));
            let roll = unit(rng);
            if roll < 0.02 {
                // Missing, in one of the shapes archives actually use.
                match (rng.next_u64() % 3) as u8 {
                    0 => out.push_str(&format!("{},{},\n", station.station_id, date)),
                    1 => out.push_str(&format!("{},{},MISSING\n", station.station_id, date)),
                    _ => {} // the row simply never made it into the file
                }
            } else if roll < 0.05 {
                // Present but messy; decimal-comma spellings need CSV quoting.
                let plain = format!("{value:.1}");
                let messy = match (rng.next_u64() % 3) as u8 {
                    0 => format!("\" {} mm\"", plain.replace('.', ",")),
                    1 => format!("{plain} mm"),
                    _ => format!("\"{}\"", plain.replace('.', ",")),
                };
                out.push_str(&format!("{},{},{}\n", station.station_id, date, messy));
            } else {
                out.push_str(&format!("{},{},{value:.1}\n", station.station_id, date));
            }
        }
    }
    out
}

fn devices_csv(stations: &[Station]) -> String {
    let mut out = String::from("device_id,station_id\n");
    for (i, s) in stations.iter().enumerate() {
        out.push_str(&format!("DEV-{:02},{}\n", i + 1, s.station_id));
    }
    out
}

/// A small corpus of valid frames covering the field extremes: zero and
/// heavy tip counts, sub-zero temperatures, low battery.
fn frames_txt(rng: &mut ChaCha8Rng, stations: &[Station]) -> String {
    let devices = stations.len().min(3);
    let mut out = String::new();
    let base_ts: i64 = 1_700_000_000;
    for k in 0..12u32 {
        let device = (k as usize) % devices;
        let tips = match k {
            0 => 0,
            1 => 40, // exactly the 8.0 mm heavy threshold
            2 => 125,
            _ => (rng.next_u64() % 30) as u32,
        };
        let temp = -50 + (rng.next_u64() % 400) as i64; // -5.0 to 34.9 C
        let soil = (rng.next_u64() % 1001) as i64;
        let hum = (rng.next_u64() % 1001) as i64;
        let uv = (rng.next_u64() % 12_000) as i64;
        let batt = if k == 3 { 312 } else { 550 + (rng.next_u64() % 150) as i64 };
        let frame = encode_telemetry(&TelemetryMessage {
            device_id: format!("DEV-{:02}", device + 1),
            timestamp: base_ts + i64::from(k) * 900,
            tip_count: tips,
            temp_c: Dec1::from_scaled(temp),
            soil_pct: Dec1::from_scaled(soil),
            hum_pct: Dec1::from_scaled(hum),
            uv_mw_cm2: Dec2::from_scaled(uv),
            batt_v: Dec2::from_scaled(batt),
        })
        .expect("fixture frames are valid by construction");
        out.push_str(&frame);
        out.push('\n');
    }
    out
}

fn config_toml(dir: &Path) -> String {
    let join = |name: &str| dir.join(name).display().to_string();
    format!(
        "# Example run configuration for the generated dataset.\n\
         stations_csv = {:?}\n\
         records_csv = {:?}\n\
         output_dir = \"out\"\n\
         model = \"A\"\n\
         seed = 42\n",
        join("stations.csv"),
        join("records.csv"),
    )
}

/// Generates the full fixture set under `dir`.
pub fn cmd_make_fixture(dir: &Path, spec: &FixtureSpec) -> Result<FixturePaths, CmdError> {
    if spec.stations < 2 {
        return Err(CmdError::Usage("make-fixture: need at least 2 stations".to_string()));
    }
    if spec.days < 20 {
        return Err(CmdError::Usage("make-fixture: need at least 20 days".to_string()));
    }
    std::fs::create_dir_all(dir)
        .map_err(|e| CmdError::Internal(format!("cannot create {}: {e}", dir.display())))?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let stations = make_stations(&mut rng, spec.stations);
    let series = simulate(&mut rng, &stations, spec.days);

    let paths = FixturePaths {
        stations_csv: dir.join("stations.csv"),
        records_csv: dir.join("records.csv"),
        devices_csv: dir.join("devices.csv"),
        frames_txt: dir.join("frames.txt"),
        config_toml: dir.join("pluvio.toml"),
    };
    let write = |path: &Path, content: String| -> Result<(), CmdError> {
        std::fs::write(path, content)
            .map_err(|e| CmdError::Internal(format!("cannot write {}: {e}", path.display())))
    };
    write(&paths.stations_csv, stations_csv(&stations))?;
    write(&paths.records_csv, records_csv(&mut rng, &stations, &series))?;
    write(&paths.devices_csv, devices_csv(&stations))?;
    write(&paths.frames_txt, frames_txt(&mut rng, &stations))?;
    write(&paths.config_toml, config_toml(dir))?;

    println!(
        "wrote {} stations x {} days under {}",
        spec.stations,
        spec.days,
        dir.display()
    );
    Ok(paths)
}
