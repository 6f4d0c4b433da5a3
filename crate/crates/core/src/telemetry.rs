//! Wire codec for gauge telemetry frames and daily aggregation.
//!
//! Stations report over SMS-class transports, so a frame is a single line of
//! printable ASCII, at most 160 bytes:
//!
//! ```text
//! JP,1,<device_id>,<unix_seconds>,<tip_count>,<temp_c>,<soil_pct>,<hum_pct>,<uv_mw_cm2>,<batt_v>*<CK>
//! ```
//!
//! `CK` is two uppercase hex digits: the XOR of every byte before the `*`.
//! Temperature, soil moisture, and relative humidity carry exactly one
//! fractional digit; solar radiation and battery voltage carry exactly two.
//! The parser is strict — any deviation from the grammar is rejected rather
//! than repaired, because a gauge in the field cannot be asked what it meant.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;

use crate::data::{DailyRecord, Day};

/// Millimetres of rain per tipping-bucket tip.
pub const MM_PER_TIP: f64 = 0.2;

/// Maximum encoded frame length in bytes, checksum included.
pub const MAX_FRAME_LEN: usize = 160;

const FRAME_TAG: &str = "JP";
const FRAME_VERSION: &str = "1";
const DEVICE_ID_MAX_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TelemetryError {
    /// The input does not match the frame grammar.
    #[error("BadFrame: {0}")]
    BadFrame(&'static str),
    /// The frame parsed but its checksum does not cover its bytes.
    #[error("ChecksumMismatch: stated {stated:02X}, computed {computed:02X}")]
    ChecksumMismatch { stated: u8, computed: u8 },
    /// A field is grammatical but outside its allowed range or charset.
    #[error("InvalidField: {0}")]
    InvalidField(&'static str),
    /// The version token is not one this codec speaks.
    #[error("UnsupportedVersion: got {got:?}, expected \"1\"")]
    UnsupportedVersion { got: String },
    /// The encoded frame would exceed [`MAX_FRAME_LEN`] bytes.
    #[error("OversizeMessage: {len} bytes exceeds {MAX_FRAME_LEN}")]
    OversizeMessage { len: usize },
}

impl TelemetryError {
    /// Stable machine-readable name, used as the `reason` in HTTP rejections.
    pub fn name(&self) -> &'static str {
        match self {
            TelemetryError::BadFrame(_) => "BadFrame",
            TelemetryError::ChecksumMismatch { .. } => "ChecksumMismatch",
            TelemetryError::InvalidField(_) => "InvalidField",
            TelemetryError::UnsupportedVersion { .. } => "UnsupportedVersion",
            TelemetryError::OversizeMessage { .. } => "OversizeMessage",
        }
    }
}

/// Fixed-point decimal with exactly `DIGITS` fractional digits, stored as a
/// scaled integer so encode/parse round-trips are identities even where the
/// nominal value (say 0.1) has no exact binary representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FixedDec<const DIGITS: u32>(i64);

/// One fractional digit (temperature, soil moisture, humidity).
pub type Dec1 = FixedDec<1>;
/// Two fractional digits (solar radiation, battery voltage).
pub type Dec2 = FixedDec<2>;

impl<const DIGITS: u32> FixedDec<DIGITS> {
    const SCALE: i64 = 10_i64.pow(DIGITS);

    /// Wraps an already scaled integer: `Dec1::from_scaled(185)` is 18.5.
    pub const fn from_scaled(scaled: i64) -> Self {
        FixedDec(scaled)
    }

    /// Quantizes a float to this precision (round half away from zero).
    /// Returns `None` for non-finite input or values beyond the i64 range.
    pub fn from_f64(value: f64) -> Option<Self> {
        let scaled = libm::round(value * Self::SCALE as f64);
        if !scaled.is_finite() || scaled < i64::MIN as f64 || scaled > i64::MAX as f64 {
            return None;
        }
        Some(FixedDec(scaled as i64))
    }

    pub const fn scaled(self) -> i64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / Self::SCALE as f64
    }

    /// Strict parse of `-?digits.digits` with exactly `DIGITS` fractional
    /// digits; no signs on the fraction, no whitespace, no exponents.
    fn parse_strict(s: &str) -> Option<Self> {
        let (int_part, frac_part) = s.split_once('.')?;
        if frac_part.len() != DIGITS as usize || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let (negative, digits) = match int_part.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, int_part),
        };
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let int: i64 = digits.parse().ok()?;
        let frac: i64 = frac_part.parse().ok()?;
        let magnitude = int.checked_mul(Self::SCALE)?.checked_add(frac)?;
        Some(FixedDec(if negative { -magnitude } else { magnitude }))
    }
}

impl<const DIGITS: u32> fmt::Display for FixedDec<DIGITS> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let magnitude = self.0.unsigned_abs();
        let scale = Self::SCALE as u64;
        if self.0 < 0 {
            f.write_str("-")?;
        }
        write!(
            f,
            "{}.{:0width$}",
            magnitude / scale,
            magnitude % scale,
            width = DIGITS as usize
        )
    }
}

/// One decoded gauge report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TelemetryMessage {
    /// Reporting device, 1–16 chars from `[A-Za-z0-9-]`.
    pub device_id: String,
    /// Unix timestamp, seconds.
    pub timestamp: i64,
    /// Tipping-bucket tips since the previous report.
    pub tip_count: u32,
    /// Air temperature, °C.
    pub temp_c: Dec1,
    /// Soil moisture, percent (0–100).
    pub soil_pct: Dec1,
    /// Relative humidity, percent (0–100).
    pub hum_pct: Dec1,
    /// Solar radiation, mW/cm².
    pub uv_mw_cm2: Dec2,
    /// Battery voltage (0–25 V).
    pub batt_v: Dec2,
}

impl TelemetryMessage {
    /// Checks the field invariants shared by [`encode_telemetry`] and
    /// [`parse_telemetry`].
    pub fn validate(&self) -> Result<(), TelemetryError> {
        if self.device_id.is_empty() || self.device_id.len() > DEVICE_ID_MAX_LEN {
            return Err(TelemetryError::InvalidField(
                "device_id must be 1-16 characters",
            ));
        }
        if !self
            .device_id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-')
        {
            return Err(TelemetryError::InvalidField(
                "device_id may only contain [A-Za-z0-9-]",
            ));
        }
        if self.soil_pct.scaled() < 0 || self.soil_pct.scaled() > 1000 {
            return Err(TelemetryError::InvalidField(
                "soil_pct must be within 0.0-100.0",
            ));
        }
        if self.hum_pct.scaled() < 0 || self.hum_pct.scaled() > 1000 {
            return Err(TelemetryError::InvalidField(
                "hum_pct must be within 0.0-100.0",
            ));
        }
        if self.uv_mw_cm2.scaled() < 0 {
            return Err(TelemetryError::InvalidField("uv_mw_cm2 must be >= 0"));
        }
        if self.batt_v.scaled() < 0 || self.batt_v.scaled() > 2500 {
            return Err(TelemetryError::InvalidField(
                "batt_v must be within 0.00-25.00",
            ));
        }
        Ok(())
    }
}

/// XOR of all bytes; the frame checksum covers everything before the `*`.
pub fn xor_checksum(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0, |acc, &b| acc ^ b)
}

/// Encodes a message as a wire frame, checksum included.
pub fn encode_telemetry(msg: &TelemetryMessage) -> Result<String, TelemetryError> {
    msg.validate()?;
    let mut payload = String::new();
    write!(
        payload,
        "{},{},{},{},{},{},{},{},{},{}",
        FRAME_TAG,
        FRAME_VERSION,
        msg.device_id,
        msg.timestamp,
        msg.tip_count,
        msg.temp_c,
        msg.soil_pct,
        msg.hum_pct,
        msg.uv_mw_cm2,
        msg.batt_v
    )
    .expect("writing to String cannot fail");
    let frame_len = payload.len() + 3; // '*' and two checksum digits
    if frame_len > MAX_FRAME_LEN {
        return Err(TelemetryError::OversizeMessage { len: frame_len });
    }
    let ck = xor_checksum(payload.as_bytes());
    write!(payload, "*{ck:02X}").expect("writing to String cannot fail");
    Ok(payload)
}

/// Parses and verifies one wire frame.
///
/// Accepts arbitrary bytes so ingest paths can feed it unsanitized input;
/// anything that is not exactly a valid frame is rejected with the most
/// specific error available. The checksum is verified before the fields,
/// so corruption is reported as corruption even when it lands in a field.
pub fn parse_telemetry(raw: &[u8]) -> Result<TelemetryMessage, TelemetryError> {
    if raw.len() > MAX_FRAME_LEN {
        return Err(TelemetryError::OversizeMessage { len: raw.len() });
    }
    if !raw.is_ascii() {
        return Err(TelemetryError::BadFrame("frame contains non-ASCII bytes"));
    }
    let text = core::str::from_utf8(raw).expect("ASCII is valid UTF-8");

    let star = match text.find('*') {
        Some(i) => i,
        None => return Err(TelemetryError::BadFrame("missing '*' delimiter")),
    };
    let (payload, after_star) = (&text[..star], &text[star + 1..]);
    if after_star.len() != 2
        || !after_star
            .bytes()
            .all(|b| b.is_ascii_digit() || (b'A'..=b'F').contains(&b))
    {
        return Err(TelemetryError::BadFrame(
            "checksum must be exactly two uppercase hex digits",
        ));
    }
    let stated = u8::from_str_radix(after_star, 16).expect("two hex digits");
    let computed = xor_checksum(payload.as_bytes());
    if stated != computed {
        return Err(TelemetryError::ChecksumMismatch { stated, computed });
    }

    let fields: Vec<&str> = payload.split(',').collect();
    if fields.len() != 10 {
        return Err(TelemetryError::BadFrame("expected 10 comma-separated fields"));
    }
    if fields[0] != FRAME_TAG {
        return Err(TelemetryError::BadFrame("frame must start with \"JP\""));
    }
    if fields[1] != FRAME_VERSION {
        return Err(TelemetryError::UnsupportedVersion {
            got: fields[1].to_owned(),
        });
    }

    let timestamp = parse_signed_int(fields[3])
        .ok_or(TelemetryError::BadFrame("timestamp must be a decimal integer"))?;
    let tip_count: u32 = parse_unsigned_int(fields[4])
        .ok_or(TelemetryError::BadFrame("tip_count must be a non-negative integer"))?
        .try_into()
        .map_err(|_| TelemetryError::InvalidField("tip_count out of range"))?;

    let msg = TelemetryMessage {
        device_id: fields[2].to_owned(),
        timestamp,
        tip_count,
        temp_c: Dec1::parse_strict(fields[5])
            .ok_or(TelemetryError::BadFrame("temp_c must have one fractional digit"))?,
        soil_pct: Dec1::parse_strict(fields[6])
            .ok_or(TelemetryError::BadFrame("soil_pct must have one fractional digit"))?,
        hum_pct: Dec1::parse_strict(fields[7])
            .ok_or(TelemetryError::BadFrame("hum_pct must have one fractional digit"))?,
        uv_mw_cm2: Dec2::parse_strict(fields[8])
            .ok_or(TelemetryError::BadFrame("uv_mw_cm2 must have two fractional digits"))?,
        batt_v: Dec2::parse_strict(fields[9])
            .ok_or(TelemetryError::BadFrame("batt_v must have two fractional digits"))?,
    };
    msg.validate()?;
    Ok(msg)
}

fn parse_signed_int(s: &str) -> Option<i64> {
    let digits = s.strip_prefix('-').unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

fn parse_unsigned_int(s: &str) -> Option<u64> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

/// Converts a tip count to millimetres of rain.
pub fn tips_to_mm(tip_count: u64) -> f64 {
    tip_count as f64 * MM_PER_TIP
}

/// A message whose device is not in the station map; reported alongside the
/// aggregate rather than failing it, so one misconfigured gauge cannot block
/// a whole export.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownDevice {
    pub device_id: String,
    pub timestamp: i64,
}

/// Groups messages into daily per-station rainfall totals.
///
/// Days are UTC civil days. Exact duplicates — same `(device_id, timestamp)`
/// — are counted once, keeping the first occurrence, since SMS gateways
/// redeliver. Messages from devices missing from `station_map` are skipped
/// and reported as warnings. Days with no messages produce no record.
/// Records come back sorted by `(station_id, date)`.
pub fn aggregate_daily(
    messages: &[TelemetryMessage],
    station_map: &BTreeMap<String, String>,
) -> (Vec<DailyRecord>, Vec<UnknownDevice>) {
    let mut seen = BTreeSet::new();
    let mut totals: BTreeMap<(&str, Day), u64> = BTreeMap::new();
    let mut warnings = Vec::new();

    for msg in messages {
        if !seen.insert((msg.device_id.as_str(), msg.timestamp)) {
            continue;
        }
        let Some(station_id) = station_map.get(&msg.device_id) else {
            warnings.push(UnknownDevice {
                device_id: msg.device_id.clone(),
                timestamp: msg.timestamp,
            });
            continue;
        };
        let day = Day::from_unix_seconds(msg.timestamp);
        *totals.entry((station_id.as_str(), day)).or_insert(0) += u64::from(msg.tip_count);
    }

    let records = totals
        .into_iter()
        .map(|((station_id, date), tips)| DailyRecord {
            station_id: station_id.to_owned(),
            date,
            precip_mm: Some(tips_to_mm(tips)),
        })
        .collect();
    (records, warnings)
}
