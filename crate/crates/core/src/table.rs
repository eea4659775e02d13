//! CSV files consumed and produced by the tool.
//!
//! Readers are strict: the header must match exactly, every row must parse,
//! and failures carry the 1-based line number. A bad row aborts the whole
//! read because the zone list of a release is fixed.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::str::FromStr;

use csv::{ReaderBuilder, StringRecord, WriterBuilder};

use crate::epsilon::Epsilon;
use crate::error::{Error, Result};
use crate::errorsim::{BucketSummary, ErrorStats};
use crate::release::{HouseholdRecord, PrivateZipRecord, RawZipRecord, ZoneId};

pub const COUNTS_HEADER: [&str; 5] = [
    "zip",
    "low_speed_devices",
    "high_speed_devices",
    "services_devices",
    "non_services_devices",
];
pub const HOUSEHOLDS_HEADER: [&str; 2] = ["zip", "households"];
pub const RELEASE_HEADER: [&str; 7] = [
    "zip",
    "broadband_usage",
    "broadband_usage_raw",
    "error_mae",
    "error_msd",
    "error_p95",
    "epsilon",
];
pub const PRIVATE_COUNTS_HEADER: [&str; 6] = [
    "zip",
    "low_speed_devices_dp",
    "high_speed_devices_dp",
    "services_devices_dp",
    "non_services_devices_dp",
    "epsilon",
];
pub const BUCKETS_HEADER: [&str; 6] = ["bucket_low", "bucket_high", "zones", "mean_mae", "mean_msd", "mean_p95"];

/// One row of the published release table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseRow {
    pub zone: ZoneId,
    /// Clipped coverage, printed with three decimals.
    pub broadband_usage: Option<f64>,
    pub broadband_usage_raw: Option<f64>,
    pub errors: Option<ErrorStats>,
    pub epsilon: Epsilon,
}

struct Rows<R: Read> {
    reader: csv::Reader<R>,
    record: StringRecord,
}

impl<R: Read> Rows<R> {
    fn open(input: R, expected: &[&str]) -> Result<Self> {
        let mut reader = ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
        if header.iter().ne(expected.iter().copied()) {
            return Err(Error::parse(
                1,
                format!("expected header `{}`, found `{}`", expected.join(","), header.iter().collect::<Vec<_>>().join(",")),
            ));
        }
        Ok(Rows {
            reader,
            record: StringRecord::new(),
        })
    }

    /// Advances to the next row and returns its line number.
    fn next(&mut self) -> Result<Option<u64>> {
        let line = self.reader.position().line();
        match self.reader.read_record(&mut self.record) {
            Ok(true) => Ok(Some(self.record.position().map_or(line, |p| p.line()))),
            Ok(false) => Ok(None),
            Err(e) => Err(csv_error(e, line)),
        }
    }
}

fn csv_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            Error::parse(line, format!("expected {expected_len} fields, found {len}"))
        }
        csv::ErrorKind::Utf8 { .. } => Error::parse(line, "invalid UTF-8"),
        other => Error::parse(line, format!("{other:?}")),
    }
}

fn field<T: FromStr>(record: &StringRecord, idx: usize, name: &str, line: u64) -> Result<T> {
    let raw = record.get(idx).unwrap_or("");
    raw.parse()
        .map_err(|_| Error::parse(line, format!("invalid {name} {raw:?}")))
}

fn zone_field(record: &StringRecord, line: u64) -> Result<ZoneId> {
    record
        .get(0)
        .unwrap_or("")
        .parse()
        .map_err(|e: Error| Error::parse(line, e.to_string()))
}

fn real_field(record: &StringRecord, idx: usize, name: &str, line: u64) -> Result<f64> {
    let v: f64 = field(record, idx, name, line)?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("{name} must be finite")));
    }
    Ok(v)
}

fn nonneg_field(record: &StringRecord, idx: usize, name: &str, line: u64) -> Result<f64> {
    let v = real_field(record, idx, name, line)?;
    if v < 0.0 {
        return Err(Error::parse(line, format!("{name} must be nonnegative")));
    }
    Ok(v)
}

fn optional<T>(record: &StringRecord, idx: usize, parse: impl FnOnce() -> Result<T>) -> Result<Option<T>> {
    if record.get(idx).unwrap_or("").is_empty() {
        Ok(None)
    } else {
        parse().map(Some)
    }
}

fn check_unique(seen: &mut HashSet<ZoneId>, zone: &ZoneId, line: u64) -> Result<()> {
    if seen.insert(zone.clone()) {
        Ok(())
    } else {
        Err(Error::parse(line, format!("duplicate zone {zone}")))
    }
}

pub fn read_counts<R: Read>(input: R) -> Result<Vec<RawZipRecord>> {
    let mut rows = Rows::open(input, &COUNTS_HEADER)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    while let Some(line) = rows.next()? {
        let r = &rows.record;
        let zone = zone_field(r, line)?;
        check_unique(&mut seen, &zone, line)?;
        out.push(RawZipRecord {
            zone,
            low_speed: field(r, 1, COUNTS_HEADER[1], line)?,
            high_speed: field(r, 2, COUNTS_HEADER[2], line)?,
            services: field(r, 3, COUNTS_HEADER[3], line)?,
            non_services: field(r, 4, COUNTS_HEADER[4], line)?,
        });
    }
    Ok(out)
}

pub fn write_counts<W: Write>(output: W, records: &[RawZipRecord]) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(output);
    w.write_record(COUNTS_HEADER).map_err(write_error)?;
    for r in records {
        w.write_record([
            r.zone.to_string(),
            r.low_speed.to_string(),
            r.high_speed.to_string(),
            r.services.to_string(),
            r.non_services.to_string(),
        ])
        .map_err(write_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_households<R: Read>(input: R) -> Result<Vec<HouseholdRecord>> {
    let mut rows = Rows::open(input, &HOUSEHOLDS_HEADER)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    while let Some(line) = rows.next()? {
        let zone = zone_field(&rows.record, line)?;
        check_unique(&mut seen, &zone, line)?;
        let households: u64 = field(&rows.record, 1, "households", line)?;
        out.push(HouseholdRecord::new(zone, households).map_err(|e| Error::parse(line, e.to_string()))?);
    }
    Ok(out)
}

pub fn households_by_zone(records: Vec<HouseholdRecord>) -> HashMap<ZoneId, HouseholdRecord> {
    records.into_iter().map(|r| (r.zone.clone(), r)).collect()
}

pub fn write_households<W: Write>(output: W, records: &[HouseholdRecord]) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(output);
    w.write_record(HOUSEHOLDS_HEADER).map_err(write_error)?;
    for r in records {
        w.write_record([r.zone.to_string(), r.households().to_string()])
            .map_err(write_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_private_counts<R: Read>(input: R) -> Result<Vec<PrivateZipRecord>> {
    let mut rows = Rows::open(input, &PRIVATE_COUNTS_HEADER)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    while let Some(line) = rows.next()? {
        let r = &rows.record;
        let zone = zone_field(r, line)?;
        check_unique(&mut seen, &zone, line)?;
        out.push(PrivateZipRecord {
            zone,
            low_speed: nonneg_field(r, 1, PRIVATE_COUNTS_HEADER[1], line)?,
            high_speed: nonneg_field(r, 2, PRIVATE_COUNTS_HEADER[2], line)?,
            services: nonneg_field(r, 3, PRIVATE_COUNTS_HEADER[3], line)?,
            non_services: nonneg_field(r, 4, PRIVATE_COUNTS_HEADER[4], line)?,
            epsilon_total: field(r, 5, "epsilon", line)?,
        });
    }
    Ok(out)
}

/// Counts are printed in shortest round-trip form so a reader gets the
/// exact released values back.
pub fn write_private_counts<W: Write>(output: W, records: &[PrivateZipRecord]) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(output);
    w.write_record(PRIVATE_COUNTS_HEADER).map_err(write_error)?;
    for r in records {
        w.write_record([
            r.zone.to_string(),
            r.low_speed.to_string(),
            r.high_speed.to_string(),
            r.services.to_string(),
            r.non_services.to_string(),
            r.epsilon_total.to_string(),
        ])
        .map_err(write_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_release<R: Read>(input: R) -> Result<Vec<ReleaseRow>> {
    let mut rows = Rows::open(input, &RELEASE_HEADER)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    while let Some(line) = rows.next()? {
        let r = &rows.record;
        let zone = zone_field(r, line)?;
        check_unique(&mut seen, &zone, line)?;
        let broadband_usage = optional(r, 1, || {
            let v = real_field(r, 1, "broadband_usage", line)?;
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(Error::parse(line, "broadband_usage must lie within [0, 1]"))
            }
        })?;
        let broadband_usage_raw = optional(r, 2, || nonneg_field(r, 2, "broadband_usage_raw", line))?;
        if broadband_usage.is_some() != broadband_usage_raw.is_some() {
            return Err(Error::parse(line, "broadband_usage and broadband_usage_raw must both be present or both empty"));
        }
        let mae = optional(r, 3, || nonneg_field(r, 3, "error_mae", line))?;
        let msd = optional(r, 4, || real_field(r, 4, "error_msd", line))?;
        let p95 = optional(r, 5, || nonneg_field(r, 5, "error_p95", line))?;
        let errors = match (mae, msd, p95) {
            (Some(mae), Some(msd), Some(p95)) => Some(ErrorStats { mae, msd, p95 }),
            (None, None, None) => None,
            _ => return Err(Error::parse(line, "error columns must all be present or all empty")),
        };
        out.push(ReleaseRow {
            zone,
            broadband_usage,
            broadband_usage_raw,
            errors,
            epsilon: field(r, 6, "epsilon", line)?,
        });
    }
    Ok(out)
}

fn opt_string(v: Option<f64>, fmt: impl Fn(f64) -> String) -> String {
    v.map(fmt).unwrap_or_default()
}

pub fn write_release<W: Write>(output: W, rows: &[ReleaseRow]) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(output);
    w.write_record(RELEASE_HEADER).map_err(write_error)?;
    for r in rows {
        let e = r.errors;
        w.write_record([
            r.zone.to_string(),
            opt_string(r.broadband_usage, |v| format!("{v:.3}")),
            opt_string(r.broadband_usage_raw, |v| v.to_string()),
            opt_string(e.map(|s| s.mae), |v| v.to_string()),
            opt_string(e.map(|s| s.msd), |v| v.to_string()),
            opt_string(e.map(|s| s.p95), |v| v.to_string()),
            r.epsilon.to_string(),
        ])
        .map_err(write_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_buckets<R: Read>(input: R) -> Result<Vec<BucketSummary>> {
    let mut rows = Rows::open(input, &BUCKETS_HEADER)?;
    let mut out = Vec::new();
    while let Some(line) = rows.next()? {
        let r = &rows.record;
        let means = [
            optional(r, 3, || nonneg_field(r, 3, "mean_mae", line))?,
            optional(r, 4, || real_field(r, 4, "mean_msd", line))?,
            optional(r, 5, || nonneg_field(r, 5, "mean_p95", line))?,
        ];
        out.push(BucketSummary {
            low: field(r, 0, "bucket_low", line)?,
            high: optional(r, 1, || field(r, 1, "bucket_high", line))?,
            zone_count: field(r, 2, "zones", line)?,
            mean_mae: means[0],
            mean_msd: means[1],
            mean_p95: means[2],
        });
    }
    Ok(out)
}

pub fn write_buckets<W: Write>(output: W, buckets: &[BucketSummary]) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(output);
    w.write_record(BUCKETS_HEADER).map_err(write_error)?;
    for b in buckets {
        w.write_record([
            b.low.to_string(),
            b.high.map(|h| h.to_string()).unwrap_or_default(),
            b.zone_count.to_string(),
            opt_string(b.mean_mae, |v| v.to_string()),
            opt_string(b.mean_msd, |v| v.to_string()),
            opt_string(b.mean_p95, |v| v.to_string()),
        ])
        .map_err(write_error)?;
    }
    w.flush()?;
    Ok(())
}

fn write_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}
