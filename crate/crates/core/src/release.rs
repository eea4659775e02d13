//! Privatized counts and the Broadband Coverage Estimate per zone.
//!
//! Coverage is `H * (M / (M + O))^-1 / households`: high-speed devices,
//! scaled up by the inverse share of devices seen by the services, per
//! household. Household counts are public and used unnoised.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::accountant::QueryPlan;
use crate::epsilon::Epsilon;
use crate::error::{Error, Result};
use crate::mechanism::{privatize_count, LaplaceParams, NoiseSeed, StreamId};

/// Query labels, in release order. `L` is published but unused by the
/// coverage formula.
pub const COUNT_LABELS: [&str; 4] = ["L", "H", "M", "O"];

/// A five-digit zip code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ZoneId(String);

impl ZoneId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for ZoneId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() == 5 && s.bytes().all(|b| b.is_ascii_digit()) {
            Ok(ZoneId(s.to_owned()))
        } else {
            Err(Error::invalid(format!("zone {s:?} is not a 5-digit zip code")))
        }
    }
}

impl fmt::Display for ZoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// True device counts for one zone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawZipRecord {
    pub zone: ZoneId,
    /// Devices below 25 Mbps.
    pub low_speed: u64,
    /// Devices at or above 25 Mbps.
    pub high_speed: u64,
    /// Devices using the services.
    pub services: u64,
    /// Devices not using the services.
    pub non_services: u64,
}

impl RawZipRecord {
    fn counts(&self) -> [u64; 4] {
        [self.low_speed, self.high_speed, self.services, self.non_services]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HouseholdRecord {
    pub zone: ZoneId,
    households: u64,
}

impl HouseholdRecord {
    pub fn new(zone: ZoneId, households: u64) -> Result<Self> {
        if households == 0 {
            return Err(Error::invalid(format!("zone {zone} has zero households")));
        }
        Ok(HouseholdRecord { zone, households })
    }

    pub fn households(&self) -> u64 {
        self.households
    }
}

/// Clamped noisy counts. The only view of a zone that leaves the release.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivateZipRecord {
    pub zone: ZoneId,
    pub low_speed: f64,
    pub high_speed: f64,
    pub services: f64,
    pub non_services: f64,
    pub epsilon_total: Epsilon,
}

impl PrivateZipRecord {
    /// Coverage computed from the noisy counts, clipped to [0, 1].
    pub fn coverage(&self, households: Option<u64>) -> CoverageEstimate {
        CoverageEstimate::from_counts(
            self.zone.clone(),
            self.high_speed,
            self.services,
            self.non_services,
            households,
        )
    }
}

/// Coverage for a zone. Both values are absent when the services count is
/// zero or the zone has no household data.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageEstimate {
    pub zone: ZoneId,
    /// Clipped to [0, 1].
    pub bce: Option<f64>,
    /// Before clipping.
    pub raw_bce: Option<f64>,
}

impl CoverageEstimate {
    pub fn from_counts(
        zone: ZoneId,
        high_speed: f64,
        services: f64,
        non_services: f64,
        households: Option<u64>,
    ) -> Self {
        let raw = households.and_then(|hh| compute_bce(high_speed, services, non_services, hh).ok());
        CoverageEstimate {
            zone,
            bce: raw.map(clip_unit),
            raw_bce: raw,
        }
    }

    pub fn is_defined(&self) -> bool {
        self.bce.is_some()
    }
}

/// `H * (M + O) / (M * households)`.
pub fn compute_bce(high_speed: f64, services: f64, non_services: f64, households: u64) -> Result<f64> {
    if households == 0 {
        return Err(Error::invalid("households must be at least 1"));
    }
    if [high_speed, services, non_services]
        .iter()
        .any(|v| !(v.is_finite() && *v >= 0.0))
    {
        return Err(Error::invalid("device counts must be finite and nonnegative"));
    }
    if services == 0.0 {
        return Err(Error::DegenerateDenominator);
    }
    Ok(high_speed * (services + non_services) / (services * households as f64))
}

pub fn clip_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Options for [`release_dataset`] beyond the privacy parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReleaseOptions {
    /// Round noisy counts to the nearest integer after clamping.
    pub round_counts: bool,
}

/// Privatizes the four counts of one zone with independent Laplace noise.
/// Each draw uses stream `(zone, label, 0)`.
pub fn privatize_record(
    raw: &RawZipRecord,
    per_query_epsilon: Epsilon,
    base_seed: u64,
) -> Result<PrivateZipRecord> {
    privatize_record_with(raw, per_query_epsilon, base_seed, ReleaseOptions::default())
}

pub fn privatize_record_with(
    raw: &RawZipRecord,
    per_query_epsilon: Epsilon,
    base_seed: u64,
    options: ReleaseOptions,
) -> Result<PrivateZipRecord> {
    let params = LaplaceParams::for_count(per_query_epsilon.as_f64())?;
    let epsilon_total = QueryPlan::coverage_release(per_query_epsilon).total_epsilon()?;
    let noisy = noisy_counts(raw, &params, base_seed, options);
    Ok(PrivateZipRecord {
        zone: raw.zone.clone(),
        low_speed: noisy[0],
        high_speed: noisy[1],
        services: noisy[2],
        non_services: noisy[3],
        epsilon_total,
    })
}

fn noisy_counts(raw: &RawZipRecord, params: &LaplaceParams, base_seed: u64, options: ReleaseOptions) -> [f64; 4] {
    let counts = raw.counts();
    std::array::from_fn(|i| {
        let seed = NoiseSeed::new(base_seed, StreamId::new(raw.zone.as_str(), COUNT_LABELS[i], 0));
        let v = privatize_count(counts[i], params, &seed);
        if options.round_counts {
            v.round()
        } else {
            v
        }
    })
}

/// Releases every zone, in input order. Zones without household data, or
/// whose noisy services count is zero, get an undefined estimate.
pub fn release_dataset(
    records: &[RawZipRecord],
    households: &HashMap<ZoneId, HouseholdRecord>,
    per_query_epsilon: Epsilon,
    base_seed: u64,
    options: ReleaseOptions,
) -> Result<Vec<(PrivateZipRecord, CoverageEstimate)>> {
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if !seen.insert(&r.zone) {
            return Err(Error::DuplicateZone {
                zone: r.zone.to_string(),
            });
        }
    }
    // Fail on bad parameters before spawning work.
    LaplaceParams::for_count(per_query_epsilon.as_f64())?;

    records
        .par_iter()
        .map(|raw| {
            let private = privatize_record_with(raw, per_query_epsilon, base_seed, options)?;
            let hh = households.get(&raw.zone).map(HouseholdRecord::households);
            if hh.is_none() {
                log::warn!("zone {} has no household data; estimate undefined", raw.zone);
            }
            let estimate = private.coverage(hh);
            Ok((private, estimate))
        })
        .collect()
}
