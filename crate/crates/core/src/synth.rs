//! Synthetic telemetry and household tables.
//!
//! Each zone gets a household count, a target coverage `b` and a services
//! share `s`. One device per household is assumed, so `M + O = households`
//! and `M = round(s * households)` (at least 1). Then `H = round(b * M)`
//! and `L = M - H`, which makes the coverage of the true counts `H / M`.
//! That is within `0.5 / M` of `b`, and within `1 / households` whenever
//! `s >= 0.5`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::release::{HouseholdRecord, RawZipRecord, ZoneId};

/// Largest zone count that fits five-digit zone ids starting at `00001`.
pub const MAX_ZONES: u64 = 99_999;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub zone_count: u64,
    /// Inclusive.
    pub households: (u64, u64),
    /// Inclusive, within [0, 1].
    pub true_bce: (f64, f64),
    /// Inclusive, within (0, 1].
    pub services_share: (f64, f64),
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.zone_count > MAX_ZONES {
            return Err(Error::invalid(format!("at most {MAX_ZONES} zones can be generated")));
        }
        let (hl, hh) = self.households;
        if hl == 0 || hl > hh {
            return Err(Error::invalid(format!("household range {hl}:{hh} is empty or includes 0")));
        }
        let (bl, bh) = self.true_bce;
        if !(0.0 <= bl && bl <= bh && bh <= 1.0) {
            return Err(Error::invalid(format!("coverage range {bl}:{bh} must lie within [0, 1]")));
        }
        let (sl, sh) = self.services_share;
        if !(0.0 < sl && sl <= sh && sh <= 1.0) {
            return Err(Error::invalid(format!("services share range {sl}:{sh} must lie within (0, 1]")));
        }
        Ok(())
    }
}

/// One generated zone with the coverage it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthZone {
    pub counts: RawZipRecord,
    pub households: HouseholdRecord,
    pub target_bce: f64,
}

/// Builds the counts of one zone from its drawn parameters.
pub fn zone_counts(zone: ZoneId, households: u64, target_bce: f64, services_share: f64) -> RawZipRecord {
    let services = ((services_share * households as f64).round() as u64).clamp(1, households);
    let high_speed = ((target_bce * services as f64).round() as u64).min(services);
    RawZipRecord {
        zone,
        low_speed: services - high_speed,
        high_speed,
        services,
        non_services: households - services,
    }
}

fn draw_f64(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

pub fn generate_zones(spec: &SynthSpec) -> Result<Vec<SynthZone>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (1..=spec.zone_count)
        .map(|i| {
            let zone: ZoneId = format!("{i:05}").parse()?;
            let households = rng.random_range(spec.households.0..=spec.households.1);
            let target_bce = draw_f64(&mut rng, spec.true_bce);
            let share = draw_f64(&mut rng, spec.services_share);
            Ok(SynthZone {
                counts: zone_counts(zone.clone(), households, target_bce, share),
                households: HouseholdRecord::new(zone, households)?,
                target_bce,
            })
        })
        .collect()
}

pub fn generate(spec: &SynthSpec) -> Result<(Vec<RawZipRecord>, Vec<HouseholdRecord>)> {
    Ok(generate_zones(spec)?
        .into_iter()
        .map(|z| (z.counts, z.households))
        .unzip())
}
