//! Error ranges by simulation over the released counts.
//!
//! For each zone the released high-speed, services and non-services counts
//! are re-noised `k` times with the release's Laplace scale. Each simulated
//! coverage is compared with the released one, giving deviations
//! `d_i = released - simulated`. The report carries the mean absolute
//! deviation, the mean signed deviation and the nearest-rank 95th
//! percentile of `|d_i|`.
//!
//! Only [`PrivateZipRecord`]s enter here, so the ranges are post-processing
//! and spend no privacy budget.
//!
//! Simulated counts are clamped at zero and simulated coverage is clipped to
//! [0, 1], exactly like the release path. Iterations whose simulated
//! services count clamps to zero are undefined and excluded.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mechanism::{clamp_count, laplace_from_uniform, LaplaceParams, StreamKey};
use crate::release::{clip_unit, compute_bce, HouseholdRecord, PrivateZipRecord, ZoneId};
use crate::Epsilon;

pub const DEFAULT_ITERATIONS: u64 = 1000;

/// Labels of the counts that are re-noised. The low-speed count plays no
/// part in the coverage and is left alone.
const SIMULATED_LABELS: [&str; 3] = ["H", "M", "O"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationConfig {
    k: u64,
    pub per_query_epsilon: Epsilon,
    pub base_seed: u64,
}

impl SimulationConfig {
    pub fn new(k: u64, per_query_epsilon: Epsilon, base_seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        LaplaceParams::for_count(per_query_epsilon.as_f64())?;
        Ok(SimulationConfig {
            k,
            per_query_epsilon,
            base_seed,
        })
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    fn params(&self) -> LaplaceParams {
        LaplaceParams::for_count(self.per_query_epsilon.as_f64()).expect("validated in new")
    }
}

/// Per-zone noise keys for the three simulated counts. Iteration `i` of the
/// simulation reads stream `(zone, label, i)` for `i` in `1..=k`; stream 0
/// belongs to the release.
#[derive(Debug, Clone, Copy)]
pub struct SimulationStreams {
    keys: [StreamKey; 3],
}

impl SimulationStreams {
    pub fn new(base_seed: u64, zone: &ZoneId) -> Self {
        SimulationStreams {
            keys: SIMULATED_LABELS.map(|label| StreamKey::derive(base_seed, zone.as_str(), label)),
        }
    }
}

/// One simulated re-release of a zone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulatedRelease {
    pub high_speed: f64,
    pub services: f64,
    pub non_services: f64,
    /// Clipped coverage, `None` when the simulated services count is zero.
    pub bce: Option<f64>,
}

/// Re-noises the released counts once.
pub fn simulate_draw(
    private: &PrivateZipRecord,
    households: u64,
    params: &LaplaceParams,
    streams: &SimulationStreams,
    iteration: u64,
) -> SimulatedRelease {
    let scale = params.scale();
    let [h, m, o] = [private.high_speed, private.services, private.non_services];
    let noisy = |value: f64, key: &StreamKey| clamp_count(value + laplace_from_uniform(scale, key.uniform(iteration)));
    let high_speed = noisy(h, &streams.keys[0]);
    let services = noisy(m, &streams.keys[1]);
    let non_services = noisy(o, &streams.keys[2]);
    SimulatedRelease {
        high_speed,
        services,
        non_services,
        bce: compute_bce(high_speed, services, non_services, households)
            .ok()
            .map(clip_unit),
    }
}

/// One simulated deviation `released - simulated`, or `None` if either side
/// is undefined.
pub fn simulate_once(
    private: &PrivateZipRecord,
    households: u64,
    params: &LaplaceParams,
    streams: &SimulationStreams,
    iteration: u64,
) -> Option<f64> {
    let released = private.coverage(Some(households)).bce?;
    let simulated = simulate_draw(private, households, params, streams, iteration).bce?;
    Some(released - simulated)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub mae: f64,
    pub msd: f64,
    pub p95: f64,
}

impl ErrorStats {
    /// Statistics of a deviation vector; `None` when it is empty.
    pub fn from_deviations(deviations: &[f64]) -> Option<Self> {
        if deviations.is_empty() {
            return None;
        }
        let n = deviations.len() as f64;
        let mut abs: Vec<f64> = deviations.iter().map(|d| d.abs()).collect();
        let mae = abs.iter().sum::<f64>() / n;
        let msd = deviations.iter().sum::<f64>() / n;
        abs.sort_by(f64::total_cmp);
        let p95 = nearest_rank(&abs, 95)?;
        Some(ErrorStats { mae, msd, p95 })
    }
}

/// Nearest-rank percentile of an ascending slice: the element at 1-based
/// rank `ceil(pct/100 * n)`. No interpolation.
pub fn nearest_rank(sorted: &[f64], pct: u32) -> Option<f64> {
    if sorted.is_empty() || pct == 0 || pct > 100 {
        return None;
    }
    let n = sorted.len();
    let rank = (pct as usize * n).div_ceil(100);
    Some(sorted[rank - 1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub zone: ZoneId,
    pub k: u64,
    /// Share of the `k` iterations that produced a defined deviation.
    pub defined_fraction: f64,
    /// Absent when no iteration was defined.
    pub stats: Option<ErrorStats>,
}

/// Runs `k` simulated releases of one zone and summarizes the deviations.
pub fn estimate_error_ranges(private: &PrivateZipRecord, households: u64, config: &SimulationConfig) -> ErrorReport {
    let params = config.params();
    let streams = SimulationStreams::new(config.base_seed, &private.zone);
    let deviations: Vec<f64> = match private.coverage(Some(households)).bce {
        Some(released) => (1..=config.k)
            .filter_map(|i| simulate_draw(private, households, &params, &streams, i).bce)
            .map(|simulated| released - simulated)
            .collect(),
        None => Vec::new(),
    };
    ErrorReport {
        zone: private.zone.clone(),
        k: config.k,
        defined_fraction: deviations.len() as f64 / config.k as f64,
        stats: ErrorStats::from_deviations(&deviations),
    }
}

/// Error reports for a released dataset, in input order. Zones without
/// household data get `None`.
pub fn estimate_dataset(
    records: &[PrivateZipRecord],
    households: &HashMap<ZoneId, HouseholdRecord>,
    config: &SimulationConfig,
) -> Vec<Option<ErrorReport>> {
    records
        .par_iter()
        .map(|p| {
            households
                .get(&p.zone)
                .map(|hh| estimate_error_ranges(p, hh.households(), config))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketSummary {
    /// Inclusive lower bound.
    pub low: u64,
    /// Exclusive upper bound, `None` for the last, unbounded bucket.
    pub high: Option<u64>,
    pub zone_count: u64,
    /// Means over the zones in the bucket; `None` when it is empty.
    pub mean_mae: Option<f64>,
    pub mean_msd: Option<f64>,
    pub mean_p95: Option<f64>,
}

/// Groups zone error statistics into household buckets `[t_j, t_{j+1})`,
/// with a final bucket `[t_last, inf)`.
///
/// Thresholds must be strictly ascending. A zone below the first threshold
/// is an error since it would fall outside every bucket.
pub fn bucket_by_households(reports: &[(ErrorStats, u64)], thresholds: &[u64]) -> Result<Vec<BucketSummary>> {
    if thresholds.is_empty() {
        return Err(Error::invalid("at least one threshold is required"));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("thresholds must be strictly ascending"));
    }
    let mut sums = vec![(0u64, 0.0f64, 0.0f64, 0.0f64); thresholds.len()];
    for (stats, hh) in reports {
        let idx = thresholds.partition_point(|&t| t <= *hh);
        if idx == 0 {
            return Err(Error::invalid(format!(
                "zone with {hh} households is below the lowest threshold {}",
                thresholds[0]
            )));
        }
        let s = &mut sums[idx - 1];
        s.0 += 1;
        s.1 += stats.mae;
        s.2 += stats.msd;
        s.3 += stats.p95;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(i, (count, mae, msd, p95))| {
            let mean = |total: f64| (count > 0).then(|| total / count as f64);
            BucketSummary {
                low: thresholds[i],
                high: thresholds.get(i + 1).copied(),
                zone_count: count,
                mean_mae: mean(mae),
                mean_msd: mean(msd),
                mean_p95: mean(p95),
            }
        })
        .collect())
}
