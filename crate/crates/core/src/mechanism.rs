//! Laplace noise and the privatize-and-clamp primitive for count queries.
//!
//! Every draw is addressed by a [`NoiseSeed`]: a base seed plus a structured
//! stream id `(zone, query label, iteration)`. The base seed, zone and label
//! are hashed into a ChaCha key and the iteration selects the ChaCha stream,
//! so any draw can be recomputed in isolation and work can be spread across
//! threads without changing the output.
//!
//! The sampler is the textbook inverse-CDF transform on `f64`. It is not
//! hardened against floating-point side channels on the low-order bits of
//! the output.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const STREAM_DOMAIN: &[u8] = b"dpcoverage.noise.v1";

/// Parameters of a Laplace mechanism. The scale is always derived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceParams {
    sensitivity: f64,
    epsilon: f64,
}

impl LaplaceParams {
    pub fn new(sensitivity: f64, epsilon: f64) -> Result<Self> {
        if !(sensitivity.is_finite() && sensitivity > 0.0) {
            return Err(Error::invalid(format!(
                "sensitivity must be positive and finite, got {sensitivity}"
            )));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::invalid(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        Ok(LaplaceParams {
            sensitivity,
            epsilon,
        })
    }

    /// Count queries have l1-sensitivity 1.
    pub fn for_count(epsilon: f64) -> Result<Self> {
        Self::new(1.0, epsilon)
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn scale(&self) -> f64 {
        self.sensitivity / self.epsilon
    }
}

/// Identifies one independent noise stream.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub zone: String,
    pub label: String,
    pub iteration: u64,
}

impl StreamId {
    pub fn new(zone: impl Into<String>, label: impl Into<String>, iteration: u64) -> Self {
        StreamId {
            zone: zone.into(),
            label: label.into(),
            iteration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NoiseSeed {
    pub base_seed: u64,
    pub stream: StreamId,
}

impl NoiseSeed {
    pub fn new(base_seed: u64, stream: StreamId) -> Self {
        NoiseSeed { base_seed, stream }
    }

    pub fn key(&self) -> StreamKey {
        StreamKey::derive(self.base_seed, &self.stream.zone, &self.stream.label)
    }

    /// The open-interval uniform this seed maps to.
    pub fn uniform(&self) -> f64 {
        self.key().uniform(self.stream.iteration)
    }
}

/// Hashed `(base_seed, zone, label)`; iterations index streams under it.
///
/// Deriving the key once and calling [`StreamKey::uniform`] per iteration
/// gives exactly the draws of the equivalent [`NoiseSeed`]s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey([u8; 32]);

impl StreamKey {
    pub fn derive(base_seed: u64, zone: &str, label: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(STREAM_DOMAIN);
        hasher.update(base_seed.to_le_bytes());
        hasher.update((zone.len() as u64).to_le_bytes());
        hasher.update(zone.as_bytes());
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
        StreamKey(hasher.finalize().into())
    }

    /// Uniform draw in the open interval (-1/2, 1/2) for one iteration.
    pub fn uniform(&self, iteration: u64) -> f64 {
        let mut rng = ChaCha8Rng::from_seed(self.0);
        rng.set_stream(iteration);
        uniform_open_half(rng.next_u64())
    }
}

/// Maps 64 random bits to (-1/2, 1/2), never hitting either endpoint or 0.
///
/// Uses the top 52 bits as a lattice point `b`, returning
/// `(b + 1/2) / 2^52 - 1/2`. Every step is exact in `f64`.
pub fn uniform_open_half(bits: u64) -> f64 {
    let lattice = (bits >> 12) as f64;
    (lattice + 0.5) * (1.0 / (1u64 << 52) as f64) - 0.5
}

/// Inverse Laplace CDF: `-scale * sgn(u) * ln(1 - 2|u|)` for `u` in (-1/2, 1/2).
pub fn laplace_from_uniform(scale: f64, u: f64) -> f64 {
    debug_assert!(u > -0.5 && u < 0.5);
    -scale * u.signum() * (-2.0 * u.abs()).ln_1p()
}

/// One draw from Lap(0, sensitivity / epsilon).
pub fn laplace_sample(params: &LaplaceParams, seed: &NoiseSeed) -> f64 {
    laplace_from_uniform(params.scale(), seed.uniform())
}

/// `max(0, count + noise)`. Clamping is the final step and the result is
/// not rounded.
pub fn privatize_count(count: u64, params: &LaplaceParams, seed: &NoiseSeed) -> f64 {
    clamp_count(count as f64 + laplace_sample(params, seed))
}

pub(crate) fn clamp_count(noisy: f64) -> f64 {
    noisy.max(0.0)
}
