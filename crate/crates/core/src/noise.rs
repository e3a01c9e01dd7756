//! Seedable Laplace and Gumbel samplers.
//!
//! All randomness in the crate comes from [`RandomStream`] values. A stream is
//! a `(seed, stream_id)` pair; sampling from it creates a [`NoiseSource`]:
//!
//! * generator: ChaCha8 with key `SHA-256(seed as 8 big-endian bytes)` and
//!   ChaCha stream number `stream_id`, starting at word position 0;
//! * uniform draw: `u = ((x >> 11) + 0.5) / 2^53` for the next 64-bit output
//!   `x`, which lies strictly inside (0, 1);
//! * every continuous draw consumes exactly one uniform and applies the
//!   quantile function ([`laplace_quantile`], [`gumbel_quantile`]).
//!
//! Child streams come from [`RandomStream::derive`]: the child keeps the seed
//! and takes as `stream_id` the first 8 bytes (big-endian) of
//! `SHA-256(parent_stream_id as 8 big-endian bytes || tag as UTF-8)`.
//! Report streams use [`RandomStream::for_report`], whose `stream_id` is the
//! first 8 bytes (big-endian) of `SHA-256("{slice_stem}|{metric}|{purpose}")`,
//! with `slice_stem` as in report file names (e.g. `2020-07_US_CA`).

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{Metric, SliceKey};

/// Euler–Mascheroni constant; mean of the standard Gumbel distribution.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const TWO_POW_53: f64 = 9_007_199_254_740_992.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_id: u64,
}

fn sha_prefix(bytes: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for b in bytes {
        hasher.update(b);
    }
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(head)
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn derive(&self, tag: &str) -> Self {
        Self {
            seed: self.seed,
            stream_id: sha_prefix(&[&self.stream_id.to_be_bytes(), tag.as_bytes()]),
        }
    }

    /// Indexed child stream, equivalent to `derive(&index.to_string())`.
    pub fn derive_index(&self, index: u64) -> Self {
        self.derive(&index.to_string())
    }

    pub fn for_report(seed: u64, slice: &SliceKey, metric: Metric, purpose: &str) -> Self {
        let label = format!("{}|{}|{}", slice.file_stem(), metric, purpose);
        Self {
            seed,
            stream_id: sha_prefix(&[label.as_bytes()]),
        }
    }

    pub fn source(&self) -> NoiseSource {
        let key: [u8; 32] = Sha256::digest(self.seed.to_be_bytes()).into();
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        NoiseSource { rng }
    }

    /// One Laplace draw from a fresh source on this stream.
    pub fn laplace(&self, scale: f64) -> Result<f64> {
        self.source().laplace(scale)
    }

    /// One Gumbel draw from a fresh source on this stream.
    pub fn gumbel(&self, scale: f64) -> Result<f64> {
        self.source().gumbel(scale)
    }
}

/// Sampling state advanced locally; never shared.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    rng: ChaCha8Rng,
}

impl NoiseSource {
    /// Uniform draw on the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) / TWO_POW_53
    }

    pub fn laplace(&mut self, scale: f64) -> Result<f64> {
        check_scale(scale)?;
        let u = self.uniform_open();
        Ok(laplace_quantile(u, scale))
    }

    pub fn gumbel(&mut self, scale: f64) -> Result<f64> {
        check_scale(scale)?;
        let u = self.uniform_open();
        Ok(gumbel_quantile(u, scale))
    }
}

pub fn check_scale(scale: f64) -> Result<()> {
    if scale.is_finite() && scale > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidScale(scale))
    }
}

/// Inverse CDF of the zero-mean Laplace distribution with scale `b`.
pub fn laplace_quantile(u: f64, b: f64) -> f64 {
    if u < 0.5 {
        b * (2.0 * u).ln()
    } else {
        -b * (2.0 * (1.0 - u)).ln()
    }
}

pub fn laplace_cdf(x: f64, b: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / b).exp()
    } else {
        1.0 - 0.5 * (-x / b).exp()
    }
}

/// Inverse CDF of the location-0 Gumbel distribution with scale `beta`.
pub fn gumbel_quantile(u: f64, beta: f64) -> f64 {
    -beta * (-u.ln()).ln()
}

pub fn gumbel_cdf(x: f64, beta: f64) -> f64 {
    (-(-x / beta).exp()).exp()
}

/// Standard deviation of Laplace(b): √2·b.
pub fn laplace_std(b: f64) -> f64 {
    std::f64::consts::SQRT_2 * b
}

/// Mean of Gumbel(β): β·γ.
pub fn gumbel_mean(beta: f64) -> f64 {
    beta * EULER_GAMMA
}

/// Standard deviation of Gumbel(β): β·π/√6.
pub fn gumbel_std(beta: f64) -> f64 {
    beta * std::f64::consts::PI / 6f64.sqrt()
}
