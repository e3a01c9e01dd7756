//! Top-k release mechanisms for distinct-count histograms.
//!
//! | domain  | Δ-restricted sensitivity            | unrestricted sensitivity            |
//! |---------|-------------------------------------|-------------------------------------|
//! | known   | [`known_laplace`]                   | [`known_gumbel_topk`]               |
//! | unknown | [`rte_unknown_laplace_topk`]        | [`rt_unknown_gumbel_topk`]          |
//!
//! Noise draws are keyed by element, not by position: the noise added to
//! element `e` is the first draw of `stream.derive("element/{e}")`, and the
//! threshold noise is the first draw of `stream.derive("threshold")`. Changing
//! one element's count therefore never changes the noise seen by another.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{check_scale, RandomStream};
use crate::types::{Cost, DomainKind, Histogram, PrivacyParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseFamily {
    Laplace,
    Gumbel,
}

impl NoiseFamily {
    fn draw(self, stream: RandomStream, scale: f64) -> Result<f64> {
        match self {
            NoiseFamily::Laplace => stream.laplace(scale),
            NoiseFamily::Gumbel => stream.gumbel(scale),
        }
    }
}

pub fn element_stream(stream: RandomStream, element: &str) -> RandomStream {
    stream.derive(&format!("element/{element}"))
}

pub fn threshold_stream(stream: RandomStream) -> RandomStream {
    stream.derive("threshold")
}

/// Deterministic threshold part plus the scale of the noise added to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub deterministic_part: f64,
    pub noise_scale: f64,
}

impl ThresholdSpec {
    /// `T = 1 + (Δ/ε)·ln(Δ/δ)` with Laplace(Δ/ε) threshold noise.
    pub fn laplace_topk(params: &PrivacyParams) -> Result<Self> {
        let l0 = require_l0(params)? as f64;
        require_delta(params)?;
        let scale = l0 / params.epsilon;
        Ok(Self {
            deterministic_part: 1.0 + scale * (l0 / params.delta).ln(),
            noise_scale: scale,
        })
    }

    /// `T = 1 + (1/ε)·ln(k/δ)` with Gumbel(1/ε) threshold noise.
    pub fn gumbel_topk(params: &PrivacyParams) -> Result<Self> {
        require_delta(params)?;
        let scale = 1.0 / params.epsilon;
        Ok(Self {
            deterministic_part: 1.0 + scale * (params.k as f64 / params.delta).ln(),
            noise_scale: scale,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKRow {
    pub element: String,
    pub noisy_count: Option<f64>,
}

/// Ordered selection. `released_counts == false` means every count is withheld.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKResult {
    pub rows: Vec<TopKRow>,
    pub released_counts: bool,
}

impl TopKResult {
    pub fn empty(released_counts: bool) -> Self {
        Self {
            rows: Vec::new(),
            released_counts,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn elements(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|r| r.element.as_str())
    }

    pub fn contains(&self, element: &str) -> bool {
        self.elements().any(|e| e == element)
    }

    /// 1-based position of `element`, if released.
    pub fn rank_of(&self, element: &str) -> Option<usize> {
        self.elements().position(|e| e == element).map(|i| i + 1)
    }
}

fn require_l0(params: &PrivacyParams) -> Result<u32> {
    params
        .l0_sensitivity
        .ok_or_else(|| Error::Precondition("l0 sensitivity Δ is required".into()))
}

fn require_delta(params: &PrivacyParams) -> Result<()> {
    if params.delta > 0.0 {
        Ok(())
    } else {
        Err(Error::Precondition("unknown-domain mechanisms need δ > 0".into()))
    }
}

fn require_domain(h: &Histogram, kind: DomainKind) -> Result<()> {
    if h.domain_kind == kind {
        Ok(())
    } else {
        Err(Error::Precondition(format!("expected a {kind:?}-domain histogram")))
    }
}

fn require_truncated(h: &Histogram, params: &PrivacyParams) -> Result<()> {
    if h.len() > params.fetch_limit {
        return Err(Error::Precondition(format!(
            "histogram holds {} elements, more than the fetch limit {}",
            h.len(),
            params.fetch_limit
        )));
    }
    Ok(())
}

/// Noisy score `count + noise` for every element, with per-element streams.
pub fn noisy_scores(
    h: &Histogram,
    family: NoiseFamily,
    scale: f64,
    stream: RandomStream,
) -> Result<BTreeMap<String, f64>> {
    check_scale(scale)?;
    h.elements
        .iter()
        .map(|(element, &count)| {
            let noise = family.draw(element_stream(stream, element), scale)?;
            Ok((element.clone(), count as f64 + noise))
        })
        .collect()
}

/// Descending score, ties broken by ascending element id.
fn rank_scores(scores: BTreeMap<String, f64>) -> Vec<(String, f64)> {
    let mut ranked: Vec<(String, f64)> = scores.into_iter().collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    ranked
}

/// Which of the four release procedures a [`Mechanism`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    KnownLaplace,
    KnownGumbel,
    LaplaceThreshold,
    GumbelThreshold,
}

impl MechanismKind {
    pub fn releases_counts(self) -> bool {
        matches!(self, MechanismKind::KnownLaplace | MechanismKind::LaplaceThreshold)
    }
}

impl std::str::FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "known-laplace" | "klap" => Ok(MechanismKind::KnownLaplace),
            "known-gumbel" | "kem" => Ok(MechanismKind::KnownGumbel),
            "laplace-threshold" | "rte" => Ok(MechanismKind::LaplaceThreshold),
            "gumbel-threshold" | "rt" => Ok(MechanismKind::GumbelThreshold),
            other => Err(Error::Config(format!("unknown mechanism {other:?}"))),
        }
    }
}

/// Black-box release contract used by reports and audits.
pub trait Release: Sync {
    fn release(&self, h: &Histogram, stream: RandomStream) -> Result<TopKResult>;
    fn cost(&self) -> Cost;
}

/// A configured mechanism.
///
/// `noise_multiplier` scales every noise draw and exists for fault-injection
/// audits; production code leaves it at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub kind: MechanismKind,
    pub params: PrivacyParams,
    pub noise_multiplier: f64,
}

impl Mechanism {
    pub fn new(kind: MechanismKind, params: PrivacyParams) -> Self {
        Self {
            kind,
            params,
            noise_multiplier: 1.0,
        }
    }

    pub fn with_noise_multiplier(mut self, factor: f64) -> Self {
        self.noise_multiplier = factor;
        self
    }

    /// Scale of the per-element noise.
    pub fn noise_scale(&self) -> Result<f64> {
        let base = match self.kind {
            MechanismKind::KnownLaplace | MechanismKind::LaplaceThreshold => {
                require_l0(&self.params)? as f64 / self.params.epsilon
            }
            MechanismKind::KnownGumbel => self.params.k as f64 / self.params.epsilon,
            MechanismKind::GumbelThreshold => 1.0 / self.params.epsilon,
        };
        Ok(base * self.noise_multiplier)
    }

    pub fn threshold(&self) -> Result<Option<ThresholdSpec>> {
        let spec = match self.kind {
            MechanismKind::LaplaceThreshold => ThresholdSpec::laplace_topk(&self.params)?,
            MechanismKind::GumbelThreshold => ThresholdSpec::gumbel_topk(&self.params)?,
            _ => return Ok(None),
        };
        Ok(Some(ThresholdSpec {
            noise_scale: spec.noise_scale * self.noise_multiplier,
            ..spec
        }))
    }

    /// Noisy counts for a known domain.
    pub fn noisy_counts(&self, h: &Histogram, stream: RandomStream) -> Result<BTreeMap<String, f64>> {
        self.params.validate()?;
        require_domain(h, DomainKind::Known)?;
        if self.params.delta != 0.0 {
            return Err(Error::Precondition(
                "known-domain Laplace is pure ε-DP; δ must be 0".into(),
            ));
        }
        noisy_scores(h, NoiseFamily::Laplace, self.noise_scale()?, stream)
    }

    fn run(&self, h: &Histogram, stream: RandomStream) -> Result<TopKResult> {
        self.params.validate()?;
        match self.kind {
            MechanismKind::KnownLaplace => {
                let counts = self.noisy_counts(h, stream)?;
                let rows = rank_scores(counts)
                    .into_iter()
                    .map(|(element, score)| TopKRow {
                        element,
                        noisy_count: Some(score),
                    })
                    .collect();
                Ok(TopKResult {
                    rows,
                    released_counts: true,
                })
            }
            MechanismKind::KnownGumbel => {
                require_domain(h, DomainKind::Known)?;
                let k = self.params.k;
                if k > h.len() {
                    return Err(Error::Precondition(format!(
                        "k = {k} exceeds the domain size {}",
                        h.len()
                    )));
                }
                let scores = noisy_scores(h, NoiseFamily::Gumbel, self.noise_scale()?, stream)?;
                let rows = rank_scores(scores)
                    .into_iter()
                    .take(k)
                    .map(|(element, _)| TopKRow {
                        element,
                        noisy_count: None,
                    })
                    .collect();
                Ok(TopKResult {
                    rows,
                    released_counts: false,
                })
            }
            MechanismKind::LaplaceThreshold | MechanismKind::GumbelThreshold => {
                require_domain(h, DomainKind::Unknown)?;
                require_truncated(h, &self.params)?;
                let (family, released) = if self.kind == MechanismKind::LaplaceThreshold {
                    (NoiseFamily::Laplace, true)
                } else {
                    (NoiseFamily::Gumbel, false)
                };
                let spec = self.threshold()?.expect("threshold mechanisms carry a threshold");
                if h.is_empty() {
                    return Ok(TopKResult::empty(released));
                }
                let noisy_threshold =
                    spec.deterministic_part + family.draw(threshold_stream(stream), spec.noise_scale)?;
                let scores = noisy_scores(h, family, self.noise_scale()?, stream)?;
                let rows = rank_scores(scores)
                    .into_iter()
                    .take(self.params.k)
                    .filter(|(_, score)| *score > noisy_threshold)
                    .map(|(element, score)| TopKRow {
                        element,
                        noisy_count: released.then_some(score),
                    })
                    .collect();
                Ok(TopKResult {
                    rows,
                    released_counts: released,
                })
            }
        }
    }
}

impl Release for Mechanism {
    fn release(&self, h: &Histogram, stream: RandomStream) -> Result<TopKResult> {
        self.run(h, stream)
    }

    fn cost(&self) -> Cost {
        match self.kind {
            MechanismKind::KnownLaplace | MechanismKind::KnownGumbel => Cost::new(self.params.epsilon, 0.0),
            _ => Cost::new(self.params.epsilon, self.params.delta),
        }
    }
}

/// Laplace(Δ/ε) on every count of a known-domain histogram.
pub fn known_laplace(h: &Histogram, params: &PrivacyParams, stream: RandomStream) -> Result<BTreeMap<String, f64>> {
    Mechanism::new(MechanismKind::KnownLaplace, *params).noisy_counts(h, stream)
}

/// One-shot Gumbel(k/ε) top-k over a known domain; ranks only.
pub fn known_gumbel_topk(h: &Histogram, params: &PrivacyParams, stream: RandomStream) -> Result<TopKResult> {
    Mechanism::new(MechanismKind::KnownGumbel, *params).release(h, stream)
}

/// Laplace top-k with a noisy threshold over a d̄-truncated unknown domain.
pub fn rte_unknown_laplace_topk(h: &Histogram, params: &PrivacyParams, stream: RandomStream) -> Result<TopKResult> {
    Mechanism::new(MechanismKind::LaplaceThreshold, *params).release(h, stream)
}

/// Gumbel top-k with a noisy threshold over a d̄-truncated unknown domain; ranks only.
pub fn rt_unknown_gumbel_topk(h: &Histogram, params: &PrivacyParams, stream: RandomStream) -> Result<TopKResult> {
    Mechanism::new(MechanismKind::GumbelThreshold, *params).release(h, stream)
}
