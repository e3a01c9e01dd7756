//! Monte Carlo checks of the privacy guarantee and of the noise samplers.
//!
//! The harness only touches mechanisms through [`Release`], so any
//! implementation of that trait can be audited.
//!
//! A privacy audit runs the mechanism `trials` times on each side of a
//! [`NeighborPair`], estimates the probability of an output event on both
//! sides with 99% Clopper–Pearson intervals, and takes the most favourable
//! interval endpoints when testing `P[M(h) ∈ S] ≤ e^ε·P[M(h') ∈ S] + δ` in
//! both directions. It can refute a claim, never prove one.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{Error, Result};
use crate::mechanisms::{Mechanism, MechanismKind, Release, TopKResult};
use crate::noise::{self, RandomStream};
use crate::types::{Cost, Histogram, Month, PrivacyParams, SliceKey};

pub const MIN_AUDIT_TRIALS: u64 = 10_000;
pub const MIN_SAMPLER_SAMPLES: usize = 100_000;
pub const CONFIDENCE: f64 = 0.99;

/// Two histograms that differ by one event's contribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborPair {
    pub base: Histogram,
    pub neighbor: Histogram,
    pub description: String,
}

impl NeighborPair {
    /// Checks that every bin moves by at most 1, all in the same direction,
    /// and that at most Δ bins move when the histograms declare Δ.
    pub fn new(base: Histogram, neighbor: Histogram, description: impl Into<String>) -> Result<Self> {
        let keys: BTreeSet<&String> = base.elements.keys().chain(neighbor.elements.keys()).collect();
        let diffs: Vec<i64> = keys
            .into_iter()
            .map(|k| base.count(k).unwrap_or(0) - neighbor.count(k).unwrap_or(0))
            .filter(|d| *d != 0)
            .collect();
        if diffs.iter().any(|d| d.abs() > 1) {
            return Err(Error::Precondition("a bin differs by more than 1".into()));
        }
        if diffs.iter().any(|d| *d > 0) && diffs.iter().any(|d| *d < 0) {
            return Err(Error::Precondition("bins move in both directions".into()));
        }
        if let Some(l0) = base.l0_bound.or(neighbor.l0_bound) {
            if diffs.len() > l0 as usize {
                return Err(Error::Precondition(format!("{} bins differ but Δ = {l0}", diffs.len())));
            }
        }
        Ok(Self {
            base,
            neighbor,
            description: description.into(),
        })
    }
}

/// Output events checked by default.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditEvent {
    Released(String),
    RankOne(String),
    Empty,
}

impl AuditEvent {
    pub fn occurs(&self, out: &TopKResult) -> bool {
        match self {
            AuditEvent::Released(e) => out.contains(e),
            AuditEvent::RankOne(e) => out.rows.first().is_some_and(|r| &r.element == e),
            AuditEvent::Empty => out.is_empty(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            AuditEvent::Released(e) => format!("{e} released"),
            AuditEvent::RankOne(e) => format!("{e} at rank 1"),
            AuditEvent::Empty => "output empty".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Two-sided Clopper–Pearson interval for `hits` successes in `trials`.
pub fn clopper_pearson(hits: u64, trials: u64, confidence: f64) -> Interval {
    assert!(trials > 0 && hits <= trials);
    let alpha = 1.0 - confidence;
    let (x, n) = (hits as f64, trials as f64);
    let lower = if hits == 0 {
        0.0
    } else {
        Beta::new(x, n - x + 1.0)
            .expect("positive shape")
            .inverse_cdf(alpha / 2.0)
    };
    let upper = if hits == trials {
        1.0
    } else {
        Beta::new(x + 1.0, n - x)
            .expect("positive shape")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    Interval {
        estimate: x / n,
        lower,
        upper,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditVerdict {
    pub pair_description: String,
    pub event_description: String,
    pub trials: u64,
    pub hits_base: u64,
    pub hits_neighbor: u64,
    pub p_base: Interval,
    pub p_neighbor: Interval,
    /// Interval-safe lower bound on the realized ε; `None` when neither
    /// direction has a positive numerator.
    pub epsilon_hat: Option<f64>,
    pub declared_epsilon: f64,
    pub declared_delta: f64,
    pub outcome: Outcome,
    pub passes: bool,
}

fn count_hits<M: Release + ?Sized>(
    mechanism: &M,
    h: &Histogram,
    event: &AuditEvent,
    trials: u64,
    stream: RandomStream,
) -> Result<u64> {
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let out = mechanism.release(h, stream.derive_index(i))?;
            Ok(event.occurs(&out) as u64)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

/// `ln((lower_a − δ) / upper_b)`, or `None` when the numerator is not positive.
fn direction_bound(a: &Interval, b: &Interval, delta: f64) -> Option<f64> {
    let num = a.lower - delta;
    (num > 0.0).then(|| (num / b.upper).ln())
}

pub fn estimate_privacy_loss<M: Release + ?Sized>(
    mechanism: &M,
    pair: &NeighborPair,
    event: &AuditEvent,
    trials: u64,
    declared: Cost,
    seed: u64,
) -> Result<AuditVerdict> {
    if trials < MIN_AUDIT_TRIALS {
        return Err(Error::Precondition(format!(
            "audits need at least {MIN_AUDIT_TRIALS} trials, got {trials}"
        )));
    }
    let root = RandomStream::new(seed, 0);
    let hits_base = count_hits(mechanism, &pair.base, event, trials, root.derive("audit/base"))?;
    let hits_neighbor = count_hits(mechanism, &pair.neighbor, event, trials, root.derive("audit/neighbor"))?;
    let p_base = clopper_pearson(hits_base, trials, CONFIDENCE);
    let p_neighbor = clopper_pearson(hits_neighbor, trials, CONFIDENCE);
    let epsilon_hat = [
        direction_bound(&p_base, &p_neighbor, declared.delta),
        direction_bound(&p_neighbor, &p_base, declared.delta),
    ]
    .into_iter()
    .flatten()
    .reduce(f64::max);
    let outcome = if hits_base == 0 && hits_neighbor == 0 {
        Outcome::Inconclusive
    } else if epsilon_hat.is_some_and(|e| e > declared.epsilon) {
        Outcome::Fail
    } else {
        Outcome::Pass
    };
    Ok(AuditVerdict {
        pair_description: pair.description.clone(),
        event_description: event.describe(),
        trials,
        hits_base,
        hits_neighbor,
        p_base,
        p_neighbor,
        epsilon_hat,
        declared_epsilon: declared.epsilon,
        declared_delta: declared.delta,
        outcome,
        passes: outcome == Outcome::Pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Laplace,
    Gumbel,
}

impl SamplerKind {
    fn cdf(self, x: f64, scale: f64) -> f64 {
        match self {
            SamplerKind::Laplace => noise::laplace_cdf(x, scale),
            SamplerKind::Gumbel => noise::gumbel_cdf(x, scale),
        }
    }

    fn mean(self, scale: f64) -> f64 {
        match self {
            SamplerKind::Laplace => 0.0,
            SamplerKind::Gumbel => noise::gumbel_mean(scale),
        }
    }

    fn std(self, scale: f64) -> f64 {
        match self {
            SamplerKind::Laplace => noise::laplace_std(scale),
            SamplerKind::Gumbel => noise::gumbel_std(scale),
        }
    }

    /// Non-excess kurtosis.
    fn kurtosis(self) -> f64 {
        match self {
            SamplerKind::Laplace => 6.0,
            SamplerKind::Gumbel => 5.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerVerdict {
    pub kind: SamplerKind,
    pub scale: f64,
    pub samples: usize,
    pub ks_statistic: f64,
    /// Asymptotic Kolmogorov critical value at significance 0.001.
    pub ks_critical: f64,
    pub mean: f64,
    pub expected_mean: f64,
    pub mean_standard_error: f64,
    pub std: f64,
    pub expected_std: f64,
    pub std_standard_error: f64,
    pub passes: bool,
}

/// Draws from a caller-provided stream. Used by [`check_sampler`] and by the
/// self-test to check a mechanism's configured scale against a target law.
pub fn check_samples(
    kind: SamplerKind,
    draw_scale: f64,
    reference_scale: f64,
    samples: usize,
    stream: RandomStream,
) -> Result<SamplerVerdict> {
    if samples < MIN_SAMPLER_SAMPLES {
        return Err(Error::Precondition(format!(
            "sampler checks need at least {MIN_SAMPLER_SAMPLES} samples, got {samples}"
        )));
    }
    noise::check_scale(reference_scale)?;
    let mut source = stream.source();
    let mut xs = Vec::with_capacity(samples);
    for _ in 0..samples {
        xs.push(match kind {
            SamplerKind::Laplace => source.laplace(draw_scale)?,
            SamplerKind::Gumbel => source.gumbel(draw_scale)?,
        });
    }
    let n = samples as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    xs.sort_by(f64::total_cmp);
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = kind.cdf(x, reference_scale);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max);
    let ks_critical = (-(0.001f64 / 2.0).ln() / 2.0).sqrt() / n.sqrt();
    let expected_mean = kind.mean(reference_scale);
    let expected_std = kind.std(reference_scale);
    let mean_se = expected_std / n.sqrt();
    let std_se = expected_std * ((kind.kurtosis() - 1.0) / n).sqrt() / 2.0;
    let passes =
        ks < ks_critical && (mean - expected_mean).abs() <= 3.0 * mean_se && (std - expected_std).abs() <= 3.0 * std_se;
    Ok(SamplerVerdict {
        kind,
        scale: reference_scale,
        samples,
        ks_statistic: ks,
        ks_critical,
        mean,
        expected_mean,
        mean_standard_error: mean_se,
        std,
        expected_std,
        std_standard_error: std_se,
        passes,
    })
}

/// KS and moment checks of a sampler against its analytic law.
pub fn check_sampler(kind: SamplerKind, scale: f64, samples: usize, seed: u64) -> Result<SamplerVerdict> {
    check_samples(
        kind,
        scale,
        scale,
        samples,
        RandomStream::new(seed, 0).derive("sampler-check"),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FabricationVerdict {
    pub trials: u64,
    pub fabrications: u64,
    pub empty_outputs: u64,
    pub passes: bool,
}

/// Counts outputs naming an element outside the support of `h`.
pub fn check_never_fabricates<M: Release + ?Sized>(
    mechanism: &M,
    h: &Histogram,
    trials: u64,
    seed: u64,
) -> Result<FabricationVerdict> {
    if trials < MIN_AUDIT_TRIALS {
        return Err(Error::Precondition(format!(
            "fabrication checks need at least {MIN_AUDIT_TRIALS} trials, got {trials}"
        )));
    }
    let support: BTreeSet<&str> = h
        .elements
        .iter()
        .filter(|(_, c)| **c > 0)
        .map(|(e, _)| e.as_str())
        .collect();
    let stream = RandomStream::new(seed, 0).derive("audit/fabrication");
    let (fabrications, empty_outputs) = (0..trials)
        .into_par_iter()
        .map(|i| {
            let out = mechanism.release(h, stream.derive_index(i))?;
            let bad = out.elements().filter(|e| !support.contains(e)).count() as u64;
            Ok::<_, Error>((bad, out.is_empty() as u64))
        })
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
    Ok(FabricationVerdict {
        trials,
        fabrications,
        empty_outputs,
        passes: fabrications == 0,
    })
}

/// Default neighbor pair, events and declared cost for auditing `kind`.
///
/// Threshold mechanisms use a single bin one step below the deterministic
/// threshold, where the release probability is most sensitive to one hire.
/// Known-domain mechanisms use two tied bins and move one of them.
pub fn boundary_case(kind: MechanismKind) -> Result<(Mechanism, NeighborPair, Vec<AuditEvent>)> {
    let slice = SliceKey::country(Month::new(2020, 7)?, "AUDIT");
    let counts =
        |pairs: &[(&str, i64)]| -> BTreeMap<String, i64> { pairs.iter().map(|(e, c)| (e.to_string(), *c)).collect() };
    let a = || "a".to_string();
    let (mechanism, pair, events) = match kind {
        MechanismKind::LaplaceThreshold => {
            let m = Mechanism::new(kind, PrivacyParams::hiring_topk());
            let pair = NeighborPair::new(
                Histogram::unknown(slice.clone(), counts(&[("a", 37)]), Some(1)),
                Histogram::unknown(slice, counts(&[("a", 36)]), Some(1)),
                "single bin 37 vs 36 below the threshold",
            )?;
            (
                m,
                pair,
                vec![AuditEvent::Released(a()), AuditEvent::RankOne(a()), AuditEvent::Empty],
            )
        }
        MechanismKind::GumbelThreshold => {
            let m = Mechanism::new(kind, PrivacyParams::skills_topk());
            let pair = NeighborPair::new(
                Histogram::unknown(slice.clone(), counts(&[("a", 252)]), None),
                Histogram::unknown(slice, counts(&[("a", 251)]), None),
                "single bin 252 vs 251 below the threshold",
            )?;
            (
                m,
                pair,
                vec![AuditEvent::Released(a()), AuditEvent::RankOne(a()), AuditEvent::Empty],
            )
        }
        MechanismKind::KnownLaplace => {
            let m = Mechanism::new(kind, PrivacyParams::hiring_companion());
            let pair = NeighborPair::new(
                Histogram::known(slice.clone(), ["a", "b"], &counts(&[("a", 10), ("b", 10)]), Some(1)),
                Histogram::known(slice, ["a", "b"], &counts(&[("a", 9), ("b", 10)]), Some(1)),
                "two tied bins, one moved",
            )?;
            (m, pair, vec![AuditEvent::RankOne(a())])
        }
        MechanismKind::KnownGumbel => {
            let m = Mechanism::new(kind, PrivacyParams::new(1.0, 0.0, None, 2, 1)?);
            let pair = NeighborPair::new(
                Histogram::known(slice.clone(), ["a", "b"], &counts(&[("a", 10), ("b", 10)]), None),
                Histogram::known(slice, ["a", "b"], &counts(&[("a", 9), ("b", 10)]), None),
                "two tied bins, one moved",
            )?;
            (m, pair, vec![AuditEvent::RankOne(a())])
        }
    };
    Ok((mechanism, pair, events))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(pairs: &[(&str, i64)], l0: Option<u32>) -> Histogram {
        let slice = SliceKey::country(Month::new(2020, 7).unwrap(), "US");
        let counts: BTreeMap<String, i64> = pairs.iter().map(|(e, c)| (e.to_string(), *c)).collect();
        Histogram::unknown(slice, counts, l0)
    }

    #[test]
    fn clopper_pearson_known_values() {
        // Exact interval for 0/10 at 95%: upper = 1 - 0.025^(1/10).
        let ci = clopper_pearson(0, 10, 0.95);
        assert_eq!(ci.lower, 0.0);
        assert!((ci.upper - (1.0 - 0.025f64.powf(0.1))).abs() < 1e-9);
        let ci = clopper_pearson(10, 10, 0.95);
        assert!((ci.lower - 0.025f64.powf(0.1)).abs() < 1e-9);
        let ci = clopper_pearson(50, 100, 0.99);
        assert!(ci.lower < 0.5 && ci.upper > 0.5);
        assert!((ci.lower + ci.upper - 1.0).abs() < 1e-9);
    }

    #[test]
    fn neighbor_pair_validation() {
        assert!(NeighborPair::new(hist(&[("a", 5)], Some(1)), hist(&[("a", 4)], Some(1)), "ok").is_ok());
        assert!(NeighborPair::new(hist(&[("a", 1)], Some(1)), hist(&[], Some(1)), "vanish").is_ok());
        assert!(NeighborPair::new(hist(&[("a", 5)], Some(1)), hist(&[("a", 3)], Some(1)), "x").is_err());
        assert!(NeighborPair::new(
            hist(&[("a", 5), ("b", 5)], Some(1)),
            hist(&[("a", 4), ("b", 4)], Some(1)),
            "x"
        )
        .is_err());
        assert!(NeighborPair::new(
            hist(&[("a", 5), ("b", 5)], None),
            hist(&[("a", 4), ("b", 4)], None),
            "ok"
        )
        .is_ok());
        assert!(NeighborPair::new(
            hist(&[("a", 5), ("b", 5)], None),
            hist(&[("a", 4), ("b", 6)], None),
            "x"
        )
        .is_err());
    }

    #[test]
    fn identical_pair_bound_is_not_positive() {
        let mech = Mechanism::new(MechanismKind::LaplaceThreshold, PrivacyParams::hiring_topk());
        let h = hist(&[("a", 40)], Some(1));
        let pair = NeighborPair::new(h.clone(), h, "identical").unwrap();
        let v = estimate_privacy_loss(&mech, &pair, &AuditEvent::Released("a".into()), 20_000, mech.cost(), 3).unwrap();
        assert!(v.epsilon_hat.unwrap() <= 0.0, "{v:?}");
        assert!(v.passes);
    }

    #[test]
    fn never_occurring_event_is_inconclusive() {
        let mech = Mechanism::new(MechanismKind::LaplaceThreshold, PrivacyParams::hiring_topk());
        let pair = NeighborPair::new(hist(&[("a", 2)], Some(1)), hist(&[("a", 1)], Some(1)), "tiny").unwrap();
        let v = estimate_privacy_loss(&mech, &pair, &AuditEvent::Released("a".into()), 10_000, mech.cost(), 3).unwrap();
        assert_eq!(v.outcome, Outcome::Inconclusive);
        assert!(!v.passes);
    }

    #[test]
    fn preconditions_enforced() {
        let mech = Mechanism::new(MechanismKind::LaplaceThreshold, PrivacyParams::hiring_topk());
        let h = hist(&[("a", 2)], Some(1));
        let pair = NeighborPair::new(h.clone(), h.clone(), "p").unwrap();
        assert!(estimate_privacy_loss(&mech, &pair, &AuditEvent::Empty, 100, mech.cost(), 0).is_err());
        assert!(check_never_fabricates(&mech, &h, 10, 0).is_err());
        assert!(check_sampler(SamplerKind::Laplace, 1.0, 0, 0).is_err());
    }

    #[test]
    fn empty_histogram_always_empty() {
        let mech = Mechanism::new(MechanismKind::GumbelThreshold, PrivacyParams::skills_topk());
        let v = check_never_fabricates(&mech, &hist(&[], None), 10_000, 1).unwrap();
        assert!(v.passes);
        assert_eq!(v.empty_outputs, 10_000);
    }
}
