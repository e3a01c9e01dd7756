//! Fast offline checks run by the `selftest` subcommand.

use serde::{Deserialize, Serialize};

use crate::audit::{self, SamplerKind};
use crate::error::Result;
use crate::mechanisms::{Mechanism, MechanismKind, Release};
use crate::noise::RandomStream;
use crate::types::PrivacyParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub id: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelftestOptions {
    pub seed: u64,
    /// Multiplies every mechanism noise scale; anything other than 1 is a fault.
    pub noise_multiplier: f64,
    pub audit_trials: u64,
    pub sampler_samples: usize,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        Self {
            seed: 20200701,
            noise_multiplier: 1.0,
            audit_trials: 20_000,
            sampler_samples: 200_000,
        }
    }
}

fn check(id: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        id: id.to_string(),
        passed,
        detail,
    }
}

pub fn run_selftest(opts: &SelftestOptions) -> Result<Vec<CheckResult>> {
    let laplace = Mechanism::new(MechanismKind::LaplaceThreshold, PrivacyParams::hiring_topk())
        .with_noise_multiplier(opts.noise_multiplier);
    let gumbel = Mechanism::new(MechanismKind::GumbelThreshold, PrivacyParams::skills_topk())
        .with_noise_multiplier(opts.noise_multiplier);
    let mut out = Vec::new();

    let t = laplace.threshold()?.expect("threshold").deterministic_part;
    out.push(check(
        "threshold.laplace_topk",
        (t - 39.4).abs() <= 0.5,
        format!("T = {t:.3}, expected 39.4 ± 0.5"),
    ));
    let t = gumbel.threshold()?.expect("threshold").deterministic_part;
    out.push(check(
        "threshold.gumbel_topk",
        (t - 261.2).abs() <= 2.0,
        format!("T = {t:.3}, expected 261.2 ± 2"),
    ));

    let root = RandomStream::new(opts.seed, 0);
    let v = audit::check_samples(
        SamplerKind::Laplace,
        laplace.noise_scale()?,
        1.0 / 0.6,
        opts.sampler_samples,
        root.derive("selftest/laplace"),
    )?;
    let expected_std = 2f64.sqrt() / 0.6;
    let within = (v.std - expected_std).abs() <= 0.01 * expected_std;
    out.push(check(
        "noise.laplace_topk",
        v.passes && within,
        format!(
            "std {:.4} vs {expected_std:.4}, KS {:.5} (critical {:.5})",
            v.std, v.ks_statistic, v.ks_critical
        ),
    ));
    let v = audit::check_samples(
        SamplerKind::Gumbel,
        gumbel.noise_scale()?,
        10.0,
        opts.sampler_samples,
        root.derive("selftest/gumbel"),
    )?;
    out.push(check(
        "noise.gumbel_topk",
        v.passes,
        format!(
            "mean {:.4} vs {:.4}, KS {:.5} (critical {:.5})",
            v.mean, v.expected_mean, v.ks_statistic, v.ks_critical
        ),
    ));

    for (id, mechanism) in [("audit.laplace_topk", &laplace), ("audit.gumbel_topk", &gumbel)] {
        let (_, pair, events) = audit::boundary_case(mechanism.kind)?;
        let verdict = audit::estimate_privacy_loss(
            mechanism,
            &pair,
            &events[0],
            opts.audit_trials,
            mechanism.cost(),
            opts.seed,
        )?;
        out.push(check(
            id,
            verdict.passes,
            format!(
                "{}: ε̂ = {} vs declared {}",
                verdict.event_description,
                verdict.epsilon_hat.map_or("n/a".to_string(), |e| format!("{e:.4}")),
                verdict.declared_epsilon
            ),
        ));
    }

    let (_, pair, _) = audit::boundary_case(MechanismKind::LaplaceThreshold)?;
    let v = audit::check_never_fabricates(&laplace, &pair.base, audit::MIN_AUDIT_TRIALS, opts.seed)?;
    out.push(check(
        "safety.no_fabrication",
        v.passes,
        format!("{} fabrications in {} trials", v.fabrications, v.trials),
    ));
    Ok(out)
}
