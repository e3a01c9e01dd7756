//! Threshold and noise parameters of the two unknown-domain mechanisms.
//!
//! cargo run --example threshold_constants

use dp_insights::{Mechanism, MechanismKind, PrivacyParams, Release};

fn main() -> dp_insights::Result<()> {
    for (name, kind, params) in [
        (
            "employers/jobs",
            MechanismKind::LaplaceThreshold,
            PrivacyParams::hiring_topk(),
        ),
        ("skills", MechanismKind::GumbelThreshold, PrivacyParams::skills_topk()),
    ] {
        let m = Mechanism::new(kind, params);
        let t = m.threshold()?.expect("threshold mechanism");
        let cost = m.cost();
        println!(
            "{name:<15} {kind:?}: ε = {}, δ = {:e}, k = {}, element noise scale {:.4}, T = {:.3} + noise(scale {:.4})",
            cost.epsilon,
            cost.delta,
            params.k,
            m.noise_scale()?,
            t.deterministic_part,
            t.noise_scale
        );
    }

    println!("\nT for the Laplace mechanism across ε (δ = 1e-10, Δ = 1):");
    for eps in [0.1, 0.3, 0.6, 1.0, 2.0] {
        let params = PrivacyParams::new(eps, 1e-10, Some(1), 1000, 20)?;
        let t = Mechanism::new(MechanismKind::LaplaceThreshold, params)
            .threshold()?
            .expect("threshold");
        println!("  ε = {eps:<4} T = {:8.3}", t.deterministic_part);
    }
    Ok(())
}
