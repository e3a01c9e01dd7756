//! Monte Carlo privacy audit of both threshold mechanisms, clean and with
//! noise halved.
//!
//! cargo run --release --example privacy_audit [trials]

use dp_insights::audit::{boundary_case, estimate_privacy_loss};
use dp_insights::{MechanismKind, Release};

fn main() -> dp_insights::Result<()> {
    let trials: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(200_000);
    for kind in [MechanismKind::LaplaceThreshold, MechanismKind::GumbelThreshold] {
        let (mechanism, pair, events) = boundary_case(kind)?;
        let declared = mechanism.cost();
        for multiplier in [1.0, 0.5] {
            let m = mechanism.with_noise_multiplier(multiplier);
            println!("{kind:?}, noise × {multiplier}, {}:", pair.description);
            for event in &events {
                let v = estimate_privacy_loss(&m, &pair, event, trials, declared, 1)?;
                println!(
                    "  {:<16} hits {:>7} / {:>7}  ε̂ {:>8}  declared {}  {:?}",
                    v.event_description,
                    v.hits_base,
                    v.hits_neighbor,
                    v.epsilon_hat.map_or("-".into(), |e| format!("{e:.4}")),
                    v.declared_epsilon,
                    v.outcome
                );
            }
        }
    }
    Ok(())
}
