//! Sequential composition over the four standard slices of one date.
//!
//! cargo run --example budget_ledger

use dp_insights::accountant::{BudgetEntry, BudgetLedger};
use dp_insights::{MechanismKind, Metric, Month, PrivacyParams, Release, SliceKey};

fn main() -> dp_insights::Result<()> {
    let date = Month::new(2020, 8)?;
    let slices = [
        SliceKey::country(date, "US"),
        SliceKey::country(date, "US").with_region("CA"),
        SliceKey::country(date, "US").with_industry("software"),
        SliceKey::country(date, "US")
            .with_region("CA")
            .with_industry("software"),
    ];
    let topk = dp_insights::Mechanism::new(MechanismKind::LaplaceThreshold, PrivacyParams::hiring_topk()).cost();
    let companion = dp_insights::Mechanism::new(MechanismKind::KnownLaplace, PrivacyParams::hiring_companion()).cost();
    let mut ledger = BudgetLedger::new();
    for slice in &slices {
        ledger.append(BudgetEntry::new(
            slice.clone(),
            Metric::Jobs,
            MechanismKind::LaplaceThreshold,
            topk,
        )?);
        ledger.append(BudgetEntry::new(
            slice.clone(),
            Metric::Jobs,
            MechanismKind::KnownLaplace,
            companion,
        )?);
    }
    for slice in &slices {
        let c = ledger.report_cost(slice, Metric::Jobs);
        println!("{slice:<28} ε = {} δ = {:e}", c.epsilon, c.delta);
    }
    let total = ledger.date_cost(date, Metric::Jobs);
    println!("per date, jobs: ε = {} δ = {:e}", total.epsilon, total.delta);

    let other = SliceKey::country(date, "DE");
    ledger.append(BudgetEntry::new(
        other.clone(),
        Metric::Jobs,
        MechanismKind::LaplaceThreshold,
        topk,
    )?);
    ledger.append(BudgetEntry::new(
        other,
        Metric::Jobs,
        MechanismKind::KnownLaplace,
        companion,
    )?);
    let total = ledger.date_cost(date, Metric::Jobs);
    println!(
        "after adding DE (disjoint): ε = {} δ = {:e}",
        total.epsilon, total.delta
    );
    println!("{}", serde_json::to_string_pretty(&ledger.date_totals())?);
    Ok(())
}
