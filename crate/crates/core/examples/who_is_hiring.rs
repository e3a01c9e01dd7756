//! Top employers with growth against the previous window, on synthetic hires.
//!
//! cargo run --example who_is_hiring

use dp_insights::accountant::BudgetLedger;
use dp_insights::reports::{who_is_hiring, ReportConfig};
use dp_insights::synthetic::{self, SyntheticSpec};
use dp_insights::{Metric, Month, SliceKey};

fn main() -> dp_insights::Result<()> {
    let spec = SyntheticSpec::default();
    let hires = synthetic::hires(&spec);
    let slice = SliceKey::country(Month::new(2020, 8)?, "US");
    let config = ReportConfig::defaults(Metric::Employers, slice);
    let mut ledger = BudgetLedger::new();
    let report = who_is_hiring(&hires, &config, 42, &mut ledger)?;
    print!("{}", report.to_csv());
    println!(
        "status {:?}, cost (ε = {}, δ = {:e})",
        report.status, report.epsilon, report.delta
    );
    for e in ledger.entries() {
        println!("  ledger: {:?} ε = {} δ = {:e}", e.mechanism, e.epsilon, e.delta);
    }
    Ok(())
}
