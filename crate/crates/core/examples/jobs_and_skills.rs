//! Top jobs by share of hires, then the rank-only skills for those jobs.
//!
//! cargo run --example jobs_and_skills

use dp_insights::accountant::BudgetLedger;
use dp_insights::reports::{jobs_available, skills_needed, ReportConfig};
use dp_insights::synthetic::{self, SyntheticSpec};
use dp_insights::{Metric, Month, SliceKey};

fn main() -> dp_insights::Result<()> {
    let spec = SyntheticSpec::default();
    let hires = synthetic::hires(&spec);
    let records = synthetic::skill_records(&spec, &hires);
    let slice = SliceKey::country(Month::new(2020, 8)?, "US").with_region("CA");
    let mut ledger = BudgetLedger::new();

    let jobs = jobs_available(
        &hires,
        &ReportConfig::defaults(Metric::Jobs, slice.clone()),
        42,
        &mut ledger,
    )?;
    println!("jobs ({:?}):", jobs.status);
    print!("{}", jobs.to_csv());

    let skills = skills_needed(
        &records,
        &jobs,
        &ReportConfig::defaults(Metric::Skills, slice),
        42,
        &mut ledger,
    )?;
    println!("skills ({:?}):", skills.status);
    print!("{}", skills.to_csv());
    println!("{} ledger entries", ledger.len());
    Ok(())
}
