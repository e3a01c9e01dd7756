//! Writes synthetic CSV inputs, runs a full batch of reports from a manifest,
//! and prints the budget totals.
//!
//! cargo run --example csv_pipeline [output-dir]

use std::path::PathBuf;

use dp_insights::accountant::BudgetLedger;
use dp_insights::cli::{execute_manifest, parse_slice_spec, RunManifest, LEDGER_FILE};
use dp_insights::ingest;
use dp_insights::reports::ReportConfig;
use dp_insights::synthetic::{self, SyntheticSpec};
use dp_insights::{Metric, Month};

fn main() -> dp_insights::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("dp-insights-demo"));
    std::fs::create_dir_all(&dir)?;
    let spec = SyntheticSpec::default();
    let hires = synthetic::hires(&spec);
    let skills = synthetic::skill_records(&spec, &hires);
    ingest::write_hires(&dir.join("hires.csv"), &hires)?;
    ingest::write_skills(&dir.join("skills.csv"), &skills)?;

    let mut configs = Vec::new();
    for date in [Month::new(2020, 7)?, Month::new(2020, 8)?] {
        for spec in ["US", "US/CA", "US:software", "US/CA:software"] {
            let slice = parse_slice_spec(spec, date)?;
            configs.extend(Metric::ALL.map(|m| ReportConfig::defaults(m, slice.clone())));
        }
    }
    let manifest = RunManifest {
        root_seed: 7,
        seed_source: "flag".into(),
        input_paths: vec![dir.join("hires.csv"), dir.join("skills.csv")],
        geography: None,
        industries: None,
        configs,
        output_dir: dir.join("reports"),
        created_at: "2020-09-01T00:00:00Z".into(),
        strict: true,
        enforce_single_hire: false,
    };
    let _ = std::fs::remove_file(manifest.output_dir.join(LEDGER_FILE));
    let reports = execute_manifest(&manifest)?;
    for r in &reports {
        println!("{:<36} {:>2} rows {:?}", r.file_stem(), r.rows.len(), r.status);
    }
    let ledger = BudgetLedger::load_jsonl(&manifest.output_dir.join(LEDGER_FILE))?;
    for t in ledger.date_totals() {
        println!(
            "{} {:<9} ε = {:<4} δ = {:e} over {} reports",
            t.report_date, t.metric, t.epsilon, t.delta, t.reports
        );
    }
    println!("files in {}", manifest.output_dir.display());
    Ok(())
}
