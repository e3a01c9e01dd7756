//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use common::*;
use dp_insights::accountant::BudgetLedger;
use dp_insights::audit::{self, Outcome};
use dp_insights::cli::{self, RunManifest};
use dp_insights::ingest;
use dp_insights::mechanisms;
use dp_insights::reports::{self, ReportConfig};
use dp_insights::synthetic::SyntheticSpec;
use dp_insights::{
    Cost, Histogram, Mechanism, MechanismKind, Metric, Month, PrivacyParams, RandomStream, Release, ReportStatus,
    SliceKey,
};

const AUDIT_TRIALS: u64 = 200_000;
const FABRICATION_TRIALS: u64 = 100_000;
const SOFTMAX_TRIALS: u64 = 100_000;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn threshold_constants() -> Check {
    let rte = Mechanism::new(MechanismKind::LaplaceThreshold, PrivacyParams::hiring_topk());
    let rt = Mechanism::new(MechanismKind::GumbelThreshold, PrivacyParams::skills_topk());
    let t1 = rte
        .threshold()
        .map_err(|e| e.to_string())?
        .ok_or("no threshold")?
        .deterministic_part;
    let t2 = rt
        .threshold()
        .map_err(|e| e.to_string())?
        .ok_or("no threshold")?
        .deterministic_part;
    ensure(
        (t1 - 39.4).abs() <= 0.5 && (t2 - 261.2).abs() <= 2.0,
        format!("laplace top-k T = {t1:.3} (39.4 ± 0.5), gumbel top-k T = {t2:.3} (261.2 ± 2)"),
    )
}

fn noise_scales() -> Check {
    let rte = Mechanism::new(MechanismKind::LaplaceThreshold, PrivacyParams::hiring_topk());
    let b = rte.noise_scale().map_err(|e| e.to_string())?;
    let mut src = RandomStream::new(1, 0).derive("acceptance/laplace").source();
    let n = 1_000_000;
    let xs: Vec<f64> = (0..n).map(|_| src.laplace(b).unwrap()).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    let target = 2f64.sqrt() / 0.6;
    let rel = (std - target).abs() / target;

    let rt = Mechanism::new(MechanismKind::GumbelThreshold, PrivacyParams::skills_topk());
    let g = rt.noise_scale().map_err(|e| e.to_string())?;
    let gt = rt
        .threshold()
        .map_err(|e| e.to_string())?
        .ok_or("no threshold")?
        .noise_scale;
    ensure(
        rel < 0.01 && g == 10.0 && gt == 10.0,
        format!(
            "laplace std {std:.4} vs {target:.4} ({:.3}% off, 10^6 draws); gumbel scale {g} (threshold {gt})",
            rel * 100.0
        ),
    )
}

fn four_slice_configs(date: Month, slices: &[SliceKey]) -> Vec<ReportConfig> {
    let mut out = Vec::new();
    for slice in slices {
        let slice = SliceKey {
            report_date: date,
            ..slice.clone()
        };
        for metric in Metric::ALL {
            out.push(ReportConfig::defaults(metric, slice.clone()));
        }
    }
    out
}

fn composition() -> Check {
    let (hires, skills) = synthetic_data(&SyntheticSpec::default());
    let date = Month::new(2020, 8).unwrap();
    let mut ledger = BudgetLedger::new();
    let reports = reports::run_configs(
        &hires,
        &skills,
        &four_slice_configs(date, &the_four_slices(date)),
        1,
        &mut ledger,
    )
    .map_err(|e| e.to_string())?;
    let per_report = Cost::new(1.2, 1e-10);
    let mut bad = Vec::new();
    for r in reports.iter().filter(|r| r.metric != Metric::Skills) {
        if r.cost() != per_report || ledger.report_cost(&r.slice, r.metric) != per_report {
            bad.push(r.file_stem());
        }
    }
    let per_date: Vec<Cost> = [Metric::Employers, Metric::Jobs]
        .iter()
        .map(|m| ledger.date_cost(date, *m))
        .collect();
    let ok = bad.is_empty() && per_date.iter().all(|c| *c == Cost::new(4.8, 4e-10));
    ensure(
        ok,
        format!(
            "per report (1.2, 1e-10) exact on {} reports{}; per date employers {:?}, jobs {:?}",
            reports.iter().filter(|r| r.metric != Metric::Skills).count(),
            if bad.is_empty() {
                String::new()
            } else {
                format!(", mismatches {bad:?}")
            },
            (per_date[0].epsilon, per_date[0].delta),
            (per_date[1].epsilon, per_date[1].delta)
        ),
    )
}

fn audit_mechanism(kind: MechanismKind, multiplier: f64) -> Result<Vec<audit::AuditVerdict>, String> {
    let (mechanism, pair, events) = audit::boundary_case(kind).map_err(|e| e.to_string())?;
    let declared = mechanism.cost();
    let mechanism = mechanism.with_noise_multiplier(multiplier);
    events
        .iter()
        .map(|e| {
            audit::estimate_privacy_loss(&mechanism, &pair, e, AUDIT_TRIALS, declared, 2020).map_err(|e| e.to_string())
        })
        .collect()
}

fn worst(verdicts: &[audit::AuditVerdict]) -> f64 {
    verdicts
        .iter()
        .filter_map(|v| v.epsilon_hat)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn empirical_audit() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, kind) in [
        ("laplace top-k", MechanismKind::LaplaceThreshold),
        ("gumbel top-k", MechanismKind::GumbelThreshold),
    ] {
        let clean = audit_mechanism(kind, 1.0)?;
        let faulty = audit_mechanism(kind, 0.5)?;
        let clean_ok = clean.iter().all(|v| v.outcome == Outcome::Pass);
        let fault_caught = faulty.iter().any(|v| v.outcome == Outcome::Fail);
        ok &= clean_ok && fault_caught;
        parts.push(format!(
            "{name}: clean ε̂ ≤ {:.3} vs {} ({}), halved noise ε̂ = {:.3} ({})",
            worst(&clean),
            clean[0].declared_epsilon,
            if clean_ok { "pass" } else { "FAIL" },
            worst(&faulty),
            if fault_caught { "caught" } else { "MISSED" }
        ));
    }
    ensure(ok, format!("{} trials per side; {}", AUDIT_TRIALS, parts.join("; ")))
}

fn fabrication_safety() -> Check {
    let near = hist(&[("a", 45), ("b", 40), ("c", 39), ("d", 30), ("e", 1)], Some(1));
    let near_skills = hist(&[("a", 300), ("b", 262), ("c", 255), ("d", 240), ("e", 1)], None);
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, kind, params, h) in [
        (
            "laplace top-k",
            MechanismKind::LaplaceThreshold,
            PrivacyParams::hiring_topk(),
            &near,
        ),
        (
            "gumbel top-k",
            MechanismKind::GumbelThreshold,
            PrivacyParams::skills_topk(),
            &near_skills,
        ),
    ] {
        let m = Mechanism::new(kind, params);
        let v = audit::check_never_fabricates(&m, h, FABRICATION_TRIALS, 7).map_err(|e| e.to_string())?;
        let empty = Histogram::unknown(h.slice.clone(), BTreeMap::new(), h.l0_bound);
        let root = RandomStream::new(8, 0);
        let empty_ok =
            (0..FABRICATION_TRIALS).all(|i| m.release(&empty, root.derive_index(i)).is_ok_and(|o| o.is_empty()));
        ok &= v.passes && v.fabrications == 0 && empty_ok;
        parts.push(format!(
            "{name}: {} fabrications in {} trials, empty input → empty output: {}",
            v.fabrications, v.trials, empty_ok
        ));
    }
    ensure(ok, parts.join("; "))
}

fn softmax_equivalence() -> Check {
    let slice = SliceKey::country(Month::new(2020, 7).unwrap(), "US");
    let counts: BTreeMap<String, i64> = [("a", 2), ("b", 1), ("c", 0)]
        .iter()
        .map(|(e, c)| (e.to_string(), *c))
        .collect();
    let h = Histogram::known(slice, ["a", "b", "c"], &counts, None);
    let params = PrivacyParams::new(1.0, 0.0, None, 3, 1).map_err(|e| e.to_string())?;
    let root = RandomStream::new(9, 0);
    let mut freq: BTreeMap<String, f64> = BTreeMap::new();
    for i in 0..SOFTMAX_TRIALS {
        let out = mechanisms::known_gumbel_topk(&h, &params, root.derive_index(i)).map_err(|e| e.to_string())?;
        *freq.entry(out.rows[0].element.clone()).or_default() += 1.0 / SOFTMAX_TRIALS as f64;
    }
    // Scale k/ε = 1, so P(e) ∝ exp(count).
    let z: f64 = counts.values().map(|c| (*c as f64).exp()).sum();
    let tv = 0.5
        * counts
            .iter()
            .map(|(e, c)| ((*c as f64).exp() / z - freq.get(e).copied().unwrap_or(0.0)).abs())
            .sum::<f64>();
    ensure(
        tv <= 0.01,
        format!("TV distance {tv:.5} (≤ 0.01) over {SOFTMAX_TRIALS} trials"),
    )
}

fn ingestion_oracles() -> Check {
    let (hires, skills) = synthetic_data(&small_spec());
    if hires.len() > 10_000 || skills.len() > 10_000 {
        return Err(format!(
            "fixture too large: {} hires, {} skills",
            hires.len(),
            skills.len()
        ));
    }
    let mut checked = 0;
    let mut mismatches = Vec::new();
    for date in [Month::new(2020, 7).unwrap(), Month::new(2020, 8).unwrap()] {
        let windowed = ingest::window(&hires, date, 3).map_err(|e| e.to_string())?;
        for slice in the_four_slices(date) {
            let emp = ingest::employer_histogram(&windowed, &slice);
            let jobs = ingest::job_histogram(&windowed, &slice);
            let top_jobs: Vec<String> = oracle_truncate(&jobs.elements, 5).into_keys().collect();
            let sk = ingest::skill_histogram(&skills, &slice, &top_jobs, 5).map_err(|e| e.to_string())?;
            let pairs = [
                (
                    "employers",
                    emp.elements.clone(),
                    oracle_hire_counts(&hires, &slice, 3, |h| h.employer_id.clone()),
                ),
                (
                    "jobs",
                    jobs.elements.clone(),
                    oracle_hire_counts(&hires, &slice, 3, |h| h.title_id.clone()),
                ),
                (
                    "skills",
                    sk.elements.clone(),
                    oracle_skill_counts(&skills, &slice, &top_jobs, 5),
                ),
                (
                    "employers d̄=10",
                    ingest::truncate_top_dbar(&emp, 10).elements,
                    oracle_truncate(&emp.elements, 10),
                ),
                (
                    "skills d̄=10",
                    ingest::truncate_top_dbar(&sk, 10).elements,
                    oracle_truncate(&sk.elements, 10),
                ),
            ];
            for (name, got, want) in pairs {
                checked += 1;
                if got != want {
                    mismatches.push(format!("{slice} {name}"));
                }
            }
            checked += 1;
            if ingest::total_hires(&windowed, &slice) != oracle_total(&hires, &slice, 3) {
                mismatches.push(format!("{slice} total"));
            }
        }
    }
    ensure(
        mismatches.is_empty(),
        format!(
            "{checked} histograms from {} hires / {} skill rows; mismatches: {mismatches:?}",
            hires.len(),
            skills.len()
        ),
    )
}

fn write_inputs(dir: &Path) -> Result<(), String> {
    let (hires, skills) = synthetic_data(&SyntheticSpec::default());
    ingest::write_hires(&dir.join("hires.csv"), &hires).map_err(|e| e.to_string())?;
    ingest::write_skills(&dir.join("skills.csv"), &skills).map_err(|e| e.to_string())
}

fn files_of(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".csv") || name.ends_with(".json") {
            files.push((name, std::fs::read(entry.path()).map_err(|e| e.to_string())?));
        }
    }
    files.sort();
    Ok(files)
}

fn reproducibility() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_inputs(tmp.path())?;
    let mut configs = Vec::new();
    for date in [Month::new(2020, 7).unwrap(), Month::new(2020, 8).unwrap()] {
        configs.extend(four_slice_configs(date, &the_four_slices(date)));
    }
    let manifest = |out: &str| RunManifest {
        root_seed: 424242,
        seed_source: "flag".into(),
        input_paths: vec![tmp.path().join("hires.csv"), tmp.path().join("skills.csv")],
        geography: None,
        industries: None,
        configs: configs.clone(),
        output_dir: tmp.path().join(out),
        created_at: "2020-09-01T00:00:00Z".into(),
        strict: true,
        enforce_single_hire: false,
    };
    let (m1, m2) = (manifest("run"), manifest("run"));
    let first_dir = tmp.path().join("first");
    cli::execute_manifest(&m1).map_err(|e| e.to_string())?;
    std::fs::rename(&m1.output_dir, &first_dir).map_err(|e| e.to_string())?;
    cli::execute_manifest(&m2).map_err(|e| e.to_string())?;
    let (a, b) = (files_of(&first_dir)?, files_of(&m2.output_dir)?);
    let ledgers_equal = std::fs::read(first_dir.join(cli::LEDGER_FILE)).ok()
        == std::fs::read(m2.output_dir.join(cli::LEDGER_FILE)).ok();
    ensure(
        a == b && ledgers_equal && a.len() == 2 * 24 + 1,
        format!(
            "{} files compared byte for byte, ledger identical: {ledgers_equal}",
            a.len()
        ),
    )
}

fn end_to_end_shape() -> Check {
    let (hires, skills) = synthetic_data(&SyntheticSpec::default());
    let seed = 77;
    // WA is a valid region with no hires at all.
    let base = Month::new(2020, 1).unwrap();
    let slices = vec![
        SliceKey::country(base, "US"),
        SliceKey::country(base, "US").with_region("CA"),
        SliceKey::country(base, "US").with_industry("software"),
        SliceKey::country(base, "US").with_region("WA"),
    ];
    let mut configs = Vec::new();
    for date in [Month::new(2020, 7).unwrap(), Month::new(2020, 8).unwrap()] {
        configs.extend(four_slice_configs(date, &slices));
    }
    let reports =
        reports::run_configs(&hires, &skills, &configs, seed, &mut BudgetLedger::new()).map_err(|e| e.to_string())?;
    let mut problems = Vec::new();
    let mut nonempty = 0;
    for r in &reports {
        if r.check_shape(20).is_err() {
            problems.push(format!("{} shape", r.file_stem()));
        }
        if !r.rows.is_empty() {
            nonempty += 1;
        }
        if r.metric == Metric::Skills {
            continue;
        }
        // The published order must be the top-k mechanism's order.
        let cfg = ReportConfig::defaults(r.metric, r.slice.clone());
        let raw = match r.metric {
            Metric::Employers => oracle_hire_counts(&hires, &r.slice, 3, |h| h.employer_id.clone()),
            _ => oracle_hire_counts(&hires, &r.slice, 3, |h| h.title_id.clone()),
        };
        let h = Histogram::unknown(r.slice.clone(), oracle_truncate(&raw, 1000), Some(1));
        let top = mechanisms::rte_unknown_laplace_topk(&h, &cfg.params_topk, cfg.stream(seed, "topk"))
            .map_err(|e| e.to_string())?;
        if !r.elements().eq(top.elements()) {
            problems.push(format!("{} order", r.file_stem()));
        }
    }
    let wa: Vec<_> = reports
        .iter()
        .filter(|r| r.slice.region.as_deref() == Some("WA"))
        .collect();
    let wa_ok = wa.len() == 6 && wa.iter().all(|r| r.status == ReportStatus::InsufficientData);
    ensure(
        reports.len() == 24 && problems.is_empty() && wa_ok && nonempty >= 12,
        format!(
            "{} reports, {nonempty} non-empty, max rows {}, empty slice → InsufficientData ×{}; problems {problems:?}",
            reports.len(),
            reports.iter().map(|r| r.rows.len()).max().unwrap_or(0),
            wa.iter().filter(|r| r.status == ReportStatus::InsufficientData).count()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("threshold constants", threshold_constants),
        ("noise scales", noise_scales),
        ("composition", composition),
        ("empirical DP audit", empirical_audit),
        ("fabrication safety", fabrication_safety),
        ("exponential-mechanism equivalence", softmax_equivalence),
        ("ingestion oracle equivalence", ingestion_oracles),
        ("reproducibility", reproducibility),
        ("end-to-end shape", end_to_end_shape),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {}. {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
