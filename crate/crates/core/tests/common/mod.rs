//! Brute-force reference implementations shared by the integration tests.
//! They deliberately avoid the library's own helpers: plain loops over rows,
//! date arithmetic by hand, sort-then-take.

#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use dp_insights::ingest::{HireEvent, SkillRecord};
use dp_insights::synthetic::{self, SyntheticSpec};
use dp_insights::{Histogram, Month, SliceKey};

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn small_spec() -> SyntheticSpec {
    SyntheticSpec {
        members: 1_500,
        ..SyntheticSpec::default()
    }
}

pub fn synthetic_data(spec: &SyntheticSpec) -> (Vec<HireEvent>, Vec<SkillRecord>) {
    let hires = synthetic::hires(spec);
    let skills = synthetic::skill_records(spec, &hires);
    (hires, skills)
}

/// Months since year 0, so that window membership is an integer comparison.
fn month_index(year: i32, month: u32) -> i64 {
    year as i64 * 12 + month as i64 - 1
}

pub fn in_window(date: NaiveDate, report: Month, months: u32) -> bool {
    let d = month_index(date.year(), date.month());
    let r = month_index(report.year(), report.month());
    d <= r && d > r - months as i64
}

fn slice_matches(slice: &SliceKey, country: &str, region: &str, industry: Option<&str>) -> bool {
    if slice.country != country {
        return false;
    }
    if let Some(r) = &slice.region {
        if r != region {
            return false;
        }
    }
    match (&slice.industry, industry) {
        (Some(want), Some(got)) => want == got,
        _ => true,
    }
}

/// Distinct members per key among hires in the slice and window, by scanning
/// every (key, member) pair.
pub fn oracle_hire_counts(
    hires: &[HireEvent],
    slice: &SliceKey,
    months: u32,
    key: impl Fn(&HireEvent) -> String,
) -> BTreeMap<String, i64> {
    let mut pairs: Vec<(String, String)> = hires
        .iter()
        .filter(|h| in_window(h.hire_date, slice.report_date, months))
        .filter(|h| slice_matches(slice, &h.country, &h.region, Some(&h.industry)))
        .map(|h| (key(h), h.member_id.clone()))
        .collect();
    pairs.sort();
    pairs.dedup();
    let mut out = BTreeMap::new();
    for (k, _) in pairs {
        *out.entry(k).or_insert(0) += 1;
    }
    out
}

pub fn oracle_total(hires: &[HireEvent], slice: &SliceKey, months: u32) -> i64 {
    let mut members: Vec<&str> = hires
        .iter()
        .filter(|h| in_window(h.hire_date, slice.report_date, months))
        .filter(|h| slice_matches(slice, &h.country, &h.region, Some(&h.industry)))
        .map(|h| h.member_id.as_str())
        .collect();
    members.sort();
    members.dedup();
    members.len() as i64
}

/// For each skill, the max over `jobs` of distinct members with that
/// (job, skill) in the slice geography and the `years`-year window.
pub fn oracle_skill_counts(
    records: &[SkillRecord],
    slice: &SliceKey,
    jobs: &[String],
    years: u32,
) -> BTreeMap<String, i64> {
    let mut out: BTreeMap<String, i64> = BTreeMap::new();
    for job in jobs {
        let mut pairs: Vec<(&str, &str)> = records
            .iter()
            .filter(|r| &r.title_id == job)
            .filter(|r| in_window(r.observed_date, slice.report_date, years * 12))
            .filter(|r| slice_matches(slice, &r.country, &r.region, None))
            .map(|r| (r.skill_id.as_str(), r.member_id.as_str()))
            .collect();
        pairs.sort();
        pairs.dedup();
        let mut per_skill: BTreeMap<&str, i64> = BTreeMap::new();
        for (s, _) in pairs {
            *per_skill.entry(s).or_insert(0) += 1;
        }
        for (s, c) in per_skill {
            let e = out.entry(s.to_string()).or_insert(0);
            *e = (*e).max(c);
        }
    }
    out
}

/// Sort by (count desc, id asc) and keep the first `dbar`.
pub fn oracle_truncate(counts: &BTreeMap<String, i64>, dbar: usize) -> BTreeMap<String, i64> {
    let mut v: Vec<(&String, &i64)> = counts.iter().collect();
    v.sort_by(|a, b| (-a.1, a.0).cmp(&(-b.1, b.0)));
    v.into_iter().take(dbar).map(|(k, c)| (k.clone(), *c)).collect()
}

pub fn hist(pairs: &[(&str, i64)], l0: Option<u32>) -> Histogram {
    let slice = SliceKey::country(Month::new(2020, 7).unwrap(), "US");
    Histogram::unknown(slice, pairs.iter().map(|(e, c)| (e.to_string(), *c)).collect(), l0)
}

pub fn the_four_slices(date: Month) -> Vec<SliceKey> {
    vec![
        SliceKey::country(date, "US"),
        SliceKey::country(date, "US").with_region("CA"),
        SliceKey::country(date, "US").with_industry("software"),
        SliceKey::country(date, "US")
            .with_region("CA")
            .with_industry("software"),
    ]
}
