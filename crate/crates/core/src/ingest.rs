//! CSV ingestion, windowing, slicing and histogram construction.
//!
//! Input files (ISO-8601 dates, header row required and checked exactly):
//!
//! ```text
//! hires.csv:      member_id,employer_id,title_id,country,region,industry,hire_date
//! skills.csv:     member_id,country,region,title_id,skill_id,observed_date
//! geography.csv:  country,region
//! industries.csv: industry
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Histogram, Month, SliceKey, Taxonomy};

pub const HIRES_HEADER: [&str; 7] = [
    "member_id",
    "employer_id",
    "title_id",
    "country",
    "region",
    "industry",
    "hire_date",
];
pub const SKILLS_HEADER: [&str; 6] = [
    "member_id",
    "country",
    "region",
    "title_id",
    "skill_id",
    "observed_date",
];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HireEvent {
    pub member_id: String,
    pub employer_id: String,
    pub title_id: String,
    pub country: String,
    pub region: String,
    pub industry: String,
    pub hire_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SkillRecord {
    pub member_id: String,
    pub country: String,
    pub region: String,
    pub title_id: String,
    pub skill_id: String,
    pub observed_date: NaiveDate,
}

pub trait Dated {
    fn date(&self) -> NaiveDate;
}

impl Dated for HireEvent {
    fn date(&self) -> NaiveDate {
        self.hire_date
    }
}

impl Dated for SkillRecord {
    fn date(&self) -> NaiveDate {
        self.observed_date
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ParseMode {
    /// Any malformed row aborts the read.
    #[default]
    Strict,
    /// Malformed rows are skipped and reported.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedRow {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub rows: Vec<T>,
    pub skipped: Vec<SkippedRow>,
}

fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| format!("bad date {s:?}: {e}"))
}

fn read_table<T, R: Read>(
    reader: R,
    label: &str,
    header: &[&str],
    mode: ParseMode,
    build: impl Fn(&csv::StringRecord) -> std::result::Result<T, String>,
) -> Result<Parsed<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let found: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if found != header {
        return Err(Error::MalformedRow {
            path: label.to_string(),
            line: 1,
            message: format!("expected header {}, found {}", header.join(","), found.join(",")),
        });
    }
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for record in rdr.records() {
        let (line, outcome) = match record {
            Ok(rec) => {
                let line = rec.position().map_or(0, |p| p.line());
                let outcome = if rec.len() != header.len() {
                    Err(format!("expected {} fields, found {}", header.len(), rec.len()))
                } else if let Some(i) = rec.iter().position(|f| f.trim().is_empty()) {
                    Err(format!("empty field {:?}", header[i]))
                } else {
                    build(&rec)
                };
                (line, outcome)
            }
            Err(e) => (e.position().map_or(0, |p| p.line()), Err(e.to_string())),
        };
        match outcome {
            Ok(row) => rows.push(row),
            Err(message) => match mode {
                ParseMode::Strict => {
                    return Err(Error::MalformedRow {
                        path: label.to_string(),
                        line,
                        message,
                    })
                }
                ParseMode::Lenient => skipped.push(SkippedRow { line, message }),
            },
        }
    }
    Ok(Parsed { rows, skipped })
}

fn field(rec: &csv::StringRecord, i: usize) -> String {
    rec[i].trim().to_string()
}

pub fn read_hires_from<R: Read>(reader: R, label: &str, mode: ParseMode) -> Result<Parsed<HireEvent>> {
    read_table(reader, label, &HIRES_HEADER, mode, |rec| {
        Ok(HireEvent {
            member_id: field(rec, 0),
            employer_id: field(rec, 1),
            title_id: field(rec, 2),
            country: field(rec, 3),
            region: field(rec, 4),
            industry: field(rec, 5),
            hire_date: parse_date(&rec[6])?,
        })
    })
}

pub fn read_skills_from<R: Read>(reader: R, label: &str, mode: ParseMode) -> Result<Parsed<SkillRecord>> {
    read_table(reader, label, &SKILLS_HEADER, mode, |rec| {
        Ok(SkillRecord {
            member_id: field(rec, 0),
            country: field(rec, 1),
            region: field(rec, 2),
            title_id: field(rec, 3),
            skill_id: field(rec, 4),
            observed_date: parse_date(&rec[5])?,
        })
    })
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

pub fn read_hires(path: &Path, mode: ParseMode) -> Result<Parsed<HireEvent>> {
    read_hires_from(open(path)?, &path.display().to_string(), mode)
}

pub fn read_skills(path: &Path, mode: ParseMode) -> Result<Parsed<SkillRecord>> {
    read_skills_from(open(path)?, &path.display().to_string(), mode)
}

/// Loads `geography.csv` and, optionally, `industries.csv`.
pub fn read_taxonomy(geography: &Path, industries: Option<&Path>) -> Result<Taxonomy> {
    let label = geography.display().to_string();
    let geo = read_table(
        open(geography)?,
        &label,
        &["country", "region"],
        ParseMode::Strict,
        |rec| Ok((field(rec, 0), field(rec, 1))),
    )?;
    let mut taxonomy = Taxonomy::new();
    for (country, region) in geo.rows {
        taxonomy.add_region(&country, &region);
    }
    if let Some(path) = industries {
        let label = path.display().to_string();
        let parsed = read_table(open(path)?, &label, &["industry"], ParseMode::Strict, |rec| {
            Ok(field(rec, 0))
        })?;
        for industry in parsed.rows {
            taxonomy.add_industry(&industry);
        }
    }
    Ok(taxonomy)
}

/// Writes hires in the input format, header first.
pub fn write_hires(path: &Path, rows: &[HireEvent]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HIRES_HEADER)?;
    for r in rows {
        let date = r.hire_date.to_string();
        w.write_record([
            &r.member_id,
            &r.employer_id,
            &r.title_id,
            &r.country,
            &r.region,
            &r.industry,
            &date,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes skill records in the input format, header first.
pub fn write_skills(path: &Path, rows: &[SkillRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SKILLS_HEADER)?;
    for r in rows {
        let date = r.observed_date.to_string();
        w.write_record([&r.member_id, &r.country, &r.region, &r.title_id, &r.skill_id, &date])?;
    }
    w.flush()?;
    Ok(())
}

/// Keeps rows dated within the `months_back` calendar months ending at
/// `report_date`, inclusive.
pub fn window<T: Dated + Clone>(rows: &[T], report_date: Month, months_back: u32) -> Result<Vec<T>> {
    let (first, last) = window_bounds(report_date, months_back)?;
    Ok(rows
        .iter()
        .filter(|r| (first..=last).contains(&r.date()))
        .cloned()
        .collect())
}

/// First and last day of the window.
pub fn window_bounds(report_date: Month, months_back: u32) -> Result<(NaiveDate, NaiveDate)> {
    if months_back == 0 {
        return Err(Error::Config("months_back must be at least 1".into()));
    }
    let start = report_date.offset(-(months_back as i64 - 1))?;
    Ok((start.first_day(), report_date.last_day()))
}

/// Share of members hired at most once among `events`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingleHireDiagnostic {
    pub members: usize,
    pub members_hired_once: usize,
    pub fraction: f64,
}

pub fn single_hire_diagnostic(events: &[HireEvent]) -> SingleHireDiagnostic {
    let mut per_member: HashMap<&str, HashSet<(&str, &str, NaiveDate)>> = HashMap::new();
    for e in events {
        per_member
            .entry(&e.member_id)
            .or_default()
            .insert((&e.employer_id, &e.title_id, e.hire_date));
    }
    let members = per_member.len();
    let once = per_member.values().filter(|hires| hires.len() <= 1).count();
    SingleHireDiagnostic {
        members,
        members_hired_once: once,
        fraction: if members == 0 {
            1.0
        } else {
            once as f64 / members as f64
        },
    }
}

/// Keeps only each member's earliest hire (ties by employer, then title).
pub fn first_hire_only(events: &[HireEvent]) -> Vec<HireEvent> {
    let mut first: BTreeMap<&str, &HireEvent> = BTreeMap::new();
    for e in events {
        let slot = first.entry(&e.member_id).or_insert(e);
        if (e.hire_date, &e.employer_id, &e.title_id) < (slot.hire_date, &slot.employer_id, &slot.title_id) {
            *slot = e;
        }
    }
    let mut kept: Vec<HireEvent> = first.into_values().cloned().collect();
    kept.sort();
    kept
}

fn distinct_histogram<'a>(
    events: impl Iterator<Item = &'a HireEvent>,
    slice: &SliceKey,
    key: impl Fn(&HireEvent) -> &str,
) -> Histogram {
    let mut members: BTreeMap<String, HashSet<&str>> = BTreeMap::new();
    for e in events.filter(|e| slice.covers(&e.country, &e.region, &e.industry)) {
        members.entry(key(e).to_string()).or_default().insert(&e.member_id);
    }
    let counts = members.into_iter().map(|(k, m)| (k, m.len() as i64)).collect();
    Histogram::unknown(slice.clone(), counts, Some(1))
}

/// Distinct hired members per employer within `slice`; events must already be windowed.
pub fn employer_histogram(events: &[HireEvent], slice: &SliceKey) -> Histogram {
    distinct_histogram(events.iter(), slice, |e| &e.employer_id)
}

/// Distinct hired members per job title within `slice`; events must already be windowed.
pub fn job_histogram(events: &[HireEvent], slice: &SliceKey) -> Histogram {
    distinct_histogram(events.iter(), slice, |e| &e.title_id)
}

/// Distinct hired members in `slice`, the denominator of job shares.
pub fn total_hires(events: &[HireEvent], slice: &SliceKey) -> i64 {
    events
        .iter()
        .filter(|e| slice.covers(&e.country, &e.region, &e.industry))
        .map(|e| e.member_id.as_str())
        .collect::<HashSet<_>>()
        .len() as i64
}

/// Per skill, the maximum over `top_jobs` of the distinct members holding that
/// (geography, job, skill) tuple within the `years_back`-year window ending at
/// the slice's report month. The slice's industry is ignored; the result has
/// no l0 bound because one member may hold any number of skills.
pub fn skill_histogram(
    records: &[SkillRecord],
    slice: &SliceKey,
    top_jobs: &[String],
    years_back: u32,
) -> Result<Histogram> {
    let jobs: HashSet<&str> = top_jobs.iter().map(String::as_str).collect();
    if jobs.is_empty() {
        return Ok(Histogram::unknown(slice.clone(), BTreeMap::new(), None));
    }
    let (first, last) = window_bounds(slice.report_date, years_back.saturating_mul(12))?;
    let mut tuples: HashMap<(&str, &str), HashSet<&str>> = HashMap::new();
    for r in records {
        if (first..=last).contains(&r.observed_date)
            && slice.covers_geo(&r.country, &r.region)
            && jobs.contains(r.title_id.as_str())
        {
            tuples
                .entry((&r.title_id, &r.skill_id))
                .or_default()
                .insert(&r.member_id);
        }
    }
    let mut counts: BTreeMap<String, i64> = BTreeMap::new();
    for ((_, skill), members) in tuples {
        let c = counts.entry(skill.to_string()).or_insert(0);
        *c = (*c).max(members.len() as i64);
    }
    Ok(Histogram::unknown(slice.clone(), counts, None))
}

/// Keeps the `dbar` largest true counts; boundary ties go to the smaller element id.
pub fn truncate_top_dbar(h: &Histogram, dbar: usize) -> Histogram {
    if h.len() <= dbar {
        return h.clone();
    }
    let mut ranked: Vec<(&String, &i64)> = h.elements.iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let elements = ranked.into_iter().take(dbar).map(|(e, c)| (e.clone(), *c)).collect();
    Histogram { elements, ..h.clone() }
}

/// Inverse document frequency of each skill, treating each job as a document.
pub fn skill_idf(records: &[SkillRecord]) -> BTreeMap<String, f64> {
    let mut jobs_per_skill: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut jobs: BTreeSet<&str> = BTreeSet::new();
    for r in records {
        jobs.insert(&r.title_id);
        jobs_per_skill.entry(&r.skill_id).or_default().insert(&r.title_id);
    }
    let n = jobs.len() as f64;
    jobs_per_skill
        .into_iter()
        .map(|(skill, docs)| (skill.to_string(), (n / docs.len() as f64).ln()))
        .collect()
}

/// Drops skills whose idf across jobs is below `stopskill_threshold`.
///
/// This filter is not differentially private; reports built on its output
/// carry a note saying so.
pub fn tfidf_prefilter(records: &[SkillRecord], stopskill_threshold: f64) -> Vec<SkillRecord> {
    let idf = skill_idf(records);
    records
        .iter()
        .filter(|r| idf[&r.skill_id] >= stopskill_threshold)
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    pub(crate) fn hire(member: &str, employer: &str, title: &str, date: &str) -> HireEvent {
        HireEvent {
            member_id: member.into(),
            employer_id: employer.into(),
            title_id: title.into(),
            country: "US".into(),
            region: "CA".into(),
            industry: "software".into(),
            hire_date: d(date),
        }
    }

    fn skill(member: &str, title: &str, skill: &str, date: &str) -> SkillRecord {
        SkillRecord {
            member_id: member.into(),
            country: "US".into(),
            region: "CA".into(),
            title_id: title.into(),
            skill_id: skill.into(),
            observed_date: d(date),
        }
    }

    fn m(s: &str) -> Month {
        s.parse().unwrap()
    }

    #[test]
    fn window_keeps_three_months_ending_at_report() {
        let events: Vec<_> = ["2020-02-29", "2020-03-01", "2020-04-15", "2020-05-31", "2020-06-01"]
            .iter()
            .map(|date| hire("m", "e", "t", date))
            .collect();
        let kept = window(&events, m("2020-05"), 3).unwrap();
        let dates: Vec<String> = kept.iter().map(|e| e.hire_date.to_string()).collect();
        assert_eq!(dates, ["2020-03-01", "2020-04-15", "2020-05-31"]);
        let only_may = window(&events, m("2020-05"), 1).unwrap();
        assert_eq!(only_may.len(), 1);
        assert!(window(&events, m("2020-05"), 0).is_err());
    }

    #[test]
    fn repeated_hire_counts_once() {
        let events = vec![
            hire("m1", "acme", "eng", "2020-07-01"),
            hire("m1", "acme", "eng", "2020-07-20"),
            hire("m2", "acme", "pm", "2020-07-02"),
        ];
        let slice = SliceKey::country(m("2020-07"), "US");
        let h = employer_histogram(&events, &slice);
        assert_eq!(h.count("acme"), Some(2));
        assert_eq!(h.l0_bound, Some(1));
        let j = job_histogram(&events[..1], &slice);
        assert_eq!(j.elements.len(), 1);
        assert_eq!(j.count("eng"), Some(1));
        assert_eq!(total_hires(&events, &slice), 2);
    }

    #[test]
    fn slice_filters_geography_and_industry() {
        let mut other = hire("m3", "acme", "eng", "2020-07-01");
        other.region = "NY".into();
        other.industry = "retail".into();
        let events = vec![hire("m1", "acme", "eng", "2020-07-01"), other];
        let base = SliceKey::country(m("2020-07"), "US");
        assert_eq!(employer_histogram(&events, &base).count("acme"), Some(2));
        assert_eq!(
            employer_histogram(&events, &base.clone().with_region("NY")).count("acme"),
            Some(1)
        );
        assert_eq!(
            employer_histogram(&events, &base.clone().with_industry("software")).count("acme"),
            Some(1)
        );
        assert!(employer_histogram(&events, &base.with_region("NY").with_industry("software")).is_empty());
    }

    #[test]
    fn skill_value_is_max_over_jobs() {
        let mut records = Vec::new();
        for i in 0..40 {
            records.push(skill(&format!("a{i}"), "J1", "sql", "2019-01-01"));
        }
        for i in 0..55 {
            records.push(skill(&format!("b{i}"), "J2", "sql", "2018-01-01"));
        }
        records.push(skill("c", "J3", "sql", "2018-01-01"));
        records.push(skill("old", "J2", "cobol", "2015-07-31"));
        records.push(skill("new", "J2", "rust", "2015-08-01"));
        let slice = SliceKey::country(m("2020-07"), "US").with_industry("ignored");
        let jobs = vec!["J1".to_string(), "J2".to_string()];
        let h = skill_histogram(&records, &slice, &jobs, 5).unwrap();
        assert_eq!(h.count("sql"), Some(55));
        assert_eq!(h.count("cobol"), None);
        assert_eq!(h.count("rust"), Some(1));
        assert_eq!(h.l0_bound, None);
        assert!(skill_histogram(&records, &slice, &[], 5).unwrap().is_empty());
    }

    #[test]
    fn truncation_examples() {
        let slice = SliceKey::country(m("2020-07"), "US");
        let counts: BTreeMap<String, i64> = [("a", 5), ("b", 7)].iter().map(|(e, c)| (e.to_string(), *c)).collect();
        let h = Histogram::unknown(slice.clone(), counts, Some(1));
        assert_eq!(truncate_top_dbar(&h, 5), h);
        let top = truncate_top_dbar(&h, 1);
        assert_eq!(top.elements.keys().collect::<Vec<_>>(), vec!["b"]);
        let tied: BTreeMap<String, i64> = [("z", 3), ("y", 3), ("x", 1)]
            .iter()
            .map(|(e, c)| (e.to_string(), *c))
            .collect();
        let top = truncate_top_dbar(&Histogram::unknown(slice, tied, Some(1)), 1);
        assert_eq!(top.elements.keys().collect::<Vec<_>>(), vec!["y"]);
    }

    #[test]
    fn tfidf_drops_ubiquitous_skills() {
        let records = vec![
            skill("1", "J1", "word", "2020-01-01"),
            skill("2", "J2", "word", "2020-01-01"),
            skill("3", "J1", "rust", "2020-01-01"),
        ];
        let kept = tfidf_prefilter(&records, 0.1);
        assert!(kept.iter().all(|r| r.skill_id != "word"));
        assert_eq!(kept.len(), 1);
        assert_eq!(tfidf_prefilter(&records, 0.0), records);
    }

    #[test]
    fn strict_rejects_with_line_numbers() {
        let data = "member_id,employer_id,title_id,country,region,industry,hire_date\n\
                    m1,e1,t1,US,CA,sw,2020-07-01\n\
                    m2,e1,t1,US,CA,sw,2020-13-01\n\
                    m3,,t1,US,CA,sw,2020-07-01\n";
        let err = read_hires_from(data.as_bytes(), "hires.csv", ParseMode::Strict).unwrap_err();
        assert!(err.to_string().starts_with("hires.csv:3:"), "{err}");
        let parsed = read_hires_from(data.as_bytes(), "hires.csv", ParseMode::Lenient).unwrap();
        assert_eq!(parsed.rows.len(), 1);
        assert_eq!(parsed.skipped.iter().map(|s| s.line).collect::<Vec<_>>(), vec![3, 4]);
        let bad_header = "member,employer\n";
        assert!(read_hires_from(bad_header.as_bytes(), "h", ParseMode::Lenient).is_err());
    }

    #[test]
    fn skills_csv_parses() {
        let data = "member_id,country,region,title_id,skill_id,observed_date\nm1,US,CA,t1,s1,2019-02-03\n";
        let parsed = read_skills_from(data.as_bytes(), "skills.csv", ParseMode::Strict).unwrap();
        assert_eq!(parsed.rows[0].skill_id, "s1");
    }

    #[test]
    fn single_hire_diagnostic_and_enforcement() {
        let events = vec![
            hire("m1", "a", "t", "2020-07-03"),
            hire("m1", "b", "t", "2020-07-01"),
            hire("m2", "a", "t", "2020-07-01"),
        ];
        let diag = single_hire_diagnostic(&events);
        assert_eq!((diag.members, diag.members_hired_once), (2, 1));
        let kept = first_hire_only(&events);
        assert_eq!(kept.len(), 2);
        assert!(kept.iter().any(|e| e.member_id == "m1" && e.employer_id == "b"));
        assert_eq!(single_hire_diagnostic(&kept).fraction, 1.0);
    }
}
