//! The three report pipelines: histogram → mechanism → post-processing.
//!
//! Report values are computed only from mechanism outputs. The pipelines take
//! their mechanisms through [`Mechanisms`] so that tests can substitute
//! doubles and check that nothing else leaks into the published numbers.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::{compose_sequential, BudgetEntry, BudgetLedger};
use crate::error::{Error, Result};
use crate::ingest::{self, HireEvent, SkillRecord};
use crate::mechanisms::{Mechanism, MechanismKind, Release, TopKResult};
use crate::noise::RandomStream;
use crate::types::{Cost, Histogram, Metric, PrivacyParams, RankedReport, SliceKey};

/// Element id of the single bin used for the noisy total of hires.
pub const TOTAL_ELEMENT: &str = "__total__";

/// Lower clamp applied to noisy denominators before division.
pub const DENOMINATOR_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub metric: Metric,
    pub slice: SliceKey,
    pub params_topk: PrivacyParams,
    pub params_denominator: Option<PrivacyParams>,
    pub months_back: u32,
    pub skill_years_back: u32,
    /// Optional non-private idf filter for skills; `None` disables it.
    #[serde(default)]
    pub tfidf_threshold: Option<f64>,
}

impl ReportConfig {
    /// Published parameters for each metric.
    pub fn defaults(metric: Metric, slice: SliceKey) -> Self {
        let (params_topk, params_denominator) = match metric {
            Metric::Employers | Metric::Jobs => (PrivacyParams::hiring_topk(), Some(PrivacyParams::hiring_companion())),
            Metric::Skills => (PrivacyParams::skills_topk(), None),
        };
        Self {
            metric,
            slice,
            params_topk,
            params_denominator,
            months_back: 3,
            skill_years_back: 5,
            tfidf_threshold: None,
        }
    }

    fn expect_metric(&self, metric: Metric) -> Result<()> {
        if self.metric != metric {
            return Err(Error::Config(format!("config is for {}, not {metric}", self.metric)));
        }
        Ok(())
    }

    fn denominator(&self) -> Result<PrivacyParams> {
        self.params_denominator
            .ok_or_else(|| Error::Config(format!("{} report needs companion count parameters", self.metric)))
    }

    pub fn stream(&self, seed: u64, purpose: &str) -> RandomStream {
        RandomStream::for_report(seed, &self.slice, self.metric, purpose)
    }
}

/// Mechanism entry points used by the pipelines.
pub trait Mechanisms {
    fn top_k(
        &self,
        kind: MechanismKind,
        h: &Histogram,
        params: &PrivacyParams,
        stream: RandomStream,
    ) -> Result<TopKResult>;
    fn noisy_counts(
        &self,
        h: &Histogram,
        params: &PrivacyParams,
        stream: RandomStream,
    ) -> Result<BTreeMap<String, f64>>;
}

/// The production mechanisms.
#[derive(Debug, Clone, Copy, Default)]
pub struct DpMechanisms;

impl Mechanisms for DpMechanisms {
    fn top_k(
        &self,
        kind: MechanismKind,
        h: &Histogram,
        params: &PrivacyParams,
        stream: RandomStream,
    ) -> Result<TopKResult> {
        Mechanism::new(kind, *params).release(h, stream)
    }

    fn noisy_counts(
        &self,
        h: &Histogram,
        params: &PrivacyParams,
        stream: RandomStream,
    ) -> Result<BTreeMap<String, f64>> {
        crate::mechanisms::known_laplace(h, params, stream)
    }
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// `100 · current / max(previous, floor)` in top-k order.
pub fn growth_rows(top: &TopKResult, previous: &BTreeMap<String, f64>) -> Result<Vec<(String, Option<f64>)>> {
    top.rows
        .iter()
        .map(|row| {
            let current = row
                .noisy_count
                .ok_or_else(|| Error::Internal(format!("missing noisy count for {}", row.element)))?;
            let prev = previous
                .get(&row.element)
                .ok_or_else(|| Error::Internal(format!("missing previous count for {}", row.element)))?;
            Ok((
                row.element.clone(),
                Some(round2(100.0 * current / prev.max(DENOMINATOR_FLOOR))),
            ))
        })
        .collect()
}

/// `100 · count / max(total, floor)` in top-k order.
pub fn share_rows(top: &TopKResult, noisy_total: f64) -> Result<Vec<(String, Option<f64>)>> {
    let denom = noisy_total.max(DENOMINATOR_FLOOR);
    top.rows
        .iter()
        .map(|row| {
            let count = row
                .noisy_count
                .ok_or_else(|| Error::Internal(format!("missing noisy count for {}", row.element)))?;
            Ok((row.element.clone(), Some(round2(100.0 * count / denom))))
        })
        .collect()
}

fn record(ledger: &mut BudgetLedger, entries: Vec<BudgetEntry>) -> Result<Cost> {
    let costs: Vec<Cost> = entries.iter().map(BudgetEntry::cost).collect();
    let total = compose_sequential(&costs)?;
    for e in entries {
        ledger.append(e);
    }
    Ok(total)
}

fn mechanism_cost(kind: MechanismKind, params: &PrivacyParams) -> Cost {
    Mechanism::new(kind, *params).cost()
}

/// Report pipelines over a chosen set of mechanisms.
#[derive(Debug, Clone, Copy, Default)]
pub struct Pipeline<M> {
    mechanisms: M,
}

impl<M: Mechanisms> Pipeline<M> {
    pub fn new(mechanisms: M) -> Self {
        Self { mechanisms }
    }

    pub fn mechanisms(&self) -> &M {
        &self.mechanisms
    }

    /// Top employers by current-window noisy count, valued by growth against
    /// the immediately preceding window.
    pub fn who_is_hiring(
        &self,
        events: &[HireEvent],
        config: &ReportConfig,
        seed: u64,
        ledger: &mut BudgetLedger,
    ) -> Result<RankedReport> {
        config.expect_metric(Metric::Employers)?;
        let companion = config.denominator()?;
        let slice = &config.slice;
        let cost = record(
            ledger,
            vec![
                BudgetEntry::new(
                    slice.clone(),
                    Metric::Employers,
                    MechanismKind::LaplaceThreshold,
                    mechanism_cost(MechanismKind::LaplaceThreshold, &config.params_topk),
                )?,
                BudgetEntry::new(
                    slice.clone(),
                    Metric::Employers,
                    MechanismKind::KnownLaplace,
                    mechanism_cost(MechanismKind::KnownLaplace, &companion),
                )?,
            ],
        )?;

        let current = ingest::window(events, slice.report_date, config.months_back)?;
        let histogram = ingest::truncate_top_dbar(
            &ingest::employer_histogram(&current, slice),
            config.params_topk.fetch_limit,
        );
        let top = self.mechanisms.top_k(
            MechanismKind::LaplaceThreshold,
            &histogram,
            &config.params_topk,
            config.stream(seed, "topk"),
        )?;
        drop(histogram);
        if top.is_empty() {
            return Ok(RankedReport::insufficient(Metric::Employers, slice.clone(), cost));
        }

        let previous_month = slice.report_date.offset(-(config.months_back as i64))?;
        let previous = ingest::window(events, previous_month, config.months_back)?;
        let previous_counts = ingest::employer_histogram(&previous, slice).elements;
        let domain: Vec<&str> = top.elements().collect();
        let counts: BTreeMap<String, i64> = domain
            .iter()
            .filter_map(|e| previous_counts.get(*e).map(|c| (e.to_string(), *c)))
            .collect();
        let known = Histogram::known(slice.clone(), domain, &counts, companion.l0_sensitivity);
        let noisy_previous = self
            .mechanisms
            .noisy_counts(&known, &companion, config.stream(seed, "previous"))?;
        drop(known);

        let rows = growth_rows(&top, &noisy_previous)?;
        Ok(RankedReport::from_ordered(Metric::Employers, slice.clone(), rows, cost))
    }

    /// Top jobs by noisy count, valued as a share of the noisy total of hires.
    pub fn jobs_available(
        &self,
        events: &[HireEvent],
        config: &ReportConfig,
        seed: u64,
        ledger: &mut BudgetLedger,
    ) -> Result<RankedReport> {
        config.expect_metric(Metric::Jobs)?;
        let companion = config.denominator()?;
        let slice = &config.slice;
        let cost = record(
            ledger,
            vec![
                BudgetEntry::new(
                    slice.clone(),
                    Metric::Jobs,
                    MechanismKind::LaplaceThreshold,
                    mechanism_cost(MechanismKind::LaplaceThreshold, &config.params_topk),
                )?,
                BudgetEntry::new(
                    slice.clone(),
                    Metric::Jobs,
                    MechanismKind::KnownLaplace,
                    mechanism_cost(MechanismKind::KnownLaplace, &companion),
                )?,
            ],
        )?;

        let current = ingest::window(events, slice.report_date, config.months_back)?;
        let histogram =
            ingest::truncate_top_dbar(&ingest::job_histogram(&current, slice), config.params_topk.fetch_limit);
        let top = self.mechanisms.top_k(
            MechanismKind::LaplaceThreshold,
            &histogram,
            &config.params_topk,
            config.stream(seed, "topk"),
        )?;
        drop(histogram);
        if top.is_empty() {
            return Ok(RankedReport::insufficient(Metric::Jobs, slice.clone(), cost));
        }

        let total = BTreeMap::from([(TOTAL_ELEMENT.to_string(), ingest::total_hires(&current, slice))]);
        let known = Histogram::known(slice.clone(), [TOTAL_ELEMENT], &total, companion.l0_sensitivity);
        let noisy = self
            .mechanisms
            .noisy_counts(&known, &companion, config.stream(seed, "denominator"))?;
        let noisy_total = *noisy
            .get(TOTAL_ELEMENT)
            .ok_or_else(|| Error::Internal("noisy total missing".into()))?;

        let rows = share_rows(&top, noisy_total)?;
        Ok(RankedReport::from_ordered(Metric::Jobs, slice.clone(), rows, cost))
    }

    /// Rank-only top skills for the jobs released in `jobs_report`.
    pub fn skills_needed(
        &self,
        records: &[SkillRecord],
        jobs_report: &RankedReport,
        config: &ReportConfig,
        seed: u64,
        ledger: &mut BudgetLedger,
    ) -> Result<RankedReport> {
        config.expect_metric(Metric::Skills)?;
        let slice = &config.slice;
        if jobs_report.metric != Metric::Jobs || &jobs_report.slice != slice {
            return Err(Error::Config(format!(
                "skills for {slice} need the jobs report of the same slice, got {} for {}",
                jobs_report.metric, jobs_report.slice
            )));
        }
        if jobs_report.rows.is_empty() {
            return Ok(RankedReport::insufficient(Metric::Skills, slice.clone(), Cost::ZERO));
        }
        let cost = record(
            ledger,
            vec![BudgetEntry::new(
                slice.clone(),
                Metric::Skills,
                MechanismKind::GumbelThreshold,
                mechanism_cost(MechanismKind::GumbelThreshold, &config.params_topk),
            )?
            .conditional()],
        )?;

        let mut notes = Vec::new();
        let filtered;
        let records = match config.tfidf_threshold {
            Some(threshold) => {
                filtered = ingest::tfidf_prefilter(records, threshold);
                notes.push(format!("non-private idf pre-filter applied (threshold {threshold})"));
                &filtered[..]
            }
            None => records,
        };
        let jobs: Vec<String> = jobs_report.elements().map(str::to_string).collect();
        let histogram = ingest::truncate_top_dbar(
            &ingest::skill_histogram(records, slice, &jobs, config.skill_years_back)?,
            config.params_topk.fetch_limit,
        );
        let top = self.mechanisms.top_k(
            MechanismKind::GumbelThreshold,
            &histogram,
            &config.params_topk,
            config.stream(seed, "topk"),
        )?;
        drop(histogram);

        let rows = top.rows.into_iter().map(|r| (r.element, None));
        let mut report = RankedReport::from_ordered(Metric::Skills, slice.clone(), rows, cost);
        report.notes = notes;
        Ok(report)
    }
}

pub fn who_is_hiring(
    events: &[HireEvent],
    config: &ReportConfig,
    seed: u64,
    ledger: &mut BudgetLedger,
) -> Result<RankedReport> {
    Pipeline::new(DpMechanisms).who_is_hiring(events, config, seed, ledger)
}

pub fn jobs_available(
    events: &[HireEvent],
    config: &ReportConfig,
    seed: u64,
    ledger: &mut BudgetLedger,
) -> Result<RankedReport> {
    Pipeline::new(DpMechanisms).jobs_available(events, config, seed, ledger)
}

pub fn skills_needed(
    records: &[SkillRecord],
    jobs_report: &RankedReport,
    config: &ReportConfig,
    seed: u64,
    ledger: &mut BudgetLedger,
) -> Result<RankedReport> {
    Pipeline::new(DpMechanisms).skills_needed(records, jobs_report, config, seed, ledger)
}

/// Runs a batch of configs, grouped by slice, with slices processed in
/// parallel. A skills config consumes the jobs report of its slice; when no
/// jobs config is given for that slice, one with default parameters is run
/// and charged but not returned. Reports and ledger entries come back in the
/// order slices first appear in `configs`, employers before jobs before skills.
pub fn run_configs(
    hires: &[HireEvent],
    skills: &[SkillRecord],
    configs: &[ReportConfig],
    seed: u64,
    ledger: &mut BudgetLedger,
) -> Result<Vec<RankedReport>> {
    let mut groups: Vec<(SliceKey, [Option<&ReportConfig>; 3])> = Vec::new();
    for cfg in configs {
        let idx = match groups.iter().position(|(s, _)| s == &cfg.slice) {
            Some(i) => i,
            None => {
                groups.push((cfg.slice.clone(), [None; 3]));
                groups.len() - 1
            }
        };
        let slot = &mut groups[idx].1[cfg.metric as usize];
        if slot.is_some() {
            return Err(Error::Config(format!(
                "duplicate {} config for {}",
                cfg.metric, cfg.slice
            )));
        }
        *slot = Some(cfg);
    }
    let results: Vec<Result<(Vec<RankedReport>, BudgetLedger)>> = groups
        .par_iter()
        .map(|(slice, [employers, jobs, skills_cfg])| {
            let mut local = BudgetLedger::new();
            let mut out = Vec::new();
            let pipeline = Pipeline::new(DpMechanisms);
            if let Some(cfg) = employers {
                out.push(pipeline.who_is_hiring(hires, cfg, seed, &mut local)?);
            }
            if jobs.is_some() || skills_cfg.is_some() {
                let default_jobs;
                let jobs_cfg = match jobs {
                    Some(cfg) => *cfg,
                    None => {
                        default_jobs = ReportConfig::defaults(Metric::Jobs, slice.clone());
                        &default_jobs
                    }
                };
                let jobs_report = pipeline.jobs_available(hires, jobs_cfg, seed, &mut local)?;
                let skills_report = match skills_cfg {
                    Some(cfg) => Some(pipeline.skills_needed(skills, &jobs_report, cfg, seed, &mut local)?),
                    None => None,
                };
                if jobs.is_some() {
                    out.push(jobs_report);
                }
                out.extend(skills_report);
            }
            Ok((out, local))
        })
        .collect();
    let mut reports = Vec::new();
    for result in results {
        let (mut batch, local) = result?;
        reports.append(&mut batch);
        for e in local.entries() {
            ledger.append(e.clone());
        }
    }
    Ok(reports)
}

/// Writes `{stem}.csv` and `{stem}.json` into `dir`.
pub fn write_report(dir: &Path, report: &RankedReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let stem = report.file_stem();
    std::fs::write(dir.join(format!("{stem}.csv")), report.to_csv())?;
    let mut json = report.to_json();
    json.push('\n');
    std::fs::write(dir.join(format!("{stem}.json")), json)?;
    Ok(())
}
