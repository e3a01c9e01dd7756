//! Privacy budget ledger under basic sequential composition.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::MechanismKind;
use crate::types::{Cost, Metric, Month, SliceKey};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetEntry {
    pub slice: SliceKey,
    pub metric: Metric,
    pub mechanism: MechanismKind,
    pub epsilon: f64,
    pub delta: f64,
    /// Set when the release sits on top of a non-private preprocessing step,
    /// so the recorded cost is not an end-to-end guarantee.
    #[serde(default)]
    pub conditional: bool,
}

impl BudgetEntry {
    pub fn new(slice: SliceKey, metric: Metric, mechanism: MechanismKind, cost: Cost) -> Result<Self> {
        if !(cost.epsilon.is_finite() && cost.epsilon > 0.0) || !(cost.delta >= 0.0 && cost.delta < 1.0) {
            return Err(Error::InvalidParams(format!(
                "budget entry needs ε > 0 and δ ≥ 0, got ({}, {})",
                cost.epsilon, cost.delta
            )));
        }
        Ok(Self {
            slice,
            metric,
            mechanism,
            epsilon: cost.epsilon,
            delta: cost.delta,
            conditional: false,
        })
    }

    pub fn conditional(mut self) -> Self {
        self.conditional = true;
        self
    }

    pub fn cost(&self) -> Cost {
        Cost::new(self.epsilon, self.delta)
    }
}

/// Correctly rounded floating-point sum (Shewchuk partials), so that totals
/// do not depend on entry order.
fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    // Round the partials to a single double, compensating for half-way cases.
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

/// `(Σε, Σδ)` over a non-empty list.
pub fn compose_sequential(costs: &[Cost]) -> Result<Cost> {
    if costs.is_empty() {
        return Err(Error::InvalidParams("cannot compose an empty list".into()));
    }
    Ok(Cost::new(
        exact_sum(costs.iter().map(|c| c.epsilon)),
        exact_sum(costs.iter().map(|c| c.delta)),
    ))
}

/// Append-only list of expenditures. Totals are folds over the entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    entries: Vec<BudgetEntry>,
}

/// Per-(date, metric) total as printed by the `budget` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DateTotal {
    pub report_date: Month,
    pub metric: Metric,
    pub epsilon: f64,
    pub delta: f64,
    pub conditional: bool,
    pub reports: usize,
}

impl BudgetLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<BudgetEntry>) -> Self {
        Self { entries }
    }

    pub fn append(&mut self, entry: BudgetEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[BudgetEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sequential total of the entries recorded for exactly this slice and metric.
    pub fn report_cost(&self, slice: &SliceKey, metric: Metric) -> Cost {
        let costs: Vec<Cost> = self
            .entries
            .iter()
            .filter(|e| &e.slice == slice && e.metric == metric)
            .map(BudgetEntry::cost)
            .collect();
        compose_sequential(&costs).unwrap_or(Cost::ZERO)
    }

    /// Worst-case cost for a single hire on `report_date` for `metric`.
    ///
    /// A hire at (country, region, industry) is counted in every report whose
    /// slice covers it: country, country-region, country-industry and
    /// country-region-industry. The result is the componentwise maximum, over
    /// all such locations implied by the ledger, of the sequential sum of the
    /// covering entries. Disjoint countries compose in parallel.
    pub fn date_cost(&self, report_date: Month, metric: Metric) -> Cost {
        let entries: Vec<&BudgetEntry> = self
            .entries
            .iter()
            .filter(|e| e.slice.report_date == report_date && e.metric == metric)
            .collect();
        let mut regions: BTreeMap<&str, BTreeSet<Option<&str>>> = BTreeMap::new();
        let mut industries: BTreeMap<&str, BTreeSet<Option<&str>>> = BTreeMap::new();
        for e in &entries {
            let country = e.slice.country.as_str();
            // `None` stands for a location outside every named region/industry.
            regions
                .entry(country)
                .or_insert_with(|| BTreeSet::from([None]))
                .insert(e.slice.region.as_deref());
            industries
                .entry(country)
                .or_insert_with(|| BTreeSet::from([None]))
                .insert(e.slice.industry.as_deref());
        }
        let mut worst = Cost::ZERO;
        for (country, country_regions) in &regions {
            for region in country_regions {
                for industry in &industries[country] {
                    let covering: Vec<Cost> = entries
                        .iter()
                        .filter(|e| {
                            e.slice.country == *country
                                && (e.slice.region.is_none() || e.slice.region.as_deref() == *region)
                                && (e.slice.industry.is_none() || e.slice.industry.as_deref() == *industry)
                        })
                        .map(|e| e.cost())
                        .collect();
                    if let Ok(total) = compose_sequential(&covering) {
                        worst.epsilon = worst.epsilon.max(total.epsilon);
                        worst.delta = worst.delta.max(total.delta);
                    }
                }
            }
        }
        worst
    }

    /// One [`DateTotal`] per (date, metric) present in the ledger.
    pub fn date_totals(&self) -> Vec<DateTotal> {
        let mut keys: BTreeMap<(Month, Metric), (BTreeSet<&SliceKey>, bool)> = BTreeMap::new();
        for e in &self.entries {
            let slot = keys.entry((e.slice.report_date, e.metric)).or_default();
            slot.0.insert(&e.slice);
            slot.1 |= e.conditional;
        }
        keys.into_iter()
            .map(|((report_date, metric), (slices, conditional))| {
                let cost = self.date_cost(report_date, metric);
                DateTotal {
                    report_date,
                    metric,
                    epsilon: cost.epsilon,
                    delta: cost.delta,
                    conditional,
                    reports: slices.len(),
                }
            })
            .collect()
    }

    /// Reads a JSON-lines ledger; a missing file is an empty ledger.
    pub fn load_jsonl(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::new());
        }
        let file = std::fs::File::open(path)?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: BudgetEntry = serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
                path: path.display().to_string(),
                line: i as u64 + 1,
                message: e.to_string(),
            })?;
            entries.push(entry);
        }
        Ok(Self { entries })
    }

    /// Appends `entries` to a JSON-lines file, creating it if needed.
    pub fn append_jsonl(path: &Path, entries: &[BudgetEntry]) -> Result<()> {
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut buf = String::new();
        for e in entries {
            buf.push_str(&serde_json::to_string(e)?);
            buf.push('\n');
        }
        file.write_all(buf.as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn month() -> Month {
        Month::new(2020, 7).unwrap()
    }

    fn report(ledger: &mut BudgetLedger, slice: SliceKey, metric: Metric) {
        ledger.append(
            BudgetEntry::new(
                slice.clone(),
                metric,
                MechanismKind::LaplaceThreshold,
                Cost::new(0.6, 1e-10),
            )
            .unwrap(),
        );
        ledger.append(BudgetEntry::new(slice, metric, MechanismKind::KnownLaplace, Cost::new(0.6, 0.0)).unwrap());
    }

    fn four_slices() -> Vec<SliceKey> {
        let base = SliceKey::country(month(), "US");
        vec![
            base.clone(),
            base.clone().with_region("CA"),
            base.clone().with_industry("software"),
            base.with_region("CA").with_industry("software"),
        ]
    }

    #[test]
    fn composition_matches_published_totals() {
        let per_report = compose_sequential(&[Cost::new(0.6, 1e-10), Cost::new(0.6, 0.0)]).unwrap();
        assert_eq!(per_report, Cost::new(1.2, 1e-10));
        let per_date = compose_sequential(&[per_report; 4]).unwrap();
        assert_eq!(per_date, Cost::new(4.8, 4e-10));
        let single = Cost::new(0.37, 3e-9);
        assert_eq!(compose_sequential(&[single]).unwrap(), single);
        assert!(compose_sequential(&[]).is_err());
    }

    #[test]
    fn exact_sum_is_correctly_rounded() {
        assert_eq!(exact_sum([0.1; 10]), 1.0);
        assert_eq!(exact_sum([1e100, 1.0, -1e100]), 1.0);
        assert_eq!(exact_sum([]), 0.0);
    }

    #[test]
    fn date_cost_sums_the_four_granularities() {
        let mut ledger = BudgetLedger::new();
        for slice in four_slices() {
            report(&mut ledger, slice.clone(), Metric::Employers);
            report(&mut ledger, slice, Metric::Jobs);
        }
        assert_eq!(ledger.date_cost(month(), Metric::Employers), Cost::new(4.8, 4e-10));
        assert_eq!(ledger.date_cost(month(), Metric::Jobs), Cost::new(4.8, 4e-10));
        assert_eq!(ledger.date_cost(month().offset(-1).unwrap(), Metric::Jobs), Cost::ZERO);
        assert_eq!(
            ledger.report_cost(&four_slices()[1], Metric::Jobs),
            Cost::new(1.2, 1e-10)
        );
    }

    #[test]
    fn disjoint_countries_do_not_add() {
        let mut ledger = BudgetLedger::new();
        report(&mut ledger, SliceKey::country(month(), "US"), Metric::Employers);
        report(&mut ledger, SliceKey::country(month(), "FR"), Metric::Employers);
        report(
            &mut ledger,
            SliceKey::country(month(), "US").with_region("CA"),
            Metric::Employers,
        );
        report(
            &mut ledger,
            SliceKey::country(month(), "US").with_region("NY"),
            Metric::Employers,
        );
        assert_eq!(ledger.date_cost(month(), Metric::Employers), Cost::new(2.4, 2e-10));
    }

    #[test]
    fn entries_reject_nonpositive_epsilon() {
        let s = SliceKey::country(month(), "US");
        assert!(BudgetEntry::new(
            s.clone(),
            Metric::Jobs,
            MechanismKind::KnownLaplace,
            Cost::new(0.0, 0.0)
        )
        .is_err());
        assert!(BudgetEntry::new(s, Metric::Jobs, MechanismKind::KnownLaplace, Cost::new(0.1, -1.0)).is_err());
    }

    #[test]
    fn jsonl_roundtrip_and_totals() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        let mut ledger = BudgetLedger::new();
        for slice in four_slices() {
            report(&mut ledger, slice, Metric::Employers);
        }
        let skills = BudgetEntry::new(
            SliceKey::country(month(), "US"),
            Metric::Skills,
            MechanismKind::GumbelThreshold,
            Cost::new(0.1, 1e-10),
        )
        .unwrap()
        .conditional();
        ledger.append(skills);
        BudgetLedger::append_jsonl(&path, &ledger.entries()[..3]).unwrap();
        BudgetLedger::append_jsonl(&path, &ledger.entries()[3..]).unwrap();
        let loaded = BudgetLedger::load_jsonl(&path).unwrap();
        assert_eq!(loaded, ledger);
        let totals = loaded.date_totals();
        assert_eq!(totals.len(), 2);
        assert_eq!((totals[0].epsilon, totals[0].delta, totals[0].reports), (4.8, 4e-10, 4));
        assert!(totals[1].conditional && !totals[0].conditional);
    }
}
