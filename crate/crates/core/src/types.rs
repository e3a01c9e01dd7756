//! Shared vocabulary: slices, histograms, privacy parameters and report records.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A calendar month with no day component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    year: i32,
    month: u32,
}

impl Month {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidMonth(format!("{year}-{month}")));
        }
        Ok(Self { year, month })
    }

    pub fn of_date(date: NaiveDate) -> Self {
        Self {
            year: date.year(),
            month: date.month(),
        }
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u32 {
        self.month
    }

    /// Months since year 0, used for arithmetic.
    fn ordinal(&self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_ordinal(ordinal: i64) -> Result<Self> {
        let year = ordinal.div_euclid(12);
        let year = i32::try_from(year).map_err(|_| Error::InvalidMonth(format!("ordinal {ordinal}")))?;
        Ok(Self {
            year,
            month: ordinal.rem_euclid(12) as u32 + 1,
        })
    }

    /// Shifts by `delta` months (negative moves backwards).
    pub fn offset(&self, delta: i64) -> Result<Self> {
        let ordinal = self
            .ordinal()
            .checked_add(delta)
            .ok_or_else(|| Error::InvalidMonth(format!("{self} + {delta}")))?;
        Self::from_ordinal(ordinal)
    }

    pub fn first_day(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("month is validated")
    }

    pub fn last_day(&self) -> NaiveDate {
        let next = self.offset(1).expect("in range").first_day();
        next.pred_opt().expect("in range")
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        Month::of_date(date) == *self
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidMonth(s.to_string());
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        if m.len() != 2 || m.contains('-') {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        Month::new(year, month)
    }
}

impl Serialize for Month {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The three report families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Employers,
    Jobs,
    Skills,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Employers, Metric::Jobs, Metric::Skills];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Employers => "employers",
            Metric::Jobs => "jobs",
            Metric::Skills => "skills",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "employers" | "employer" => Ok(Metric::Employers),
            "jobs" | "job" => Ok(Metric::Jobs),
            "skills" | "skill" => Ok(Metric::Skills),
            other => Err(Error::Config(format!("unknown metric {other:?}"))),
        }
    }
}

/// Valid country/region pairs and industry codes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Taxonomy {
    regions: BTreeMap<String, BTreeSet<String>>,
    industries: BTreeSet<String>,
}

impl Taxonomy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_region(&mut self, country: &str, region: &str) {
        self.regions
            .entry(country.to_string())
            .or_default()
            .insert(region.to_string());
    }

    pub fn add_country(&mut self, country: &str) {
        self.regions.entry(country.to_string()).or_default();
    }

    pub fn add_industry(&mut self, industry: &str) {
        self.industries.insert(industry.to_string());
    }

    pub fn has_country(&self, country: &str) -> bool {
        self.regions.contains_key(country)
    }

    pub fn region_in_country(&self, country: &str, region: &str) -> bool {
        self.regions
            .get(country)
            .is_some_and(|regions| regions.contains(region))
    }

    /// An empty industry list means industries are not validated.
    pub fn has_industry(&self, industry: &str) -> bool {
        self.industries.is_empty() || self.industries.contains(industry)
    }
}

/// Identifies one report slice: month, country, optional region and industry.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SliceKey {
    pub report_date: Month,
    pub country: String,
    #[serde(default)]
    pub region: Option<String>,
    #[serde(default)]
    pub industry: Option<String>,
}

impl SliceKey {
    pub fn country(report_date: Month, country: &str) -> Self {
        Self {
            report_date,
            country: country.to_string(),
            region: None,
            industry: None,
        }
    }

    pub fn with_region(mut self, region: &str) -> Self {
        self.region = Some(region.to_string());
        self
    }

    pub fn with_industry(mut self, industry: &str) -> Self {
        self.industry = Some(industry.to_string());
        self
    }

    /// Checks region membership and industry code against `taxonomy`.
    pub fn validate(&self, taxonomy: &Taxonomy) -> Result<()> {
        if self.country.is_empty() {
            return Err(Error::InvalidSlice("empty country".into()));
        }
        if !taxonomy.has_country(&self.country) {
            return Err(Error::InvalidSlice(format!("unknown country {:?}", self.country)));
        }
        if let Some(region) = &self.region {
            if !taxonomy.region_in_country(&self.country, region) {
                return Err(Error::InvalidSlice(format!(
                    "region {region:?} does not belong to {:?}",
                    self.country
                )));
            }
        }
        if let Some(industry) = &self.industry {
            if !taxonomy.has_industry(industry) {
                return Err(Error::InvalidSlice(format!("unknown industry {industry:?}")));
            }
        }
        Ok(())
    }

    /// Whether an event located at (country, region, industry) belongs to this slice.
    pub fn covers(&self, country: &str, region: &str, industry: &str) -> bool {
        self.covers_geo(country, region) && self.industry.as_deref().is_none_or(|i| i == industry)
    }

    /// Geography-only membership; the industry component is ignored.
    pub fn covers_geo(&self, country: &str, region: &str) -> bool {
        self.country == country && self.region.as_deref().is_none_or(|r| r == region)
    }

    /// `{date}_{country}[_{region}][_{industry}]`
    pub fn file_stem(&self) -> String {
        let mut stem = format!("{}_{}", self.report_date, self.country);
        if let Some(region) = &self.region {
            stem.push('_');
            stem.push_str(region);
        }
        if let Some(industry) = &self.industry {
            stem.push('_');
            stem.push_str(industry);
        }
        stem
    }
}

impl fmt::Display for SliceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.report_date,
            self.country,
            self.region.as_deref().unwrap_or("*"),
            self.industry.as_deref().unwrap_or("*")
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DomainKind {
    Known,
    Unknown,
}

/// Distinct-member counts for one slice.
///
/// A known-domain histogram carries its declared domain and must hold every
/// element of it, including zero counts. An unknown-domain histogram stores
/// only observed elements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub slice: SliceKey,
    pub elements: BTreeMap<String, i64>,
    pub domain_kind: DomainKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_domain: Option<BTreeSet<String>>,
    pub l0_bound: Option<u32>,
    pub linf_bound: u32,
}

impl Histogram {
    pub fn unknown(slice: SliceKey, elements: BTreeMap<String, i64>, l0_bound: Option<u32>) -> Self {
        Self {
            slice,
            elements,
            domain_kind: DomainKind::Unknown,
            declared_domain: None,
            l0_bound,
            linf_bound: 1,
        }
    }

    /// Builds a known-domain histogram, materializing zero counts for domain
    /// elements missing from `counts`. Counts outside the domain are kept so
    /// that validation can report them.
    pub fn known<I, S>(slice: SliceKey, domain: I, counts: &BTreeMap<String, i64>, l0_bound: Option<u32>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let domain: BTreeSet<String> = domain.into_iter().map(Into::into).collect();
        let mut elements: BTreeMap<String, i64> = counts.clone();
        for element in &domain {
            elements.entry(element.clone()).or_insert(0);
        }
        Self {
            slice,
            elements,
            domain_kind: DomainKind::Known,
            declared_domain: Some(domain),
            l0_bound,
            linf_bound: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn count(&self, element: &str) -> Option<i64> {
        self.elements.get(element).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NegativeCount { element: String, count: i64 },
    ZeroCountInUnknownDomain { element: String },
    MissingDeclaredDomain,
    OutsideDeclaredDomain { element: String },
    MissingFromDeclaredDomain { element: String },
    LinfBound(u32),
    ZeroL0Bound,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeCount { element, count } => write!(f, "negative count {count} for {element:?}"),
            Violation::ZeroCountInUnknownDomain { element } => {
                write!(f, "zero count in unknown domain ({element:?})")
            }
            Violation::MissingDeclaredDomain => f.write_str("known domain without a declared domain"),
            Violation::OutsideDeclaredDomain { element } => write!(f, "{element:?} is outside the declared domain"),
            Violation::MissingFromDeclaredDomain { element } => {
                write!(f, "declared element {element:?} is not materialized")
            }
            Violation::LinfBound(b) => write!(f, "linf bound must be 1, found {b}"),
            Violation::ZeroL0Bound => f.write_str("l0 bound must be positive"),
        }
    }
}

/// Lists every invariant breach of `h`. Empty means valid.
pub fn validate_histogram(h: &Histogram) -> Vec<Violation> {
    let mut out = Vec::new();
    if h.linf_bound != 1 {
        out.push(Violation::LinfBound(h.linf_bound));
    }
    if h.l0_bound == Some(0) {
        out.push(Violation::ZeroL0Bound);
    }
    for (element, &count) in &h.elements {
        if count < 0 {
            out.push(Violation::NegativeCount {
                element: element.clone(),
                count,
            });
        } else if count == 0 && h.domain_kind == DomainKind::Unknown {
            out.push(Violation::ZeroCountInUnknownDomain {
                element: element.clone(),
            });
        }
    }
    if h.domain_kind == DomainKind::Known {
        match &h.declared_domain {
            None => out.push(Violation::MissingDeclaredDomain),
            Some(domain) => {
                for element in h.elements.keys().filter(|e| !domain.contains(*e)) {
                    out.push(Violation::OutsideDeclaredDomain {
                        element: element.clone(),
                    });
                }
                for element in domain.iter().filter(|e| !h.elements.contains_key(*e)) {
                    out.push(Violation::MissingFromDeclaredDomain {
                        element: element.clone(),
                    });
                }
            }
        }
    }
    out
}

/// Parameters for one mechanism invocation: (ε, δ, Δ, d̄, k).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
    pub l0_sensitivity: Option<u32>,
    pub fetch_limit: usize,
    pub k: usize,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64, l0_sensitivity: Option<u32>, fetch_limit: usize, k: usize) -> Result<Self> {
        let params = Self {
            epsilon,
            delta,
            l0_sensitivity,
            fetch_limit,
            k,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidParams(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::InvalidParams(format!(
                "delta must lie in [0, 1), got {}",
                self.delta
            )));
        }
        if self.l0_sensitivity == Some(0) {
            return Err(Error::InvalidParams("l0 sensitivity must be positive".into()));
        }
        if self.fetch_limit == 0 || self.k == 0 {
            return Err(Error::InvalidParams("fetch limit and k must be positive".into()));
        }
        if self.k > self.fetch_limit {
            return Err(Error::InvalidParams(format!(
                "k = {} exceeds fetch limit {}",
                self.k, self.fetch_limit
            )));
        }
        Ok(())
    }

    /// Top employers / top jobs: ε = 0.6, δ = 1e-10, Δ = 1, d̄ = 1000, k = 20.
    pub fn hiring_topk() -> Self {
        Self {
            epsilon: 0.6,
            delta: 1e-10,
            l0_sensitivity: Some(1),
            fetch_limit: 1000,
            k: 20,
        }
    }

    /// Companion known-domain count (previous window or total hires): ε = 0.6, δ = 0, Δ = 1.
    pub fn hiring_companion() -> Self {
        Self {
            epsilon: 0.6,
            delta: 0.0,
            l0_sensitivity: Some(1),
            fetch_limit: 1000,
            k: 20,
        }
    }

    /// Top skills: ε = 0.1, δ = 1e-10, unrestricted sensitivity, d̄ = 1000, k = 20.
    pub fn skills_topk() -> Self {
        Self {
            epsilon: 0.1,
            delta: 1e-10,
            l0_sensitivity: None,
            fetch_limit: 1000,
            k: 20,
        }
    }
}

/// An (ε, δ) pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Cost {
    pub epsilon: f64,
    pub delta: f64,
}

impl Cost {
    pub const ZERO: Cost = Cost {
        epsilon: 0.0,
        delta: 0.0,
    };

    pub fn new(epsilon: f64, delta: f64) -> Self {
        Self { epsilon, delta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportStatus {
    Ok,
    InsufficientData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub rank: u32,
    pub element: String,
    pub value: Option<f64>,
}

/// A privatized, ordered report. Serializes with the fields
/// `metric, slice, rows, status, epsilon, delta` (plus `notes` when present).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedReport {
    pub metric: Metric,
    pub slice: SliceKey,
    pub rows: Vec<ReportRow>,
    pub status: ReportStatus,
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl RankedReport {
    /// Assigns ranks 1..=n in the given order and derives the status from emptiness.
    pub fn from_ordered(
        metric: Metric,
        slice: SliceKey,
        rows: impl IntoIterator<Item = (String, Option<f64>)>,
        cost: Cost,
    ) -> Self {
        let rows: Vec<ReportRow> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (element, value))| ReportRow {
                rank: i as u32 + 1,
                element,
                value,
            })
            .collect();
        let status = if rows.is_empty() {
            ReportStatus::InsufficientData
        } else {
            ReportStatus::Ok
        };
        Self {
            metric,
            slice,
            rows,
            status,
            epsilon: cost.epsilon,
            delta: cost.delta,
            notes: Vec::new(),
        }
    }

    pub fn insufficient(metric: Metric, slice: SliceKey, cost: Cost) -> Self {
        Self::from_ordered(metric, slice, std::iter::empty(), cost)
    }

    pub fn cost(&self) -> Cost {
        Cost::new(self.epsilon, self.delta)
    }

    pub fn elements(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|r| r.element.as_str())
    }

    /// Checks rank contiguity, the status/emptiness equivalence and the row cap.
    pub fn check_shape(&self, k: usize) -> Result<()> {
        if self.rows.len() > k {
            return Err(Error::Internal(format!("{} rows exceed k = {k}", self.rows.len())));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.rank as usize != i + 1 {
                return Err(Error::Internal(format!("rank gap at position {}", i + 1)));
            }
        }
        if (self.status == ReportStatus::InsufficientData) != self.rows.is_empty() {
            return Err(Error::Internal("status disagrees with row count".into()));
        }
        if self.metric == Metric::Skills && self.rows.iter().any(|r| r.value.is_some()) {
            return Err(Error::Internal("skills rows must be rank-only".into()));
        }
        Ok(())
    }

    pub fn file_stem(&self) -> String {
        format!("{}_{}", self.slice.file_stem(), self.metric)
    }

    /// `rank,element,value` with an empty value column for rank-only rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,element,value\n");
        for row in &self.rows {
            let value = row.value.map(|v| format!("{v:.2}")).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", row.rank, csv_field(&row.element), value));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
