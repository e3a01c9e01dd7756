//! Deterministic synthetic hires and skill records for tests and demos.
//!
//! Popularity is skewed (index = ⌊u²·n⌋) so that a few employers, titles and
//! skills dominate, which is what the thresholded mechanisms need to release
//! anything.

use chrono::{Datelike, Days};
use serde::{Deserialize, Serialize};

use crate::ingest::{HireEvent, SkillRecord};
use crate::noise::{NoiseSource, RandomStream};
use crate::types::{Month, Taxonomy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub members: usize,
    pub employers: usize,
    pub titles: usize,
    pub skills: usize,
    /// Hires are spread uniformly over `months` months starting at `start`.
    pub start: Month,
    pub months: u32,
    /// `(country, regions)`; every country gets every industry.
    pub geography: Vec<(String, Vec<String>)>,
    pub industries: Vec<String>,
    pub skills_per_member: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            members: 12_000,
            employers: 60,
            titles: 30,
            skills: 80,
            start: Month::new(2020, 1).expect("valid"),
            months: 8,
            geography: vec![("US".into(), vec!["CA".into(), "NY".into()])],
            industries: vec!["software".into(), "retail".into()],
            skills_per_member: 6,
        }
    }
}

impl SyntheticSpec {
    pub fn taxonomy(&self) -> Taxonomy {
        let mut tax = Taxonomy::new();
        for (country, regions) in &self.geography {
            tax.add_country(country);
            for region in regions {
                tax.add_region(country, region);
            }
        }
        for industry in &self.industries {
            tax.add_industry(industry);
        }
        tax
    }
}

fn pick(src: &mut NoiseSource, n: usize) -> usize {
    ((src.uniform_open() * n as f64) as usize).min(n - 1)
}

fn pick_skewed(src: &mut NoiseSource, n: usize) -> usize {
    let u = src.uniform_open();
    ((u * u * n as f64) as usize).min(n - 1)
}

/// Hire events: one per member, plus a repeat hire for roughly 3% of members.
pub fn hires(spec: &SyntheticSpec) -> Vec<HireEvent> {
    let mut src = RandomStream::new(spec.seed, 0).derive("synthetic/hires").source();
    let mut out = Vec::with_capacity(spec.members + spec.members / 20);
    for m in 0..spec.members {
        let (country, regions) = &spec.geography[pick(&mut src, spec.geography.len())];
        let region = &regions[pick(&mut src, regions.len())];
        let industry = &spec.industries[pick(&mut src, spec.industries.len())];
        let repeats = if src.uniform_open() < 0.03 { 2 } else { 1 };
        for _ in 0..repeats {
            let month = spec
                .start
                .offset(pick(&mut src, spec.months as usize) as i64)
                .expect("in range");
            let day = pick(&mut src, month.last_day().day() as usize) as u64;
            let employer = pick_skewed(&mut src, spec.employers);
            out.push(HireEvent {
                member_id: format!("m{m:06}"),
                employer_id: format!("emp{employer:04}"),
                title_id: format!("title{:03}", pick_skewed(&mut src, spec.titles)),
                country: country.clone(),
                region: region.clone(),
                industry: industry.clone(),
                hire_date: month.first_day() + Days::new(day),
            });
        }
    }
    out
}

/// Skill records observed up to four years before the start month, keyed
/// to each member's title from `hires`.
pub fn skill_records(spec: &SyntheticSpec, hires: &[HireEvent]) -> Vec<SkillRecord> {
    let mut src = RandomStream::new(spec.seed, 0).derive("synthetic/skills").source();
    let earliest = spec.start.offset(-48).expect("in range");
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for h in hires {
        if !seen.insert(&h.member_id) {
            continue;
        }
        for _ in 0..spec.skills_per_member {
            let month = earliest
                .offset(pick(&mut src, 48 + spec.months as usize) as i64)
                .expect("in range");
            out.push(SkillRecord {
                member_id: h.member_id.clone(),
                country: h.country.clone(),
                region: h.region.clone(),
                title_id: h.title_id.clone(),
                skill_id: format!("skill{:03}", pick_skewed(&mut src, spec.skills)),
                observed_date: month.first_day(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec {
            members: 200,
            ..SyntheticSpec::default()
        };
        let a = hires(&spec);
        assert_eq!(a, hires(&spec));
        assert!(a.len() >= 200);
        let s = skill_records(&spec, &a);
        assert_eq!(s.len(), 200 * spec.skills_per_member);
        let tax = spec.taxonomy();
        assert!(a.iter().all(|h| tax.region_in_country(&h.country, &h.region)));
    }
}
