//! The `dp-insights` command line: `ingest`, `report`, `budget`, `audit`, `selftest`.
//!
//! Exit codes: 0 success, 1 internal error or failed check, 2 input error,
//! 3 configuration error.
//!
//! # Config file
//!
//! Plain `key = value` lines; `#` starts a comment; repeatable keys may
//! appear several times. Relative paths resolve against the config file's
//! directory.
//!
//! ```text
//! seed = 42
//! hires = hires.csv
//! skills = skills.csv
//! geography = geography.csv
//! industries = industries.csv        # optional
//! out = reports
//! date = 2020-07                     # repeatable
//! slice = US                         # repeatable: COUNTRY[/REGION][:INDUSTRY]
//! slice = US/CA:software
//! metric = employers                 # repeatable; default: all three
//! strict = true
//! enforce_single_hire = false
//! tfidf_threshold = 0.2              # optional, non-private skills filter
//! created_at = 2020-08-01T00:00:00Z  # optional
//! ```

use std::collections::hash_map::RandomState;
use std::hash::{BuildHasher, Hasher};
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::accountant::BudgetLedger;
use crate::audit;
use crate::error::{Error, Result};
use crate::ingest::{self, ParseMode};
use crate::mechanisms::{MechanismKind, Release};
use crate::reports::{self, ReportConfig};
use crate::selftest::{self, SelftestOptions};
use crate::types::{Cost, Metric, Month, RankedReport, SliceKey, Taxonomy};

pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(
    name = "dp-insights",
    version,
    about = "Differentially private top-k labor-market reports"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse input files, print diagnostics, optionally dump a raw histogram.
    Ingest(IngestArgs),
    /// Build privatized reports and append their cost to the ledger.
    Report(ReportArgs),
    /// Print per-date, per-metric privacy totals from a ledger.
    Budget(BudgetArgs),
    /// Monte Carlo privacy audit of one mechanism on its boundary case.
    Audit(AuditArgs),
    /// Threshold, sampler and quick audit checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args, Default, Clone)]
pub struct SliceArgs {
    #[arg(long)]
    pub date: Vec<String>,
    #[arg(long)]
    pub country: Option<String>,
    #[arg(long)]
    pub region: Option<String>,
    #[arg(long)]
    pub industry: Option<String>,
    #[arg(long)]
    pub metric: Vec<String>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub hires: Option<PathBuf>,
    #[arg(long)]
    pub skills: Option<PathBuf>,
    #[arg(long)]
    pub geography: Option<PathBuf>,
    #[arg(long)]
    pub industries: Option<PathBuf>,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub strict: bool,
    #[command(flatten)]
    pub slice: SliceArgs,
    /// Comma-separated job titles for a skills histogram.
    #[arg(long, value_delimiter = ',')]
    pub top_jobs: Vec<String>,
    /// Where to write the (non-private) histogram JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, conflicts_with = "manifest")]
    pub config: Option<PathBuf>,
    /// Re-run a manifest written by an earlier run.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub hires: Option<PathBuf>,
    #[arg(long)]
    pub skills: Option<PathBuf>,
    #[arg(long)]
    pub geography: Option<PathBuf>,
    #[arg(long)]
    pub industries: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub slice: SliceArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, action = ArgAction::Set)]
    pub strict: Option<bool>,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    /// Ledger file, or a report directory containing ledger.jsonl.
    #[arg(long)]
    pub ledger: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub date: Option<String>,
    #[arg(long)]
    pub metric: Option<String>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// rte | rt | known-laplace | known-gumbel
    #[arg(long, default_value = "rte")]
    pub mechanism: String,
    #[arg(long, default_value_t = 200_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub declared_epsilon: Option<f64>,
    #[arg(long)]
    pub declared_delta: Option<f64>,
    /// Scale every noise draw (fault injection); 1 is the real mechanism.
    #[arg(long, default_value_t = 1.0, hide = true)]
    pub noise_multiplier: f64,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// `halve-noise` runs the checks against a deliberately broken build.
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

/// Everything needed to reproduce one `report` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub root_seed: u64,
    /// `"flag"`, `"config"` or `"entropy"`.
    pub seed_source: String,
    pub input_paths: Vec<PathBuf>,
    pub geography: Option<PathBuf>,
    pub industries: Option<PathBuf>,
    pub configs: Vec<ReportConfig>,
    pub output_dir: PathBuf,
    pub created_at: String,
    pub strict: bool,
    pub enforce_single_hire: bool,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Input(_) | Error::MalformedRow { .. } | Error::Io(_) | Error::Csv(_) | Error::Json(_) => 2,
        Error::Config(_) | Error::InvalidMonth(_) | Error::InvalidSlice(_) | Error::InvalidParams(_) => 3,
        _ => 1,
    }
}

/// Runs `cli`, printing errors to stderr, and returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let mut stdout = std::io::stdout();
    match run(cli, &mut stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> Result<i32> {
    match cli.command {
        Command::Ingest(args) => cmd_ingest(args, out),
        Command::Report(args) => cmd_report(args, out),
        Command::Budget(args) => cmd_budget(args, out),
        Command::Audit(args) => cmd_audit(args, out),
        Command::Selftest(args) => cmd_selftest(args, out),
    }
}

fn parse_mode(strict: bool) -> ParseMode {
    if strict {
        ParseMode::Strict
    } else {
        ParseMode::Lenient
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

/// `COUNTRY[/REGION][:INDUSTRY]`
pub fn parse_slice_spec(spec: &str, date: Month) -> Result<SliceKey> {
    let (geo, industry) = match spec.split_once(':') {
        Some((g, i)) => (g, Some(i)),
        None => (spec, None),
    };
    let (country, region) = match geo.split_once('/') {
        Some((c, r)) => (c, Some(r)),
        None => (geo, None),
    };
    if country.trim().is_empty()
        || region.is_some_and(|r| r.trim().is_empty())
        || industry.is_some_and(|i| i.trim().is_empty())
    {
        return Err(Error::Config(format!("bad slice {spec:?}")));
    }
    let mut slice = SliceKey::country(date, country.trim());
    if let Some(r) = region {
        slice = slice.with_region(r.trim());
    }
    if let Some(i) = industry {
        slice = slice.with_industry(i.trim());
    }
    Ok(slice)
}

/// Parsed `key = value` run configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub hires: Option<PathBuf>,
    pub skills: Option<PathBuf>,
    pub geography: Option<PathBuf>,
    pub industries: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub dates: Vec<Month>,
    pub slices: Vec<String>,
    pub metrics: Vec<Metric>,
    pub strict: Option<bool>,
    pub enforce_single_hire: bool,
    pub tfidf_threshold: Option<f64>,
    pub created_at: Option<String>,
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let path = |v: &str| base_dir.join(v);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| Error::Config(format!("line {}: bad {what} {value:?}", i + 1));
            match key {
                "seed" => cfg.seed = Some(value.parse().map_err(|_| bad("seed"))?),
                "hires" => cfg.hires = Some(path(value)),
                "skills" => cfg.skills = Some(path(value)),
                "geography" => cfg.geography = Some(path(value)),
                "industries" => cfg.industries = Some(path(value)),
                "out" => cfg.out = Some(path(value)),
                "date" => cfg.dates.push(value.parse()?),
                "slice" => cfg.slices.push(value.to_string()),
                "metric" => cfg.metrics.push(value.parse()?),
                "strict" => cfg.strict = Some(parse_bool(key, value)?),
                "enforce_single_hire" => cfg.enforce_single_hire = parse_bool(key, value)?,
                "tfidf_threshold" => cfg.tfidf_threshold = Some(value.parse().map_err(|_| bad("threshold"))?),
                "created_at" => cfg.created_at = Some(value.to_string()),
                other => return Err(Error::Config(format!("line {}: unknown key {other:?}", i + 1))),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

fn entropy_seed() -> u64 {
    let mut h = RandomState::new().build_hasher();
    h.write_u128(
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or_default(),
    );
    h.write_u32(std::process::id());
    h.finish()
}

fn build_manifest(args: &ReportArgs) -> Result<RunManifest> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if args.hires.is_some() {
        cfg.hires = args.hires.clone();
    }
    if args.skills.is_some() {
        cfg.skills = args.skills.clone();
    }
    if args.geography.is_some() {
        cfg.geography = args.geography.clone();
    }
    if args.industries.is_some() {
        cfg.industries = args.industries.clone();
    }
    if args.out.is_some() {
        cfg.out = args.out.clone();
    }
    if args.strict.is_some() {
        cfg.strict = args.strict;
    }
    if !args.slice.date.is_empty() {
        cfg.dates = args.slice.date.iter().map(|d| d.parse()).collect::<Result<_>>()?;
    }
    if let Some(country) = &args.slice.country {
        let mut spec = country.clone();
        if let Some(r) = &args.slice.region {
            spec = format!("{spec}/{r}");
        }
        if let Some(i) = &args.slice.industry {
            spec = format!("{spec}:{i}");
        }
        cfg.slices = vec![spec];
    } else if args.slice.region.is_some() || args.slice.industry.is_some() {
        return Err(Error::Config("--region/--industry need --country".into()));
    }
    if !args.slice.metric.is_empty() {
        cfg.metrics = args.slice.metric.iter().map(|m| m.parse()).collect::<Result<_>>()?;
    }

    let (root_seed, seed_source) = match (args.seed, cfg.seed) {
        (Some(s), _) => (s, "flag"),
        (None, Some(s)) => (s, "config"),
        (None, None) => (entropy_seed(), "entropy"),
    };
    let hires = cfg
        .hires
        .clone()
        .ok_or_else(|| Error::Config("no hires file given".into()))?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| Error::Config("no output directory given".into()))?;
    if cfg.dates.is_empty() || cfg.slices.is_empty() {
        return Err(Error::Config("need at least one date and one slice".into()));
    }
    let metrics = if cfg.metrics.is_empty() {
        Metric::ALL.to_vec()
    } else {
        cfg.metrics.clone()
    };
    if metrics.contains(&Metric::Skills) && cfg.skills.is_none() {
        return Err(Error::Config("skills reports need a skills file".into()));
    }
    let mut configs = Vec::new();
    for date in &cfg.dates {
        for spec in &cfg.slices {
            let slice = parse_slice_spec(spec, *date)?;
            for metric in &metrics {
                let mut rc = ReportConfig::defaults(*metric, slice.clone());
                if *metric == Metric::Skills {
                    rc.tfidf_threshold = cfg.tfidf_threshold;
                }
                configs.push(rc);
            }
        }
    }
    let mut input_paths = vec![hires];
    input_paths.extend(cfg.skills.clone());
    Ok(RunManifest {
        root_seed,
        seed_source: seed_source.to_string(),
        input_paths,
        geography: cfg.geography.clone(),
        industries: cfg.industries.clone(),
        configs,
        output_dir: out,
        created_at: cfg
            .created_at
            .clone()
            .unwrap_or_else(|| chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string()),
        strict: cfg.strict.unwrap_or(true),
        enforce_single_hire: cfg.enforce_single_hire,
    })
}

fn observed_taxonomy(hires: &[ingest::HireEvent]) -> Taxonomy {
    let mut tax = Taxonomy::new();
    for h in hires {
        tax.add_region(&h.country, &h.region);
    }
    tax
}

/// Runs every report in `manifest`, writes report files, the manifest and
/// ledger entries into its output directory, and returns the reports.
pub fn execute_manifest(manifest: &RunManifest) -> Result<Vec<RankedReport>> {
    let mode = parse_mode(manifest.strict);
    let hires_path = manifest
        .input_paths
        .first()
        .ok_or_else(|| Error::Config("manifest lists no inputs".into()))?;
    let mut hires = ingest::read_hires(hires_path, mode)?.rows;
    if manifest.enforce_single_hire {
        hires = ingest::first_hire_only(&hires);
    }
    let skills = match manifest.input_paths.get(1) {
        Some(p) => ingest::read_skills(p, mode)?.rows,
        None => Vec::new(),
    };
    let taxonomy = match &manifest.geography {
        Some(g) => ingest::read_taxonomy(g, manifest.industries.as_deref())?,
        None => observed_taxonomy(&hires),
    };
    for cfg in &manifest.configs {
        cfg.slice.validate(&taxonomy)?;
        cfg.params_topk.validate()?;
    }
    let mut ledger = BudgetLedger::new();
    let reports = reports::run_configs(&hires, &skills, &manifest.configs, manifest.root_seed, &mut ledger)?;
    let dir = &manifest.output_dir;
    std::fs::create_dir_all(dir)?;
    for report in &reports {
        reports::write_report(dir, report)?;
    }
    let mut json = serde_json::to_string_pretty(manifest)?;
    json.push('\n');
    std::fs::write(dir.join(MANIFEST_FILE), json)?;
    BudgetLedger::append_jsonl(&dir.join(LEDGER_FILE), ledger.entries())?;
    Ok(reports)
}

fn cmd_report(args: ReportArgs, out: &mut dyn std::io::Write) -> Result<i32> {
    let manifest = match &args.manifest {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let mut m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            if let Some(dir) = &args.out {
                m.output_dir = dir.clone();
            }
            m
        }
        None => build_manifest(&args)?,
    };
    let reports = execute_manifest(&manifest)?;
    writeln!(out, "seed {} ({})", manifest.root_seed, manifest.seed_source)?;
    writeln!(
        out,
        "{:<40} {:>5} {:<17} {:>6} {:>8}",
        "report", "rows", "status", "eps", "delta"
    )?;
    for r in &reports {
        writeln!(
            out,
            "{:<40} {:>5} {:<17} {:>6} {:>8.0e}",
            r.file_stem(),
            r.rows.len(),
            format!("{:?}", r.status),
            r.epsilon,
            r.delta
        )?;
    }
    Ok(0)
}

fn cmd_ingest(args: IngestArgs, out: &mut dyn std::io::Write) -> Result<i32> {
    let mode = parse_mode(args.strict);
    let mut summary = serde_json::Map::new();
    let hires = match &args.hires {
        Some(path) => {
            let parsed = ingest::read_hires(path, mode)?;
            summary.insert("hires_rows".into(), parsed.rows.len().into());
            summary.insert("hires_skipped".into(), serde_json::to_value(&parsed.skipped)?);
            parsed.rows
        }
        None => Vec::new(),
    };
    let skills = match &args.skills {
        Some(path) => {
            let parsed = ingest::read_skills(path, mode)?;
            summary.insert("skills_rows".into(), parsed.rows.len().into());
            summary.insert("skills_skipped".into(), serde_json::to_value(&parsed.skipped)?);
            parsed.rows
        }
        None => Vec::new(),
    };
    if let Some(g) = &args.geography {
        let tax = ingest::read_taxonomy(g, args.industries.as_deref())?;
        let unknown = hires
            .iter()
            .filter(|h| !tax.region_in_country(&h.country, &h.region) || !tax.has_industry(&h.industry))
            .count();
        summary.insert("hires_outside_taxonomy".into(), unknown.into());
    }
    if let Some(date) = args.slice.date.first() {
        let date: Month = date.parse()?;
        let windowed = ingest::window(&hires, date, 3)?;
        summary.insert(
            "single_hire_diagnostic".into(),
            serde_json::to_value(ingest::single_hire_diagnostic(&windowed))?,
        );
        if let (Some(country), Some(metric)) = (&args.slice.country, args.slice.metric.first()) {
            let mut slice = SliceKey::country(date, country);
            if let Some(r) = &args.slice.region {
                slice = slice.with_region(r);
            }
            if let Some(i) = &args.slice.industry {
                slice = slice.with_industry(i);
            }
            let histogram = match metric.parse::<Metric>()? {
                Metric::Employers => ingest::employer_histogram(&windowed, &slice),
                Metric::Jobs => ingest::job_histogram(&windowed, &slice),
                Metric::Skills => ingest::skill_histogram(&skills, &slice, &args.top_jobs, 5)?,
            };
            summary.insert("histogram_elements".into(), histogram.len().into());
            if let Some(path) = &args.out {
                std::fs::write(path, serde_json::to_string_pretty(&histogram)?)?;
            }
        }
    }
    writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
    Ok(0)
}

fn cmd_budget(args: BudgetArgs, out: &mut dyn std::io::Write) -> Result<i32> {
    let path = match (&args.ledger, &args.out) {
        (Some(p), _) if p.is_dir() => p.join(LEDGER_FILE),
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => dir.join(LEDGER_FILE),
        (None, None) => return Err(Error::Config("give --ledger or --out".into())),
    };
    if !path.exists() {
        return Err(Error::Input(format!("{}: no such ledger", path.display())));
    }
    let ledger = BudgetLedger::load_jsonl(&path)?;
    let date: Option<Month> = args.date.as_deref().map(str::parse).transpose()?;
    let metric: Option<Metric> = args.metric.as_deref().map(str::parse).transpose()?;
    let totals: Vec<_> = ledger
        .date_totals()
        .into_iter()
        .filter(|t| date.is_none_or(|d| d == t.report_date) && metric.is_none_or(|m| m == t.metric))
        .collect();
    writeln!(out, "{}", serde_json::to_string_pretty(&totals)?)?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct AuditReport {
    mechanism: MechanismKind,
    noise_multiplier: f64,
    verdicts: Vec<audit::AuditVerdict>,
    fabrication: Option<audit::FabricationVerdict>,
    passes: bool,
}

fn cmd_audit(args: AuditArgs, out: &mut dyn std::io::Write) -> Result<i32> {
    let kind: MechanismKind = args.mechanism.parse()?;
    let (mechanism, pair, events) = audit::boundary_case(kind)?;
    let mechanism = mechanism.with_noise_multiplier(args.noise_multiplier);
    let nominal = mechanism.cost();
    let declared = Cost::new(
        args.declared_epsilon.unwrap_or(nominal.epsilon),
        args.declared_delta.unwrap_or(nominal.delta),
    );
    let verdicts = events
        .iter()
        .map(|e| audit::estimate_privacy_loss(&mechanism, &pair, e, args.trials, declared, args.seed))
        .collect::<Result<Vec<_>>>()?;
    let fabrication = match kind {
        MechanismKind::LaplaceThreshold | MechanismKind::GumbelThreshold => Some(audit::check_never_fabricates(
            &mechanism,
            &pair.base,
            args.trials,
            args.seed,
        )?),
        _ => None,
    };
    let passes =
        verdicts.iter().all(|v| v.outcome != audit::Outcome::Fail) && fabrication.as_ref().is_none_or(|f| f.passes);
    let report = AuditReport {
        mechanism: kind,
        noise_multiplier: args.noise_multiplier,
        verdicts,
        fabrication,
        passes,
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(if passes { 0 } else { 1 })
}

fn cmd_selftest(args: SelftestArgs, out: &mut dyn std::io::Write) -> Result<i32> {
    let mut opts = SelftestOptions::default();
    if let Some(seed) = args.seed {
        opts.seed = seed;
    }
    match args.inject_fault.as_deref() {
        None => {}
        Some("halve-noise") => opts.noise_multiplier = 0.5,
        Some(other) => return Err(Error::Config(format!("unknown fault {other:?}"))),
    }
    let results = selftest::run_selftest(&opts)?;
    let mut ok = true;
    for r in &results {
        writeln!(
            out,
            "{} {:<24} {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.id,
            r.detail
        )?;
        ok &= r.passed;
    }
    Ok(if ok { 0 } else { 1 })
}
