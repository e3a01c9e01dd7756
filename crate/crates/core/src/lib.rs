//! Differentially private top-k labor-market reports.
//!
//! The crate rebuilds three monthly insight reports (top employers, top
//! jobs, top skills) from event-level hire and skill records:
//!
//! * [`noise`]: seedable Laplace and Gumbel samplers with documented stream derivation;
//! * [`mechanisms`]: known/unknown-domain top-k release with Laplace or Gumbel noise;
//! * [`ingest`]: CSV parsing, windowing, slicing and distinct-count histograms;
//! * [`reports`]: end-to-end report pipelines and file output;
//! * [`accountant`]: sequential-composition budget ledger;
//! * [`audit`]: Monte Carlo privacy-loss estimation and sampler checks;
//! * [`cli`]: the `dp-insights` command line.
//!
//! Runnable examples live in `examples/`, one per capability.

pub mod accountant;
pub mod audit;
pub mod cli;
pub mod error;
pub mod ingest;
pub mod mechanisms;
pub mod noise;
pub mod reports;
pub mod selftest;
pub mod synthetic;
pub mod types;

pub use accountant::{compose_sequential, BudgetEntry, BudgetLedger};
pub use error::{Error, Result};
pub use mechanisms::{Mechanism, MechanismKind, Release, ThresholdSpec, TopKResult};
pub use noise::RandomStream;
pub use reports::ReportConfig;
pub use types::{
    validate_histogram, Cost, DomainKind, Histogram, Metric, Month, PrivacyParams, RankedReport, ReportStatus, SliceKey,
};
