//! Scenario execution and benchmark scoring.

mod config;
mod report;
mod scenario;
mod scoring;
mod sim;
mod soak;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{deep_merge, SimConfig, CONFIG_KEYS};
pub use report::{
    FaultEvent, FaultLogEntry, LatencyBreakdown, LatencyStats, LinkStats, OutcomeSummary,
    ScenarioReport, TriggerRecord, REPORT_SCHEMA_VERSION,
};
pub use scenario::{
    ClassifierSpec, HostFault, Injection, Scenario, ScheduledFault, ScheduledObject,
    SCENARIO_SCHEMA_VERSION,
};
pub use scoring::{
    load_adl_csv, load_ycb_csv, parse_adl_csv, parse_ycb_csv, score_adl, score_ycb, AdlRecord,
    AdlScore, YcbScore, YcbTrial,
};
pub use sim::{run_scenario, LastClassification, Simulation};
pub use soak::{endurance_soak, run_soak, SoakConfig, SoakVerdict};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scenario invalid: {0}")]
    ScenarioInvalid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing column: {0}")]
    MissingColumn(String),
    #[error("malformed number at data row {row}, column {column}: {reason}")]
    MalformedNumber {
        row: usize,
        column: String,
        reason: String,
    },
    #[error("no record carries a score")]
    NoScores,
    #[error("no trials to score")]
    EmptyTrials,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
