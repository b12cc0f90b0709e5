//! Run records and their JSON serialization.
//!
//! Reports are plot-ready data rather than rendered plots: the per-iteration
//! error trace, the training points consumed, and the best aligned model.
//! The schema is versioned and round-trips losslessly; wall times can be
//! stripped so reports compare byte-for-byte across reruns.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::LabeledPoint;

pub const SCHEMA_VERSION: u32 = 1;

/// Point-selection strategy of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "al")]
    ActiveLearning,
    #[serde(rename = "random")]
    RandomSelection,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::ActiveLearning => write!(f, "al"),
            Mode::RandomSelection => write!(f, "random"),
        }
    }
}

/// The best model of a run, rendered and aligned: predictions are
/// `a * model(x) + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestModel {
    pub infix: String,
    pub a: f64,
    pub b: f64,
    pub complexity: usize,
}

/// One loop iteration. Index 0 describes the fit on the initial data;
/// iteration `i > 0` adds one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    /// The point added this iteration; empty at index 0.
    pub point: Vec<f64>,
    /// Uncertainty at the proposal; absent at index 0 and in random mode.
    pub delta: Option<f64>,
    /// Best training loss after this iteration's evolution.
    pub train_loss: f64,
    /// Maximum test error of the best aligned model; `None` when it
    /// evaluates invalid on some test point.
    pub test_max_rel_err: Option<f64>,
    /// Wall time of the iteration; zeroed by [`RunReport::strip_timings`].
    pub seconds: f64,
}

/// Seeds that reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    /// Derived per-run seed actually driving the streams.
    pub run: u64,
}

/// Full record of one active-learning (or random-selection) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub equation_id: u32,
    pub mode: Mode,
    pub solved: bool,
    /// Training points in hand when the run ended: the benchmark metric.
    pub points_used: usize,
    pub best_model: BestModel,
    pub iterations: Vec<IterationRecord>,
    pub training_points: Vec<LabeledPoint>,
    pub seeds: Seeds,
}

impl RunReport {
    /// Zeroes every wall time so two reports of the same seeded run
    /// serialize identically.
    pub fn strip_timings(&mut self) {
        for it in &mut self.iterations {
            it.seconds = 0.0;
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Median points-to-solution over a batch of trials. When no trial solved,
/// the value is a lower bound (`> N`), mirroring how unsolved runs are
/// conventionally reported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianPoints {
    pub value: f64,
    pub is_lower_bound: bool,
}

impl std::fmt::Display for MedianPoints {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_lower_bound {
            write!(f, ">{}", self.value)
        } else {
            write!(f, "{}", self.value)
        }
    }
}

/// Aggregate over repeated trials of one equation and mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub schema: u32,
    pub equation_id: u32,
    pub mode: Mode,
    pub trials: usize,
    pub solve_rate: f64,
    pub median_points: MedianPoints,
    pub runs: Vec<RunReport>,
}

impl TrialSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Writes a report as JSON.
pub fn write_report(report: &RunReport, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, report.to_json())
}
