//! Sequential change detection for Gaussian and Exponential streams with
//! unknown pre- and post-change parameters.
//!
//! The detectors maximise a generalised likelihood ratio over every split of
//! the data seen so far, rescaled by its exact finite-sample null mean, and
//! compare it against thresholds calibrated for a target in-control run
//! length. A Bayesian filter for Exponential data and a simulation harness
//! for comparing the two are included.

pub mod bayes;
pub mod error;
pub mod exponential;
pub mod gaussian;
pub mod harness;
pub mod kind;
pub mod monitor;
pub mod sim;
pub mod special;
pub mod stream;
pub mod thresholds;
pub mod tracker;

pub use bayes::{detect as bayes_detect, BayesFilterState, GammaRatePrior, SegmentLengthPrior};
pub use error::{Error, Result};
pub use harness::{BenchmarkTable, CampaignResult, Estimate, ResultGrid, Scenario};
pub use kind::{Family, StatisticKind};
pub use monitor::{run, Decision, DetectionReport, Detector, DetectorConfig, Monitor, ThresholdSource};
pub use sim::Law;
pub use stream::{CandidateSet, RunningSummary};
pub use thresholds::{calibrate, regression_h, shipped_table, CalibrationPlan, ThresholdTable};
pub use tracker::StatisticTracker;
