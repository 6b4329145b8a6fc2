//! Sequential detection: statistic update, threshold comparison, change-point
//! estimation and the multi-change restart protocol.
//!
//! After a signal at `T` with estimate `τ̂`, a multi-change monitor discards
//! its state, replays the already received `x_{τ̂+1..T}` into a fresh detector
//! (burn-in included) and continues with the live stream. A change within
//! `burn_in` observations of a restart point therefore cannot be flagged.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kind::{Family, StatisticKind};
use crate::thresholds::{regression_h, ThresholdTable};
use crate::tracker::StatisticTracker;

pub const DEFAULT_BURN_IN: usize = 20;
pub const MIN_WINDOW: usize = 8;

/// Where the per-time thresholds come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdSource {
    Table(ThresholdTable),
    /// The closed-form approximation for the corrected Gaussian statistic.
    Regression {
        gamma: f64,
    },
    /// A constant threshold. Carries no ARL0 guarantee.
    Fixed(f64),
}

impl ThresholdSource {
    /// The in-control run length the thresholds were built for, if any.
    pub fn nominal_arl0(&self) -> Option<f64> {
        match self {
            ThresholdSource::Table(t) => Some(t.arl0()),
            ThresholdSource::Regression { gamma } => Some(1.0 / gamma),
            ThresholdSource::Fixed(_) => None,
        }
    }

    fn at(&self, t: usize) -> Result<f64> {
        match self {
            ThresholdSource::Table(table) => table.lookup(t),
            ThresholdSource::Regression { gamma } => regression_h(*gamma, t),
            ThresholdSource::Fixed(h) => Ok(*h),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub statistic: StatisticKind,
    pub threshold: ThresholdSource,
    /// Retain only the `W` most recent split points.
    pub window: Option<usize>,
    /// Observations absorbed before the first decision.
    pub burn_in: usize,
    pub multi_change: bool,
}

impl DetectorConfig {
    pub fn new(statistic: StatisticKind, threshold: ThresholdSource) -> Self {
        DetectorConfig {
            statistic,
            threshold,
            window: None,
            burn_in: DEFAULT_BURN_IN,
            multi_change: false,
        }
    }

    pub fn family(&self) -> Family {
        self.statistic.family()
    }

    pub fn validate(&self) -> Result<()> {
        let min_burn = 2 * self.family().min_segment();
        if self.burn_in < min_burn {
            return Err(Error::Config(format!(
                "burn_in must be at least {min_burn} for the {} family",
                self.family()
            )));
        }
        if let Some(w) = self.window {
            if w < MIN_WINDOW {
                return Err(Error::Config(format!("window must be at least {MIN_WINDOW}, got {w}")));
            }
        }
        match &self.threshold {
            ThresholdSource::Table(table) => {
                if table.kind() != self.statistic {
                    return Err(Error::Config(format!(
                        "threshold table is for {}, detector uses {}",
                        table.kind(),
                        self.statistic
                    )));
                }
                if table.start_t() > self.burn_in + 1 {
                    return Err(Error::Config(format!(
                        "table starts at t={} but decisions begin at t={}",
                        table.start_t(),
                        self.burn_in + 1
                    )));
                }
            }
            ThresholdSource::Regression { gamma } => {
                if self.statistic != StatisticKind::CorrectedGaussian {
                    return Err(Error::Config(
                        "the regression approximation only applies to the corrected Gaussian statistic".into(),
                    ));
                }
                if !(*gamma > 0.0 && *gamma < 1.0) {
                    return Err(Error::Config(format!("gamma must lie in (0,1), got {gamma}")));
                }
                if self.burn_in < 7 {
                    return Err(Error::Config("regression thresholds need burn_in >= 7".into()));
                }
            }
            ThresholdSource::Fixed(h) => {
                if h.is_nan() || *h < 0.0 {
                    return Err(Error::Config(format!("fixed threshold must be non-negative, got {h}")));
                }
            }
        }
        Ok(())
    }
}

/// A threshold crossing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// Index of the observation at which the threshold was first crossed.
    pub detection_time: usize,
    /// Estimated change point: the last pre-change observation.
    pub tau_hat: usize,
    #[serde(rename = "statistic")]
    pub statistic_value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    Continue,
    Signal(DetectionReport),
}

/// Single-change sequential detector.
#[derive(Debug, Clone)]
pub struct Detector {
    config: DetectorConfig,
    tracker: StatisticTracker,
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        let tracker = StatisticTracker::new(config.statistic, config.window)?;
        Ok(Detector { config, tracker })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// Observations processed.
    pub fn len(&self) -> usize {
        self.tracker.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracker.is_empty()
    }

    /// Processes one observation. Invalid input leaves the state untouched.
    pub fn step(&mut self, x: f64) -> Result<Decision> {
        self.tracker.push(x)?;
        let t = self.tracker.len();
        if t <= self.config.burn_in {
            return Ok(Decision::Continue);
        }
        let (value, k) = self
            .tracker
            .max_statistic()
            .expect("burn-in guarantees an admissible split");
        let threshold = self.config.threshold.at(t)?;
        if value > threshold {
            Ok(Decision::Signal(DetectionReport {
                detection_time: t,
                tau_hat: k,
                statistic_value: value,
                threshold,
            }))
        } else {
            Ok(Decision::Continue)
        }
    }
}

/// Streaming driver implementing single- or multi-change monitoring.
///
/// Report indices refer to positions in the whole stream (1-based).
#[derive(Debug, Clone)]
pub struct Monitor {
    config: DetectorConfig,
    detector: Detector,
    // Stream position of the last observation before the current segment.
    offset: usize,
    // Tail of the current segment, enough to replay from any retained split.
    retained: VecDeque<f64>,
    dropped: usize,
    position: usize,
    finished: bool,
}

impl Monitor {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        let detector = Detector::new(config.clone())?;
        Ok(Monitor {
            config,
            detector,
            offset: 0,
            retained: VecDeque::new(),
            dropped: 0,
            position: 0,
            finished: false,
        })
    }

    /// Observations received so far.
    pub fn position(&self) -> usize {
        self.position
    }

    /// True once a single-change monitor has signalled.
    pub fn is_finished(&self) -> bool {
        self.finished
    }

    fn retain_limit(&self) -> Option<usize> {
        self.config
            .window
            .map(|w| w + 2 * self.config.family().min_segment() + 1)
    }

    /// Feeds one live observation, returning any detections it completes.
    pub fn push(&mut self, x: f64) -> Result<Vec<DetectionReport>> {
        if self.finished {
            return Ok(Vec::new());
        }
        StatisticTracker::validate(self.config.family(), x).map_err(|e| e.at(self.position + 1))?;
        self.position += 1;
        let mut reports = Vec::new();
        let mut pending = VecDeque::from([x]);
        while let Some(v) = pending.pop_front() {
            self.retained.push_back(v);
            if let Some(limit) = self.retain_limit() {
                while self.retained.len() > limit {
                    self.retained.pop_front();
                    self.dropped += 1;
                }
            }
            let decision = self.detector.step(v).map_err(|e| e.at(self.position))?;
            let Decision::Signal(local) = decision else {
                continue;
            };
            reports.push(DetectionReport {
                detection_time: self.offset + local.detection_time,
                tau_hat: self.offset + local.tau_hat,
                ..local
            });
            if !self.config.multi_change {
                self.finished = true;
                break;
            }
            let skip = local.tau_hat - self.dropped;
            let replay: Vec<f64> = self.retained.drain(..).skip(skip).collect();
            for v in replay.into_iter().rev() {
                pending.push_front(v);
            }
            self.offset += local.tau_hat;
            self.dropped = 0;
            self.detector = Detector::new(self.config.clone())?;
        }
        Ok(reports)
    }
}

/// Runs a monitor over a finite stream.
pub fn run<I>(stream: I, config: &DetectorConfig) -> Result<Vec<DetectionReport>>
where
    I: IntoIterator<Item = f64>,
{
    let mut monitor = Monitor::new(config.clone())?;
    let mut reports = Vec::new();
    for x in stream {
        reports.extend(monitor.push(x)?);
        if monitor.is_finished() {
            break;
        }
    }
    Ok(reports)
}
