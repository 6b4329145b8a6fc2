//! Threshold sequences `h_t` that hold the conditional false-alarm
//! probability at a constant `γ = 1/ARL0`.
//!
//! Three sources are provided: tables shipped with the crate, the closed-form
//! regression approximation for the corrected Gaussian statistic, and a Monte
//! Carlo calibrator that regenerates a table for any statistic.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kind::StatisticKind;
use crate::sim::{substream, Law};
use crate::tracker::StatisticTracker;

/// Monitoring starts after twenty observations.
pub const DEFAULT_START_T: usize = 21;

/// ARL0 columns available as shipped tables.
pub const SHIPPED_ARL0: [u32; 7] = [100, 200, 370, 500, 1000, 2000, 5000];

/// Per-time thresholds for one statistic and ARL0.
///
/// Lookups between tabulated times carry the previous entry forward, and the
/// last entry extends as a constant tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    kind: StatisticKind,
    arl0: f64,
    start_t: usize,
    entries: Vec<(usize, f64)>,
}

impl ThresholdTable {
    pub fn new(kind: StatisticKind, arl0: f64, start_t: usize, entries: Vec<(usize, f64)>) -> Result<Self> {
        // ARL0 = 1 only arises from the degenerate hazard-one calibration.
        if !(arl0.is_finite() && arl0 >= 1.0) {
            return Err(Error::Config(format!("arl0 must be at least 1, got {arl0}")));
        }
        let Some(&(first_t, _)) = entries.first() else {
            return Err(Error::Config("threshold table has no entries".into()));
        };
        if first_t != start_t {
            return Err(Error::Config(format!(
                "first tabulated t={first_t} differs from start_t={start_t}"
            )));
        }
        if entries.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Config("tabulated t values must be strictly increasing".into()));
        }
        if let Some(&(t, h)) = entries.iter().find(|e| e.1.is_nan() || e.1 <= 0.0) {
            return Err(Error::Config(format!("threshold at t={t} must be positive, got {h}")));
        }
        Ok(ThresholdTable {
            kind,
            arl0,
            start_t,
            entries,
        })
    }

    pub fn kind(&self) -> StatisticKind {
        self.kind
    }

    pub fn arl0(&self) -> f64 {
        self.arl0
    }

    pub fn start_t(&self) -> usize {
        self.start_t
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    /// Threshold in force at time `t`.
    pub fn lookup(&self, t: usize) -> Result<f64> {
        if t < self.start_t {
            return Err(Error::domain(
                "lookup",
                format!("monitoring begins at t={}, asked for t={t}", self.start_t),
            ));
        }
        let idx = self.entries.partition_point(|e| e.0 <= t);
        Ok(self.entries[idx - 1].1)
    }

    /// Serialises to the `t,h` CSV format with `# key=value` header comments.
    pub fn to_csv(&self, extra_comments: &[String]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# statistic={}", self.kind);
        let _ = writeln!(out, "# arl0={}", self.arl0);
        let _ = writeln!(out, "# start_t={}", self.start_t);
        for c in extra_comments {
            let _ = writeln!(out, "# {c}");
        }
        out.push_str("t,h\n");
        for &(t, h) in &self.entries {
            let _ = writeln!(out, "{t},{h}");
        }
        out
    }

    /// Parses the CSV format written by [`ThresholdTable::to_csv`].
    ///
    /// Unknown comment keys are ignored; `statistic` and `arl0` are required
    /// and `start_t` defaults to the first tabulated time.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut arl0 = None;
        let mut start_t = None;
        let mut saw_header = false;
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            let parse_err = |message: String| Error::TableParse { line: line_no, message };
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let Some((key, value)) = comment.trim().split_once('=') else {
                    continue;
                };
                let value = value.trim();
                match key.trim() {
                    "statistic" => kind = Some(value.parse().map_err(|e: Error| parse_err(e.to_string()))?),
                    "arl0" => arl0 = Some(value.parse::<f64>().map_err(|e| parse_err(format!("bad arl0: {e}")))?),
                    "start_t" => {
                        start_t = Some(
                            value
                                .parse::<usize>()
                                .map_err(|e| parse_err(format!("bad start_t: {e}")))?,
                        )
                    }
                    _ => {}
                }
                continue;
            }
            if !saw_header {
                if line.replace(' ', "") != "t,h" {
                    return Err(parse_err(format!("expected header `t,h`, found `{line}`")));
                }
                saw_header = true;
                continue;
            }
            let (t, h) = line
                .split_once(',')
                .ok_or_else(|| parse_err(format!("expected `t,h` row, found `{line}`")))?;
            let t = t
                .trim()
                .parse::<usize>()
                .map_err(|e| parse_err(format!("bad t: {e}")))?;
            let h = h.trim().parse::<f64>().map_err(|e| parse_err(format!("bad h: {e}")))?;
            entries.push((t, h));
        }
        let kind = kind.ok_or_else(|| Error::TableParse {
            line: 0,
            message: "missing `# statistic=` comment".into(),
        })?;
        let arl0 = arl0.ok_or_else(|| Error::TableParse {
            line: 0,
            message: "missing `# arl0=` comment".into(),
        })?;
        let start_t = start_t
            .or_else(|| entries.first().map(|e| e.0))
            .unwrap_or(DEFAULT_START_T);
        ThresholdTable::new(kind, arl0, start_t, entries)
    }
}

macro_rules! shipped {
    ($kind:literal, $arl:literal) => {
        include_str!(concat!("../data/thresholds/", $kind, "-arl", $arl, ".csv"))
    };
}

fn shipped_text(kind: StatisticKind, arl0: u32) -> Option<&'static str> {
    use StatisticKind::*;
    Some(match (kind, arl0) {
        (CorrectedGaussian, 100) => shipped!("corrected-gaussian", "100"),
        (CorrectedGaussian, 200) => shipped!("corrected-gaussian", "200"),
        (CorrectedGaussian, 370) => shipped!("corrected-gaussian", "370"),
        (CorrectedGaussian, 500) => shipped!("corrected-gaussian", "500"),
        (CorrectedGaussian, 1000) => shipped!("corrected-gaussian", "1000"),
        (CorrectedGaussian, 2000) => shipped!("corrected-gaussian", "2000"),
        (CorrectedGaussian, 5000) => shipped!("corrected-gaussian", "5000"),
        (CorrectedExponential, 100) => shipped!("corrected-exponential", "100"),
        (CorrectedExponential, 200) => shipped!("corrected-exponential", "200"),
        (CorrectedExponential, 370) => shipped!("corrected-exponential", "370"),
        (CorrectedExponential, 500) => shipped!("corrected-exponential", "500"),
        (CorrectedExponential, 1000) => shipped!("corrected-exponential", "1000"),
        (CorrectedExponential, 2000) => shipped!("corrected-exponential", "2000"),
        (CorrectedExponential, 5000) => shipped!("corrected-exponential", "5000"),
        (HzGaussian, 500) => shipped!("hz-gaussian", "500"),
        (RawExponential, 500) => shipped!("raw-exponential", "500"),
        _ => return None,
    })
}

/// A threshold table packaged with the crate, if one exists for the pair.
///
/// Corrected-statistic tables cover every ARL0 in [`SHIPPED_ARL0`]; the
/// uncorrected statistics ship with the columns used by the benchmarks.
pub fn shipped_table(kind: StatisticKind, arl0: u32) -> Option<ThresholdTable> {
    shipped_text(kind, arl0).map(|text| ThresholdTable::from_csv(text).expect("shipped tables are well formed"))
}

/// Closed-form approximation of the corrected Gaussian thresholds:
/// `1.51 - 2.39·ln γ + (3.65 + 0.76·ln γ) / sqrt(t - 7)`.
pub fn regression_h(gamma: f64, t: usize) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::domain(
            "regression_h",
            format!("gamma must lie in (0,1), got {gamma}"),
        ));
    }
    if t <= 7 {
        return Err(Error::domain("regression_h", format!("requires t >= 8, got {t}")));
    }
    let lg = gamma.ln();
    Ok(1.51 - 2.39 * lg + (3.65 + 0.76 * lg) / ((t - 7) as f64).sqrt())
}

/// Settings for Monte Carlo threshold calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPlan {
    pub replications: usize,
    pub t_max: usize,
    /// Per-step conditional false-alarm probability, `1/ARL0`.
    pub gamma: f64,
    pub seed: u64,
    /// Weight `w` of `h̃_t = (1-w)·h̃_{t-1} + w·h_t`.
    pub smoothing_weight: f64,
    pub start_t: usize,
}

impl CalibrationPlan {
    pub const DEFAULT_REPLICATIONS: usize = 200_000;
    pub const DEFAULT_SMOOTHING: f64 = 0.3;

    pub fn new(arl0: f64, t_max: usize, seed: u64) -> Self {
        CalibrationPlan {
            replications: Self::DEFAULT_REPLICATIONS,
            t_max,
            gamma: 1.0 / arl0,
            seed,
            smoothing_weight: Self::DEFAULT_SMOOTHING,
            start_t: DEFAULT_START_T,
        }
    }

    fn validate(&self, kind: StatisticKind) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0,1], got {}", self.gamma)));
        }
        if !(self.smoothing_weight > 0.0 && self.smoothing_weight <= 1.0) {
            return Err(Error::Config(format!(
                "smoothing weight must lie in (0,1], got {}",
                self.smoothing_weight
            )));
        }
        let min_start = 2 * kind.family().min_segment();
        if self.start_t < min_start {
            return Err(Error::Config(format!(
                "start_t must be at least {min_start} for {kind}"
            )));
        }
        if self.t_max < self.start_t {
            return Err(Error::Config(format!(
                "t_max={} precedes start_t={}",
                self.t_max, self.start_t
            )));
        }
        Ok(())
    }
}

// Time steps simulated per pass; bounds memory at replications × BLOCK values.
const BLOCK: usize = 32;

/// Maximised statistic of null stream `index` at times `from..to`.
fn null_path(kind: StatisticKind, seed: u64, index: usize, from: usize, to: usize) -> Vec<f64> {
    let mut rng = substream(seed, index as u64);
    let sampler = Law::null_for(kind.family()).realize(&mut rng);
    let mut tracker = StatisticTracker::new(kind, None).expect("unwindowed tracker");
    let mut out = Vec::with_capacity(to - from);
    for t in 1..to {
        tracker.push_unchecked(sampler.sample(&mut rng));
        if t >= from {
            out.push(tracker.max_statistic().map_or(0.0, |v| v.0));
        }
    }
    out
}

/// Empirical `1-γ` quantile (inverse ECDF): at most a fraction `γ` of the
/// sample lies strictly above it.
fn upper_quantile(values: &mut [f64], gamma: f64) -> f64 {
    let n = values.len();
    let rank = ((1.0 - gamma) * n as f64).ceil() as usize;
    let idx = rank.clamp(1, n) - 1;
    let (_, v, _) = values.select_nth_unstable_by(idx, f64::total_cmp);
    *v
}

/// Exponential smoothing seeded with the first raw value.
pub fn smooth(raw: &[f64], weight: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len());
    let mut acc = None;
    for &h in raw {
        let next = match acc {
            None => h,
            Some(prev) => (1.0 - weight) * prev + weight * h,
        };
        out.push(next);
        acc = Some(next);
    }
    out
}

/// Raw (unsmoothed) thresholds from survivor filtering.
///
/// At each `t`, `h_t` is the empirical `1-γ` quantile of the statistic over
/// the null streams that have not yet crossed an earlier threshold; streams
/// above `h_t` are then removed.
pub fn calibrate_raw(plan: &CalibrationPlan, kind: StatisticKind) -> Result<Vec<f64>> {
    plan.validate(kind)?;
    if plan.replications < (10.0 / plan.gamma) as usize {
        log::warn!(
            "{} replications is below the recommended 10·ARL0 = {:.0}",
            plan.replications,
            10.0 / plan.gamma
        );
    }
    let degenerate = plan.gamma >= 1.0;
    let required = (1.0 / plan.gamma).ceil() as usize;
    let mut survivors: Vec<usize> = (0..plan.replications).collect();
    let mut raw = Vec::with_capacity(plan.t_max - plan.start_t + 1);
    let mut from = plan.start_t;
    while from <= plan.t_max {
        let to = (from + BLOCK).min(plan.t_max + 1);
        let paths: Vec<Vec<f64>> = survivors
            .par_iter()
            .map(|&i| null_path(kind, plan.seed, i, from, to))
            .collect();
        let mut alive = vec![true; survivors.len()];
        let mut scratch = Vec::with_capacity(survivors.len());
        for t in from..to {
            let step = t - from;
            scratch.clear();
            scratch.extend(paths.iter().zip(&alive).filter(|(_, &a)| a).map(|(p, _)| p[step]));
            if scratch.len() < required {
                return Err(Error::CalibrationExhausted {
                    t,
                    survivors: scratch.len(),
                    required,
                });
            }
            let h = if degenerate {
                // Every stream must cross: sit just below the smallest value.
                let min = scratch.iter().copied().fold(f64::INFINITY, f64::min);
                min.next_down().max(f64::MIN_POSITIVE)
            } else {
                upper_quantile(&mut scratch, plan.gamma)
            };
            raw.push(h);
            for (p, a) in paths.iter().zip(alive.iter_mut()) {
                if *a && p[step] > h {
                    *a = false;
                }
            }
            if degenerate {
                return Ok(raw);
            }
        }
        survivors = survivors
            .into_iter()
            .zip(alive)
            .filter_map(|(i, a)| a.then_some(i))
            .collect();
        from = to;
    }
    Ok(raw)
}

/// Monte Carlo threshold table with exponential smoothing.
///
/// Deterministic in `plan.seed` regardless of the rayon thread count. With
/// `γ = 1` every stream signals at `start_t` and the table has one entry.
pub fn calibrate(plan: &CalibrationPlan, kind: StatisticKind) -> Result<ThresholdTable> {
    let raw = calibrate_raw(plan, kind)?;
    let smoothed = smooth(&raw, plan.smoothing_weight);
    let entries = smoothed
        .into_iter()
        .enumerate()
        .map(|(i, h)| (plan.start_t + i, h))
        .collect();
    ThresholdTable::new(kind, 1.0 / plan.gamma, plan.start_t, entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_lookup_examples() {
        let g = shipped_table(StatisticKind::CorrectedGaussian, 500).unwrap();
        assert_eq!(g.lookup(21).unwrap(), 16.8);
        assert_eq!(g.lookup(800).unwrap(), 16.3);
        assert_eq!(g.lookup(5000).unwrap(), 16.3);
        // Between tabulated rows the earlier entry stays in force.
        assert_eq!(g.lookup(45).unwrap(), g.lookup(30).unwrap());
        assert!(g.lookup(20).is_err());

        let e = shipped_table(StatisticKind::CorrectedExponential, 500).unwrap();
        assert_eq!(e.lookup(50).unwrap(), 12.3582);
        assert_eq!(e.lookup(5000).unwrap(), 12.4614);
        assert_eq!(e.start_t(), DEFAULT_START_T);
        assert_eq!(e.arl0(), 500.0);
    }

    #[test]
    fn shipped_tables_exist_and_nest() {
        for kind in [StatisticKind::CorrectedGaussian, StatisticKind::CorrectedExponential] {
            let tables: Vec<_> = SHIPPED_ARL0.iter().map(|&a| shipped_table(kind, a).unwrap()).collect();
            for pair in tables.windows(2) {
                for &(t, _) in pair[0].entries() {
                    assert!(pair[1].lookup(t).unwrap() > pair[0].lookup(t).unwrap());
                }
            }
        }
        assert!(shipped_table(StatisticKind::HzGaussian, 500).is_some());
        assert!(shipped_table(StatisticKind::RawExponential, 500).is_some());
        assert!(shipped_table(StatisticKind::HzGaussian, 123).is_none());
    }

    #[test]
    fn csv_round_trip() {
        let table = ThresholdTable::new(
            StatisticKind::HzGaussian,
            250.0,
            21,
            vec![(21, 14.25), (22, 14.125), (40, 13.0)],
        )
        .unwrap();
        let text = table.to_csv(&["manifest={\"seed\":1}".to_string()]);
        assert!(text.starts_with("# statistic=hz-gaussian\n# arl0=250\n# start_t=21\n"));
        assert_eq!(ThresholdTable::from_csv(&text).unwrap(), table);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            ThresholdTable::from_csv("t,h\n21,3\n"),
            Err(Error::TableParse { .. })
        ));
        let bad_row = "# statistic=hz-gaussian\n# arl0=500\nt,h\n21,abc\n";
        assert!(matches!(
            ThresholdTable::from_csv(bad_row),
            Err(Error::TableParse { line: 4, .. })
        ));
        let decreasing = "# statistic=hz-gaussian\n# arl0=500\nt,h\n21,3\n21,4\n";
        assert!(ThresholdTable::from_csv(decreasing).is_err());
        let negative = "# statistic=hz-gaussian\n# arl0=500\nt,h\n21,-3\n";
        assert!(ThresholdTable::from_csv(negative).is_err());
    }

    #[test]
    fn regression_examples() {
        let h = regression_h(0.002, 800).unwrap();
        assert!((h - 16.325).abs() < 0.001, "{h}");
        let tail = regression_h(0.002, 100_000_000).unwrap();
        assert!((tail - 16.363).abs() < 0.001, "{tail}");
        assert!(regression_h(0.001, 50).unwrap() > regression_h(0.01, 50).unwrap());
        assert!(regression_h(0.002, 7).is_err());
        assert!(regression_h(0.0, 50).is_err());
        assert!(regression_h(1.0, 50).is_err());
    }

    #[test]
    fn smoothing_reduces_total_variation() {
        let raw = [5.0, 7.0, 4.0, 6.5, 6.0, 9.0, 3.0];
        let s = smooth(&raw, 0.3);
        assert_eq!(s[0], 5.0);
        assert!((s[1] - 5.6).abs() < 1e-12);
        let tv = |v: &[f64]| v.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>();
        assert!(tv(&s) <= tv(&raw));
    }

    #[test]
    fn quantile_convention() {
        let mut v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(upper_quantile(&mut v, 0.01), 99.0);
        let mut v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(upper_quantile(&mut v, 0.5), 5.0);
    }

    #[test]
    fn calibration_is_deterministic() {
        let plan = CalibrationPlan {
            replications: 2_000,
            t_max: 40,
            gamma: 0.05,
            seed: 42,
            smoothing_weight: 0.3,
            start_t: 21,
        };
        for kind in StatisticKind::ALL {
            let a = calibrate(&plan, kind).unwrap();
            let b = calibrate(&plan, kind).unwrap();
            assert_eq!(a.to_csv(&[]), b.to_csv(&[]));
            assert_eq!(a.entries().len(), 20);
            assert_eq!(a.arl0(), 20.0);
        }
    }

    #[test]
    fn calibration_exhaustion() {
        let plan = CalibrationPlan {
            replications: 100,
            t_max: 60,
            gamma: 1.0 / 500.0,
            seed: 1,
            smoothing_weight: 0.3,
            start_t: 21,
        };
        assert!(matches!(
            calibrate(&plan, StatisticKind::CorrectedGaussian),
            Err(Error::CalibrationExhausted {
                t: 21,
                survivors: 100,
                required: 500
            })
        ));
    }

    #[test]
    fn hazard_one_signals_everything_at_start() {
        let plan = CalibrationPlan {
            replications: 50,
            t_max: 30,
            gamma: 1.0,
            seed: 3,
            smoothing_weight: 0.3,
            start_t: 21,
        };
        let table = calibrate(&plan, StatisticKind::CorrectedExponential).unwrap();
        assert_eq!(table.entries().len(), 1);
        let h = table.lookup(21).unwrap();
        for i in 0..plan.replications {
            let path = null_path(StatisticKind::CorrectedExponential, plan.seed, i, 21, 22);
            assert!(path[0] > h);
        }
    }

    #[test]
    fn plan_validation() {
        let mut plan = CalibrationPlan::new(100.0, 50, 1);
        plan.replications = 0;
        assert!(calibrate(&plan, StatisticKind::HzGaussian).is_err());
        let mut plan = CalibrationPlan::new(100.0, 10, 1);
        plan.replications = 1000;
        assert!(calibrate(&plan, StatisticKind::HzGaussian).is_err());
        let mut plan = CalibrationPlan::new(100.0, 50, 1);
        plan.smoothing_weight = 0.0;
        assert!(calibrate(&plan, StatisticKind::HzGaussian).is_err());
    }
}
