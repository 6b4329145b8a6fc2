//! Simulation campaigns: in-control run lengths, conditional detection
//! delays and the comparison against the Bayesian filter.
//!
//! Every replication draws from its own substream, so each statistic in a
//! row sees exactly the same data (common random numbers).

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{BayesFilterState, GammaRatePrior, SegmentLengthPrior};
use crate::error::{Error, Result};
use crate::kind::StatisticKind;
use crate::monitor::{Decision, Detector, DetectorConfig, ThresholdSource};
use crate::sim::{substream, Law};
use crate::thresholds::shipped_table;

/// Null streams are cut off at this multiple of the nominal ARL0.
pub const TRUNCATION_FACTOR: f64 = 20.0;
pub const DEFAULT_REPLICATIONS: usize = 20_000;
pub const DEFAULT_BAYES_REPLICATIONS: usize = 10_000;
/// Relative standard error above which a cell is flagged.
pub const SE_FLAG: f64 = 0.02;

/// One simulated setting: `x_1..x_τ` from `pre`, the rest from `post`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub pre: Law,
    pub post: Law,
    /// Last pre-change observation; 0 means no change.
    pub tau: usize,
    /// Streams are cut off after this many observations.
    pub horizon: usize,
}

impl Scenario {
    pub fn null(law: Law, horizon: usize) -> Self {
        Scenario {
            pre: law,
            post: law,
            tau: 0,
            horizon,
        }
    }

    pub fn change(pre: Law, post: Law, tau: usize, horizon: usize) -> Self {
        Scenario {
            pre,
            post,
            tau,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pre.validate()?;
        self.post.validate()?;
        if self.pre.family() != self.post.family() {
            return Err(Error::Config(
                "pre- and post-change laws belong to different families".into(),
            ));
        }
        if self.horizon <= self.tau {
            return Err(Error::Config(format!(
                "horizon {} must exceed the change location {}",
                self.horizon, self.tau
            )));
        }
        Ok(())
    }

    /// Generator for replication `rep`; both segment laws are fixed up front.
    fn stream(&self, seed: u64, rep: usize) -> impl Iterator<Item = f64> {
        let mut rng = substream(seed, rep as u64);
        let pre = self.pre.realize(&mut rng);
        let post = self.post.realize(&mut rng);
        let tau = self.tau;
        (1..=self.horizon).map(move |t| {
            if t <= tau {
                pre.sample(&mut rng)
            } else {
                post.sample(&mut rng)
            }
        })
    }
}

/// Bayesian detection rule `P(C_t = 0 | x_1..x_t) < c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesRule {
    pub segment_mean: f64,
    pub segment_sd: f64,
    pub rate: GammaRatePrior,
}

impl BayesRule {
    /// Segment lengths with mean and sd 200, as used throughout the comparison.
    pub fn with_rate(rate: GammaRatePrior) -> Self {
        BayesRule {
            segment_mean: 200.0,
            segment_sd: 200.0,
            rate,
        }
    }
}

/// A mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    fn from_samples(values: impl Iterator<Item = f64> + Clone) -> Option<Estimate> {
        let n = values.clone().count();
        if n == 0 {
            return None;
        }
        let mean = values.clone().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Some(Estimate { mean, se })
    }

    /// True when the standard error exceeds [`SE_FLAG`] of the mean.
    pub fn is_noisy(&self) -> bool {
        self.se.is_nan() || self.se > SE_FLAG * self.mean.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub method: String,
    pub replications: usize,
    pub seed: u64,
    pub tau: usize,
    pub horizon: usize,
    /// Runs signalling at or before `τ`.
    pub false_positives: usize,
    pub false_positive_rate: Estimate,
    /// Runs signalling after `τ` within the horizon.
    pub detections: usize,
    /// Runs that never signalled.
    pub truncated: usize,
    pub truncated_fraction: f64,
    /// `E[T − τ | T > τ]`, truncated runs counted at the horizon. With no
    /// change this is the run length itself. Absent when no run passed `τ`
    /// with a signal.
    pub delay: Option<Estimate>,
    pub flagged: bool,
}

impl CampaignResult {
    fn from_outcomes(method: String, scenario: &Scenario, seed: u64, outcomes: &[Option<usize>]) -> Self {
        let n = outcomes.len();
        let tau = scenario.tau;
        let false_positives = outcomes.iter().filter(|o| matches!(o, Some(t) if *t <= tau)).count();
        let detections = outcomes.iter().filter(|o| matches!(o, Some(t) if *t > tau)).count();
        let truncated = n - false_positives - detections;
        let fp = false_positives as f64 / n as f64;
        let delay = if detections == 0 {
            None
        } else {
            let after = outcomes.iter().filter_map(|o| match o {
                Some(t) if *t <= tau => None,
                Some(t) => Some((t - tau) as f64),
                None => Some((scenario.horizon - tau) as f64),
            });
            Estimate::from_samples(after)
        };
        CampaignResult {
            method,
            replications: n,
            seed,
            tau,
            horizon: scenario.horizon,
            false_positives,
            false_positive_rate: Estimate {
                mean: fp,
                se: (fp * (1.0 - fp) / n as f64).sqrt(),
            },
            detections,
            truncated,
            truncated_fraction: truncated as f64 / n as f64,
            flagged: delay.is_some_and(|d| d.is_noisy()),
            delay,
        }
    }
}

fn check_replications(replications: usize) -> Result<()> {
    if replications == 0 {
        return Err(Error::Config("replications must be positive".into()));
    }
    Ok(())
}

fn first_signal(config: &DetectorConfig, xs: impl Iterator<Item = f64>) -> Option<usize> {
    let mut detector = Detector::new(config.clone()).expect("validated config");
    for (i, x) in xs.enumerate() {
        if let Decision::Signal(_) = detector.step(x).expect("simulated data are valid") {
            return Some(i + 1);
        }
    }
    None
}

/// Signal times of a single-change detector over `replications` streams.
pub fn run_campaign(
    scenario: &Scenario,
    config: &DetectorConfig,
    replications: usize,
    seed: u64,
) -> Result<CampaignResult> {
    scenario.validate()?;
    config.validate()?;
    check_replications(replications)?;
    if scenario.pre.family() != config.family() {
        return Err(Error::Config("scenario and detector families differ".into()));
    }
    let outcomes: Vec<Option<usize>> = (0..replications)
        .into_par_iter()
        .map(|rep| first_signal(config, scenario.stream(seed, rep)))
        .collect();
    Ok(CampaignResult::from_outcomes(
        config.statistic.label().to_string(),
        scenario,
        seed,
        &outcomes,
    ))
}

/// Mean null run length, truncated at 20×ARL0 (or 10⁴ for fixed thresholds).
pub fn estimate_arl0(config: &DetectorConfig, replications: usize, seed: u64) -> Result<CampaignResult> {
    if replications < 1000 {
        return Err(Error::Config(format!(
            "ARL0 estimation needs at least 1000 replications, got {replications}"
        )));
    }
    let nominal = config.threshold.nominal_arl0().unwrap_or(500.0);
    let horizon = (TRUNCATION_FACTOR * nominal).ceil() as usize;
    let scenario = Scenario::null(Law::null_for(config.family()), horizon);
    run_campaign(&scenario, config, replications, seed)
}

/// Bayesian rule over a grid of `c` values. Each stream is filtered once and
/// every `c` reads its own first crossing.
pub fn run_bayes_campaign(
    scenario: &Scenario,
    rule: &BayesRule,
    cs: &[f64],
    replications: usize,
    seed: u64,
) -> Result<Vec<CampaignResult>> {
    scenario.validate()?;
    check_replications(replications)?;
    if scenario.pre.family() != crate::kind::Family::Exponential {
        return Err(Error::Config("the Bayesian filter models exponential data".into()));
    }
    if let Some(c) = cs.iter().find(|c| !(**c > 0.0 && **c < 1.0)) {
        return Err(Error::Config(format!("c must lie in (0,1), got {c}")));
    }
    let seg = SegmentLengthPrior::new(rule.segment_mean, rule.segment_sd)?;
    let rate = rule.rate;
    let per_rep: Vec<Vec<Option<usize>>> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut hits = vec![None; cs.len()];
            let mut open = cs.len();
            let mut state = BayesFilterState::new();
            for x in scenario.stream(seed, rep) {
                state.step(x, &seg, &rate).expect("simulated data are valid");
                let p = state.prob_no_change();
                for (hit, &c) in hits.iter_mut().zip(cs) {
                    if hit.is_none() && p < c {
                        *hit = Some(state.t());
                        open -= 1;
                    }
                }
                if open == 0 {
                    break;
                }
            }
            hits
        })
        .collect();
    Ok(cs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let outcomes: Vec<Option<usize>> = per_rep.iter().map(|h| h[i]).collect();
            let method = format!("Gamma({},{}) c={c}", rate.alpha, rate.beta);
            CampaignResult::from_outcomes(method, scenario, seed, &outcomes)
        })
        .collect())
}

/// One row of a result grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub keys: Vec<String>,
    pub cells: Vec<CampaignResult>,
}

/// Results in a printed-table layout: key columns, then one block per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultGrid {
    pub title: String,
    pub key_names: Vec<String>,
    pub columns: Vec<String>,
    /// Whether false-positive proportions are part of the layout.
    pub report_false_positives: bool,
    pub replications: usize,
    pub seed: u64,
    pub rows: Vec<GridRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.4}"))
}

impl ResultGrid {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut header: Vec<String> = self.key_names.clone();
        for c in &self.columns {
            let prefix = if c.is_empty() { String::new() } else { format!("{c} ") };
            if self.report_false_positives {
                header.push(format!("{prefix}fps"));
                header.push(format!("{prefix}fps_se"));
            }
            header.push(if c.is_empty() { "delay".into() } else { c.clone() });
            header.push(format!("{prefix}se"));
        }
        header.push("truncated".into());
        header.push("flagged".into());
        writeln!(
            out,
            "{}",
            header.iter().map(|h| csv_field(h)).collect::<Vec<_>>().join(",")
        )
        .unwrap();
        for row in &self.rows {
            let mut fields: Vec<String> = row.keys.clone();
            for cell in &row.cells {
                if self.report_false_positives {
                    fields.push(format!("{:.4}", cell.false_positive_rate.mean));
                    fields.push(format!("{:.4}", cell.false_positive_rate.se));
                }
                fields.push(fmt_opt(cell.delay.map(|d| d.mean)));
                fields.push(fmt_opt(cell.delay.map(|d| d.se)));
            }
            let truncated: f64 = row.cells.iter().map(|c| c.truncated_fraction).fold(0.0, f64::max);
            fields.push(format!("{truncated:.4}"));
            fields.push(row.cells.iter().any(|c| c.flagged).to_string());
            writeln!(
                out,
                "{}",
                fields.iter().map(|f| csv_field(f)).collect::<Vec<_>>().join(",")
            )
            .unwrap();
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// A scenario with its row labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledScenario {
    pub keys: Vec<String>,
    pub scenario: Scenario,
}

/// Runs every scenario against every detector.
pub fn delay_table(
    title: &str,
    key_names: &[&str],
    scenarios: &[LabelledScenario],
    detectors: &[DetectorConfig],
    replications: usize,
    seed: u64,
) -> Result<ResultGrid> {
    check_replications(replications)?;
    let mut rows = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        let cells = detectors
            .iter()
            .map(|d| run_campaign(&s.scenario, d, replications, seed))
            .collect::<Result<Vec<_>>>()?;
        log::info!("{title}: {:?} done", s.keys);
        rows.push(GridRow {
            keys: s.keys.clone(),
            cells,
        });
    }
    Ok(ResultGrid {
        title: title.to_string(),
        key_names: key_names.iter().map(|s| s.to_string()).collect(),
        columns: detectors.iter().map(|d| d.statistic.label().to_string()).collect(),
        report_false_positives: false,
        replications,
        seed,
        rows,
    })
}

/// The printed benchmark layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkTable {
    /// Gaussian mean shifts `N(0,1) → N(μ₁,1)`.
    Mean,
    /// Gaussian scale changes `N(0,1) → N(0,σ₁²)`.
    Var,
    /// Exponential rate changes `Exp(1) → Exp(δ)`.
    Exp,
    /// Fixed-rate comparison against the Bayesian filter.
    Bayes,
    /// Rates drawn per stream from the matched Gamma prior.
    PriorSampled,
}

impl std::str::FromStr for BenchmarkTable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(BenchmarkTable::Mean),
            "var" => Ok(BenchmarkTable::Var),
            "exp" => Ok(BenchmarkTable::Exp),
            "bayes" => Ok(BenchmarkTable::Bayes),
            "prior-sampled" => Ok(BenchmarkTable::PriorSampled),
            other => Err(Error::Config(format!("unknown table `{other}`"))),
        }
    }
}

pub const CHANGE_LOCATIONS: [usize; 2] = [25, 100];
pub const MEAN_SHIFTS: [f64; 9] = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0];
pub const SCALE_CHANGES: [f64; 8] = [1.5, 2.0, 2.5, 3.0, 0.67, 0.5, 0.4, 0.33];
pub const RATE_CHANGES: [f64; 8] = [1.5, 2.0, 2.5, 3.0, 0.67, 0.5, 0.4, 0.33];
pub const BAYES_THRESHOLDS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];
/// Last pre-change observation in the Bayesian comparison.
pub const BAYES_TAU: usize = 50;
pub const BAYES_HORIZON: usize = BAYES_TAU + 1000;

/// Detector with the shipped ARL0 table for `kind`.
pub fn shipped_detector(kind: StatisticKind, arl0: u32) -> Result<DetectorConfig> {
    let table =
        shipped_table(kind, arl0).ok_or_else(|| Error::Config(format!("no shipped {kind} table for ARL0={arl0}")))?;
    Ok(DetectorConfig::new(kind, ThresholdSource::Table(table)))
}

fn change_horizon(tau: usize, arl0: f64) -> usize {
    tau + (TRUNCATION_FACTOR * arl0) as usize
}

/// Scenarios of the delay layouts. A zero-size change row is the null run.
pub fn layout_scenarios(table: BenchmarkTable) -> Vec<LabelledScenario> {
    let arl0 = 500.0;
    let (null_law, sizes): (Law, &[f64]) = match table {
        BenchmarkTable::Mean => (Law::STANDARD_NORMAL, &MEAN_SHIFTS[1..]),
        BenchmarkTable::Var => (Law::STANDARD_NORMAL, &SCALE_CHANGES),
        BenchmarkTable::Exp => (Law::UNIT_EXPONENTIAL, &RATE_CHANGES),
        _ => return Vec::new(),
    };
    let post = |size: f64| match table {
        BenchmarkTable::Mean => Law::Normal { mean: size, sd: 1.0 },
        BenchmarkTable::Var => Law::Normal { mean: 0.0, sd: size },
        _ => Law::Exponential { rate: size },
    };
    let mut out = vec![LabelledScenario {
        keys: vec!["-".into(), "0.00".into()],
        scenario: Scenario::null(null_law, (TRUNCATION_FACTOR * arl0) as usize),
    }];
    for tau in CHANGE_LOCATIONS {
        for &size in sizes {
            out.push(LabelledScenario {
                keys: vec![tau.to_string(), format!("{size:.2}")],
                scenario: Scenario::change(null_law, post(size), tau, change_horizon(tau, arl0)),
            });
        }
    }
    out
}

/// The uncorrected and corrected detectors compared in a delay layout.
pub fn layout_detectors(table: BenchmarkTable) -> Result<Vec<DetectorConfig>> {
    let kinds = match table {
        BenchmarkTable::Mean | BenchmarkTable::Var => [StatisticKind::HzGaussian, StatisticKind::CorrectedGaussian],
        BenchmarkTable::Exp => [StatisticKind::RawExponential, StatisticKind::CorrectedExponential],
        _ => return Err(Error::Config("not a delay layout".into())),
    };
    kinds.iter().map(|&k| shipped_detector(k, 500)).collect()
}

/// The frequentist row of the Bayesian comparison: corrected Exponential at ARL0 = 200.
pub fn bayes_reference_detector() -> Result<DetectorConfig> {
    shipped_detector(StatisticKind::CorrectedExponential, 200)
}

/// One fixed-rate comparison: the frequentist row, then every prior over the `c` grid.
pub fn bayes_comparison(
    title: &str,
    scenario: &Scenario,
    priors: &[GammaRatePrior],
    cs: &[f64],
    replications: usize,
    seed: u64,
) -> Result<ResultGrid> {
    let mut rows = vec![GridRow {
        keys: vec!["M^c_t".into(), "-".into()],
        cells: vec![run_campaign(
            scenario,
            &bayes_reference_detector()?,
            replications,
            seed,
        )?],
    }];
    for prior in priors {
        let results = run_bayes_campaign(scenario, &BayesRule::with_rate(*prior), cs, replications, seed)?;
        let name = if prior.is_proper() {
            format!("Gamma({},{})", prior.alpha, prior.beta)
        } else {
            format!("Gamma({},{}) improper", prior.alpha, prior.beta)
        };
        for (c, r) in cs.iter().zip(results) {
            rows.push(GridRow {
                keys: vec![name.clone(), format!("{c}")],
                cells: vec![r],
            });
        }
    }
    Ok(ResultGrid {
        title: title.to_string(),
        key_names: vec!["method".into(), "c".into()],
        columns: vec![String::new()],
        report_false_positives: true,
        replications,
        seed,
        rows,
    })
}

/// Streams for the comparisons: `Exp(λ₀)` up to observation 50, then `Exp(λ₁)`.
pub fn bayes_scenario(pre: Law, post: Law) -> Scenario {
    Scenario::change(pre, post, BAYES_TAU, BAYES_HORIZON)
}

fn gamma(alpha: f64, beta: f64) -> GammaRatePrior {
    GammaRatePrior::new(alpha, beta).expect("valid prior")
}

pub fn informative_prior() -> GammaRatePrior {
    gamma(22.5, 3.0)
}

/// Reproduces a printed layout.
pub fn benchmark(table: BenchmarkTable, replications: usize, seed: u64) -> Result<Vec<ResultGrid>> {
    check_replications(replications)?;
    match table {
        BenchmarkTable::Mean | BenchmarkTable::Var | BenchmarkTable::Exp => {
            let (title, key) = match table {
                BenchmarkTable::Mean => ("mean shift N(0,1) -> N(mu1,1), ARL0=500", "mu1"),
                BenchmarkTable::Var => ("scale change N(0,1) -> N(0,sigma1^2), ARL0=500", "sigma1"),
                _ => ("rate change Exp(1) -> Exp(delta), ARL0=500", "delta"),
            };
            Ok(vec![delay_table(
                title,
                &["tau", key],
                &layout_scenarios(table),
                &layout_detectors(table)?,
                replications,
                seed,
            )?])
        }
        BenchmarkTable::Bayes => {
            let x = bayes_scenario(Law::Exponential { rate: 1.0 }, Law::Exponential { rate: 3.0 });
            let y = bayes_scenario(Law::Exponential { rate: 5.0 }, Law::Exponential { rate: 10.0 });
            Ok(vec![
                bayes_comparison(
                    "Exp(1) -> Exp(3) after 50 observations",
                    &x,
                    &[
                        gamma(1.0, 1.0),
                        gamma(0.1, 0.1),
                        gamma(0.01, 0.01),
                        GammaRatePrior::jeffreys(),
                    ],
                    &BAYES_THRESHOLDS,
                    replications,
                    seed,
                )?,
                bayes_comparison(
                    "Exp(5) -> Exp(10) after 50 observations",
                    &y,
                    &[gamma(1.0, 1.0), gamma(0.01, 0.01), informative_prior()],
                    &BAYES_THRESHOLDS,
                    replications,
                    seed,
                )?,
            ])
        }
        BenchmarkTable::PriorSampled => {
            let law = Law::ExponentialGammaRate { shape: 22.5, rate: 3.0 };
            Ok(vec![bayes_comparison(
                "rates drawn from Gamma(22.5,3), change after 50 observations",
                &bayes_scenario(law, law),
                &[informative_prior()],
                &BAYES_THRESHOLDS,
                replications,
                seed,
            )?])
        }
    }
}
