//! Two-sample Gaussian GLR statistics for a change in mean and/or variance.
//!
//! For a split at `k` of `x_1..x_t`,
//!
//! ```text
//! D_{k,t} = k·ln(S_{0,t}/S_{0,k}) + (t-k)·ln(S_{0,t}/S_{k,t})
//! ```
//!
//! where `S_{r,s}` is the biased variance of `x_{r+1..s}`. Under the null its
//! exact mean is
//!
//! ```text
//! E[D_{k,t}] = t·a(t) - k·a(k) - (t-k)·a(t-k),   a(n) = ln(2/n) + ψ((n-1)/2)
//! ```
//!
//! The corrected statistic `D^c_{k,t} = 2·D_{k,t} / E[D_{k,t}]` has null mean
//! exactly 2 at every `k`, including the short boundary segments where the
//! Bartlett-scaled `H_{k,t} = D_{k,t} / C_{k,t}` is biased upward.
//!
//! Degenerate data: when all observations are (numerically) identical every
//! `D` is 0; when the data vary but one side of a split is constant, `D` is
//! `+∞` and any threshold is crossed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::digamma_minus_ln_unchecked;
use crate::stream::{CandidateSet, RunningSummary};

/// Each side of a split needs two observations to estimate a variance.
pub const MIN_SEGMENT: usize = 2;

/// Relative variance tolerance for the degenerate-data rules.
pub const DEGENERATE_TOL: f64 = 1e-12;

/// Which Gaussian score to maximise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaussianStatistic {
    Raw,
    Hz,
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSplitRecord {
    pub k: usize,
    pub d: f64,
    pub h: f64,
    pub dc: f64,
}

/// Scores for every retained split at time `t`, in increasing `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSplitScores {
    pub t: usize,
    pub records: Vec<GaussianSplitRecord>,
}

fn check_split(func: &'static str, k: usize, t: usize) -> Result<()> {
    if k < MIN_SEGMENT || k + MIN_SEGMENT > t {
        return Err(Error::domain(
            func,
            format!("split k={k} outside 2 <= k <= t-2 for t={t}"),
        ));
    }
    Ok(())
}

/// `a(n) = ln(2/n) + ψ((n-1)/2)`, written to avoid cancellation at large `n`.
fn log_variance_moment(n: usize) -> f64 {
    let nf = n as f64;
    (-1.0 / nf).ln_1p() + digamma_minus_ln_unchecked((nf - 1.0) / 2.0)
}

/// Raw GLR statistic `D_{k,t}` from the prefix `x_1..x_k` and the global summary.
pub fn d_stat(prefix: &RunningSummary, global: &RunningSummary) -> Result<f64> {
    if prefix.n > global.n {
        return Err(Error::domain("d_stat", "prefix is longer than the stream"));
    }
    check_split("d_stat", prefix.n, global.n)?;
    let suffix = global.suffix_unchecked(prefix);
    Ok(d_from_segments(global, prefix, &suffix))
}

/// Variance below which a segment counts as constant: relative to the whole
/// stream's variance, plus the roundoff of the raw-moment formula.
#[inline]
fn degenerate_floor(var_total: f64, segment: &RunningSummary) -> f64 {
    let mean = segment.s1 / segment.n as f64;
    DEGENERATE_TOL * (var_total + mean * mean)
}

#[inline]
fn all_identical(global: &RunningSummary, var_total: f64) -> bool {
    let mean = global.s1 / global.n as f64;
    var_total <= DEGENERATE_TOL * (1.0 + mean * mean)
}

fn d_from_segments(global: &RunningSummary, prefix: &RunningSummary, suffix: &RunningSummary) -> f64 {
    let t = global.n;
    let k = prefix.n;
    let var_total = global.variance_unchecked();
    if all_identical(global, var_total) {
        return 0.0;
    }
    let var_prefix = prefix.variance_unchecked();
    let var_suffix = suffix.variance_unchecked();
    if var_prefix <= degenerate_floor(var_total, prefix) || var_suffix <= degenerate_floor(var_total, suffix) {
        return f64::INFINITY;
    }
    let d = t as f64 * var_total.ln() - k as f64 * var_prefix.ln() - (t - k) as f64 * var_suffix.ln();
    d.max(0.0)
}

/// Bartlett correction factor `C_{k,t}`.
pub fn bartlett_factor(k: usize, t: usize) -> Result<f64> {
    check_split("bartlett_factor", k, t)?;
    Ok(bartlett_unchecked(k, t))
}

#[inline]
fn bartlett_unchecked(k: usize, t: usize) -> f64 {
    let a = 1.0 / k as f64;
    let b = 1.0 / (t - k) as f64;
    let c = 1.0 / t as f64;
    1.0 + 11.0 / 12.0 * (a + b - c) + (a * a + b * b - c * c)
}

/// Exact null expectation `E[D_{k,t}]`.
pub fn expected_d(k: usize, t: usize) -> Result<f64> {
    check_split("expected_d", k, t)?;
    let term = |n: usize| n as f64 * log_variance_moment(n);
    Ok(term(t) - term(k) - term(t - k))
}

/// Computes `D`, `H` and `D^c` for every admissible retained split.
pub fn corrected_scores(candidates: &CandidateSet) -> Result<GaussianSplitScores> {
    let global = candidates.global();
    let t = global.n;
    let mut records = Vec::with_capacity(candidates.candidates().len());
    for c in candidates.candidates() {
        if c.k < MIN_SEGMENT || c.k + MIN_SEGMENT > t {
            continue;
        }
        let d = d_stat(&c.prefix, global)?;
        let h = d / bartlett_unchecked(c.k, t);
        let dc = 2.0 * d / expected_d(c.k, t)?;
        records.push(GaussianSplitRecord { k: c.k, d, h, dc });
    }
    if records.is_empty() {
        return Err(Error::domain(
            "corrected_scores",
            format!("no admissible split at t={t}"),
        ));
    }
    Ok(GaussianSplitScores { t, records })
}

impl GaussianSplitScores {
    /// Maximum of the chosen statistic and its split; ties go to the smallest `k`.
    pub fn max_score(&self, which: GaussianStatistic) -> Result<(f64, usize)> {
        let pick = |r: &GaussianSplitRecord| match which {
            GaussianStatistic::Raw => r.d,
            GaussianStatistic::Hz => r.h,
            GaussianStatistic::Corrected => r.dc,
        };
        let mut iter = self.records.iter();
        let first = iter.next().ok_or_else(|| Error::domain("max_score", "no scores"))?;
        let mut best = (pick(first), first.k);
        for r in iter {
            let v = pick(r);
            if v > best.0 {
                best = (v, r.k);
            }
        }
        Ok(best)
    }
}

/// Incremental maximiser used by detectors and simulations.
///
/// Mirrors the retained prefixes in contiguous columns and caches
/// `k·ln S_{0,k}` per split and `n·a(n)` per segment length, so each step
/// costs one logarithm per retained split. Splits are contiguous in `k`.
#[derive(Debug, Clone, Default)]
pub(crate) struct GaussianKernel {
    first_k: usize,
    s1: Vec<f64>,
    s2: Vec<f64>,
    k_ln_var: Vec<f64>,
    // Prefix variance minus the roundoff allowance `tol·mean²`.
    slack: Vec<f64>,
    n_moment: Vec<f64>,
}

impl GaussianKernel {
    fn moment(&mut self, n: usize) -> f64 {
        while self.n_moment.len() <= n {
            let m = self.n_moment.len();
            let v = if m < MIN_SEGMENT {
                f64::NAN
            } else {
                m as f64 * log_variance_moment(m)
            };
            self.n_moment.push(v);
        }
        self.n_moment[n]
    }

    fn sync(&mut self, set: &CandidateSet) {
        let cands = set.candidates();
        let Some(first) = cands.front() else {
            self.s1.clear();
            self.s2.clear();
            self.k_ln_var.clear();
            self.slack.clear();
            return;
        };
        if !self.s1.is_empty() {
            let evicted = (first.k - self.first_k).min(self.s1.len());
            if evicted > 0 {
                self.s1.drain(..evicted);
                self.s2.drain(..evicted);
                self.k_ln_var.drain(..evicted);
                self.slack.drain(..evicted);
            }
        }
        self.first_k = first.k;
        for c in cands.iter().skip(self.s1.len()) {
            debug_assert_eq!(c.k, self.first_k + self.s1.len());
            let var = c.prefix.variance_unchecked();
            let mean = c.prefix.s1 / c.k as f64;
            self.s1.push(c.prefix.s1);
            self.s2.push(c.prefix.s2);
            self.k_ln_var.push(c.k as f64 * var.ln());
            self.slack.push(var - DEGENERATE_TOL * mean * mean);
        }
        debug_assert_eq!(self.s1.len(), cands.len());
    }

    /// `max_k` of the chosen statistic with its argmax, or `None` without
    /// admissible splits. `set` must have `min_segment == MIN_SEGMENT`.
    pub(crate) fn max_statistic(&mut self, set: &CandidateSet, which: GaussianStatistic) -> Option<(f64, usize)> {
        debug_assert_eq!(set.min_segment(), MIN_SEGMENT);
        self.sync(set);
        if self.s1.is_empty() {
            return None;
        }
        let global = *set.global();
        let t = global.n;
        let var_total = global.variance_unchecked();
        if all_identical(&global, var_total) {
            return Some((0.0, self.first_k));
        }
        let t_moment = self.moment(t);
        let _ = self.moment(t - MIN_SEGMENT);
        let inv_t = 1.0 / t as f64;
        let scan = Scan {
            first_k: self.first_k,
            t,
            g_s1: global.s1,
            g_s2: global.s2,
            floor: DEGENERATE_TOL * var_total,
            t_ln_var: t as f64 * var_total.ln(),
            s1: &self.s1,
            s2: &self.s2,
            k_ln_var: &self.k_ln_var,
            slack: &self.slack,
        };
        Some(match which {
            GaussianStatistic::Raw => scan.argmax(|d, _, _| d),
            GaussianStatistic::Hz => scan.argmax(|d, k, r| {
                let a = 1.0 / k as f64;
                let b = 1.0 / r as f64;
                let c = 11.0 / 12.0 * (a + b - inv_t) + (a * a + b * b - inv_t * inv_t);
                d / (1.0 + c)
            }),
            GaussianStatistic::Corrected => {
                let nm = &self.n_moment;
                scan.argmax(|d, k, r| 2.0 * d / (t_moment - nm[k] - nm[r]))
            }
        })
    }
}

struct Scan<'a> {
    first_k: usize,
    t: usize,
    g_s1: f64,
    g_s2: f64,
    floor: f64,
    t_ln_var: f64,
    s1: &'a [f64],
    s2: &'a [f64],
    k_ln_var: &'a [f64],
    slack: &'a [f64],
}

impl Scan<'_> {
    #[inline(always)]
    fn argmax(&self, score: impl Fn(f64, usize, usize) -> f64) -> (f64, usize) {
        let n = self.s1.len();
        let (s1, s2, klv, slack) = (&self.s1[..n], &self.s2[..n], &self.k_ln_var[..n], &self.slack[..n]);
        let mut best = f64::NEG_INFINITY;
        let mut best_k = 0;
        for i in 0..n {
            let k = self.first_k + i;
            let r = self.t - k;
            let rf = r as f64;
            let inv_r = 1.0 / rf;
            let mean = (self.g_s1 - s1[i]) * inv_r;
            let var = ((self.g_s2 - s2[i]) * inv_r - mean * mean).max(0.0);
            let d = if slack[i] <= self.floor || var <= self.floor + DEGENERATE_TOL * mean * mean {
                f64::INFINITY
            } else {
                (self.t_ln_var - klv[i] - rf * var.ln()).max(0.0)
            };
            let value = score(d, k, r);
            if value > best {
                best = value;
                best_k = k;
            }
        }
        (best, best_k)
    }
}
