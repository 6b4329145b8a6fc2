//! GLR statistics for a change in the rate of Exponential observations.
//!
//! With `S` denoting segment *sums* (the MLE of a rate is count / sum),
//!
//! ```text
//! M_{k,n} = -2·[ n·ln(n/S_{0,n}) - k·ln(k/S_{0,k}) - (n-k)·ln((n-k)/S_{k,n}) ]
//! E[M_{k,n}] = -2·[ b(k) + b(n-k) - b(n) ],   b(m) = m·(ψ(m) - ln m)
//! ```
//!
//! Both depend on the data only through ratios of sums, so rescaling the
//! stream leaves every score unchanged. `M^c_{k,n} = M_{k,n} / E[M_{k,n}]`
//! has null mean 1 at every split.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::digamma_minus_ln_unchecked;
use crate::stream::CandidateSet;

/// A rate can be estimated from a single observation.
pub const MIN_SEGMENT: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialSplitRecord {
    pub k: usize,
    pub m: f64,
    pub mc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialSplitScores {
    pub t: usize,
    pub records: Vec<ExponentialSplitRecord>,
}

fn check_split(func: &'static str, k: usize, t: usize) -> Result<()> {
    if k < 1 || k >= t {
        return Err(Error::domain(
            func,
            format!("split k={k} outside 1 <= k <= t-1 for t={t}"),
        ));
    }
    Ok(())
}

fn check_sum(func: &'static str, s: f64) -> Result<()> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::domain(func, format!("segment sums must be positive, got {s}")));
    }
    Ok(())
}

/// `b(m) = m·(ψ(m) - ln m)`.
fn rate_moment(m: usize) -> f64 {
    m as f64 * digamma_minus_ln_unchecked(m as f64)
}

/// `m·ln m`, with `0·ln 0 = 0`.
fn xlnx(m: usize) -> f64 {
    if m <= 1 {
        0.0
    } else {
        let f = m as f64;
        f * f.ln()
    }
}

/// Raw GLR statistic `M_{k,t}` from the prefix sum `x_1+..+x_k` and the total.
pub fn m_stat(prefix_sum: f64, k: usize, total_sum: f64, t: usize) -> Result<f64> {
    check_split("m_stat", k, t)?;
    check_sum("m_stat", prefix_sum)?;
    check_sum("m_stat", total_sum)?;
    let suffix_sum = total_sum - prefix_sum;
    check_sum("m_stat", suffix_sum)?;
    let r = t - k;
    let inner = xlnx(t)
        - t as f64 * total_sum.ln()
        - (xlnx(k) - k as f64 * prefix_sum.ln())
        - (xlnx(r) - r as f64 * suffix_sum.ln());
    Ok((-2.0 * inner).max(0.0))
}

/// Exact null expectation `E[M_{k,t}]`.
pub fn expected_m(k: usize, t: usize) -> Result<f64> {
    check_split("expected_m", k, t)?;
    Ok(-2.0 * (rate_moment(k) + rate_moment(t - k) - rate_moment(t)))
}

/// Computes `M` and `M^c` for every retained split.
///
/// The candidate set must have been fed strictly positive observations.
pub fn corrected_scores(candidates: &CandidateSet) -> Result<ExponentialSplitScores> {
    let global = candidates.global();
    let t = global.n;
    let mut records = Vec::with_capacity(candidates.candidates().len());
    for c in candidates.candidates() {
        if c.k < 1 || c.k >= t {
            continue;
        }
        let m = m_stat(c.prefix.s1, c.k, global.s1, t).map_err(|e| match e {
            Error::Domain { .. } => Error::InvalidObservation {
                value: c.prefix.s1.min(global.s1 - c.prefix.s1),
                reason: "exponential observations must be strictly positive",
            },
            other => other,
        })?;
        records.push(ExponentialSplitRecord {
            k: c.k,
            m,
            mc: m / expected_m(c.k, t)?,
        });
    }
    if records.is_empty() {
        return Err(Error::domain(
            "corrected_scores",
            format!("no admissible split at t={t}"),
        ));
    }
    Ok(ExponentialSplitScores { t, records })
}

impl ExponentialSplitScores {
    /// Maximum of `M^c` (or raw `M`) with the smallest maximising `k`.
    pub fn max_score(&self, corrected: bool) -> Result<(f64, usize)> {
        let mut iter = self.records.iter();
        let first = iter.next().ok_or_else(|| Error::domain("max_score", "no scores"))?;
        let pick = |r: &ExponentialSplitRecord| if corrected { r.mc } else { r.m };
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

/// Incremental maximiser: mirrors prefix sums in a contiguous column and
/// caches `k·ln(k/S_{0,k})` per split. Splits are contiguous in `k`.
#[derive(Debug, Clone, Default)]
pub(crate) struct ExponentialKernel {
    first_k: usize,
    sums: Vec<f64>,
    prefix_terms: Vec<f64>,
    moments: Vec<f64>,
    xlnx: Vec<f64>,
}

impl ExponentialKernel {
    fn extend_tables(&mut self, t: usize) {
        while self.moments.len() <= t {
            let m = self.moments.len();
            self.moments.push(if m == 0 { 0.0 } else { rate_moment(m) });
            self.xlnx.push(xlnx(m));
        }
    }

    fn sync(&mut self, set: &CandidateSet) {
        let cands = set.candidates();
        let Some(first) = cands.front() else {
            self.sums.clear();
            self.prefix_terms.clear();
            return;
        };
        if !self.sums.is_empty() {
            let evicted = (first.k - self.first_k).min(self.sums.len());
            if evicted > 0 {
                self.sums.drain(..evicted);
                self.prefix_terms.drain(..evicted);
            }
        }
        self.first_k = first.k;
        for c in cands.iter().skip(self.sums.len()) {
            debug_assert_eq!(c.k, self.first_k + self.sums.len());
            self.sums.push(c.prefix.s1);
            self.prefix_terms.push(xlnx(c.k) - c.k as f64 * c.prefix.s1.ln());
        }
        debug_assert_eq!(self.sums.len(), cands.len());
    }

    /// `max_k` of `M^c` (or `M`) with its argmax. Observations must be positive.
    pub(crate) fn max_statistic(&mut self, set: &CandidateSet, corrected: bool) -> Option<(f64, usize)> {
        debug_assert_eq!(set.min_segment(), MIN_SEGMENT);
        self.sync(set);
        if self.sums.is_empty() {
            return None;
        }
        let global = *set.global();
        let t = global.n;
        self.extend_tables(t);
        let head = self.xlnx[t] - t as f64 * global.s1.ln();
        let t_moment = self.moments[t];
        let moments = &self.moments;
        let scan = |score: &dyn Fn(f64, usize, usize) -> f64| {
            let n = self.sums.len();
            let (sums, terms, xl) = (&self.sums[..n], &self.prefix_terms[..n], &self.xlnx);
            let mut best = f64::NEG_INFINITY;
            let mut best_k = 0;
            for i in 0..n {
                let k = self.first_k + i;
                let r = t - k;
                let suffix_term = xl[r] - r as f64 * (global.s1 - sums[i]).ln();
                let m = (-2.0 * (head - terms[i] - suffix_term)).max(0.0);
                let value = score(m, k, r);
                if value > best {
                    best = value;
                    best_k = k;
                }
            }
            (best, best_k)
        };
        Some(if corrected {
            scan(&|m, k, r| m / (-2.0 * (moments[k] + moments[r] - t_moment)))
        } else {
            scan(&|m, _, _| m)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp1};

    fn set_from(xs: &[f64]) -> CandidateSet {
        let mut set = CandidateSet::new(MIN_SEGMENT, None).unwrap();
        for &x in xs {
            set.push(x).unwrap();
        }
        set
    }

    #[test]
    fn m_stat_examples() {
        assert!(m_stat(2.0, 2, 4.0, 4).unwrap().abs() < 1e-12);
        let want = -2.0 * (4.0 * (4.0f64 / 6.0).ln() - 2.0 * 1.0f64.ln() - 2.0 * 0.5f64.ln());
        let got = m_stat(2.0, 2, 6.0, 4).unwrap();
        assert!((got - want).abs() < 1e-12);
        assert!((got - 0.471_132_142_625_533_8).abs() < 1e-12);
    }

    #[test]
    fn m_stat_domain() {
        assert!(m_stat(1.0, 0, 4.0, 4).is_err());
        assert!(m_stat(1.0, 4, 4.0, 4).is_err());
        assert!(m_stat(0.0, 1, 4.0, 4).is_err());
        assert!(m_stat(4.0, 1, 4.0, 4).is_err());
    }

    #[test]
    fn expected_m_values() {
        assert!((expected_m(25, 50).unwrap() - 1.009_998_001_597_288).abs() < 1e-10);
        assert!((expected_m(10, 50).unwrap() - 1.017_483_284_848_559_5).abs() < 1e-10);
        assert!((expected_m(1, 50).unwrap() - 1.154_499_348_685_652).abs() < 1e-10);
        let two_gamma = 2.0 * 0.577_215_664_901_532_9;
        assert!((expected_m(1, 1_000_000).unwrap() - two_gamma).abs() < 1e-6);
        for t in [2, 7, 50, 999] {
            for k in 1..t {
                assert_eq!(expected_m(k, t).unwrap(), expected_m(t - k, t).unwrap());
            }
        }
        assert!(expected_m(0, 5).is_err());
        assert!(expected_m(5, 5).is_err());
    }

    #[test]
    fn corrected_scores_basics() {
        let s = corrected_scores(&set_from(&[1.0, 1.0, 1.0, 1.0])).unwrap();
        assert_eq!(s.records.len(), 3);
        assert!(s.records.iter().all(|r| r.m.abs() < 1e-12));
        assert!(corrected_scores(&set_from(&[1.0])).is_err());
        // A zero leaves the first prefix without a positive sum.
        assert!(matches!(
            corrected_scores(&set_from(&[0.0, 1.0, 2.0])),
            Err(Error::InvalidObservation { .. })
        ));
    }

    #[test]
    fn kernel_matches_reference_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..100)
            .map(|i| {
                let e: f64 = Exp1.sample(&mut rng);
                if i < 50 {
                    e
                } else {
                    e / 3.0
                }
            })
            .collect();
        for window in [None, Some(9)] {
            let mut set = CandidateSet::new(MIN_SEGMENT, window).unwrap();
            let mut kernel = ExponentialKernel::default();
            for &x in &xs {
                set.push(x).unwrap();
                if set.candidates().is_empty() {
                    continue;
                }
                let scores = corrected_scores(&set).unwrap();
                for corrected in [true, false] {
                    let (v, k) = kernel.max_statistic(&set, corrected).unwrap();
                    let (rv, rk) = scores.max_score(corrected).unwrap();
                    assert_eq!(k, rk);
                    assert!((v - rv).abs() <= 1e-9 * rv.max(1.0));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn scale_invariance(xs in prop::collection::vec(0.01f64..20.0, 2..80), a in 0.001f64..1000.0) {
            let ys: Vec<f64> = xs.iter().map(|x| a * x).collect();
            let sx = corrected_scores(&set_from(&xs)).unwrap();
            let sy = corrected_scores(&set_from(&ys)).unwrap();
            for (rx, ry) in sx.records.iter().zip(&sy.records) {
                prop_assert_eq!(rx.k, ry.k);
                prop_assert!((rx.m - ry.m).abs() <= 1e-9);
                prop_assert!((rx.mc - ry.mc).abs() <= 1e-9);
            }
            prop_assert_eq!(sx.max_score(true).unwrap().1, sy.max_score(true).unwrap().1);
        }

        #[test]
        fn raw_statistic_nonnegative(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<f64> = (0..30).map(|_| Exp1.sample(&mut rng)).collect();
            let s = corrected_scores(&set_from(&xs)).unwrap();
            prop_assert!(s.records.iter().all(|r| r.m >= 0.0 && r.mc >= 0.0));
        }
    }
}
