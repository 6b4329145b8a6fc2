//! Recursively updatable sufficient statistics and the windowed set of
//! candidate split points.
//!
//! Summaries are kept as raw moments `(n, Σx, Σx²)` so the statistics of a
//! suffix segment `x_{k+1..t}` come from a single subtraction
//! `global - prefix_k`. Data with magnitudes beyond roughly `1e6` should be
//! centred before monitoring; the raw-moment variance loses precision there.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack allowed on the Cauchy-Schwarz bound `n·s2 >= s1²`.
pub const CAUCHY_SCHWARZ_TOL: f64 = 1e-9;

/// Count, sum and sum of squares of a data segment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningSummary {
    pub n: usize,
    pub s1: f64,
    pub s2: f64,
}

impl RunningSummary {
    pub const EMPTY: RunningSummary = RunningSummary { n: 0, s1: 0.0, s2: 0.0 };

    /// Batch construction from a slice.
    pub fn from_slice(xs: &[f64]) -> Result<Self> {
        xs.iter().try_fold(Self::EMPTY, |acc, &x| acc.update(x))
    }

    /// Returns the summary extended by one observation.
    pub fn update(self, x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::InvalidObservation {
                value: x,
                reason: "observations must be finite",
            });
        }
        Ok(self.update_unchecked(x))
    }

    #[inline]
    pub(crate) fn update_unchecked(self, x: f64) -> Self {
        RunningSummary {
            n: self.n + 1,
            s1: self.s1 + x,
            s2: self.s2 + x * x,
        }
    }

    pub fn mean(&self) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::domain("mean", "empty summary"));
        }
        Ok(self.s1 / self.n as f64)
    }

    /// Biased (maximum likelihood) variance `s2/n - (s1/n)²`, clamped at zero.
    pub fn variance_mle(&self) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::domain("variance_mle", "empty summary"));
        }
        Ok(self.variance_unchecked())
    }

    #[inline]
    pub(crate) fn variance_unchecked(&self) -> f64 {
        let n = self.n as f64;
        let mean = self.s1 / n;
        (self.s2 / n - mean * mean).max(0.0)
    }

    /// Statistics of the observations in `self` that follow `prefix`.
    pub fn suffix(&self, prefix: &RunningSummary) -> Result<Self> {
        if prefix.n > self.n {
            return Err(Error::domain(
                "suffix",
                format!("prefix count {} exceeds global count {}", prefix.n, self.n),
            ));
        }
        let out = self.suffix_unchecked(prefix);
        if out.n == 0 {
            return Ok(Self::EMPTY);
        }
        Ok(out)
    }

    #[inline]
    pub(crate) fn suffix_unchecked(&self, prefix: &RunningSummary) -> Self {
        RunningSummary {
            n: self.n - prefix.n,
            s1: self.s1 - prefix.s1,
            s2: self.s2 - prefix.s2,
        }
    }

    /// Checks the structural invariants within the documented tolerance.
    pub fn is_consistent(&self) -> bool {
        if self.n == 0 {
            return self.s1 == 0.0 && self.s2 == 0.0;
        }
        let lhs = self.s2 * self.n as f64;
        let rhs = self.s1 * self.s1;
        lhs >= rhs - CAUCHY_SCHWARZ_TOL * rhs.max(1.0)
    }
}

/// A split option: the prefix `x_1..x_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub k: usize,
    pub prefix: RunningSummary,
}

/// Prefix summaries for every admissible split point, plus the global summary.
///
/// A split `k` is admissible once both `x_1..x_k` and `x_{k+1}..x_t` hold at
/// least `min_segment` observations. With a capacity `W`, only the `W`
/// largest admissible splits are retained; evicted observations stay in the
/// global summary, so no data is lost, only the option of splitting there.
///
/// A summary of `x_{k+1..t}` is `global - prefix_k`.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    global: RunningSummary,
    min_segment: usize,
    capacity: Option<usize>,
    candidates: VecDeque<Candidate>,
    // Global summaries at t-1, t-2, ... that are not yet admissible splits.
    pending: VecDeque<RunningSummary>,
    centered: bool,
    pivot: Option<f64>,
}

impl CandidateSet {
    pub fn new(min_segment: usize, capacity: Option<usize>) -> Result<Self> {
        if min_segment == 0 {
            return Err(Error::Config("min_segment must be at least 1".into()));
        }
        if capacity == Some(0) {
            return Err(Error::Config("window capacity must be positive".into()));
        }
        Ok(CandidateSet {
            global: RunningSummary::EMPTY,
            min_segment,
            capacity,
            candidates: VecDeque::new(),
            pending: VecDeque::with_capacity(min_segment + 1),
            centered: false,
            pivot: None,
        })
    }

    /// A set whose summaries describe `x_i - x_1` rather than `x_i`.
    ///
    /// Variances are unchanged, but the raw-moment cancellation no longer
    /// scales with the stream's location, so location-scale invariant
    /// statistics stay invariant to working precision.
    pub fn centered(min_segment: usize, capacity: Option<usize>) -> Result<Self> {
        let mut set = Self::new(min_segment, capacity)?;
        set.centered = true;
        Ok(set)
    }

    /// The value subtracted from every observation, once known.
    pub fn pivot(&self) -> Option<f64> {
        if self.centered {
            self.pivot
        } else {
            Some(0.0)
        }
    }

    pub fn global(&self) -> &RunningSummary {
        &self.global
    }

    /// Total observations seen.
    pub fn len(&self) -> usize {
        self.global.n
    }

    pub fn is_empty(&self) -> bool {
        self.global.n == 0
    }

    pub fn min_segment(&self) -> usize {
        self.min_segment
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    /// Retained candidates in increasing `k`.
    pub fn candidates(&self) -> &VecDeque<Candidate> {
        &self.candidates
    }

    /// Adds an observation, exposing any newly admissible split.
    pub fn push(&mut self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::InvalidObservation {
                value: x,
                reason: "observations must be finite",
            });
        }
        self.push_unchecked(x);
        Ok(())
    }

    pub(crate) fn push_unchecked(&mut self, x: f64) {
        let x = if self.centered {
            x - *self.pivot.get_or_insert(x)
        } else {
            x
        };
        self.pending.push_back(self.global);
        self.global = self.global.update_unchecked(x);
        if self.pending.len() < self.min_segment {
            return;
        }
        // The summary at k = t - min_segment now has a full-sized suffix.
        let prefix = self.pending.pop_front().expect("pending is non-empty");
        if prefix.n < self.min_segment {
            return;
        }
        self.candidates.push_back(Candidate { k: prefix.n, prefix });
        if let Some(cap) = self.capacity {
            while self.candidates.len() > cap {
                self.candidates.pop_front();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    fn summaries_close(a: &RunningSummary, b: &RunningSummary) -> bool {
        a.n == b.n && rel_close(a.s1, b.s1, 1e-9) && rel_close(a.s2, b.s2, 1e-9)
    }

    #[test]
    fn update_examples() {
        let s = RunningSummary::EMPTY.update(2.0).unwrap();
        assert_eq!(s, RunningSummary { n: 1, s1: 2.0, s2: 4.0 });
        let s = s.update(-2.0).unwrap();
        assert_eq!(s, RunningSummary { n: 2, s1: 0.0, s2: 8.0 });
        assert!(s.update(f64::NAN).is_err());
        assert!(s.update(f64::INFINITY).is_err());
    }

    #[test]
    fn variance_examples() {
        let s = RunningSummary::from_slice(&[-1.0, 1.0]).unwrap();
        assert_eq!(s.variance_mle().unwrap(), 1.0);
        let s = RunningSummary::from_slice(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(s.variance_mle().unwrap(), 0.0);
        assert!(RunningSummary::EMPTY.variance_mle().is_err());
    }

    #[test]
    fn suffix_examples() {
        let global = RunningSummary { n: 4, s1: 4.0, s2: 6.0 };
        let prefix = RunningSummary { n: 2, s1: 2.0, s2: 2.0 };
        assert_eq!(
            global.suffix(&prefix).unwrap(),
            RunningSummary { n: 2, s1: 2.0, s2: 4.0 }
        );
        assert_eq!(global.suffix(&global).unwrap(), RunningSummary::EMPTY);
        assert!(prefix.suffix(&global).is_err());
    }

    #[test]
    fn candidate_admissibility() {
        let mut set = CandidateSet::new(2, None).unwrap();
        set.push(1.0).unwrap();
        assert_eq!(*set.global(), RunningSummary { n: 1, s1: 1.0, s2: 1.0 });
        assert!(set.candidates().is_empty());
        for x in [2.0, 3.0, 4.0] {
            set.push(x).unwrap();
        }
        // t = 4: only k = 2 leaves two observations on each side.
        let ks: Vec<usize> = set.candidates().iter().map(|c| c.k).collect();
        assert_eq!(ks, vec![2]);

        let mut set = CandidateSet::new(1, None).unwrap();
        for x in [1.0, 2.0, 3.0] {
            set.push(x).unwrap();
        }
        let ks: Vec<usize> = set.candidates().iter().map(|c| c.k).collect();
        assert_eq!(ks, vec![1, 2]);
    }

    #[test]
    fn window_keeps_largest_admissible_splits() {
        let mut set = CandidateSet::new(2, Some(3)).unwrap();
        for i in 0..10 {
            set.push(i as f64).unwrap();
        }
        let ks: Vec<usize> = set.candidates().iter().map(|c| c.k).collect();
        assert_eq!(ks, vec![6, 7, 8]);
        assert_eq!(set.global().n, 10);
        assert_eq!(set.global().s1, 45.0);
    }

    #[test]
    fn centered_set_shifts_by_first_value() {
        let mut set = CandidateSet::centered(2, None).unwrap();
        assert_eq!(set.pivot(), None);
        let xs = [10.0, 12.0, 8.0, 10.0, 11.0];
        for x in xs {
            set.push(x).unwrap();
        }
        assert_eq!(set.pivot(), Some(10.0));
        assert_eq!(*set.global(), RunningSummary { n: 5, s1: 1.0, s2: 9.0 });
        let plain = RunningSummary::from_slice(&xs).unwrap();
        assert!((set.global().variance_unchecked() - plain.variance_unchecked()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let mut set = CandidateSet::new(2, None).unwrap();
        set.push(1.0).unwrap();
        let before = *set.global();
        assert!(set.push(f64::NAN).is_err());
        assert_eq!(*set.global(), before);
        assert!(CandidateSet::new(0, None).is_err());
        assert!(CandidateSet::new(2, Some(0)).is_err());
    }

    proptest! {
        #[test]
        fn streaming_matches_batch(xs in prop::collection::vec(-1.0e3f64..1.0e3, 1..400)) {
            let mut set = CandidateSet::new(2, None).unwrap();
            for &x in &xs {
                set.push(x).unwrap();
            }
            let batch = RunningSummary::from_slice(&xs).unwrap();
            prop_assert!(summaries_close(set.global(), &batch));
            prop_assert!(set.global().is_consistent());
            for c in set.candidates() {
                let oracle = RunningSummary::from_slice(&xs[..c.k]).unwrap();
                prop_assert!(summaries_close(&c.prefix, &oracle));
                let suffix = set.global().suffix(&c.prefix).unwrap();
                let suffix_oracle = RunningSummary::from_slice(&xs[c.k..]).unwrap();
                prop_assert!(summaries_close(&suffix, &suffix_oracle));
                prop_assert!(suffix.is_consistent());
            }
        }

        #[test]
        fn variance_matches_two_pass(xs in prop::collection::vec(-100.0f64..100.0, 1..200)) {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let two_pass = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let v = RunningSummary::from_slice(&xs).unwrap().variance_mle().unwrap();
            prop_assert!((v - two_pass).abs() <= 1e-9 * two_pass.max(1.0));
        }

        #[test]
        fn wide_window_equals_unwindowed(xs in prop::collection::vec(-10.0f64..10.0, 1..120)) {
            let mut plain = CandidateSet::new(2, None).unwrap();
            let mut windowed = CandidateSet::new(2, Some(xs.len())).unwrap();
            for &x in &xs {
                plain.push(x).unwrap();
                windowed.push(x).unwrap();
            }
            prop_assert_eq!(plain.candidates(), windowed.candidates());
            prop_assert_eq!(plain.global(), windowed.global());
        }

        #[test]
        fn eviction_preserves_global(xs in prop::collection::vec(-10.0f64..10.0, 1..120), w in 1usize..10) {
            let mut plain = CandidateSet::new(2, None).unwrap();
            let mut windowed = CandidateSet::new(2, Some(w)).unwrap();
            for &x in &xs {
                plain.push(x).unwrap();
                windowed.push(x).unwrap();
            }
            prop_assert_eq!(plain.global(), windowed.global());
            let skip = plain.candidates().len().saturating_sub(w);
            let tail: Vec<_> = plain.candidates().iter().skip(skip).copied().collect();
            let kept: Vec<_> = windowed.candidates().iter().copied().collect();
            prop_assert_eq!(tail, kept);
        }
    }
}
