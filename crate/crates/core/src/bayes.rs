//! Exact Bayesian filtering of the most recent change point for Exponential
//! data with a conjugate Gamma prior on each segment's rate.
//!
//! `C_t = j` means the current segment is `x_{j+1..t}`; `C_t = 0` means no
//! change has happened yet. Segment lengths `L ≥ 1` are i.i.d. with
//! `P(L = ℓ) = nb(ℓ − 1)`, a Negative Binomial shifted onto the positive
//! integers. All weights are kept in log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::log_gamma_unchecked;

/// Hazards are tabulated up to the point where the remaining mass is below this.
const TAIL_MASS: f64 = 1e-12;

/// Negative Binomial prior on segment lengths, matched to a mean and sd.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentLengthPrior {
    mean: f64,
    sd: f64,
    r: f64,
    p: f64,
    // Indexed by segment length; entry 0 is unused.
    ln_hazard: Vec<f64>,
    ln_continue: Vec<f64>,
}

impl SegmentLengthPrior {
    /// Moment matching: `p = mean / var`, `r = mean · p / (1 − p)`. Needs `var > mean`.
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !(mean > 0.0 && mean.is_finite() && sd > 0.0 && sd.is_finite()) {
            return Err(Error::Config(format!(
                "segment prior needs mean, sd > 0, got ({mean}, {sd})"
            )));
        }
        let var = sd * sd;
        if var <= mean {
            return Err(Error::Config(format!(
                "a Negative Binomial needs variance above the mean, got mean {mean}, variance {var}"
            )));
        }
        let p = mean / var;
        let r = mean * p / (1.0 - p);
        let mut prior = SegmentLengthPrior {
            mean,
            sd,
            r,
            p,
            ln_hazard: Vec::new(),
            ln_continue: Vec::new(),
        };
        prior.tabulate();
        Ok(prior)
    }

    fn tabulate(&mut self) {
        // Find where the tail is negligible, then sum pmf values backwards over
        // twice that range so survivors stay accurate right up to the horizon.
        let mut cum = 0.0;
        let mut horizon = 0;
        while 1.0 - cum > TAIL_MASS && horizon < 10_000_000 {
            cum += self.nb_pmf(horizon);
            horizon += 1;
        }
        let horizon = horizon.max(1);
        let extent = 2 * horizon;
        let g: Vec<f64> = (0..=extent)
            .map(|l| if l == 0 { 0.0 } else { self.nb_pmf(l - 1) })
            .collect();
        // surv[l] = P(L > l)
        let mut surv = vec![0.0; extent + 1];
        let mut acc = 0.0;
        for l in (0..extent).rev() {
            acc += g[l + 1];
            surv[l] = acc;
        }
        self.ln_hazard = vec![f64::NAN; horizon + 1];
        self.ln_continue = vec![f64::NAN; horizon + 1];
        for l in 1..=horizon {
            let h = (g[l] / surv[l - 1]).min(1.0);
            self.ln_hazard[l] = h.ln();
            self.ln_continue[l] = (-h).ln_1p();
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sd(&self) -> f64 {
        self.sd
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Lengths beyond this reuse the last tabulated hazard.
    pub fn horizon(&self) -> usize {
        self.ln_hazard.len() - 1
    }

    /// The unshifted Negative Binomial pmf at `k ≥ 0`.
    pub fn nb_pmf(&self, k: usize) -> f64 {
        let k = k as f64;
        (log_gamma_unchecked(k + self.r) - log_gamma_unchecked(self.r) - log_gamma_unchecked(k + 1.0)
            + self.r * self.p.ln()
            + k * (-self.p).ln_1p())
        .exp()
    }

    /// `g(ℓ) = P(L = ℓ)`.
    pub fn pmf(&self, len: usize) -> f64 {
        if len == 0 {
            0.0
        } else {
            self.nb_pmf(len - 1)
        }
    }

    /// `G̅(n) = P(L > n)`.
    pub fn survivor(&self, n: usize) -> f64 {
        1.0 - (1..=n).map(|l| self.pmf(l)).sum::<f64>()
    }

    /// Probability that a segment which has reached length `len` ends there.
    pub fn hazard(&self, len: usize) -> f64 {
        self.ln_hazard(len).exp()
    }

    fn ln_hazard(&self, len: usize) -> f64 {
        debug_assert!(len >= 1);
        self.ln_hazard[len.min(self.horizon())]
    }

    fn ln_continue(&self, len: usize) -> f64 {
        self.ln_continue[len.min(self.horizon())]
    }
}

/// Gamma(alpha, beta) prior on an Exponential rate (shape, rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaRatePrior {
    pub alpha: f64,
    pub beta: f64,
}

impl GammaRatePrior {
    /// `beta = 0` is accepted and marks the prior improper.
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!(
                "Gamma prior needs alpha > 0, beta >= 0, got ({alpha}, {beta})"
            )));
        }
        Ok(GammaRatePrior { alpha, beta })
    }

    /// Gamma(1/2, 0).
    pub fn jeffreys() -> Self {
        GammaRatePrior { alpha: 0.5, beta: 0.0 }
    }

    pub fn is_proper(&self) -> bool {
        self.beta > 0.0
    }

    /// Log predictive density of `x` after `m` observations summing to `sum`,
    /// given `ln(β + sum)`.
    fn ln_predictive(&self, m: usize, ln_beta_sum: f64, ln_beta_sum_x: f64) -> f64 {
        let a = self.alpha + m as f64;
        if m == 0 && self.beta == 0.0 {
            return f64::NEG_INFINITY;
        }
        a.ln() + a * ln_beta_sum - (a + 1.0) * ln_beta_sum_x
    }
}

/// `ln ∫ λ^m e^{−λ·sum} dGamma(λ; α, β)`.
pub fn log_marginal_likelihood(prior: &GammaRatePrior, m: usize, sum: f64) -> Result<f64> {
    if !prior.is_proper() {
        return Err(Error::ImproperPrior {
            alpha: prior.alpha,
            beta: prior.beta,
        });
    }
    if m == 0 {
        return Err(Error::domain("marginal_likelihood", "need at least one observation"));
    }
    if !(sum > 0.0 && sum.is_finite()) {
        return Err(Error::domain(
            "marginal_likelihood",
            format!("sum must be positive, got {sum}"),
        ));
    }
    let (a, b) = (prior.alpha, prior.beta);
    let am = a + m as f64;
    Ok(a * b.ln() + log_gamma_unchecked(am) - log_gamma_unchecked(a) - am * (b + sum).ln())
}

pub fn marginal_likelihood(prior: &GammaRatePrior, m: usize, sum: f64) -> Result<f64> {
    log_marginal_likelihood(prior, m, sum).map(f64::exp)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct SupportPoint {
    j: usize,
    ln_w: f64,
    sum: f64,
    ln_beta_sum: f64,
}

/// Posterior over `C_t` after `t` observations.
///
/// Support points with zero posterior mass are dropped; they can never regain it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BayesFilterState {
    t: usize,
    support: Vec<SupportPoint>,
    log_evidence: f64,
}

impl BayesFilterState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// `P(C_t = 0 | x_1..x_t)`; 1 before any data.
    pub fn prob_no_change(&self) -> f64 {
        match self.support.first() {
            None => 1.0,
            Some(s) if s.j == 0 => s.ln_w.exp(),
            Some(_) => 0.0,
        }
    }

    /// `(j, P(C_t = j))` over the support with nonzero mass, in increasing `j`.
    pub fn posterior(&self) -> Vec<(usize, f64)> {
        self.support.iter().map(|s| (s.j, s.ln_w.exp())).collect()
    }

    /// `ln p(x_1..x_t)`; `-inf` under an improper rate prior.
    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }

    /// `ln p(C_t = 0, x_1..x_t)`. Depends on the data only through their sum.
    pub fn ln_joint_no_change(&self) -> f64 {
        self.prob_no_change().ln() + self.log_evidence
    }

    /// Number of support points carrying mass.
    pub fn support_len(&self) -> usize {
        self.support.len()
    }

    /// Absorbs one observation.
    pub fn step(&mut self, x: f64, seg: &SegmentLengthPrior, rate: &GammaRatePrior) -> Result<()> {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::InvalidObservation {
                value: x,
                reason: "exponential data must be finite and positive",
            });
        }
        let beta = rate.beta;
        if self.t == 0 {
            self.t = 1;
            self.log_evidence = rate.ln_predictive(0, beta.ln(), (beta + x).ln());
            self.support.push(SupportPoint {
                j: 0,
                ln_w: 0.0,
                sum: x,
                ln_beta_sum: (beta + x).ln(),
            });
            return Ok(());
        }
        let t = self.t;
        let ln_beta_x = (beta + x).ln();
        let ln_new_pred = rate.ln_predictive(0, beta.ln(), ln_beta_x);
        let mut ln_change = f64::NEG_INFINITY;
        let mut terms = Vec::with_capacity(self.support.len());
        for s in &mut self.support {
            let len = t - s.j;
            terms.push(s.ln_w + seg.ln_hazard(len));
            let sum_x = s.sum + x;
            let ln_beta_sum_x = (beta + sum_x).ln();
            s.ln_w += seg.ln_continue(len) + rate.ln_predictive(len, s.ln_beta_sum, ln_beta_sum_x);
            s.sum = sum_x;
            s.ln_beta_sum = ln_beta_sum_x;
        }
        if !terms.is_empty() {
            ln_change = log_sum_exp(terms.iter().copied()) + ln_new_pred;
        }
        self.support.push(SupportPoint {
            j: t,
            ln_w: ln_change,
            sum: x,
            ln_beta_sum: ln_beta_x,
        });
        self.t = t + 1;
        let norm = log_sum_exp(self.support.iter().map(|s| s.ln_w));
        if !norm.is_finite() {
            return Err(Error::domain("filter_step", "posterior mass vanished"));
        }
        self.log_evidence += norm;
        self.support.retain_mut(|s| {
            s.ln_w -= norm;
            s.ln_w > f64::NEG_INFINITY
        });
        Ok(())
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Functional form of [`BayesFilterState::step`].
pub fn filter_step(
    state: BayesFilterState,
    x: f64,
    seg: &SegmentLengthPrior,
    rate: &GammaRatePrior,
) -> Result<BayesFilterState> {
    let mut state = state;
    state.step(x, seg, rate)?;
    Ok(state)
}

/// First `t` with `P(C_t = 0 | x_1..x_t) < c`.
pub fn detect<I>(stream: I, seg: &SegmentLengthPrior, rate: &GammaRatePrior, c: f64) -> Result<Option<usize>>
where
    I: IntoIterator<Item = f64>,
{
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::Config(format!("c must lie in (0,1), got {c}")));
    }
    let mut state = BayesFilterState::new();
    for (i, x) in stream.into_iter().enumerate() {
        state.step(x, seg, rate).map_err(|e| e.at(i + 1))?;
        if state.prob_no_change() < c {
            return Ok(Some(state.t()));
        }
    }
    Ok(None)
}
