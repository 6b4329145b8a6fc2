use crate::error::{Error, Result};
use crate::exponential::ExponentialKernel;
use crate::gaussian::{GaussianKernel, GaussianStatistic};
use crate::kind::{Family, StatisticKind};
use crate::stream::CandidateSet;

#[derive(Debug, Clone)]
enum Kernel {
    Gaussian(GaussianKernel, GaussianStatistic),
    Exponential(ExponentialKernel, bool),
}

/// Streaming computation of a maximised split statistic.
///
/// Holds the candidate set and the per-split caches; each call to
/// [`StatisticTracker::max_statistic`] costs one logarithm per retained split.
#[derive(Debug, Clone)]
pub struct StatisticTracker {
    kind: StatisticKind,
    set: CandidateSet,
    kernel: Kernel,
}

impl StatisticTracker {
    pub fn new(kind: StatisticKind, window: Option<usize>) -> Result<Self> {
        let family = kind.family();
        let kernel = match kind {
            StatisticKind::CorrectedGaussian => {
                Kernel::Gaussian(GaussianKernel::default(), GaussianStatistic::Corrected)
            }
            StatisticKind::HzGaussian => Kernel::Gaussian(GaussianKernel::default(), GaussianStatistic::Hz),
            StatisticKind::CorrectedExponential => Kernel::Exponential(ExponentialKernel::default(), true),
            StatisticKind::RawExponential => Kernel::Exponential(ExponentialKernel::default(), false),
        };
        Ok(StatisticTracker {
            kind,
            set: match family {
                // Gaussian statistics only see variances, so centring is free.
                Family::Gaussian => CandidateSet::centered(family.min_segment(), window)?,
                Family::Exponential => CandidateSet::new(family.min_segment(), window)?,
            },
            kernel,
        })
    }

    pub fn kind(&self) -> StatisticKind {
        self.kind
    }

    pub fn candidates(&self) -> &CandidateSet {
        &self.set
    }

    /// Observations seen so far.
    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    /// Checks an observation against the family's support.
    pub fn validate(family: Family, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::InvalidObservation {
                value: x,
                reason: "observations must be finite",
            });
        }
        if family == Family::Exponential && x <= 0.0 {
            return Err(Error::InvalidObservation {
                value: x,
                reason: "exponential observations must be strictly positive",
            });
        }
        Ok(())
    }

    pub fn push(&mut self, x: f64) -> Result<()> {
        Self::validate(self.kind.family(), x)?;
        self.set.push_unchecked(x);
        Ok(())
    }

    /// Skips validation; used by simulations that generate valid data.
    #[inline]
    pub(crate) fn push_unchecked(&mut self, x: f64) {
        self.set.push_unchecked(x);
    }

    /// Current maximised statistic and its split, or `None` before any split
    /// is admissible.
    pub fn max_statistic(&mut self) -> Option<(f64, usize)> {
        match &mut self.kernel {
            Kernel::Gaussian(k, which) => k.max_statistic(&self.set, *which),
            Kernel::Exponential(k, corrected) => k.max_statistic(&self.set, *corrected),
        }
    }
}
