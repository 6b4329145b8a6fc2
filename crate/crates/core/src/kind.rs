use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Distribution family of the monitored stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Gaussian,
    Exponential,
}

impl Family {
    /// Smallest segment on either side of an admissible split.
    pub fn min_segment(self) -> usize {
        match self {
            Family::Gaussian => 2,
            Family::Exponential => 1,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Gaussian => "gaussian",
            Family::Exponential => "exponential",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "gaussian" => Ok(Family::Gaussian),
            "exponential" => Ok(Family::Exponential),
            other => Err(Error::Config(format!("unknown family `{other}`"))),
        }
    }
}

/// The maximised statistic a detector compares against its thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticKind {
    /// `max_k 2·D_{k,t} / E[D_{k,t}]`.
    CorrectedGaussian,
    /// `max_k D_{k,t} / C_{k,t}` with the Bartlett factor `C_{k,t}`.
    HzGaussian,
    /// `max_k M_{k,t} / E[M_{k,t}]`.
    CorrectedExponential,
    /// `max_k M_{k,t}`.
    RawExponential,
}

impl StatisticKind {
    pub const ALL: [StatisticKind; 4] = [
        StatisticKind::CorrectedGaussian,
        StatisticKind::HzGaussian,
        StatisticKind::CorrectedExponential,
        StatisticKind::RawExponential,
    ];

    pub fn family(self) -> Family {
        match self {
            StatisticKind::CorrectedGaussian | StatisticKind::HzGaussian => Family::Gaussian,
            StatisticKind::CorrectedExponential | StatisticKind::RawExponential => Family::Exponential,
        }
    }

    pub fn is_corrected(self) -> bool {
        matches!(
            self,
            StatisticKind::CorrectedGaussian | StatisticKind::CorrectedExponential
        )
    }

    /// The corrected or uncorrected statistic of a family.
    pub fn for_family(family: Family, corrected: bool) -> Self {
        match (family, corrected) {
            (Family::Gaussian, true) => StatisticKind::CorrectedGaussian,
            (Family::Gaussian, false) => StatisticKind::HzGaussian,
            (Family::Exponential, true) => StatisticKind::CorrectedExponential,
            (Family::Exponential, false) => StatisticKind::RawExponential,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StatisticKind::CorrectedGaussian => "corrected-gaussian",
            StatisticKind::HzGaussian => "hz-gaussian",
            StatisticKind::CorrectedExponential => "corrected-exponential",
            StatisticKind::RawExponential => "raw-exponential",
        }
    }

    /// Column label used in result grids.
    pub fn label(self) -> &'static str {
        match self {
            StatisticKind::CorrectedGaussian => "D^c_t",
            StatisticKind::HzGaussian => "H_t",
            StatisticKind::CorrectedExponential => "M^c_t",
            StatisticKind::RawExponential => "M_t",
        }
    }
}

impl fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StatisticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        StatisticKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown statistic kind `{s}`")))
    }
}
