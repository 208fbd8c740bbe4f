//! Publication mechanisms for aggregated series.
//!
//! * [`direct_perturb`]: independent Laplace noise on every histogram.
//! * [`threshold_perturb`]: sparse-vector releases that reuse the previous noisy
//!   histogram while the data barely moves.
//! * [`static_hybrid`]: privately chosen daytime window released directly, the
//!   rest through threshold perturbation.
//! * [`dynamic_hybrid`]: the window is predicted from earlier days by linear
//!   regression, so no current-day budget is spent on selecting it.

mod direct;
mod division;
mod hybrid;
mod regression;
mod threshold;

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

pub use direct::{direct_perturb, HISTOGRAM_SENSITIVITY};
pub use division::{
    division_utility, select_division, utility_sensitivity, DivisionPoints, DivisionUtility, UtilityTable,
};
pub use hybrid::{
    dynamic_hybrid, predict_division, static_hybrid, DivisionForecast, DynamicParams, DEFAULT_DYNAMIC_SPLIT,
    DEFAULT_STATIC_SPLIT,
};
pub use regression::{fit_divisions, fit_line, DivisionModel, LinearFit};
pub use threshold::{threshold_perturb, ThresholdParams, DISTANCE_SENSITIVITY};

use crate::data::NoisySeries;
use crate::dp::PrivacyBudget;

/// Default log base for the division utility.
pub const DEFAULT_ALPHA: f64 = 12.0;

/// A published series with its budget ledger.
#[derive(Debug, Clone)]
pub struct Release {
    pub series: NoisySeries,
    pub budget: PrivacyBudget,
    /// Daytime window used by the hybrid schemes.
    pub division: Option<DivisionPoints>,
    /// Timestamps that received a fresh threshold-perturbation release.
    pub fresh: Vec<usize>,
    /// The dynamic scheme fell back to direct perturbation of the whole day.
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "kebab-case"))]
pub enum Scheme {
    Direct,
    Threshold,
    StaticHybrid,
    DynamicHybrid,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Direct, Scheme::Threshold, Scheme::StaticHybrid, Scheme::DynamicHybrid];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Direct => "direct",
            Scheme::Threshold => "threshold",
            Scheme::StaticHybrid => "static-hybrid",
            Scheme::DynamicHybrid => "dynamic-hybrid",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|scheme| scheme.name() == s)
            .ok_or_else(|| crate::Error::param("scheme", alloc::format!("unknown scheme `{s}`")))
    }
}
