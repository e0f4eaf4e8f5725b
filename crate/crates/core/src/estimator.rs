//! False-discovery estimators for a decision rule.
//!
//! The mirror estimator counts p-values in the reflected region
//! `(1 - t(x), 1)`; under a null density that is uniform (or any density that
//! is non-increasing in p) this count over-estimates the number of false
//! discoveries in `(0, t(x))` on average. The expected-count estimator
//! `sum_i t(x_i)` is a smoother alternative.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::rule::DecisionRule;

/// Which false-discovery estimate drives training and rescaling.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[default]
    Mirror,
    Expected,
}

impl Estimator {
    /// Estimated false discoveries for p-values `p` under thresholds `t`.
    pub fn fd_hat(self, p: &[f64], t: &[f64]) -> f64 {
        match self {
            Estimator::Mirror => mirror_count(p, t) as f64,
            Estimator::Expected => t.iter().sum(),
        }
    }
}

/// `#{i : p_i < t_i}`.
pub fn discovery_count(p: &[f64], t: &[f64]) -> usize {
    p.iter().zip(t).filter(|(p, t)| p < t).count()
}

/// `#{i : p_i > 1 - t_i}`.
pub fn mirror_count(p: &[f64], t: &[f64]) -> usize {
    p.iter().zip(t).filter(|(&p, &t)| p > 1.0 - t).count()
}

/// `num / den`, or 0 when `den` is 0.
pub fn ratio(num: f64, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num / den as f64
    }
}

pub fn mirror_fd(data: &Dataset, rule: &dyn DecisionRule) -> usize {
    mirror_count(&data.p_values(), &rule.thresholds(data))
}

/// Mirror count over discoveries; 0 when nothing is discovered.
pub fn mirror_fdp(data: &Dataset, rule: &dyn DecisionRule) -> f64 {
    let (p, t) = (data.p_values(), rule.thresholds(data));
    ratio(mirror_count(&p, &t) as f64, discovery_count(&p, &t))
}

/// `sum_i t(x_i)`.
pub fn expected_fd(data: &Dataset, rule: &dyn DecisionRule) -> f64 {
    rule.thresholds(data).iter().sum()
}
