//! Discovery accounting for a rule applied to a dataset.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{config, Result};
use crate::estimator::{discovery_count, mirror_count, ratio};
use crate::rule::DecisionRule;

/// Discoveries of a rule plus realized and estimated error counts.
///
/// FDP and FDP-hat are 0 when nothing is discovered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    /// Indices with `p < t(x)`, ascending.
    pub discovered: Vec<usize>,
    #[serde(rename = "D")]
    pub d: usize,
    /// True false discoveries; present when the data carries labels.
    #[serde(rename = "FD")]
    pub fd: Option<usize>,
    #[serde(rename = "FDP")]
    pub fdp: Option<f64>,
    /// Mirror-estimated false discoveries.
    #[serde(rename = "FD_hat")]
    pub fd_hat: usize,
    #[serde(rename = "FDP_hat")]
    pub fdp_hat: f64,
    pub alpha: f64,
}

impl DiscoveryReport {
    /// Builds a report from per-hypothesis p-values and thresholds.
    pub fn from_thresholds(p: &[f64], t: &[f64], truths: Option<&[bool]>, alpha: f64) -> Self {
        assert_eq!(p.len(), t.len(), "one threshold per p-value");
        let discovered: Vec<usize> = (0..p.len()).filter(|&i| p[i] < t[i]).collect();
        let d = discovered.len();
        debug_assert_eq!(d, discovery_count(p, t));
        let fd_hat = mirror_count(p, t);
        let fd = truths.map(|h| discovered.iter().filter(|&&i| !h[i]).count());
        Self {
            discovered,
            d,
            fd,
            fdp: fd.map(|fd| ratio(fd as f64, d)),
            fd_hat,
            fdp_hat: ratio(fd_hat as f64, d),
            alpha,
        }
    }
}

/// Discovers every hypothesis with `p < rule(x)`.
pub fn apply_rule(data: &Dataset, rule: &dyn DecisionRule, alpha: f64) -> Result<DiscoveryReport> {
    if rule.dim() != data.dim() {
        return Err(config(format!(
            "rule expects {} features, dataset has {}",
            rule.dim(),
            data.dim()
        )));
    }
    let truths = data.truths();
    Ok(DiscoveryReport::from_thresholds(
        &data.p_values(),
        &rule.thresholds(data),
        truths.as_deref(),
        alpha,
    ))
}
