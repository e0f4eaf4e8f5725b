//! Covariate-free and grouped comparison procedures: BH, Storey-BH and a
//! piecewise-constant grouped rule.

use serde::{Deserialize, Serialize};

use crate::dataset::{standardize, Dataset};
use crate::error::{config, Result};
use crate::kmeans::GroupAssignment;
use crate::oracle::{default_data_edges, group_optimal_thresholds, GroupDensity, PooledEstimate};
use crate::rule::{check_cap, ConstantRule, GroupedRule};

/// Storey's default tuning parameter.
pub const STOREY_LAMBDA: f64 = 0.4;
/// Groups with fewer members use the global BH threshold.
pub const MIN_GROUP_SIZE: usize = 100;

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Step-up threshold `p_(k*)` with `k* = max{k : p_(k) <= alpha k / n}`, or 0
/// when no `k` qualifies. Hypotheses with `p <= threshold` are discovered.
pub fn bh_threshold(pvals: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if pvals.is_empty() {
        return Err(config("BH needs at least one p-value"));
    }
    let mut s = pvals.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    Ok(s.iter()
        .enumerate()
        .rev()
        .find(|&(i, &p)| p <= alpha * (i + 1) as f64 / n)
        .map_or(0.0, |(_, &p)| p))
}

/// Number of p-values at or below a BH threshold.
pub fn bh_discoveries(pvals: &[f64], threshold: f64) -> usize {
    if threshold <= 0.0 {
        return 0;
    }
    pvals.iter().filter(|&&p| p <= threshold).count()
}

/// A constant rule discovering exactly `{p <= threshold}` under the strict
/// `p < t` convention.
pub fn bh_rule(threshold: f64, dim: usize, t_cap: f64) -> Result<ConstantRule> {
    check_cap(t_cap)?;
    let t = if threshold > 0.0 { threshold.next_up() } else { 0.0 };
    ConstantRule::new(t.min(t_cap), dim, t_cap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoreyResult {
    pub threshold: f64,
    pub pi0: f64,
    /// No p-value exceeded lambda, so pi0 was floored at `1 / ((1 - lambda) n)`.
    pub pi0_floored: bool,
}

/// `min(1, #{p > lambda} / ((1 - lambda) n))`, floored when the count is 0.
pub fn storey_pi0(pvals: &[f64], lambda: f64) -> Result<(f64, bool)> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(config(format!("lambda must lie in (0, 1), got {lambda}")));
    }
    if pvals.is_empty() {
        return Err(config("Storey estimate needs at least one p-value"));
    }
    let denom = (1.0 - lambda) * pvals.len() as f64;
    let above = pvals.iter().filter(|&&p| p > lambda).count();
    if above == 0 {
        Ok(((1.0 / denom).min(1.0), true))
    } else {
        Ok(((above as f64 / denom).min(1.0), false))
    }
}

/// BH at level `alpha / pi0` with Storey's null-proportion estimate.
pub fn storey_bh(pvals: &[f64], alpha: f64, lambda: f64) -> Result<StoreyResult> {
    check_alpha(alpha)?;
    let (pi0, pi0_floored) = storey_pi0(pvals, lambda)?;
    let level = alpha / pi0;
    let threshold = if level >= 1.0 {
        // every p-value qualifies at its own rank
        pvals.iter().copied().fold(0.0, f64::max)
    } else {
        bh_threshold(pvals, level)?
    };
    Ok(StoreyResult {
        threshold,
        pi0,
        pi0_floored,
    })
}

/// Options for [`group_bh`].
#[derive(Debug, Clone, PartialEq)]
pub struct GroupBhOptions {
    pub min_group_size: usize,
    pub t_cap: f64,
    pub edges: Vec<f64>,
}

impl Default for GroupBhOptions {
    fn default() -> Self {
        Self {
            min_group_size: MIN_GROUP_SIZE,
            t_cap: crate::rule::MAX_T_CAP,
            edges: default_data_edges(),
        }
    }
}

/// Piecewise-constant rule: per-group optimal thresholds from isotonic
/// histograms, calibrated with the pooled mirror estimate at `alpha`. Groups
/// below the minimum size take the global BH threshold.
///
/// `groups` must come from clustering the standardized features of `data`.
pub fn group_bh(
    data: &Dataset,
    groups: &GroupAssignment,
    alpha: f64,
    opts: &GroupBhOptions,
) -> Result<GroupedRule> {
    check_alpha(alpha)?;
    if groups.group_of.len() != data.len() {
        return Err(config("group assignment does not cover the dataset"));
    }
    let p = data.p_values();
    let bh = bh_threshold(&p, alpha)?;
    let fallback = bh_rule(bh, data.dim(), opts.t_cap)?.value;
    let sizes = groups.sizes();
    let big: Vec<usize> = (0..groups.k).filter(|&g| sizes[g] >= opts.min_group_size).collect();
    let mut thresholds = vec![fallback; groups.k];
    if !big.is_empty() {
        // re-index the well-populated groups and solve jointly
        let mut local = vec![usize::MAX; groups.k];
        for (li, &g) in big.iter().enumerate() {
            local[g] = li;
        }
        let (mut sub_p, mut sub_g) = (Vec::new(), Vec::new());
        for (&pv, &g) in p.iter().zip(&groups.group_of) {
            if local[g] != usize::MAX {
                sub_p.push(pv);
                sub_g.push(local[g]);
            }
        }
        let dens = GroupDensity::new(&sub_p, &sub_g, big.len(), opts.edges.clone())?;
        let sol = group_optimal_thresholds(&dens, alpha, opts.t_cap, PooledEstimate::Mirror)?;
        for (li, &g) in big.iter().enumerate() {
            thresholds[g] = sol.thresholds[li];
        }
    }
    let transform = standardize(data).transform;
    GroupedRule::new(transform, groups.centers.clone(), thresholds, opts.t_cap)
}
