//! Optimal per-group thresholds.
//!
//! With non-increasing alternative densities, the discovery-maximizing rule at
//! a fixed false discovery level puts every group's threshold where the ratio
//! of its null level to its p-value density is the same constant. The
//! procedures here scan that constant: exactly for known mixtures, and on
//! isotonic histogram estimates for data.

use serde::{Deserialize, Serialize};

use crate::error::{config, invalid, Result};
use crate::mixture::BetaMixture;
use crate::rule::check_cap;

/// Width of the top tail `(1 - w, 1]` used to estimate the density at p = 1.
pub const TAIL_WIDTH: f64 = 0.1;
/// Number of ratio values scanned.
pub const RATIO_GRID: usize = 400;

/// `n` equal-width bins on (0, 1).
pub fn uniform_edges(n: usize) -> Vec<f64> {
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

/// `n_log` log-spaced bins on `[lo, split)` below `n_lin` equal bins on
/// `[split, 1)`, plus a first bin `[0, lo)`. Fine resolution near zero, where
/// small thresholds live.
pub fn log_edges(lo: f64, split: f64, n_log: usize, n_lin: usize) -> Vec<f64> {
    assert!(0.0 < lo && lo < split && split < 1.0 && n_log > 0 && n_lin > 0);
    let mut e = vec![0.0];
    let ratio = (split / lo).ln();
    for i in 0..n_log {
        e.push(lo * (ratio * i as f64 / n_log as f64).exp());
    }
    for i in 0..n_lin {
        e.push(split + (1.0 - split) * i as f64 / n_lin as f64);
    }
    e.push(1.0);
    e
}

/// Default binning for data-driven thresholds: 100 log-spaced bins between
/// 1e-5 and 0.1 and 18 equal bins above.
pub fn default_data_edges() -> Vec<f64> {
    log_edges(1e-5, 0.1, 100, 18)
}

/// Weighted pool-adjacent-violators fit of a non-increasing sequence.
pub fn isotonic_decreasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // blocks of (weighted mean, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, l2) = blocks[blocks.len() - 1];
            let (m1, w1, l1) = blocks[blocks.len() - 2];
            if m1 >= m2 {
                break;
            }
            let w = w1 + w2;
            let m = if w > 0.0 { (m1 * w1 + m2 * w2) / w } else { (m1 + m2) / 2.0 };
            blocks.truncate(blocks.len() - 2);
            blocks.push((m, w, l1 + l2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, l)| std::iter::repeat_n(m, l))
        .collect()
}

/// Per-group p-value density estimates on shared bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDensity {
    /// Bin edges `0 = e_0 < ... < e_B = 1`; bin `i` is `[e_i, e_{i+1})`.
    pub edges: Vec<f64>,
    pub counts: Vec<Vec<usize>>,
    /// Isotonic (non-increasing) density per bin.
    pub density: Vec<Vec<f64>>,
    /// Estimated density at p = 1.
    pub f1: Vec<f64>,
    /// Groups whose tail was empty, so `f1` was floored at `1 / (n_g * w)`.
    pub f1_floored: Vec<bool>,
    pub sizes: Vec<usize>,
    #[serde(skip)]
    sorted: Vec<Vec<f64>>,
}

impl GroupDensity {
    /// Histograms p-values by group. `group_of[i]` must be below `k`.
    pub fn new(p: &[f64], group_of: &[usize], k: usize, edges: Vec<f64>) -> Result<Self> {
        if p.len() != group_of.len() {
            return Err(config("one group id per p-value required"));
        }
        if edges.len() < 2
            || edges[0] != 0.0
            || *edges.last().unwrap() != 1.0
            || edges.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(config("bin edges must increase strictly from 0 to 1"));
        }
        if let Some(&g) = group_of.iter().find(|&&g| g >= k) {
            return Err(invalid(format!("group id {g} out of range for {k} groups")));
        }
        let bins = edges.len() - 1;
        let mut sorted = vec![Vec::new(); k];
        for (&pv, &g) in p.iter().zip(group_of) {
            sorted[g].push(pv);
        }
        sorted.iter_mut().for_each(|s| s.sort_by(f64::total_cmp));
        let widths: Vec<f64> = edges.windows(2).map(|w| w[1] - w[0]).collect();
        let mut counts = Vec::with_capacity(k);
        let mut density = Vec::with_capacity(k);
        let mut f1 = Vec::with_capacity(k);
        let mut f1_floored = Vec::with_capacity(k);
        for s in &sorted {
            let mut c = vec![0usize; bins];
            for &pv in s {
                let b = edges.partition_point(|&e| e <= pv).saturating_sub(1).min(bins - 1);
                c[b] += 1;
            }
            let ng = s.len().max(1) as f64;
            let raw: Vec<f64> = c.iter().zip(&widths).map(|(&n, &w)| n as f64 / (ng * w)).collect();
            density.push(isotonic_decreasing(&raw, &widths));
            let tail = s.len() - s.partition_point(|&v| v <= 1.0 - TAIL_WIDTH);
            if tail == 0 {
                f1.push(1.0 / (ng * TAIL_WIDTH));
                f1_floored.push(true);
            } else {
                f1.push(tail as f64 / (ng * TAIL_WIDTH));
                f1_floored.push(false);
            }
            counts.push(c);
        }
        Ok(Self {
            edges,
            counts,
            density,
            f1,
            f1_floored,
            sizes: sorted.iter().map(Vec::len).collect(),
            sorted,
        })
    }

    pub fn groups(&self) -> usize {
        self.sizes.len()
    }

    /// `sup{t : f(t) >= r f(1)}` for group `g`: the right edge of the last bin
    /// meeting the ratio, or 0.
    pub fn threshold_at_ratio(&self, g: usize, r: f64) -> f64 {
        if self.sizes[g] == 0 {
            return 0.0;
        }
        let level = r * self.f1[g];
        let last = self.density[g].partition_point(|&d| d >= level);
        self.edges[last]
    }

    /// `#{p < t}` in group `g`.
    pub fn count_below(&self, g: usize, t: f64) -> usize {
        self.sorted[g].partition_point(|&p| p < t)
    }

    /// `#{p > 1 - t}` in group `g`.
    pub fn count_mirror(&self, g: usize, t: f64) -> usize {
        let s = &self.sorted[g];
        s.len() - s.partition_point(|&p| p <= 1.0 - t)
    }
}

/// How the pooled false discovery proportion is estimated during the scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PooledEstimate {
    /// `sum_g n_g t_g f(1|g)`.
    TailDensity,
    /// `sum_g #{p > 1 - t_g}` in group `g`.
    Mirror,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupThresholds {
    pub thresholds: Vec<f64>,
    /// Ratio `r` at the selected point; `None` when nothing was feasible.
    pub ratio: Option<f64>,
    pub fdp_hat: f64,
    pub discoveries: usize,
}

/// Scans the common ratio `r` and returns the per-group thresholds with the
/// most discoveries among those whose pooled estimate is at most `alpha`.
pub fn group_optimal_thresholds(
    dens: &GroupDensity,
    alpha: f64,
    t_cap: f64,
    estimate: PooledEstimate,
) -> Result<GroupThresholds> {
    check_cap(t_cap)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let k = dens.groups();
    let r_max = (0..k)
        .filter(|&g| dens.sizes[g] > 0)
        .map(|g| dens.density[g][0] / dens.f1[g])
        .fold(1.0f64, f64::max);
    let mut best = GroupThresholds {
        thresholds: vec![0.0; k],
        ratio: None,
        fdp_hat: 0.0,
        discoveries: 0,
    };
    let steps = RATIO_GRID.max(2) - 1;
    for i in 0..=steps {
        // from r_max down to 1
        let r = r_max.powf(1.0 - i as f64 / steps as f64);
        let ts: Vec<f64> = (0..k).map(|g| dens.threshold_at_ratio(g, r).min(t_cap)).collect();
        let d: usize = (0..k).map(|g| dens.count_below(g, ts[g])).sum();
        if d == 0 {
            continue;
        }
        let fd = match estimate {
            PooledEstimate::TailDensity => (0..k)
                .map(|g| dens.sizes[g] as f64 * ts[g] * dens.f1[g])
                .sum::<f64>(),
            PooledEstimate::Mirror => (0..k).map(|g| dens.count_mirror(g, ts[g])).sum::<usize>() as f64,
        };
        let fdp = fd / d as f64;
        if fdp <= alpha && d > best.discoveries {
            best = GroupThresholds {
                thresholds: ts,
                ratio: Some(r),
                fdp_hat: fdp,
                discoveries: d,
            };
        }
    }
    Ok(best)
}

/// One group of a known two-component model: mass `weight`, null fraction
/// `pi0` and alternative p-value density `alternative`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureGroup {
    pub weight: f64,
    pub pi0: f64,
    pub alternative: BetaMixture,
}

impl MixtureGroup {
    fn density(&self, t: f64) -> f64 {
        self.pi0 + (1.0 - self.pi0) * self.alternative.pdf(t)
    }

    fn cdf(&self, t: f64) -> f64 {
        self.pi0 * t + (1.0 - self.pi0) * self.alternative.cdf(t)
    }

    /// `sup{t <= cap : density(t) >= level}` by bisection.
    fn threshold_for_level(&self, level: f64, cap: f64) -> f64 {
        if self.density(cap) >= level {
            return cap;
        }
        let (mut lo, mut hi) = (0.0, cap);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= 0.0 || self.density(mid) >= level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

fn mixture_fdr(groups: &[MixtureGroup], ts: &[f64]) -> f64 {
    let num: f64 = groups.iter().zip(ts).map(|(g, &t)| g.weight * g.pi0 * t).sum();
    let den: f64 = groups.iter().zip(ts).map(|(g, &t)| g.weight * g.cdf(t)).sum();
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Exact optimal thresholds for known mixtures.
///
/// Every group's threshold satisfies `pi0_g / f_g(t_g) = c`; `c` is found by
/// bisection so that the mixture FDR equals `alpha` (or thresholds reach
/// `t_cap`). Groups with `pi0 = 1` get 0.
pub fn closed_form_optimal(groups: &[MixtureGroup], alpha: f64, t_cap: f64) -> Result<Vec<f64>> {
    check_cap(t_cap)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    for g in groups {
        g.alternative.validate()?;
        if !(0.0..=1.0).contains(&g.pi0) || !(g.weight >= 0.0) {
            return Err(config("mixture group needs pi0 in [0, 1] and weight >= 0"));
        }
    }
    let at = |c: f64| -> Vec<f64> {
        groups
            .iter()
            .map(|g| {
                if g.pi0 >= 1.0 {
                    0.0
                } else {
                    g.threshold_for_level(g.pi0 / c, t_cap)
                }
            })
            .collect()
    };
    let full = at(1.0);
    if mixture_fdr(groups, &full) <= alpha {
        return Ok(full);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid > 0.0 && mixture_fdr(groups, &at(mid)) <= alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if lo > 0.0 { at(lo) } else { vec![0.0; groups.len()] })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beta01() -> BetaMixture {
        BetaMixture::single(0.1, 1.0).unwrap()
    }

    #[test]
    fn isotonic_pools_violators() {
        let f = isotonic_decreasing(&[3.0, 1.0, 2.0, 0.5], &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(f, vec![3.0, 1.5, 1.5, 0.5]);
        let g = isotonic_decreasing(&[1.0, 2.0], &[3.0, 1.0]);
        assert_eq!(g, vec![1.25, 1.25]);
    }

    #[test]
    fn closed_form_single_group() {
        let g = MixtureGroup {
            weight: 1.0,
            pi0: 0.5,
            alternative: beta01(),
        };
        let t = closed_form_optimal(&[g], 0.1, 0.5).unwrap()[0];
        let want = 9f64.powf(-1.0 / 0.9);
        assert!((t - want).abs() < 1e-9, "{t} vs {want}");
    }

    #[test]
    fn closed_form_no_signal_is_zero() {
        let g = MixtureGroup {
            weight: 1.0,
            pi0: 1.0,
            alternative: beta01(),
        };
        assert_eq!(closed_form_optimal(&[g], 0.1, 0.5).unwrap(), vec![0.0]);
    }

    #[test]
    fn closed_form_loose_alpha_reaches_cap() {
        let g = MixtureGroup {
            weight: 1.0,
            pi0: 0.5,
            alternative: beta01(),
        };
        assert_eq!(closed_form_optimal(&[g], 0.999, 0.5).unwrap(), vec![0.5]);
    }

    #[test]
    fn closed_form_equalizes_ratio() {
        let groups = vec![
            MixtureGroup {
                weight: 0.5,
                pi0: 0.9,
                alternative: beta01(),
            },
            MixtureGroup {
                weight: 0.5,
                pi0: 0.4,
                alternative: BetaMixture::single(0.3, 4.0).unwrap(),
            },
        ];
        let ts = closed_form_optimal(&groups, 0.1, 0.5).unwrap();
        assert!(ts[1] > ts[0] && ts[0] > 0.0);
        let c0 = groups[0].pi0 / groups[0].density(ts[0]);
        let c1 = groups[1].pi0 / groups[1].density(ts[1]);
        assert!((c0 - c1).abs() < 1e-6, "{c0} vs {c1}");
        assert!((mixture_fdr(&groups, &ts) - 0.1).abs() < 1e-9);
    }

    #[test]
    fn identical_groups_get_identical_thresholds() {
        let p: Vec<f64> = (0..2000).map(|i| ((i * 7919) % 2000) as f64 / 2000.0 + 1e-4).collect();
        let p: Vec<f64> = p.iter().map(|v| v.powi(3).min(0.9999)).collect();
        let mut pp = p.clone();
        pp.extend_from_slice(&p);
        let groups: Vec<usize> = (0..4000).map(|i| i / 2000).collect();
        let dens = GroupDensity::new(&pp, &groups, 2, uniform_edges(100)).unwrap();
        let r = group_optimal_thresholds(&dens, 0.1, 0.5, PooledEstimate::TailDensity).unwrap();
        assert_eq!(r.thresholds[0], r.thresholds[1]);
    }

    #[test]
    fn empty_tail_floors_density_at_one() {
        let dens = GroupDensity::new(&[0.1, 0.2], &[0, 0], 1, uniform_edges(10)).unwrap();
        assert!(dens.f1_floored[0]);
        assert!((dens.f1[0] - 1.0 / (2.0 * 0.1)).abs() < 1e-12);
        assert_eq!(dens.counts[0].iter().sum::<usize>(), 2);
    }

    #[test]
    fn log_edges_are_increasing() {
        let e = default_data_edges();
        assert_eq!(e[0], 0.0);
        assert_eq!(*e.last().unwrap(), 1.0);
        assert!(e.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(e.len(), 1 + 100 + 19);
    }
}
