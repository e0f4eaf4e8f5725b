//! Synthetic datasets with known ground truth.
//!
//! Features are uniform on the unit cube. Each hypothesis is an alternative
//! with probability `pi1(x)`; null p-values are uniform and alternative
//! p-values follow either a Beta mixture or a one-sided Gaussian test with
//! covariate-dependent effect size. Nulls can optionally be made dependent in
//! equicorrelated Gaussian blocks.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::erf::{erfc, erfc_inv};

use crate::dataset::{Dataset, HypothesisRecord};
use crate::error::{config, Result};
use crate::mixture::{BetaComponent, BetaMixture};
use crate::rng::{stream, streams};
use crate::rule::{check_cap, DecisionRule};

/// Records generated per random stream.
const CHUNK: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[serde(rename = "gm_1d")]
    Gm1d,
    #[serde(rename = "gm_2d")]
    Gm2d,
    #[serde(rename = "slope_1d")]
    Slope1d,
    #[serde(rename = "slope_2d")]
    Slope2d,
    #[serde(rename = "gm_5d")]
    Gm5d,
    IhwLike,
    WeakDep,
    PureNull,
    TwoGroup,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::Gm1d,
        Family::Gm2d,
        Family::Slope1d,
        Family::Slope2d,
        Family::Gm5d,
        Family::IhwLike,
        Family::WeakDep,
        Family::PureNull,
        Family::TwoGroup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gm1d => "gm_1d",
            Family::Gm2d => "gm_2d",
            Family::Slope1d => "slope_1d",
            Family::Slope2d => "slope_2d",
            Family::Gm5d => "gm_5d",
            Family::IhwLike => "ihw_like",
            Family::WeakDep => "weak_dep",
            Family::PureNull => "pure_null",
            Family::TwoGroup => "two_group",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Family::ALL.iter().map(|f| f.name()).collect();
            config(format!("unknown family '{s}'; valid families: {}", names.join(", ")))
        })
    }
}

/// A Gaussian bump `height * exp(-|x - center|^2 / (2 width^2))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: Vec<f64>,
    pub height: f64,
    pub width: f64,
}

/// Alternative proportion `pi1(x)` as a function of the informative features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Prior {
    /// Sum of Gaussian bumps.
    Bumps { bumps: Vec<Bump> },
    /// `intercept + gradient * mean(x)`.
    Slope { intercept: f64, gradient: f64 },
    /// `below` when `x_0 < cut`, else `above`.
    Step { cut: f64, below: f64, above: f64 },
    Constant { value: f64 },
}

/// Law of alternative p-values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Alternative {
    /// The same Beta mixture everywhere.
    Beta { mixture: BetaMixture },
    /// One-sided z-test: `z ~ N(mu(x), 1)`, `p = 1 - Phi(z)`, with
    /// `mu(x) = mean_intercept + mean_slope * x_0`.
    Gaussian { mean_intercept: f64, mean_slope: f64 },
}

/// Equicorrelated null blocks of consecutive hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dependence {
    pub block: usize,
    pub rho: f64,
}

impl Default for Dependence {
    fn default() -> Self {
        Self { block: 10, rho: 0.5 }
    }
}

/// Full description of a synthetic dataset. Serialized alongside generated
/// data so every run is self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSpec {
    pub family: Family,
    pub n: usize,
    pub dim: usize,
    /// `pi1` and the effect size depend only on the first `informative` features.
    pub informative: usize,
    pub prior: Prior,
    pub alternative: Alternative,
    #[serde(default)]
    pub dependence: Option<Dependence>,
    pub seed: u64,
}

fn bump(center: &[f64]) -> Bump {
    Bump {
        center: center.to_vec(),
        height: 0.6,
        width: 0.1,
    }
}

/// `0.7 Beta(0.3, 4) + 0.3 Beta(0.1, 6)`.
pub fn default_alternative() -> BetaMixture {
    BetaMixture {
        components: vec![
            BetaComponent {
                a: 0.3,
                b: 4.0,
                weight: 0.7,
            },
            BetaComponent {
                a: 0.1,
                b: 6.0,
                weight: 0.3,
            },
        ],
    }
}

impl GenSpec {
    /// The family's default parameters.
    pub fn new(family: Family, n: usize, seed: u64) -> Self {
        let beta = Alternative::Beta {
            mixture: default_alternative(),
        };
        let gm2 = Prior::Bumps {
            bumps: vec![bump(&[0.2, 0.2]), bump(&[0.75, 0.3]), bump(&[0.4, 0.8])],
        };
        let slope = Prior::Slope {
            intercept: 0.05,
            gradient: 0.25,
        };
        let gaussian = Alternative::Gaussian {
            mean_intercept: 1.0,
            mean_slope: 2.5,
        };
        let (dim, informative, prior, alternative, dependence) = match family {
            Family::Gm1d => (
                1,
                1,
                Prior::Bumps {
                    bumps: vec![bump(&[0.2]), bump(&[0.7])],
                },
                beta,
                None,
            ),
            Family::Gm2d => (2, 2, gm2, beta, None),
            Family::Gm5d => (5, 2, gm2, beta, None),
            Family::Slope1d => (1, 1, slope, beta, None),
            Family::Slope2d => (2, 2, slope, beta, None),
            Family::IhwLike => (1, 1, Prior::Constant { value: 0.1 }, gaussian, None),
            Family::WeakDep => (
                1,
                1,
                Prior::Constant { value: 0.1 },
                gaussian,
                Some(Dependence::default()),
            ),
            Family::PureNull => (1, 1, Prior::Constant { value: 0.0 }, beta, None),
            Family::TwoGroup => (
                1,
                1,
                Prior::Step {
                    cut: 0.5,
                    below: 0.0,
                    above: 0.4,
                },
                beta,
                None,
            ),
        };
        Self {
            family,
            n,
            dim,
            informative,
            prior,
            alternative,
            dependence,
            seed,
        }
    }

    /// Alternative proportion at `x`.
    pub fn pi1(&self, x: &[f64]) -> f64 {
        let x = &x[..self.informative];
        match &self.prior {
            Prior::Bumps { bumps } => bumps
                .iter()
                .map(|b| {
                    let d2: f64 = b.center.iter().zip(x).map(|(c, v)| (v - c) * (v - c)).sum();
                    b.height * (-d2 / (2.0 * b.width * b.width)).exp()
                })
                .sum(),
            Prior::Slope {
                intercept,
                gradient,
            } => intercept + gradient * x.iter().sum::<f64>() / x.len() as f64,
            Prior::Step { cut, below, above } => {
                if x[0] < *cut {
                    *below
                } else {
                    *above
                }
            }
            Prior::Constant { value } => *value,
        }
    }

    /// Density of alternative p-values at `p` for features `x`.
    pub fn alternative_pdf(&self, p: f64, x: &[f64]) -> f64 {
        match &self.alternative {
            Alternative::Beta { mixture } => mixture.pdf(p),
            Alternative::Gaussian {
                mean_intercept,
                mean_slope,
            } => {
                let mu = mean_intercept + mean_slope * x[0];
                let z = upper_quantile(p);
                (mu * z - 0.5 * mu * mu).exp()
            }
        }
    }

    /// `P(p < t)` for an alternative at `x`.
    pub fn alternative_cdf(&self, t: f64, x: &[f64]) -> f64 {
        match &self.alternative {
            Alternative::Beta { mixture } => mixture.cdf(t),
            Alternative::Gaussian {
                mean_intercept,
                mean_slope,
            } => {
                let mu = mean_intercept + mean_slope * x[0];
                upper_tail(upper_quantile(t) - mu)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(config("n must be positive"));
        }
        if self.dim == 0 || self.informative == 0 || self.informative > self.dim {
            return Err(config(format!(
                "need 1 <= informative ({}) <= dim ({})",
                self.informative, self.dim
            )));
        }
        match &self.prior {
            Prior::Bumps { bumps } => {
                if bumps.is_empty() {
                    return Err(config("bump prior needs at least one bump"));
                }
                for b in bumps {
                    if b.center.len() != self.informative {
                        return Err(config("bump center dimension differs from informative dims"));
                    }
                    if !(b.height >= 0.0 && b.width > 0.0) {
                        return Err(config("bump heights must be >= 0 and widths > 0"));
                    }
                }
            }
            Prior::Step { cut, .. } if !(0.0..=1.0).contains(cut) => {
                return Err(config("step cut must lie in [0, 1]"));
            }
            _ => {}
        }
        let worst = self.pi1_extremes();
        if worst.0 < 0.0 || worst.1 > 1.0 {
            return Err(config(format!(
                "alternative proportion ranges over [{:.4}, {:.4}], outside [0, 1]",
                worst.0, worst.1
            )));
        }
        match &self.alternative {
            Alternative::Beta { mixture } => mixture.validate()?,
            Alternative::Gaussian {
                mean_intercept,
                mean_slope,
            } => {
                // effect sizes must stay non-negative so the density decreases in p
                if !(*mean_intercept >= 0.0 && mean_intercept + mean_slope >= 0.0) {
                    return Err(config("gaussian effect size must be >= 0 on [0, 1]"));
                }
            }
        }
        if let Some(dep) = self.dependence {
            if dep.block < 2 || !(0.0..1.0).contains(&dep.rho) {
                return Err(config("dependence needs block >= 2 and rho in [0, 1)"));
            }
        }
        Ok(())
    }

    /// Min and max of `pi1` over bump centers, corners and a grid of the
    /// informative cube.
    fn pi1_extremes(&self) -> (f64, f64) {
        let k = self.informative;
        let per_axis: usize = match k {
            1 => 1001,
            2 => 201,
            3 => 41,
            _ => 11,
        };
        let mut pts: Vec<Vec<f64>> = Vec::new();
        if let Prior::Bumps { bumps } = &self.prior {
            pts.extend(bumps.iter().map(|b| b.center.clone()));
        }
        let total = per_axis.saturating_pow(k as u32).min(200_000);
        for mut idx in 0..total {
            let mut x = Vec::with_capacity(k);
            for _ in 0..k {
                x.push((idx % per_axis) as f64 / (per_axis - 1) as f64);
                idx /= per_axis;
            }
            pts.push(x);
        }
        let mut pad = vec![0.0; self.dim];
        pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            pad[..k].copy_from_slice(x);
            let v = self.pi1(&pad);
            (lo.min(v), hi.max(v))
        })
    }
}

/// `1 - Phi(z)`.
pub fn upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// `z` with `1 - Phi(z) = p`.
pub fn upper_quantile(p: f64) -> f64 {
    SQRT_2 * erfc_inv(2.0 * p)
}

fn uniform_open(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Null p-value from a standard-normal statistic; redraws the independent
/// part in the (practically impossible) case of an exact 0 or 1.
fn null_from_gaussian(rng: &mut ChaCha8Rng, shared: f64, rho: f64) -> f64 {
    loop {
        let e: f64 = rng.sample(StandardNormal);
        let p = upper_tail(rho.sqrt() * shared + (1.0 - rho).sqrt() * e);
        if p > 0.0 && p < 1.0 {
            return p;
        }
    }
}

fn alternative_p(spec: &GenSpec, rng: &mut ChaCha8Rng, x: &[f64]) -> f64 {
    match &spec.alternative {
        Alternative::Beta { mixture } => mixture.sample(rng),
        Alternative::Gaussian {
            mean_intercept,
            mean_slope,
        } => {
            let mu = mean_intercept + mean_slope * x[0];
            loop {
                let e: f64 = rng.sample(StandardNormal);
                let p = upper_tail(mu + e);
                if p > 0.0 && p < 1.0 {
                    return p;
                }
            }
        }
    }
}

fn chunk_len(spec: &GenSpec) -> usize {
    match spec.dependence {
        Some(dep) => (CHUNK / dep.block).max(1) * dep.block,
        None => CHUNK,
    }
}

fn generate_chunk(spec: &GenSpec, chunk: usize, start: usize, len: usize) -> Vec<HypothesisRecord> {
    let mut rng = stream(spec.seed, streams::GENERATE + chunk as u64);
    let mut out = Vec::with_capacity(len);
    let mut shared = 0.0;
    for i in 0..len {
        if let Some(dep) = spec.dependence {
            if (start + i).is_multiple_of(dep.block) {
                shared = rng.sample(StandardNormal);
            }
        }
        let x: Vec<f64> = (0..spec.dim).map(|_| rng.random::<f64>()).collect();
        let alt = rng.random::<f64>() < spec.pi1(&x);
        let p = if alt {
            alternative_p(spec, &mut rng, &x)
        } else {
            match spec.dependence {
                Some(dep) => null_from_gaussian(&mut rng, shared, dep.rho),
                None => uniform_open(&mut rng),
            }
        };
        out.push(HypothesisRecord::new(p, x, Some(alt)));
    }
    out
}

/// Draws `spec.n` labelled hypotheses. Deterministic given the spec; chunks
/// use independent random streams and are generated in parallel.
pub fn generate(spec: &GenSpec) -> Result<Dataset> {
    spec.validate()?;
    let len = chunk_len(spec);
    let chunks: Vec<(usize, usize)> = (0..spec.n.div_ceil(len))
        .map(|c| (c, (spec.n - c * len).min(len)))
        .collect();
    let records: Vec<HypothesisRecord> = chunks
        .par_iter()
        .flat_map_iter(|&(c, l)| generate_chunk(spec, c, c * len, l))
        .collect();
    Dataset::new(records)
}

/// Like [`generate`] but with equicorrelated Gaussian null blocks, using the
/// default block structure when the spec has none.
pub fn generate_weak_dep(spec: &GenSpec) -> Result<Dataset> {
    let mut spec = spec.clone();
    spec.dependence.get_or_insert_with(Dependence::default);
    generate(&spec)
}

/// The optimal rule for a known generator: at every `x`, the threshold where
/// `pi0(x) / f(t | x) = c`, with the constant `c` calibrated so that the
/// model FDR over a sample of feature vectors equals `alpha`.
#[derive(Debug, Clone)]
pub struct OracleRule {
    spec: GenSpec,
    /// `(weight, a - 1, b - 1, -ln B(a, b))` per Beta component, when the
    /// alternative does not depend on `x`.
    beta_terms: Option<Vec<[f64; 4]>>,
    pub c: f64,
    pub t_cap: f64,
}

impl OracleRule {
    pub fn calibrate(spec: &GenSpec, alpha: f64, t_cap: f64, samples: usize) -> Result<Self> {
        spec.validate()?;
        check_cap(t_cap)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(config(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let mut rng = stream(spec.seed, streams::GENERATE - 1);
        let xs: Vec<Vec<f64>> = (0..samples.max(1))
            .map(|_| (0..spec.dim).map(|_| rng.random::<f64>()).collect())
            .collect();
        let beta_terms = match &spec.alternative {
            Alternative::Beta { mixture } => Some(
                mixture
                    .components
                    .iter()
                    .map(|c| [c.weight, c.a - 1.0, c.b - 1.0, -ln_beta(c.a, c.b)])
                    .collect(),
            ),
            Alternative::Gaussian { .. } => None,
        };
        let mut rule = Self {
            spec: spec.clone(),
            beta_terms,
            c: 1.0,
            t_cap,
        };
        let fdr = |rule: &Self| {
            // per-sample terms in parallel, summed in a fixed order
            let terms: Vec<(f64, f64)> = xs
                .par_iter()
                .map(|x| {
                    let t = rule.threshold(x);
                    let pi1 = spec.pi1(x);
                    ((1.0 - pi1) * t, pi1 * spec.alternative_cdf(t, x))
                })
                .collect();
            let (mut num, mut den) = (0.0, 0.0);
            for (null, alt) in terms {
                num += null;
                den += null + alt;
            }
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        };
        if fdr(&rule) <= alpha {
            return Ok(rule);
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            rule.c = 0.5 * (lo + hi);
            if fdr(&rule) <= alpha {
                lo = rule.c;
            } else {
                hi = rule.c;
            }
        }
        rule.c = lo;
        Ok(rule)
    }
}

impl DecisionRule for OracleRule {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn t_cap(&self) -> f64 {
        self.t_cap
    }

    fn threshold(&self, x: &[f64]) -> f64 {
        let pi1 = self.spec.pi1(x);
        let pi0 = 1.0 - pi1;
        if pi1 <= 0.0 || self.c <= 0.0 {
            return 0.0;
        }
        let level = pi0 / self.c;
        let alt = |t: f64| match &self.beta_terms {
            Some(terms) => {
                let (lt, lu) = (t.ln(), (-t).ln_1p());
                terms.iter().map(|k| k[0] * (k[1] * lt + k[2] * lu + k[3]).exp()).sum()
            }
            None => self.spec.alternative_pdf(t, x),
        };
        let f = |t: f64| pi0 + pi1 * alt(t);
        if f(self.t_cap) >= level {
            return self.t_cap;
        }
        let (mut lo, mut hi) = (0.0, self.t_cap);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if mid > 0.0 && f(mid) >= level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}
