//! Decision rules `x -> t(x)`: hypothesis `i` is discovered when `p_i < t(x_i)`.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Standardizer};
use crate::error::{config, Result};
use crate::mlp::Mlp;

/// Largest admissible threshold cap. Keeps the rejection region `(0, t)` and
/// the mirrored region `(1 - t, 1)` disjoint.
pub const MAX_T_CAP: f64 = 0.5;

/// A covariate-dependent p-value threshold.
///
/// Implementations are pure and deterministic, and return values in
/// `[0, t_cap]` with `t_cap <= 0.5`. A zero threshold discovers nothing.
pub trait DecisionRule: Send + Sync {
    /// Feature dimension the rule expects.
    fn dim(&self) -> usize;

    fn t_cap(&self) -> f64;

    /// Threshold at raw (unstandardized) features `x`.
    fn threshold(&self, x: &[f64]) -> f64;

    /// Thresholds for every record of `data`, in order.
    fn thresholds(&self, data: &Dataset) -> Vec<f64> {
        data.records()
            .iter()
            .map(|r| self.threshold(&r.features))
            .collect()
    }
}

pub(crate) fn check_cap(t_cap: f64) -> Result<()> {
    if !(t_cap > 0.0 && t_cap <= MAX_T_CAP) {
        return Err(config(format!("t_cap must lie in (0, 0.5], got {t_cap}")));
    }
    Ok(())
}

/// The same threshold everywhere (BH-style).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantRule {
    pub value: f64,
    pub dim: usize,
    pub t_cap: f64,
}

impl ConstantRule {
    pub fn new(value: f64, dim: usize, t_cap: f64) -> Result<Self> {
        check_cap(t_cap)?;
        if !(0.0..=t_cap).contains(&value) {
            return Err(config(format!("threshold {value} outside [0, {t_cap}]")));
        }
        Ok(Self { value, dim, t_cap })
    }
}

impl DecisionRule for ConstantRule {
    fn dim(&self) -> usize {
        self.dim
    }

    fn t_cap(&self) -> f64 {
        self.t_cap
    }

    fn threshold(&self, _x: &[f64]) -> f64 {
        self.value
    }
}

/// Piecewise-constant rule: each point takes the threshold of its nearest
/// centroid (Euclidean distance in standardized feature space).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupedRule {
    pub standardizer: Standardizer,
    pub centers: Vec<Vec<f64>>,
    pub thresholds: Vec<f64>,
    pub t_cap: f64,
}

impl GroupedRule {
    pub fn new(
        standardizer: Standardizer,
        centers: Vec<Vec<f64>>,
        thresholds: Vec<f64>,
        t_cap: f64,
    ) -> Result<Self> {
        check_cap(t_cap)?;
        if centers.is_empty() || centers.len() != thresholds.len() {
            return Err(config("grouped rule needs one threshold per (non-empty) center"));
        }
        if centers.iter().any(|c| c.len() != standardizer.dim()) {
            return Err(config("center dimension differs from the standardizer"));
        }
        if thresholds.iter().any(|t| !(0.0..=t_cap).contains(t)) {
            return Err(config("group threshold outside [0, t_cap]"));
        }
        Ok(Self {
            standardizer,
            centers,
            thresholds,
            t_cap,
        })
    }

    /// Index of the centroid nearest to raw features `x`.
    pub fn group_of(&self, x: &[f64]) -> usize {
        let z = self.standardizer.apply(x);
        nearest(&self.centers, &z)
    }
}

pub(crate) fn nearest(centers: &[Vec<f64>], z: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (g, c) in centers.iter().enumerate() {
        let d: f64 = c.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.1 {
            best = (g, d);
        }
    }
    best.0
}

impl DecisionRule for GroupedRule {
    fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    fn t_cap(&self) -> f64 {
        self.t_cap
    }

    fn threshold(&self, x: &[f64]) -> f64 {
        self.thresholds[self.group_of(x)]
    }
}

/// A network-backed rule `min(scale * net(standardize(x)), t_cap)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpRule {
    pub network: Mlp,
    pub standardizer: Standardizer,
    /// Multiplier chosen on the validation fold; 1 for an unscaled network.
    pub scale: f64,
    pub t_cap: f64,
}

impl MlpRule {
    pub fn new(network: Mlp, standardizer: Standardizer, scale: f64, t_cap: f64) -> Result<Self> {
        check_cap(t_cap)?;
        if network.input_dim() != standardizer.dim() {
            return Err(config(format!(
                "network input dimension {} differs from standardizer dimension {}",
                network.input_dim(),
                standardizer.dim()
            )));
        }
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(config(format!("rule scale must be finite and >= 0, got {scale}")));
        }
        Ok(Self {
            network,
            standardizer,
            scale,
            t_cap,
        })
    }

    pub fn with_scale(&self, scale: f64) -> Self {
        Self {
            scale,
            ..self.clone()
        }
    }

    #[inline]
    fn finish(&self, raw: f64) -> f64 {
        (self.scale * raw).min(self.t_cap)
    }

    /// Unscaled network outputs at already-standardized features.
    pub fn raw_outputs<X: AsRef<[f64]>>(&self, standardized: &[X]) -> Vec<f64> {
        self.network.outputs(standardized)
    }
}

impl DecisionRule for MlpRule {
    fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    fn t_cap(&self) -> f64 {
        self.t_cap
    }

    fn threshold(&self, x: &[f64]) -> f64 {
        let z = self.standardizer.apply(x);
        self.finish(self.network.eval_unchecked(&z))
    }

    fn thresholds(&self, data: &Dataset) -> Vec<f64> {
        let zs: Vec<Vec<f64>> = data
            .records()
            .iter()
            .map(|r| self.standardizer.apply(&r.features))
            .collect();
        self.raw_outputs(&zs).into_iter().map(|t| self.finish(t)).collect()
    }
}

/// Any serializable rule; the on-disk format of saved rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rule {
    Constant(ConstantRule),
    Grouped(GroupedRule),
    Mlp(MlpRule),
}

impl Rule {
    fn inner(&self) -> &dyn DecisionRule {
        match self {
            Rule::Constant(r) => r,
            Rule::Grouped(r) => r,
            Rule::Mlp(r) => r,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl DecisionRule for Rule {
    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn t_cap(&self) -> f64 {
        self.inner().t_cap()
    }

    fn threshold(&self, x: &[f64]) -> f64 {
        self.inner().threshold(x)
    }

    fn thresholds(&self, data: &Dataset) -> Vec<f64> {
        self.inner().thresholds(data)
    }
}
