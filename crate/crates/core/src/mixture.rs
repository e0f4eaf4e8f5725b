//! Beta-mixture densities for alternative p-values.

use rand::Rng;
use rand_distr::{Beta as BetaSampler, Distribution};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Continuous, ContinuousCDF};

use crate::error::{config, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaComponent {
    pub a: f64,
    pub b: f64,
    pub weight: f64,
}

/// A finite mixture of Beta densities on (0, 1).
///
/// Validation requires `a <= 1 <= b` for every component, so the mixture
/// density is non-increasing in p.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BetaMixture {
    pub components: Vec<BetaComponent>,
}

impl BetaMixture {
    pub fn new(components: Vec<BetaComponent>) -> Result<Self> {
        let m = Self { components };
        m.validate()?;
        Ok(m)
    }

    pub fn single(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![BetaComponent { a, b, weight: 1.0 }])
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(config("beta mixture has no components"));
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(config(format!("beta mixture weights sum to {total}, not 1")));
        }
        for c in &self.components {
            if !(c.weight >= 0.0) {
                return Err(config("negative beta mixture weight"));
            }
            if !(c.a > 0.0 && c.a <= 1.0 && c.b >= 1.0 && c.b.is_finite()) {
                return Err(config(format!(
                    "beta component ({}, {}) is not non-increasing; need 0 < a <= 1 <= b",
                    c.a, c.b
                )));
            }
        }
        Ok(())
    }

    fn dists(&self) -> impl Iterator<Item = (f64, Beta)> + '_ {
        self.components
            .iter()
            .map(|c| (c.weight, Beta::new(c.a, c.b).expect("validated shape")))
    }

    pub fn pdf(&self, p: f64) -> f64 {
        self.dists().map(|(w, d)| w * d.pdf(p)).sum()
    }

    pub fn cdf(&self, p: f64) -> f64 {
        self.dists().map(|(w, d)| w * d.cdf(p)).sum()
    }

    /// One draw; exact 0 or 1 is redrawn.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                pick = i;
                break;
            }
        }
        let c = self.components[pick];
        let beta = BetaSampler::new(c.a, c.b).expect("validated shape");
        loop {
            let p: f64 = beta.sample(rng);
            if p > 0.0 && p < 1.0 {
                return p;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_point_one_one_density() {
        let m = BetaMixture::single(0.1, 1.0).unwrap();
        let p: f64 = 0.3;
        assert!((m.pdf(p) - 0.1 * p.powf(-0.9)).abs() < 1e-12);
        assert!((m.cdf(p) - p.powf(0.1)).abs() < 1e-12);
    }

    #[test]
    fn rejects_increasing_components() {
        assert!(BetaMixture::single(2.0, 1.0).is_err());
        assert!(BetaMixture::single(0.5, 0.5).is_err());
        assert!(BetaMixture::new(vec![
            BetaComponent { a: 0.3, b: 4.0, weight: 0.5 },
            BetaComponent { a: 0.1, b: 6.0, weight: 0.4 },
        ])
        .is_err());
    }
}
