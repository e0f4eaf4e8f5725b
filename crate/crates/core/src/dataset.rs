//! Hypothesis records, the dataset container and feature standardization.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// One tested hypothesis: its p-value, covariates and (optionally) whether it
/// is truly an alternative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRecord {
    pub p_value: f64,
    pub features: Vec<f64>,
    /// `Some(true)` for an alternative, `Some(false)` for a null.
    pub truth: Option<bool>,
}

impl HypothesisRecord {
    pub fn new(p_value: f64, features: Vec<f64>, truth: Option<bool>) -> Self {
        Self {
            p_value,
            features,
            truth,
        }
    }
}

/// Per-dimension population mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Dimensions whose sample std was zero; their stored std is forced to 1.
    pub constant: Vec<bool>,
}

impl FeatureStats {
    fn compute(records: &[HypothesisRecord], dim: usize) -> Self {
        let n = records.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in records {
            for (m, &x) in mean.iter_mut().zip(&r.features) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in records {
            for ((v, &x), &m) in var.iter_mut().zip(&r.features).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let mut constant = vec![false; dim];
        let std = var
            .iter()
            .zip(constant.iter_mut())
            .map(|(&v, c)| {
                let s = (v / n).sqrt();
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    *c = true;
                    1.0
                }
            })
            .collect();
        Self {
            mean,
            std,
            constant,
        }
    }
}

/// An ordered collection of hypotheses sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<HypothesisRecord>,
    dim: usize,
    stats: FeatureStats,
}

impl Dataset {
    /// Validates the records and computes feature statistics.
    ///
    /// Rejects p-values outside the open interval (0, 1), ragged feature
    /// vectors, non-finite features, and datasets where only some records
    /// carry a truth label.
    pub fn new(records: Vec<HypothesisRecord>) -> Result<Self> {
        let dim = records.first().map_or(0, |r| r.features.len());
        if !records.is_empty() && dim == 0 {
            return Err(invalid("records must have at least one feature"));
        }
        let labelled = records.first().is_some_and(|r| r.truth.is_some());
        for (i, r) in records.iter().enumerate() {
            if !(r.p_value > 0.0 && r.p_value < 1.0) {
                return Err(invalid(format!(
                    "record {i}: p-value {} is outside (0, 1)",
                    r.p_value
                )));
            }
            if r.features.len() != dim {
                return Err(invalid(format!(
                    "record {i}: expected {dim} features, found {}",
                    r.features.len()
                )));
            }
            if r.features.iter().any(|x| !x.is_finite()) {
                return Err(invalid(format!("record {i}: non-finite feature")));
            }
            if r.truth.is_some() != labelled {
                return Err(invalid(format!(
                    "record {i}: truth labels must be present on all records or none"
                )));
            }
        }
        let stats = FeatureStats::compute(&records, dim);
        Ok(Self {
            records,
            dim,
            stats,
        })
    }

    pub fn records(&self) -> &[HypothesisRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feature_stats(&self) -> &FeatureStats {
        &self.stats
    }

    pub fn has_truth(&self) -> bool {
        self.records.first().is_some_and(|r| r.truth.is_some())
    }

    pub fn p_values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.p_value).collect()
    }

    pub fn truths(&self) -> Option<Vec<bool>> {
        self.records.iter().map(|r| r.truth).collect()
    }

    /// Copies the records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let records: Vec<_> = indices.iter().map(|&i| self.records[i].clone()).collect();
        let stats = FeatureStats::compute(&records, self.dim);
        Dataset {
            records,
            dim: self.dim,
            stats,
        }
    }
}

/// Affine per-dimension transform `x -> (x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn from_stats(stats: &FeatureStats) -> Self {
        Self {
            mean: stats.mean.clone(),
            std: stats.std.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        out
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (((o, &v), &m), &s) in out.iter_mut().zip(x).zip(&self.mean).zip(&self.std) {
            *o = (v - m) / s;
        }
    }
}

/// Result of [`standardize`]: the transformed data plus the transform itself,
/// so rules fitted on standardized features can be evaluated on raw ones.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub data: Dataset,
    pub transform: Standardizer,
    /// Dimensions that were constant (std forced to 1).
    pub constant: Vec<bool>,
}

/// Shifts and scales every feature dimension to population mean 0 and std 1.
pub fn standardize(data: &Dataset) -> Standardized {
    let transform = Standardizer::from_stats(&data.stats);
    let records = data
        .records
        .iter()
        .map(|r| HypothesisRecord {
            p_value: r.p_value,
            features: transform.apply(&r.features),
            truth: r.truth,
        })
        .collect::<Vec<_>>();
    let stats = FeatureStats::compute(&records, data.dim);
    Standardized {
        data: Dataset {
            records,
            dim: data.dim,
            stats,
        },
        transform,
        constant: data.stats.constant.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(features: &[&[f64]]) -> Dataset {
        Dataset::new(
            features
                .iter()
                .map(|f| HypothesisRecord::new(0.5, f.to_vec(), None))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_boundary_p_values() {
        for p in [0.0, 1.0, -0.1, f64::NAN] {
            let err = Dataset::new(vec![HypothesisRecord::new(p, vec![0.0], None)]);
            assert!(err.is_err(), "p = {p} accepted");
        }
    }

    #[test]
    fn rejects_ragged_and_partial_labels() {
        let ragged = vec![
            HypothesisRecord::new(0.5, vec![0.0], None),
            HypothesisRecord::new(0.5, vec![0.0, 1.0], None),
        ];
        assert!(Dataset::new(ragged).is_err());
        let partial = vec![
            HypothesisRecord::new(0.5, vec![0.0], Some(true)),
            HypothesisRecord::new(0.5, vec![0.0], None),
        ];
        assert!(Dataset::new(partial).is_err());
    }

    #[test]
    fn standardize_two_points() {
        let s = standardize(&ds(&[&[1.0], &[3.0]]));
        assert_eq!(s.data.records()[0].features, vec![-1.0]);
        assert_eq!(s.data.records()[1].features, vec![1.0]);
        assert_eq!(s.transform.mean, vec![2.0]);
        assert_eq!(s.transform.std, vec![1.0]);
        assert_eq!(s.constant, vec![false]);
    }

    #[test]
    fn standardize_constant_column_is_flagged() {
        let s = standardize(&ds(&[&[5.0], &[5.0]]));
        assert_eq!(s.data.records()[0].features, vec![0.0]);
        assert_eq!(s.data.records()[1].features, vec![0.0]);
        assert_eq!(s.constant, vec![true]);
        assert_eq!(s.transform.std, vec![1.0]);
    }

    #[test]
    fn standardize_is_idempotent() {
        let d = ds(&[&[0.3, 7.0], &[1.9, -2.0], &[4.4, 0.5], &[-1.0, 3.0]]);
        let once = standardize(&d).data;
        let twice = standardize(&once).data;
        for (a, b) in once.records().iter().zip(twice.records()) {
            for (x, y) in a.features.iter().zip(&b.features) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        for (m, s) in once.feature_stats().mean.iter().zip(&once.feature_stats().std) {
            assert!(m.abs() < 1e-12);
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_preserves_p_and_truth() {
        let d = Dataset::new(vec![
            HypothesisRecord::new(0.01, vec![1.0], Some(true)),
            HypothesisRecord::new(0.7, vec![2.0], Some(false)),
        ])
        .unwrap();
        let s = standardize(&d).data;
        assert_eq!(s.p_values(), d.p_values());
        assert_eq!(s.truths(), d.truths());
    }
}
