//! Lloyd's k-means with k-means++ seeding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::rng::stream;
use crate::rule::nearest;

/// Cluster assignment of a point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub k: usize,
    /// Index of the nearest center for every point.
    pub group_of: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// Sum of squared distances after each assignment step.
    pub objective: Vec<f64>,
}

impl GroupAssignment {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &g in &self.group_of {
            s[g] += 1;
        }
        s
    }

    /// Members of group `g`, ascending.
    pub fn members(&self, g: usize) -> Vec<usize> {
        (0..self.group_of.len()).filter(|&i| self.group_of[i] == g).collect()
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Clusters `points` into `k` groups.
///
/// Seeds with k-means++, then alternates nearest-center assignment and mean
/// updates until assignments stop changing or `max_iter` is reached. A center
/// left without points is moved onto the point farthest from its own center.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<GroupAssignment> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(config(format!("k-means needs 1 <= k <= n, got k = {k}, n = {n}")));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(config("k-means points differ in dimension"));
    }
    let mut rng = stream(seed, crate::rng::streams::KMEANS);

    // k-means++ seeding
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            // every point coincides with a center already
            rng.random_range(0..n)
        };
        centers.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &centers[centers.len() - 1]));
        }
    }

    let mut group_of = vec![usize::MAX; n];
    let mut objective = Vec::new();
    for iter in 0..max_iter.max(1) {
        let mut changed = false;
        let mut obj = 0.0;
        for (i, p) in points.iter().enumerate() {
            let g = nearest(&centers, p);
            obj += dist2(p, &centers[g]);
            if group_of[i] != g {
                group_of[i] = g;
                changed = true;
            }
        }
        objective.push(obj);
        if !changed && iter > 0 {
            break;
        }
        update_centers(points, &group_of, &mut centers);
    }
    // final assignment so every point sits with its nearest (updated) center
    let mut obj = 0.0;
    for (i, p) in points.iter().enumerate() {
        group_of[i] = nearest(&centers, p);
        obj += dist2(p, &centers[group_of[i]]);
    }
    if objective.last() != Some(&obj) {
        objective.push(obj);
    }
    Ok(GroupAssignment {
        k,
        group_of,
        centers,
        objective,
    })
}

fn update_centers(points: &[Vec<f64>], group_of: &[usize], centers: &mut [Vec<f64>]) {
    let k = centers.len();
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &g) in points.iter().zip(group_of) {
        counts[g] += 1;
        for (s, &x) in sums[g].iter_mut().zip(p) {
            *s += x;
        }
    }
    for g in 0..k {
        if counts[g] > 0 {
            for (c, s) in centers[g].iter_mut().zip(&sums[g]) {
                *c = s / counts[g] as f64;
            }
        }
    }
    for g in 0..k {
        if counts[g] == 0 {
            let far = (0..points.len())
                .max_by(|&a, &b| {
                    let da = dist2(&points[a], &centers[group_of[a]]);
                    let db = dist2(&points[b], &centers[group_of[b]]);
                    da.total_cmp(&db).then(b.cmp(&a))
                })
                .expect("points are non-empty");
            centers[g] = points[far].clone();
        }
    }
}
