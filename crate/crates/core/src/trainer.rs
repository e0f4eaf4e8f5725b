//! Learned covariate-dependent thresholds with cross-fold FDP control.
//!
//! The data is split into `M` folds. For each fold `j` a network is fitted on
//! the training folds by maximizing a smoothed discovery count under a
//! penalized mirror-FDP constraint, rescaled by a scalar `gamma` on the
//! validation fold `j + 1`, and finally applied to the held-out fold `j`.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{bh_threshold, group_bh, GroupBhOptions};
use crate::dataset::{Dataset, Standardizer};
use crate::error::{config, Result};
use crate::estimator::{discovery_count, ratio, Estimator};
use crate::folds::{make_folds, FoldPlan};
use crate::kmeans::kmeans;
use crate::mlp::{default_widths, fit_regression, Adagrad, FitOptions, Mlp};
use crate::report::DiscoveryReport;
use crate::rng::{derived_seed, stream, streams};
use crate::rule::{check_cap, MlpRule, MAX_T_CAP};

/// Geometric grid of candidate rescaling factors. The upper end is further
/// limited to `t_cap / max t(x)` on the validation fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaGrid {
    pub points: usize,
    pub min: f64,
    pub max: f64,
}

impl Default for GammaGrid {
    fn default() -> Self {
        Self {
            points: 200,
            min: 1e-3,
            max: 2.0,
        }
    }
}

impl GammaGrid {
    /// Grid values in increasing order, with the upper end set to `hi`.
    pub fn values(&self, hi: f64) -> Vec<f64> {
        let hi = hi.min(self.max);
        if self.points < 2 || hi <= self.min {
            return vec![hi];
        }
        let step = (hi / self.min).ln() / (self.points - 1) as f64;
        let mut v: Vec<f64> = (0..self.points)
            .map(|i| self.min * (step * i as f64).exp())
            .collect();
        // land exactly on the end point
        *v.last_mut().unwrap() = hi;
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub folds: usize,
    /// Penalty weight on the FDP constraint.
    pub lambda1: f64,
    /// Sigmoid sharpness of the smoothed counts; `None` derives it from the
    /// BH threshold of the full data as `2 / max(bh, 1e-5)`.
    pub lambda2: Option<f64>,
    /// Softmax sharpness of the cluster initialization.
    pub lambda3: f64,
    pub init_clusters: usize,
    pub batch_size: usize,
    /// Regression iterations of the initialization fit.
    pub fit_iters: usize,
    /// Mini-batch size of the initialization fit.
    pub fit_batch_size: usize,
    pub opt_iters: usize,
    pub lr: f64,
    /// Smallest validation-fold discovery count a rescaled rule must reach.
    pub min_discoveries: usize,
    pub gamma_grid: GammaGrid,
    pub t_cap: f64,
    /// Keep only `p < t_cap` or `p > 1 - t_cap` for training and counting.
    pub prefilter: bool,
    pub estimator: Estimator,
    pub clip_bound: Option<f64>,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Keep a candidate network every this many iterations and choose among
    /// them on the validation fold.
    pub snapshot_every: Option<usize>,
    /// Training-log period in iterations; 0 disables the log.
    pub log_every: usize,
    /// Smallest admissible fold size.
    pub min_fold_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            folds: 3,
            lambda1: 20.0,
            lambda2: None,
            lambda3: 1.0,
            init_clusters: 10,
            batch_size: 10_000,
            fit_iters: 6000,
            fit_batch_size: 1000,
            opt_iters: 12_000,
            lr: Adagrad::DEFAULT_LR,
            min_discoveries: 10,
            gamma_grid: GammaGrid::default(),
            t_cap: MAX_T_CAP,
            prefilter: false,
            estimator: Estimator::Mirror,
            clip_bound: None,
            hidden_layers: crate::mlp::DEFAULT_HIDDEN_LAYERS,
            hidden_width: crate::mlp::DEFAULT_HIDDEN_WIDTH,
            snapshot_every: None,
            log_every: 100,
            min_fold_size: 300,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.folds < 3 {
            return Err(config(format!("need at least 3 folds, got {}", self.folds)));
        }
        check_cap(self.t_cap)?;
        let counts = [
            ("init_clusters", self.init_clusters),
            ("batch_size", self.batch_size),
            ("fit_batch_size", self.fit_batch_size),
            ("hidden_width", self.hidden_width),
            ("min_fold_size", self.min_fold_size),
            ("gamma_grid.points", self.gamma_grid.points),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(config(format!("{name} must be positive")));
        }
        if self.snapshot_every == Some(0) {
            return Err(config("snapshot_every must be positive"));
        }
        let reals = [
            ("lambda1", self.lambda1, true),
            ("lambda3", self.lambda3, true),
            ("lr", self.lr, false),
            ("gamma_grid.min", self.gamma_grid.min, false),
            ("gamma_grid.max", self.gamma_grid.max, false),
        ];
        for (name, v, zero_ok) in reals {
            if !(v.is_finite() && (v > 0.0 || (zero_ok && v == 0.0))) {
                return Err(config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.gamma_grid.min > self.gamma_grid.max {
            return Err(config("gamma_grid.min exceeds gamma_grid.max"));
        }
        if let Some(l2) = self.lambda2 {
            if !(l2 > 0.0 && l2.is_finite()) {
                return Err(config(format!("lambda2 must be positive, got {l2}")));
            }
        }
        if let Some(c) = self.clip_bound {
            if !(c > 0.0 && c.is_finite()) {
                return Err(config(format!("clip_bound must be positive, got {c}")));
            }
        }
        Ok(())
    }

    /// `lambda2`, derived from the BH threshold of `p` when not set.
    pub fn resolve_lambda2(&self, p: &[f64]) -> Result<f64> {
        match self.lambda2 {
            Some(l) => Ok(l),
            None => Ok(2.0 / bh_threshold(p, self.alpha)?.max(1e-5)),
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Smoothed discovery and false-discovery counts with their derivatives with
/// respect to each threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedCounts {
    pub d: f64,
    pub fd: f64,
    pub dd_dt: Vec<f64>,
    pub dfd_dt: Vec<f64>,
}

/// `D = sum sigmoid(l2 (t - p))`, and either the smoothed mirror count
/// `FD = sum sigmoid(l2 (p - (1 - t)))` or the expected count `sum t`.
pub fn smoothed_counts(p: &[f64], t: &[f64], lambda2: f64, estimator: Estimator) -> SmoothedCounts {
    assert_eq!(p.len(), t.len(), "one threshold per p-value");
    let n = p.len();
    let mut out = SmoothedCounts {
        d: 0.0,
        fd: 0.0,
        dd_dt: Vec::with_capacity(n),
        dfd_dt: Vec::with_capacity(n),
    };
    for (&p, &t) in p.iter().zip(t) {
        let s = sigmoid(lambda2 * (t - p));
        out.d += s;
        out.dd_dt.push(lambda2 * s * (1.0 - s));
        match estimator {
            Estimator::Mirror => {
                let m = sigmoid(lambda2 * (p - 1.0 + t));
                out.fd += m;
                out.dfd_dt.push(lambda2 * m * (1.0 - m));
            }
            Estimator::Expected => {
                out.fd += t;
                out.dfd_dt.push(1.0);
            }
        }
    }
    out
}

/// Value and threshold-gradient of `-D + l1 max(FD - alpha D, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyLoss {
    pub loss: f64,
    pub d: f64,
    pub fd: f64,
    /// `d loss / d t_i`.
    pub dloss_dt: Vec<f64>,
}

/// Penalty objective on thresholds `t`. At exact equality of `FD` and
/// `alpha D` the hinge contributes no gradient.
pub fn penalty_loss(
    p: &[f64],
    t: &[f64],
    alpha: f64,
    lambda1: f64,
    lambda2: f64,
    estimator: Estimator,
) -> PenaltyLoss {
    let c = smoothed_counts(p, t, lambda2, estimator);
    let excess = c.fd - alpha * c.d;
    let active = excess > 0.0;
    let loss = -c.d + if active { lambda1 * excess } else { 0.0 };
    let dloss_dt = c
        .dd_dt
        .iter()
        .zip(&c.dfd_dt)
        .map(|(&dd, &dfd)| {
            if active {
                -dd + lambda1 * (dfd - alpha * dd)
            } else {
                -dd
            }
        })
        .collect();
    PenaltyLoss {
        loss,
        d: c.d,
        fd: c.fd,
        dloss_dt,
    }
}

/// Penalty loss of a network on a batch of standardized features, and its
/// gradient with respect to the network parameters.
pub fn network_loss<X: AsRef<[f64]>>(
    net: &Mlp,
    xs: &[X],
    p: &[f64],
    cfg: &TrainConfig,
    lambda2: f64,
) -> (PenaltyLoss, Vec<f64>) {
    let t = net.outputs(xs);
    let loss = penalty_loss(p, &t, cfg.alpha, cfg.lambda1, lambda2, cfg.estimator);
    let grad = net.backward(xs, &loss.dloss_dt);
    (loss, grad)
}

/// Softmax-smoothed cluster thresholds:
/// `sum_j softmax_j(-l3 |z - c_j|^2) t_j` for each `z`.
pub fn cluster_targets(zs: &[Vec<f64>], centers: &[Vec<f64>], t_opt: &[f64], lambda3: f64) -> Vec<f64> {
    let mut logits = vec![0.0; centers.len()];
    zs.iter()
        .map(|z| {
            for (l, c) in logits.iter_mut().zip(centers) {
                *l = -lambda3 * c.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
            let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (mut num, mut den) = (0.0, 0.0);
            for (&l, &t) in logits.iter().zip(t_opt) {
                let w = (l - top).exp();
                num += w * t;
                den += w;
            }
            num / den
        })
        .collect()
}

/// Output of the cluster initialization.
#[derive(Debug, Clone)]
pub struct InitResult {
    pub network: Mlp,
    pub centers: Vec<Vec<f64>>,
    /// Per-cluster thresholds before smoothing.
    pub cluster_thresholds: Vec<f64>,
    /// Final mean-squared error of the regression fit.
    pub mse: f64,
}

fn fresh_network(dim: usize, cfg: &TrainConfig, seed: u64) -> Result<Mlp> {
    let mut net = Mlp::new(
        default_widths(dim, cfg.hidden_layers, cfg.hidden_width),
        cfg.t_cap,
        seed,
    )?;
    net.set_clip_bound(cfg.clip_bound)?;
    Ok(net)
}

/// Warm start: clusters the standardized training features, solves for
/// per-cluster thresholds (clusters with under 100 members take the BH
/// threshold), smooths them with a softmax over cluster distances and
/// regresses a fresh network onto the result.
///
/// `stream_offset` selects independent random streams, e.g. one per fold.
pub fn k_cluster_init(
    train: &Dataset,
    zs: &[Vec<f64>],
    cfg: &TrainConfig,
    stream_offset: u64,
) -> Result<InitResult> {
    if zs.len() != train.len() {
        return Err(config("one standardized feature vector per record required"));
    }
    let k = cfg.init_clusters.min(train.len());
    let groups = kmeans(
        zs,
        k,
        derived_seed(cfg.seed, streams::INIT_KMEANS + stream_offset),
        100,
    )?;
    let opts = GroupBhOptions {
        t_cap: cfg.t_cap,
        ..GroupBhOptions::default()
    };
    let t_opt = group_bh(train, &groups, cfg.alpha, &opts)?.thresholds;
    // the logistic output cannot reach 0 or the cap
    let (lo, hi) = (cfg.t_cap * 1e-3, cfg.t_cap * (1.0 - 1e-3));
    let targets: Vec<f64> = cluster_targets(zs, &groups.centers, &t_opt, cfg.lambda3)
        .into_iter()
        .map(|t| t.clamp(lo, hi))
        .collect();
    let mut net = fresh_network(
        train.dim(),
        cfg,
        derived_seed(cfg.seed, streams::INIT_NET + stream_offset),
    )?;
    let fit = FitOptions {
        iters: cfg.fit_iters,
        batch_size: cfg.fit_batch_size,
        learning_rate: cfg.lr,
        seed: derived_seed(cfg.seed, streams::FIT + stream_offset),
    };
    let mse = fit_regression(&mut net, zs, &targets, &fit)?;
    Ok(InitResult {
        network: net,
        centers: groups.centers,
        cluster_thresholds: t_opt,
        mse,
    })
}

/// Selected rescaling factor on a validation fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaChoice {
    pub gamma: f64,
    /// No grid point was feasible; `gamma` matches the BH discovery count.
    pub fallback: bool,
    pub discoveries: usize,
    pub fd_hat: f64,
    pub fdp_hat: f64,
}

/// Discoveries and estimated false discoveries of `min(gamma t, t_cap)`.
fn scaled_counts(p: &[f64], raw: &[f64], gamma: f64, t_cap: f64, est: Estimator) -> (usize, f64) {
    let t: Vec<f64> = raw.iter().map(|&r| (gamma * r).min(t_cap)).collect();
    (discovery_count(p, &t), est.fd_hat(p, &t))
}

/// Largest grid `gamma` for which `min(gamma t, t_cap)` has FDP-hat at most
/// `alpha` and at least `min_discoveries` discoveries on the validation
/// p-values `p`, where `raw` holds the unscaled thresholds.
///
/// When no grid point qualifies, falls back to the largest `gamma` whose
/// discovery count does not exceed that of BH on `p` (0 when BH discovers
/// nothing), and flags the choice.
pub fn rescale_gamma(
    p: &[f64],
    raw: &[f64],
    alpha: f64,
    t_cap: f64,
    grid: &GammaGrid,
    min_discoveries: usize,
    estimator: Estimator,
) -> Result<GammaChoice> {
    if p.len() != raw.len() || p.is_empty() {
        return Err(config("rescaling needs one threshold per validation p-value"));
    }
    let max_t = raw.iter().copied().fold(0.0, f64::max);
    let hi = if max_t > 0.0 { t_cap / max_t } else { grid.max };
    for &g in grid.values(hi).iter().rev() {
        let (d, fd) = scaled_counts(p, raw, g, t_cap, estimator);
        let fdp = ratio(fd, d);
        if d >= min_discoveries && fdp <= alpha {
            return Ok(GammaChoice {
                gamma: g,
                fallback: false,
                discoveries: d,
                fd_hat: fd,
                fdp_hat: fdp,
            });
        }
    }
    let bh = bh_threshold(p, alpha)?;
    let target = p.iter().filter(|&&v| v <= bh).count();
    let gamma = if target == 0 {
        0.0
    } else {
        // gamma at which hypothesis i enters the rejection region
        let mut entry: Vec<f64> = p
            .iter()
            .zip(raw)
            .filter(|(&pv, &r)| pv < t_cap && r > 0.0)
            .map(|(&pv, &r)| pv / r)
            .collect();
        entry.sort_by(f64::total_cmp);
        entry.get(target).copied().unwrap_or(hi).min(hi)
    };
    let (d, fd) = scaled_counts(p, raw, gamma, t_cap, estimator);
    Ok(GammaChoice {
        gamma,
        fallback: true,
        discoveries: d,
        fd_hat: fd,
        fdp_hat: ratio(fd, d),
    })
}

/// One training-log row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub fold: usize,
    pub iteration: usize,
    pub d_smooth: f64,
    pub fd_smooth: f64,
    pub loss: f64,
}

/// Everything produced for one fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    /// Rescaled rule applied to the test fold.
    pub rule: MlpRule,
    pub gamma: GammaChoice,
    /// Iteration of the chosen snapshot in snapshot mode.
    pub snapshot: Option<usize>,
    pub init_mse: f64,
    pub train_size: usize,
    pub cv_size: usize,
    pub test_size: usize,
    pub test_discoveries: usize,
    #[serde(skip)]
    pub log: Vec<LogEntry>,
}

/// Merged outcome of the cross-fold procedure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeuralFdrResult {
    pub report: DiscoveryReport,
    /// Threshold applied to each hypothesis; 0 for records removed by the
    /// prefilter.
    pub thresholds: Vec<f64>,
    /// Test fold of each hypothesis; `None` for prefiltered records.
    pub fold_of: Vec<Option<usize>>,
    pub lambda2: f64,
    pub folds: Vec<FoldResult>,
}

impl NeuralFdrResult {
    /// Writes the training logs of all folds as CSV.
    pub fn write_log<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["fold", "iteration", "d_smooth", "fd_smooth", "loss"])?;
        for e in self.folds.iter().flat_map(|f| &f.log) {
            out.serialize((e.fold, e.iteration, e.d_smooth, e.fd_smooth, e.loss))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs the full procedure with a random fold split drawn from `cfg.seed`.
pub fn neural_fdr(data: &Dataset, cfg: &TrainConfig) -> Result<NeuralFdrResult> {
    cfg.validate()?;
    let n_used = if cfg.prefilter {
        data.records()
            .iter()
            .filter(|r| kept(r.p_value, cfg.t_cap))
            .count()
    } else {
        data.len()
    };
    let plan = make_folds(n_used, cfg.folds, derived_seed(cfg.seed, streams::FOLDS))?;
    neural_fdr_with_plan(data, &plan, cfg)
}

fn kept(p: f64, t_cap: f64) -> bool {
    p < t_cap || p > 1.0 - t_cap
}

/// Runs the procedure on a given fold split. With the prefilter on, the plan
/// indexes the retained records in their original order.
pub fn neural_fdr_with_plan(data: &Dataset, plan: &FoldPlan, cfg: &TrainConfig) -> Result<NeuralFdrResult> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(config("dataset is empty"));
    }
    let all_p = data.p_values();
    let lambda2 = cfg.resolve_lambda2(&all_p)?;
    let used: Vec<usize> = if cfg.prefilter {
        (0..data.len()).filter(|&i| kept(all_p[i], cfg.t_cap)).collect()
    } else {
        (0..data.len()).collect()
    };
    if plan.n != used.len() || plan.m != cfg.folds {
        return Err(config(format!(
            "fold plan covers {} records in {} folds, expected {} in {}",
            plan.n,
            plan.m,
            used.len(),
            cfg.folds
        )));
    }
    let smallest = plan.sizes().into_iter().min().unwrap_or(0);
    if smallest < cfg.min_fold_size {
        return Err(config(format!(
            "smallest fold has {smallest} records, need at least {}",
            cfg.min_fold_size
        )));
    }
    let data = if cfg.prefilter {
        data.subset(&used)
    } else {
        data.clone()
    };

    let folds: Vec<FoldResult> = (0..cfg.folds)
        .into_par_iter()
        .map(|j| train_fold(&data, plan, j, cfg, lambda2))
        .collect::<Result<_>>()?;

    let mut thresholds = vec![0.0; all_p.len()];
    let mut fold_of = vec![None; all_p.len()];
    for f in &folds {
        let test = plan.test(f.fold);
        let t = rule_thresholds(&f.rule, &data, &test);
        for (&local, t) in test.iter().zip(t) {
            thresholds[used[local]] = t;
            fold_of[used[local]] = Some(f.fold);
        }
    }
    let truths = data_truths(&all_p, &used, &data);
    let report = DiscoveryReport::from_thresholds(&all_p, &thresholds, truths.as_deref(), cfg.alpha);
    Ok(NeuralFdrResult {
        report,
        thresholds,
        fold_of,
        lambda2,
        folds,
    })
}

/// Labels for the original indexing, when present. Prefiltered records are
/// never discovered, so any label works for them.
fn data_truths(all_p: &[f64], used: &[usize], data: &Dataset) -> Option<Vec<bool>> {
    let local = data.truths()?;
    let mut out = vec![false; all_p.len()];
    for (&i, h) in used.iter().zip(local) {
        out[i] = h;
    }
    Some(out)
}

/// Thresholds of `rule` at the records `idx` of `data`, batched.
fn rule_thresholds(rule: &MlpRule, data: &Dataset, idx: &[usize]) -> Vec<f64> {
    let zs: Vec<Vec<f64>> = idx
        .iter()
        .map(|&i| rule.standardizer.apply(&data.records()[i].features))
        .collect();
    rule.raw_outputs(&zs)
        .into_iter()
        .map(|r| (rule.scale * r).min(rule.t_cap))
        .collect()
}

fn train_fold(data: &Dataset, plan: &FoldPlan, j: usize, cfg: &TrainConfig, lambda2: f64) -> Result<FoldResult> {
    let (train_idx, cv_idx, test_idx) = (plan.train(j), plan.cv(j), plan.test(j));
    let train = data.subset(&train_idx);
    let standardizer = Standardizer::from_stats(train.feature_stats());
    let zs: Vec<Vec<f64>> = train
        .records()
        .iter()
        .map(|r| standardizer.apply(&r.features))
        .collect();
    let p_train = train.p_values();
    let offset = j as u64;
    let init = k_cluster_init(&train, &zs, cfg, offset)?;

    let mut net = init.network;
    let mut opt = Adagrad::new(net.params().len(), cfg.lr);
    let mut rng = stream(cfg.seed, streams::OPTIMIZE + offset);
    let mut snapshots: Vec<(usize, Mlp)> = Vec::new();
    let mut log = Vec::new();
    let mut bx: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    let mut bp: Vec<f64> = Vec::with_capacity(cfg.batch_size);
    for it in 1..=cfg.opt_iters {
        bx.clear();
        bp.clear();
        for _ in 0..cfg.batch_size {
            let i = rng.random_range(0..zs.len());
            bx.push(&zs[i]);
            bp.push(p_train[i]);
        }
        let (loss, grad) = network_loss(&net, &bx, &bp, cfg, lambda2);
        opt.step_network(&mut net, &grad);
        if cfg.log_every > 0 && (it % cfg.log_every == 0 || it == cfg.opt_iters) {
            log.push(LogEntry {
                fold: j,
                iteration: it,
                d_smooth: loss.d,
                fd_smooth: loss.fd,
                loss: loss.loss,
            });
        }
        if let Some(every) = cfg.snapshot_every {
            if it % every == 0 && it != cfg.opt_iters {
                snapshots.push((it, net.clone()));
            }
        }
    }
    snapshots.push((cfg.opt_iters, net));

    let cv = data.subset(&cv_idx);
    let p_cv = cv.p_values();
    let mut best: Option<(usize, MlpRule, GammaChoice)> = None;
    for (it, net) in snapshots.into_iter().rev() {
        let rule = MlpRule::new(net, standardizer.clone(), 1.0, cfg.t_cap)?;
        let raw = rule_thresholds(&rule, &cv, &(0..cv.len()).collect::<Vec<_>>());
        let choice = rescale_gamma(
            &p_cv,
            &raw,
            cfg.alpha,
            cfg.t_cap,
            &cfg.gamma_grid,
            cfg.min_discoveries,
            cfg.estimator,
        )?;
        let better = match &best {
            None => true,
            Some((_, _, b)) => {
                (b.fallback && !choice.fallback)
                    || (b.fallback == choice.fallback && choice.discoveries > b.discoveries)
            }
        };
        if better {
            best = Some((it, rule, choice));
        }
    }
    let (it, rule, gamma) = best.expect("at least the final network is a candidate");
    let rule = rule.with_scale(gamma.gamma);
    let t_test = rule_thresholds(&rule, data, &test_idx);
    let p_all = data.records();
    let test_discoveries = test_idx
        .iter()
        .zip(&t_test)
        .filter(|(&i, &t)| p_all[i].p_value < t)
        .count();
    Ok(FoldResult {
        fold: j,
        rule,
        gamma,
        snapshot: cfg.snapshot_every.map(|_| it),
        init_mse: init.mse,
        train_size: train_idx.len(),
        cv_size: cv_idx.len(),
        test_size: test_idx.len(),
        test_discoveries,
        log,
    })
}
