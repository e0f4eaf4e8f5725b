use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use covfdr::baselines::{bh_rule, bh_threshold, group_bh, storey_bh, GroupBhOptions, STOREY_LAMBDA};
use covfdr::dataset::{standardize, Dataset};
use covfdr::estimator::Estimator;
use covfdr::kmeans::kmeans;
use covfdr::report::DiscoveryReport;
use covfdr::rule::{DecisionRule, Rule};
use covfdr::trainer::{neural_fdr, NeuralFdrResult, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Failure classes with stable exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or input data: exit code 2.
    Usage(String),
    /// Anything else: exit code 1.
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Internal(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<covfdr::Error> for CliError {
    fn from(e: covfdr::Error) -> Self {
        use covfdr::Error as E;
        use std::io::ErrorKind;
        match &e {
            E::Config(_) | E::InvalidInput(_) | E::Parse { .. } | E::Json(_) | E::Csv(_) => {
                CliError::Usage(e.to_string())
            }
            E::Io(io) if matches!(io.kind(), ErrorKind::NotFound | ErrorKind::PermissionDenied) => {
                CliError::Usage(e.to_string())
            }
            E::Io(_) => CliError::Internal(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    let msg = format!("{}: {e}", path.display());
    match e.kind() {
        std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => CliError::Usage(msg),
        _ => CliError::Internal(msg),
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

pub fn finish(mut w: BufWriter<File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|e| io_error(path, e))
}

pub fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Internal(format!("{}: {e}", path.display()))
}

pub fn read_data(path: &Path) -> CliResult<Dataset> {
    covfdr::io::read_dataset_path(path).map_err(|e| match e {
        covfdr::Error::Io(io) => io_error(path, io),
        other => usage(format!("{}: {other}", path.display())),
    })
}

/// `dir/name`, or `name` with its extension replaced.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bh,
    Sbh,
    Groupbh,
    Neuralfdr,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Bh => "bh",
            Method::Sbh => "sbh",
            Method::Groupbh => "groupbh",
            Method::Neuralfdr => "neuralfdr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorArg {
    Mirror,
    Expected,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Mirror => Estimator::Mirror,
            EstimatorArg::Expected => Estimator::Expected,
        }
    }
}

/// Method options shared by `run` and `sweep`; every flag also has a config
/// file key of the same name.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodArgs {
    /// k-means group count for groupbh.
    #[arg(long)]
    pub groups: Option<usize>,
    /// Storey's lambda for sbh.
    #[arg(long)]
    pub storey_lambda: Option<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub opt_iters: Option<usize>,
    #[arg(long)]
    pub fit_iters: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub clip_bound: Option<f64>,
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorArg>,
    /// Threshold cap; with --prefilter, also the p-value prefilter level.
    #[arg(long)]
    pub t_cap: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub prefilter: bool,
    #[arg(long)]
    pub snapshot_every: Option<usize>,
    /// Full training configuration (config file only); flags override it.
    #[arg(skip)]
    pub train: Option<TrainConfig>,
}

impl MethodArgs {
    pub fn merge(self, file: MethodArgs) -> MethodArgs {
        MethodArgs {
            groups: self.groups.or(file.groups),
            storey_lambda: self.storey_lambda.or(file.storey_lambda),
            folds: self.folds.or(file.folds),
            opt_iters: self.opt_iters.or(file.opt_iters),
            fit_iters: self.fit_iters.or(file.fit_iters),
            batch_size: self.batch_size.or(file.batch_size),
            clip_bound: self.clip_bound.or(file.clip_bound),
            estimator: self.estimator.or(file.estimator),
            t_cap: self.t_cap.or(file.t_cap),
            prefilter: self.prefilter || file.prefilter,
            snapshot_every: self.snapshot_every.or(file.snapshot_every),
            train: self.train.or(file.train),
        }
    }

    pub fn resolve(&self) -> CliResult<MethodOptions> {
        let mut train = self.train.clone().unwrap_or_default();
        if let Some(v) = self.folds {
            train.folds = v;
        }
        if let Some(v) = self.opt_iters {
            train.opt_iters = v;
        }
        if let Some(v) = self.fit_iters {
            train.fit_iters = v;
        }
        if let Some(v) = self.batch_size {
            train.batch_size = v;
        }
        if self.clip_bound.is_some() {
            train.clip_bound = self.clip_bound;
        }
        if let Some(v) = self.estimator {
            train.estimator = v.into();
        }
        if let Some(v) = self.t_cap {
            train.t_cap = v;
        }
        if self.prefilter {
            train.prefilter = true;
        }
        if self.snapshot_every.is_some() {
            train.snapshot_every = self.snapshot_every;
        }
        let opts = MethodOptions {
            groups: self.groups.unwrap_or(20),
            storey_lambda: self.storey_lambda.unwrap_or(STOREY_LAMBDA),
            train,
        };
        if opts.groups == 0 {
            return Err(usage("groups must be positive"));
        }
        if !(opts.storey_lambda > 0.0 && opts.storey_lambda < 1.0) {
            return Err(usage("storey_lambda must lie in (0, 1)"));
        }
        opts.train.validate()?;
        Ok(opts)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodOptions {
    pub groups: usize,
    pub storey_lambda: f64,
    /// Training settings; `alpha` and `seed` are taken from the run.
    pub train: TrainConfig,
}

pub fn check_alpha(alpha: f64) -> CliResult<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(usage(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Result of one method on one dataset.
pub struct Outcome {
    pub report: DiscoveryReport,
    pub thresholds: Vec<f64>,
    pub fold_of: Option<Vec<Option<usize>>>,
    pub details: Value,
    pub rules: Vec<Rule>,
    pub warnings: Vec<String>,
    pub neural: Option<NeuralFdrResult>,
}

fn from_rule(data: &Dataset, rule: Rule, alpha: f64, details: Value, warnings: Vec<String>) -> Outcome {
    let thresholds = rule.thresholds(data);
    let truths = data.truths();
    let report = DiscoveryReport::from_thresholds(&data.p_values(), &thresholds, truths.as_deref(), alpha);
    Outcome {
        report,
        thresholds,
        fold_of: None,
        details,
        rules: vec![rule],
        warnings,
        neural: None,
    }
}

pub fn execute(method: Method, data: &Dataset, alpha: f64, seed: u64, opts: &MethodOptions) -> CliResult<Outcome> {
    let p = data.p_values();
    let cap = covfdr::rule::MAX_T_CAP;
    match method {
        Method::Bh => {
            let thr = bh_threshold(&p, alpha)?;
            let rule = bh_rule(thr, data.dim(), cap)?;
            Ok(from_rule(data, Rule::Constant(rule), alpha, json!({ "bh_threshold": thr }), vec![]))
        }
        Method::Sbh => {
            let s = storey_bh(&p, alpha, opts.storey_lambda)?;
            let rule = bh_rule(s.threshold, data.dim(), cap)?;
            let mut warnings = vec![];
            if s.pi0_floored {
                warnings.push(format!(
                    "no p-value exceeds lambda = {}; pi0 floored at {}",
                    opts.storey_lambda, s.pi0
                ));
            }
            let details = json!({
                "threshold": s.threshold,
                "pi0": s.pi0,
                "pi0_floored": s.pi0_floored,
                "lambda": opts.storey_lambda,
            });
            Ok(from_rule(data, Rule::Constant(rule), alpha, details, warnings))
        }
        Method::Groupbh => {
            let z: Vec<Vec<f64>> = standardize(data)
                .data
                .records()
                .iter()
                .map(|r| r.features.clone())
                .collect();
            let groups = kmeans(&z, opts.groups.min(data.len()), seed, 100)?;
            let rule = group_bh(data, &groups, alpha, &GroupBhOptions::default())?;
            let details = json!({
                "groups": groups.k,
                "group_sizes": groups.sizes(),
                "group_thresholds": rule.thresholds,
            });
            Ok(from_rule(data, Rule::Grouped(rule), alpha, details, vec![]))
        }
        Method::Neuralfdr => {
            let cfg = TrainConfig {
                alpha,
                seed,
                ..opts.train.clone()
            };
            let res = neural_fdr(data, &cfg)?;
            let mut warnings = vec![];
            let folds: Vec<Value> = res
                .folds
                .iter()
                .map(|f| {
                    if f.gamma.fallback {
                        warnings.push(format!(
                            "fold {}: no rescaling met the FDP and discovery constraints; fell back to the BH discovery count",
                            f.fold
                        ));
                    }
                    json!({
                        "fold": f.fold,
                        "gamma": f.gamma.gamma,
                        "fallback": f.gamma.fallback,
                        "cv_discoveries": f.gamma.discoveries,
                        "cv_fdp_hat": f.gamma.fdp_hat,
                        "test_discoveries": f.test_discoveries,
                        "snapshot": f.snapshot,
                        "init_mse": f.init_mse,
                        "train_size": f.train_size,
                        "cv_size": f.cv_size,
                        "test_size": f.test_size,
                    })
                })
                .collect();
            let rules: Vec<Rule> = res.folds.iter().map(|f| Rule::Mlp(f.rule.clone())).collect();
            let details = json!({
                "lambda2": res.lambda2,
                "folds": folds,
                "rules": rules,
            });
            Ok(Outcome {
                report: res.report.clone(),
                thresholds: res.thresholds.clone(),
                fold_of: Some(res.fold_of.clone()),
                details,
                rules,
                warnings,
                neural: Some(res),
            })
        }
    }
}
