use std::path::PathBuf;

use clap::Args;
use covfdr::io::fmt_real;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::common::{
    check_alpha, create, csv_error, execute, finish, read_data, read_json, usage, write_json, CliResult, Method,
    MethodArgs, MethodOptions,
};

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Input dataset CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Nominal FDR level (default 0.1).
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for discoveries.csv, report.json, rule files and the training log.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub method_args: MethodArgs,
    /// JSON file with any of the above keys; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// The fully resolved settings, echoed into the report.
#[derive(Debug, Serialize)]
struct Resolved {
    method: Method,
    data: PathBuf,
    alpha: f64,
    seed: u64,
    out_dir: PathBuf,
    options: MethodOptions,
}

pub fn run(args: RunArgs) -> CliResult<()> {
    let args = match &args.config {
        Some(path) => {
            let file: RunArgs = read_json(path)?;
            RunArgs {
                method: args.method.or(file.method),
                data: args.data.or(file.data),
                alpha: args.alpha.or(file.alpha),
                seed: args.seed.or(file.seed),
                out_dir: args.out_dir.or(file.out_dir),
                method_args: args.method_args.merge(file.method_args),
                config: None,
            }
        }
        None => args,
    };
    let mut resolved = Resolved {
        method: args.method.ok_or_else(|| usage("--method is required"))?,
        data: args.data.ok_or_else(|| usage("--data is required"))?,
        alpha: args.alpha.unwrap_or(0.1),
        seed: args.seed.unwrap_or(0),
        out_dir: args.out_dir.ok_or_else(|| usage("--out-dir is required"))?,
        options: args.method_args.resolve()?,
    };
    check_alpha(resolved.alpha)?;
    resolved.options.train.alpha = resolved.alpha;
    resolved.options.train.seed = resolved.seed;

    let data = read_data(&resolved.data)?;
    let outcome = execute(resolved.method, &data, resolved.alpha, resolved.seed, &resolved.options)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }

    let dir = &resolved.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;

    let path = dir.join("discoveries.csv");
    let mut out = csv::Writer::from_writer(create(&path)?);
    out.write_record(["index", "pvalue", "threshold", "fold"])
        .map_err(|e| csv_error(&path, e))?;
    let p = data.p_values();
    for &i in &outcome.report.discovered {
        let fold = outcome
            .fold_of
            .as_ref()
            .and_then(|f| f[i])
            .map_or(String::new(), |f| f.to_string());
        out.write_record([i.to_string(), fmt_real(p[i]), fmt_real(outcome.thresholds[i]), fold])
            .map_err(|e| csv_error(&path, e))?;
    }
    let inner = out.into_inner().map_err(|e| usage(format!("{}: {e}", path.display())))?;
    finish(inner, &path)?;

    if outcome.rules.len() == 1 {
        write_json(&dir.join("rule.json"), &outcome.rules[0])?;
    } else {
        for (j, rule) in outcome.rules.iter().enumerate() {
            write_json(&dir.join(format!("rule_fold{j}.json")), rule)?;
        }
    }
    if let Some(res) = &outcome.neural {
        let path = dir.join("training_log.csv");
        let mut w = create(&path)?;
        res.write_log(&mut w)?;
        finish(w, &path)?;
    }

    let r = &outcome.report;
    let report = json!({
        "method": resolved.method,
        "n": data.len(),
        "dim": data.dim(),
        "alpha": r.alpha,
        "D": r.d,
        "FD": r.fd,
        "FDP": r.fdp,
        "FD_hat": r.fd_hat,
        "FDP_hat": r.fdp_hat,
        "details": outcome.details,
        "warnings": outcome.warnings,
        "config": resolved,
    });
    write_json(&dir.join("report.json"), &report)
}
