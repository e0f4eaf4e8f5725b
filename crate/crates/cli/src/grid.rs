use std::path::PathBuf;

use clap::Args;
use covfdr::io::fmt_real;
use covfdr::rule::{DecisionRule, Rule};
use serde::{Deserialize, Serialize};

use crate::common::{create, csv_error, finish, read_data, read_json, sidecar, usage, write_json, CliResult};

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridArgs {
    /// Rule JSON written by `run`.
    #[arg(long)]
    pub rule: Option<PathBuf>,
    /// Dataset whose feature ranges (and medians) define the grid; [0, 1] otherwise.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Points per varied axis (default 50).
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Output CSV with columns f1..fd,t.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// JSON file with any of the above keys; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    rule: PathBuf,
    data: Option<PathBuf>,
    resolution: usize,
    output: PathBuf,
    /// Per-dimension `[lo, hi]` for varied axes, or the fixed value.
    axes: Vec<Axis>,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum Axis {
    Varied { lo: f64, hi: f64 },
    Fixed { value: f64 },
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn linspace(lo: f64, hi: f64, r: usize) -> Vec<f64> {
    if r == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..r)
        .map(|i| if i == r - 1 { hi } else { lo + (hi - lo) * i as f64 / (r - 1) as f64 })
        .collect()
}

pub fn run(args: GridArgs) -> CliResult<()> {
    let args = match &args.config {
        Some(path) => {
            let file: GridArgs = read_json(path)?;
            GridArgs {
                rule: args.rule.or(file.rule),
                data: args.data.or(file.data),
                resolution: args.resolution.or(file.resolution),
                output: args.output.or(file.output),
                config: None,
            }
        }
        None => args,
    };
    let rule_path = args.rule.ok_or_else(|| usage("--rule is required"))?;
    let output = args.output.ok_or_else(|| usage("--output is required"))?;
    let resolution = args.resolution.unwrap_or(50);
    if resolution == 0 {
        return Err(usage("resolution must be positive"));
    }
    let rule: Rule = read_json(&rule_path)?;
    let dim = rule.dim();

    let axes: Vec<Axis> = match &args.data {
        Some(path) => {
            let data = read_data(path)?;
            if data.dim() != dim {
                return Err(usage(format!(
                    "rule expects {dim} features but {} has {}",
                    path.display(),
                    data.dim()
                )));
            }
            (0..dim)
                .map(|j| {
                    let col: Vec<f64> = data.records().iter().map(|r| r.features[j]).collect();
                    if j < 2 {
                        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        Axis::Varied { lo, hi }
                    } else {
                        Axis::Fixed { value: median(col) }
                    }
                })
                .collect()
        }
        None => (0..dim)
            .map(|j| if j < 2 { Axis::Varied { lo: 0.0, hi: 1.0 } } else { Axis::Fixed { value: 0.5 } })
            .collect(),
    };
    if dim > 2 {
        let fixed: Vec<String> = axes
            .iter()
            .enumerate()
            .filter_map(|(j, a)| match a {
                Axis::Fixed { value } => Some(format!("f{}={}", j + 1, fmt_real(*value))),
                Axis::Varied { .. } => None,
            })
            .collect();
        eprintln!("note: grid varies f1 and f2; fixed {}", fixed.join(", "));
    }

    let values: Vec<Vec<f64>> = axes
        .iter()
        .map(|a| match *a {
            Axis::Varied { lo, hi } => linspace(lo, hi, resolution),
            Axis::Fixed { value } => vec![value],
        })
        .collect();

    let mut out = csv::Writer::from_writer(create(&output)?);
    let mut header: Vec<String> = (1..=dim).map(|j| format!("f{j}")).collect();
    header.push("t".into());
    out.write_record(&header).map_err(|e| csv_error(&output, e))?;
    // Row-major over the varied axes, f1 outermost.
    let total: usize = values.iter().map(Vec::len).product();
    let mut x = vec![0.0; dim];
    let mut row = Vec::with_capacity(dim + 1);
    for mut k in 0..total {
        for j in (0..dim).rev() {
            let v = &values[j];
            x[j] = v[k % v.len()];
            k /= v.len();
        }
        row.clear();
        row.extend(x.iter().map(|&v| fmt_real(v)));
        row.push(fmt_real(rule.threshold(&x)));
        out.write_record(&row).map_err(|e| csv_error(&output, e))?;
    }
    let inner = out.into_inner().map_err(|e| usage(format!("{}: {e}", output.display())))?;
    finish(inner, &output)?;

    let resolved = Resolved {
        rule: rule_path,
        data: args.data,
        resolution,
        output: output.clone(),
        axes,
    };
    write_json(&sidecar(&output, "config.json"), &resolved)
}
