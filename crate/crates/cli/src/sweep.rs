use std::path::PathBuf;

use clap::Args;
use covfdr::io::fmt_real;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::common::{
    check_alpha, create, csv_error, execute, finish, read_data, read_json, sidecar, usage, write_json, CliResult,
    Method, MethodArgs, MethodOptions,
};

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated methods.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub methods: Vec<Method>,
    /// Comma-separated FDR levels.
    #[arg(long, value_delimiter = ',')]
    pub alphas: Vec<f64>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Long-format CSV: method,alpha,seed,D,FDP,FDP_hat.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub method_args: MethodArgs,
    /// JSON file with any of the above keys; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    data: PathBuf,
    methods: Vec<Method>,
    alphas: Vec<f64>,
    seeds: Vec<u64>,
    output: PathBuf,
    options: MethodOptions,
}

fn pick<T>(flag: Vec<T>, file: Vec<T>) -> Vec<T> {
    if flag.is_empty() {
        file
    } else {
        flag
    }
}

pub fn run(args: SweepArgs) -> CliResult<()> {
    let args = match &args.config {
        Some(path) => {
            let file: SweepArgs = read_json(path)?;
            SweepArgs {
                data: args.data.or(file.data),
                methods: pick(args.methods, file.methods),
                alphas: pick(args.alphas, file.alphas),
                seeds: pick(args.seeds, file.seeds),
                output: args.output.or(file.output),
                method_args: args.method_args.merge(file.method_args),
                config: None,
            }
        }
        None => args,
    };
    let resolved = Resolved {
        data: args.data.ok_or_else(|| usage("--data is required"))?,
        methods: args.methods,
        alphas: if args.alphas.is_empty() { vec![0.1] } else { args.alphas },
        seeds: if args.seeds.is_empty() { vec![0] } else { args.seeds },
        output: args.output.ok_or_else(|| usage("--output is required"))?,
        options: args.method_args.resolve()?,
    };
    if resolved.methods.is_empty() {
        return Err(usage("--methods needs at least one method"));
    }
    for &a in &resolved.alphas {
        check_alpha(a)?;
    }
    let data = read_data(&resolved.data)?;
    if !data.has_truth() {
        eprintln!("warning: no truth column; FDP is left empty");
    }

    let mut cells = Vec::new();
    for &m in &resolved.methods {
        for &a in &resolved.alphas {
            for &s in &resolved.seeds {
                cells.push((m, a, s));
            }
        }
    }
    let results: Vec<_> = cells
        .par_iter()
        .map(|&(m, a, s)| execute(m, &data, a, s, &resolved.options).map(|o| o.report))
        .collect::<CliResult<_>>()?;

    let path = &resolved.output;
    let mut out = csv::Writer::from_writer(create(path)?);
    out.write_record(["method", "alpha", "seed", "D", "FDP", "FDP_hat"])
        .map_err(|e| csv_error(path, e))?;
    for (&(m, a, s), r) in cells.iter().zip(&results) {
        out.write_record([
            m.name().to_string(),
            fmt_real(a),
            s.to_string(),
            r.d.to_string(),
            r.fdp.map_or(String::new(), fmt_real),
            fmt_real(r.fdp_hat),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    let inner = out.into_inner().map_err(|e| usage(format!("{}: {e}", path.display())))?;
    finish(inner, path)?;
    write_json(&sidecar(path, "config.json"), &resolved)
}
