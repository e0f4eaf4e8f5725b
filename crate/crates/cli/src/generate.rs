use std::path::PathBuf;

use clap::Args;
use covfdr::simgen::{generate, Family, GenSpec};
use serde::Deserialize;

use crate::common::{create, finish, read_json, sidecar, usage, write_json, CliResult};

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateArgs {
    /// Generator family, e.g. gm_1d or slope_2d.
    #[arg(long)]
    pub family: Option<String>,
    /// Number of hypotheses.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Full generator specification (JSON); --n and --seed override it.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output CSV.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Metadata JSON; defaults to the output path with a .json extension.
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    /// JSON file with any of the above keys; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl GenerateArgs {
    fn merge(self, file: GenerateArgs) -> GenerateArgs {
        GenerateArgs {
            family: self.family.or(file.family),
            n: self.n.or(file.n),
            seed: self.seed.or(file.seed),
            spec: self.spec.or(file.spec),
            output: self.output.or(file.output),
            metadata: self.metadata.or(file.metadata),
            config: None,
        }
    }
}

pub fn run(args: GenerateArgs) -> CliResult<()> {
    let args = match &args.config {
        Some(path) => {
            let file: GenerateArgs = read_json(path)?;
            args.merge(file)
        }
        None => args,
    };
    let mut spec = match &args.spec {
        Some(path) => {
            let spec: GenSpec = read_json(path)?;
            if let Some(f) = &args.family {
                if f.parse::<Family>()? != spec.family {
                    return Err(usage(format!("--family {f} conflicts with the spec file")));
                }
            }
            spec
        }
        None => {
            let family: Family = args
                .family
                .as_deref()
                .ok_or_else(|| usage("--family is required without --spec"))?
                .parse()?;
            let n = args.n.ok_or_else(|| usage("--n is required without --spec"))?;
            GenSpec::new(family, n, 0)
        }
    };
    if let Some(n) = args.n {
        spec.n = n;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let output = args.output.ok_or_else(|| usage("--output is required"))?;
    let metadata = args.metadata.unwrap_or_else(|| sidecar(&output, "json"));
    let data = generate(&spec)?;
    let mut w = create(&output)?;
    covfdr::io::write_dataset(&mut w, &data)?;
    finish(w, &output)?;
    write_json(&metadata, &spec)?;
    Ok(())
}
