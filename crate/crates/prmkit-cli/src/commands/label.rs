//! `prmkit label`: run the judge + Monte Carlo labeling pipeline over a
//! solutions file and emit the filtered training dataset.

use std::path::PathBuf;

use anyhow::{Context, Result};
use prmkit::mc_label::{build_dataset, DatasetBuildConfig};

use crate::config::{category_set, LoadedConfig};

pub struct LabelArgs {
    pub solutions: PathBuf,
    pub m: Option<usize>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub categories: Vec<String>,
}

pub async fn cmd_label(loaded: &LoadedConfig, args: &LabelArgs) -> Result<()> {
    let world = loaded.label_world()?;
    let cfg = DatasetBuildConfig {
        m: args.m.unwrap_or(loaded.config.run.m),
        categories: category_set(&args.categories),
        parallelism: loaded.config.run.concurrency,
        seed: args.seed.or(loaded.config.run.seed),
    };
    let checkpoint = args
        .checkpoint
        .clone()
        .unwrap_or_else(|| args.out.with_extension("checkpoint.jsonl"));

    let stats = build_dataset(&args.solutions, &args.out, &checkpoint, &world, &cfg)
        .await
        .context("building dataset")?;

    println!("dataset: {}", args.out.display());
    println!("checkpoint: {}", checkpoint.display());
    print!("{stats}");
    Ok(())
}
