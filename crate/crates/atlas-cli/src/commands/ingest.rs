//! `ingest`: read a dataset (CSV or binary) and write the canonical binary
//! interchange form.

use anyhow::Context;
use atlas_core::data::{load_dataset, save_binary};

use crate::config::RunConfig;
use crate::manifest::Manifest;

pub fn run(config: &RunConfig) -> anyhow::Result<()> {
    let ic = &config.ingest;
    let input = ic.input.as_ref().context("ingest.input not configured")?;
    let format = super::parse_format(&ic.format)?;
    let ds = load_dataset(input, format)
        .with_context(|| format!("ingesting {}", input.display()))?;
    let dataset_dir = ic
        .dataset_out
        .clone()
        .unwrap_or_else(|| config.out_dir.join("dataset"));
    save_binary(&ds, &dataset_dir)?;

    let mut manifest = Manifest::new("ingest", config.seed)
        .with_dataset(&ds)
        .with_parameters(ic);
    manifest.outputs.push(format!("{}", dataset_dir.display()));
    manifest.finish(&config.out_dir)?;
    Ok(())
}
