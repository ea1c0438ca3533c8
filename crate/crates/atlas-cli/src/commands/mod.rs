//! Subcommand implementations. Each writes its artifacts plus a
//! `manifest.json` into the output directory.

pub mod composition;
pub mod global_geometry;
pub mod ingest;
pub mod intrinsic_dim;
pub mod local_geometry;
pub mod probes;
pub mod retrieval;
pub mod serve;
pub mod synth;

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context};
use atlas_core::data::{load_dataset, DatasetFormat};
use atlas_core::EmbeddingDataset;

use crate::config::RunConfig;

pub fn load_configured_dataset(config: &RunConfig) -> anyhow::Result<Arc<EmbeddingDataset>> {
    let path = config
        .dataset
        .as_ref()
        .context("no dataset configured: set `dataset` in the config or pass --dataset")?;
    let format = parse_format(&config.dataset_format)?;
    let ds = load_dataset(path, format)
        .with_context(|| format!("loading dataset from {}", path.display()))?;
    Ok(Arc::new(ds))
}

pub fn parse_format(s: &str) -> anyhow::Result<DatasetFormat> {
    match s {
        "binary" => Ok(DatasetFormat::Binary),
        "csv" => Ok(DatasetFormat::Csv),
        other => bail!("unknown dataset format '{other}' (expected binary or csv)"),
    }
}

/// Non-constant covariate names, the default property list for experiments.
pub fn default_properties(ds: &EmbeddingDataset) -> Vec<String> {
    ds.covariate_names
        .iter()
        .enumerate()
        .filter(|(j, _)| !ds.covariate_stats[*j].constant)
        .map(|(_, n)| n.clone())
        .collect()
}

pub fn resolve_properties(ds: &EmbeddingDataset, configured: &[String]) -> anyhow::Result<Vec<String>> {
    if configured.is_empty() {
        let props = default_properties(ds);
        if props.is_empty() {
            bail!("dataset has no non-constant covariates to use as properties");
        }
        Ok(props)
    } else {
        for p in configured {
            ds.covariate_index(p)?;
        }
        Ok(configured.to_vec())
    }
}

pub fn optional_regions(path: &Option<std::path::PathBuf>) -> anyhow::Result<Vec<atlas_core::regions::RegionSpec>> {
    match path {
        None => Ok(vec![]),
        Some(p) => Ok(atlas_core::regions::load_regions(p)?),
    }
}

pub fn out_dir(config: &RunConfig) -> &Path {
    &config.out_dir
}

/// Stratification spec for probe selection: configured covariate + edges if
/// the covariate exists, otherwise None with a manifest warning.
pub fn optional_stratify<'a>(
    ds: &EmbeddingDataset,
    covariate: &'a str,
    edges: &'a [f64],
    manifest: &mut crate::manifest::Manifest,
) -> Option<(&'a str, &'a [f64])> {
    if covariate.is_empty() {
        return None;
    }
    if ds.covariate_index(covariate).is_err() {
        manifest.warn(format!(
            "covariate '{covariate}' not in dataset; probe selection unstratified"
        ));
        return None;
    }
    Some((covariate, edges))
}
