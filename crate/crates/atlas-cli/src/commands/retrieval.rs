//! `coherence`, `confidence`, `dictionary`: retrieval-coherence scoring,
//! the five-feature confidence model, and the geometric dictionary export.

use std::sync::Arc;

use anyhow::{bail, Context};
use atlas_core::coherence::{
    build_geometric_dictionary, fit_confidence_model, global_dimension_importance,
    regional_profiles, retrieval_coherence, FeatureContext, Provenance, SpreadMode,
};
use atlas_core::data::zscore_covariates;
use atlas_core::knn::Index;
use atlas_core::local_geom::select_probes;
use atlas_core::spectral;

use crate::config::RunConfig;
use crate::manifest::{Csv, CsvField, Manifest};

fn parse_spread(s: &str) -> anyhow::Result<SpreadMode> {
    Ok(match s {
        "zscore_std" => SpreadMode::ZScoreStd,
        "raw_cv" => SpreadMode::RawCv,
        other => bail!("unknown spread mode '{other}'"),
    })
}

pub fn run_coherence(config: &RunConfig) -> anyhow::Result<()> {
    let cc = &config.coherence;
    let raw = super::load_configured_dataset(config)?;
    let ds = Arc::new(zscore_covariates(&raw));
    let index = Index::build(ds.clone())?;
    let seed = config.sub_seed("coherence");
    let mode = parse_spread(&cc.spread)?;

    let mut manifest = Manifest::new("coherence", config.seed)
        .with_dataset(&raw)
        .with_parameters(cc);

    let rows = select_probes(&ds, cc.rows, None, seed)?;
    let scores = retrieval_coherence(&ds, &index, &rows, cc.k, mode)?;
    let mut csv = Csv::new("row,lat,lon,mean_spread");
    for s in &scores {
        csv.row(&[
            CsvField::U(s.row),
            CsvField::F(ds.lat[s.row]),
            CsvField::F(ds.lon[s.row]),
            CsvField::F(s.mean_spread),
        ]);
    }
    manifest.write_output(&config.out_dir, "coherence.csv", &csv.into_bytes())?;
    manifest.finish(&config.out_dir)?;
    Ok(())
}

/// Shared assembly for `confidence` and `dictionary`: features + coherence
/// over a deterministic row sample.
struct Assembled {
    ds: Arc<atlas_core::EmbeddingDataset>,
    rows: Vec<usize>,
    features: Vec<atlas_core::coherence::GeoFeatures>,
    coherences: Vec<f64>,
    raw_hash: String,
}

fn assemble(config: &RunConfig, rows_cap: usize, seed: u64) -> anyhow::Result<Assembled> {
    let cf = &config.confidence;
    let raw = super::load_configured_dataset(config)?;
    let ds = Arc::new(zscore_covariates(&raw));
    let index = Index::build(ds.clone())?;
    let cov = spectral::covariance_matrix(&ds)?;
    let global = spectral::eigendecompose(&cov.view())?;
    let rows = select_probes(&ds, rows_cap, None, seed)?;
    let ctx = FeatureContext {
        k_id: cf.k_id,
        k_pr: cf.k_pr,
        k_dist: cf.k_dist,
        tangent_m: cf.tangent_m,
        include_self: true,
        ..FeatureContext::new(&ds, &index, &global)
    };
    let features = ctx.features_batch(&rows)?;
    let scores = retrieval_coherence(&ds, &index, &rows, config.coherence.k, parse_spread(&config.coherence.spread)?)?;
    let coherences: Vec<f64> = scores.iter().map(|s| s.mean_spread).collect();
    Ok(Assembled {
        ds,
        rows,
        features,
        coherences,
        raw_hash: format!("{:016x}", raw.content_hash()),
    })
}

pub fn run_confidence(config: &RunConfig) -> anyhow::Result<()> {
    let cf = &config.confidence;
    let seed = config.sub_seed("confidence");
    let assembled = assemble(config, cf.rows, seed)?;

    let mut manifest = Manifest::new("confidence", config.seed).with_parameters(cf);
    manifest.dataset_hash = Some(assembled.raw_hash.clone());

    // Drop rows with degenerate features before fitting.
    let mut fmat = Vec::new();
    let mut cvec = Vec::new();
    for (f, &c) in assembled.features.iter().zip(assembled.coherences.iter()) {
        if !f.degenerate {
            fmat.push(f.vector());
            cvec.push(c);
        }
    }
    let dropped = assembled.features.len() - fmat.len();
    if dropped > 0 {
        manifest.warn(format!("{dropped} rows dropped for degenerate features"));
    }
    let model = fit_confidence_model(&fmat, &cvec, cf.holdout, seed ^ 1)?;
    if model.used_pseudo_inverse {
        manifest.warn("rank-deficient feature matrix: pseudo-inverse solution");
    }

    manifest.write_output(
        &config.out_dir,
        "confidence_model.json",
        &serde_json::to_vec_pretty(&model)?,
    )?;
    let mut csv = Csv::new("feature,spearman_with_coherence,coefficient");
    for (i, name) in model.feature_names.iter().enumerate() {
        csv.row(&[
            CsvField::Str(name),
            CsvField::F(model.feature_spearman[i]),
            CsvField::F(model.coefficients[i]),
        ]);
    }
    manifest.write_output(&config.out_dir, "feature_correlations.csv", &csv.into_bytes())?;
    manifest.finish(&config.out_dir)?;
    Ok(())
}

pub fn run_dictionary(config: &RunConfig) -> anyhow::Result<()> {
    let dc = &config.dictionary;
    let cf = &config.confidence;
    let regions_path = dc
        .regions
        .as_ref()
        .context("dictionary.regions not configured")?;
    let regions = atlas_core::regions::load_regions(regions_path)?;
    let seed = config.sub_seed("dictionary");
    let assembled = assemble(config, dc.rows, seed)?;

    let mut manifest = Manifest::new("dictionary", config.seed).with_parameters(dc);
    manifest.dataset_hash = Some(assembled.raw_hash.clone());

    let mut fmat = Vec::new();
    let mut cvec = Vec::new();
    for (f, &c) in assembled.features.iter().zip(assembled.coherences.iter()) {
        if !f.degenerate {
            fmat.push(f.vector());
            cvec.push(c);
        }
    }
    let model = fit_confidence_model(&fmat, &cvec, cf.holdout, seed ^ 1)?;

    let profiles = regional_profiles(
        &assembled.ds,
        &assembled.rows,
        &assembled.features,
        &assembled.coherences,
        &regions,
    )?;
    for p in &profiles {
        if p.count == 0 {
            manifest.warn(format!("region '{}' contains no sampled rows", p.name));
        }
    }
    let importance = global_dimension_importance(&assembled.features, assembled.ds.dim());
    let mut parameters = std::collections::BTreeMap::new();
    parameters.insert("rows".to_string(), assembled.rows.len().to_string());
    parameters.insert("k_id".to_string(), cf.k_id.to_string());
    parameters.insert("k_pr".to_string(), cf.k_pr.to_string());
    parameters.insert("k_dist".to_string(), cf.k_dist.to_string());
    parameters.insert("tangent_m".to_string(), cf.tangent_m.to_string());
    parameters.insert("coherence_k".to_string(), config.coherence.k.to_string());
    parameters.insert("seed".to_string(), config.seed.to_string());
    let dict = build_geometric_dictionary(
        profiles,
        model,
        importance,
        Provenance {
            dataset_hash: assembled.raw_hash.clone(),
            n: assembled.ds.n(),
            d: assembled.ds.dim(),
            parameters,
        },
        &regions,
    )?;
    manifest.write_output(
        &config.out_dir,
        "geometric_dictionary.json",
        &serde_json::to_vec_pretty(&dict)?,
    )?;
    manifest.finish(&config.out_dir)?;
    Ok(())
}
