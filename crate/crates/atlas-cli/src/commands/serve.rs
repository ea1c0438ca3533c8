//! `serve`: load dataset + geometric dictionary + regions + gazetteer and
//! expose the nine tools over HTTP.

use std::sync::Arc;

use anyhow::Context;
use atlas_core::coherence::GeometricDictionary;
use atlas_core::dict::DimensionDictionary;
use atlas_core::knn::Index;
use atlas_core::spectral;
use atlas_core::tools::{Gazetteer, ToolService};

use crate::config::RunConfig;

/// Assemble the tool service from configured artifact files. Fails fast on
/// any missing input.
pub fn build_service(config: &RunConfig) -> anyhow::Result<ToolService> {
    let sc = &config.serve;
    let ds = super::load_configured_dataset(config)?;
    let ds = Arc::new(atlas_core::data::zscore_covariates(&ds));
    let index = Index::build(ds.clone())?;
    let cov = spectral::covariance_matrix(&ds)?;
    let global = spectral::eigendecompose(&cov.view())?;

    let geo_dict = GeometricDictionary::load(
        sc.dictionary
            .as_ref()
            .context("serve.dictionary not configured")?,
    )?;
    let dim_dict = match &sc.dimension_dictionary {
        Some(p) => DimensionDictionary::load(p)?,
        None => DimensionDictionary::uniform(ds.dim()),
    };
    let regions = match &sc.regions {
        Some(p) => atlas_core::regions::load_regions(p)?,
        None => vec![],
    };
    let gazetteer = match &sc.gazetteer {
        Some(p) => Gazetteer::load(p)?,
        None => Gazetteer::new(vec![])?,
    };

    let mut service = ToolService::new(ds, index, global, dim_dict, geo_dict, regions, gazetteer)?;
    service.set_cache_capacity(sc.cache_size);
    // Feature parameters follow the confidence block so served numbers match
    // the dictionary build.
    service.k_id = config.confidence.k_id;
    service.k_pr = config.confidence.k_pr;
    service.k_dist = config.confidence.k_dist;
    service.tangent_m = config.confidence.tangent_m;
    Ok(service)
}

pub fn run(config: &RunConfig) -> anyhow::Result<()> {
    let service = Arc::new(build_service(config)?);
    let handle = crate::server::spawn(service, config.serve.port)?;
    eprintln!("serving on http://{}", handle.addr);
    // Run until killed.
    loop {
        std::thread::park();
    }
}
