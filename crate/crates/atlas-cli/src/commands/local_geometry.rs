//! `local-geometry` and `multiscale`: local PCA surveys over probe
//! locations, exported as plot-ready CSV.

use atlas_core::dict::DimensionDictionary;
use atlas_core::knn::Index;
use atlas_core::local_geom::{multiscale_sweep, probe_survey, select_probes, Survey, SurveyConfig};
use atlas_core::spectral;

use crate::config::RunConfig;
use crate::manifest::{Csv, CsvField, Manifest};

fn probes_csv(ds: &atlas_core::EmbeddingDataset, survey: &Survey) -> Vec<u8> {
    let mut csv = Csv::new("lat,lon,local_pr,align_pc1,align_pc2,tangent_deg,category,var_frac_pc1");
    for r in &survey.records {
        csv.row(&[
            CsvField::F(ds.lat[r.probe]),
            CsvField::F(ds.lon[r.probe]),
            CsvField::F(r.local_pr),
            CsvField::F(r.align_pc1),
            CsvField::F(r.align_pc2),
            CsvField::F(r.tangent_deg.unwrap_or(f64::NAN)),
            CsvField::Str(r.category.as_deref().unwrap_or("")),
            CsvField::F(r.var_frac_pc1),
        ]);
    }
    csv.into_bytes()
}

fn load_dict(path: &Option<std::path::PathBuf>) -> anyhow::Result<Option<DimensionDictionary>> {
    Ok(match path {
        Some(p) => Some(DimensionDictionary::load(p)?),
        None => None,
    })
}

pub fn run_local(config: &RunConfig) -> anyhow::Result<()> {
    let lc = &config.local_geometry;
    let ds = super::load_configured_dataset(config)?;
    let index = Index::build(ds.clone())?;
    let seed = config.sub_seed("local-geometry");
    let dict = load_dict(&lc.dimension_dictionary)?;

    let mut manifest = Manifest::new("local-geometry", config.seed)
        .with_dataset(&ds)
        .with_parameters(lc);

    let stratify =
        super::optional_stratify(&ds, &lc.stratify_covariate, &lc.band_edges, &mut manifest);
    let probes = select_probes(&ds, lc.probes, stratify, seed)?;
    let cov = spectral::covariance_matrix(&ds)?;
    let global = spectral::eigendecompose(&cov.view())?;
    let sc = SurveyConfig {
        k: lc.k,
        tangent_m: lc.tangent_m,
        include_self: lc.include_self,
    };
    let survey = probe_survey(&ds, &index, &probes, &global, dict.as_ref(), &sc)?;
    if survey.summary.degenerate > 0 {
        manifest.warn(format!("{} probes had degenerate neighborhoods", survey.summary.degenerate));
    }
    manifest.write_output(&config.out_dir, &format!("probes_k{}.csv", lc.k), &probes_csv(&ds, &survey))?;
    manifest.write_output(
        &config.out_dir,
        "local_summary.json",
        &serde_json::to_vec_pretty(&survey.summary)?,
    )?;
    manifest.finish(&config.out_dir)?;
    Ok(())
}

pub fn run_multiscale(config: &RunConfig) -> anyhow::Result<()> {
    let mc = &config.multiscale;
    let ds = super::load_configured_dataset(config)?;
    let index = Index::build(ds.clone())?;
    let seed = config.sub_seed("multiscale");
    let dict = load_dict(&mc.dimension_dictionary)?;

    let mut manifest = Manifest::new("multiscale", config.seed)
        .with_dataset(&ds)
        .with_parameters(mc);

    let probes = select_probes(&ds, mc.probes, None, seed)?;
    let cov = spectral::covariance_matrix(&ds)?;
    let global = spectral::eigendecompose(&cov.view())?;
    let result = multiscale_sweep(
        &ds,
        &index,
        &probes,
        &mc.k_list,
        &global,
        dict.as_ref(),
        mc.tangent_m,
        mc.include_self,
    )?;
    for k in &result.skipped {
        manifest.warn(format!("k={k} exceeds N-1, skipped"));
    }

    let mut csv = Csv::new(
        "k,mean_align_pc1,mean_align_pc2,frac_tangent_gt_60,mean_local_pr,mean_var_frac_pc1,top_category,top_category_fraction",
    );
    for survey in &result.surveys {
        let s = &survey.summary;
        let (cat, frac) = s
            .category_histogram
            .first()
            .map(|(c, f)| (c.as_str(), *f))
            .unwrap_or(("", f64::NAN));
        csv.row(&[
            CsvField::U(s.k),
            CsvField::F(s.mean_align_pc1),
            CsvField::F(s.mean_align_pc2),
            CsvField::F(s.frac_tangent_gt_60),
            CsvField::F(s.mean_local_pr),
            CsvField::F(s.mean_var_frac_pc1),
            CsvField::Str(cat),
            CsvField::F(frac),
        ]);
        manifest.write_output(
            &config.out_dir,
            &format!("probes_k{}.csv", s.k),
            &probes_csv(&ds, survey),
        )?;
    }
    manifest.write_output(&config.out_dir, "multiscale_summary.csv", &csv.into_bytes())?;
    manifest.finish(&config.out_dir)?;
    Ok(())
}
