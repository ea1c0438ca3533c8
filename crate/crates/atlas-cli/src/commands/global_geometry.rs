//! `global-geometry`: covariance and Spearman spectra, participation ratio,
//! per-year subspace angles, dimension clustering, correlated-pair census,
//! and the 3-component PCA projection for plot export.

use anyhow::bail;
use atlas_core::data::{stratified_subsample, GroupKey};
use atlas_core::{cluster_dimensions, spectral};

use crate::config::RunConfig;
use crate::manifest::{Csv, CsvField, Manifest};

pub fn run(config: &RunConfig) -> anyhow::Result<()> {
    let gc = &config.global_geometry;
    let ds = super::load_configured_dataset(config)?;
    let seed = config.sub_seed("global-geometry");

    let working = if gc.subsample_per_year > 0 {
        std::sync::Arc::new(stratified_subsample(&ds, gc.subsample_per_year, &GroupKey::Year, seed)?)
    } else {
        ds.clone()
    };

    let mut manifest = Manifest::new("global-geometry", config.seed)
        .with_dataset(&ds)
        .with_parameters(gc);

    let cov = spectral::covariance_matrix(&working)?;
    let summary = spectral::eigendecompose(&cov.view())?;
    let spearman = spectral::spearman_matrix(&working)?;
    let pearson = spectral::correlation_from_covariance(&cov.view());

    let corr_for_pairs = &pearson;
    let (pair_count, total_pairs) =
        spectral::count_correlated_pairs(&corr_for_pairs.view(), gc.pair_threshold)?;

    // eigen.json
    let eigen_json = serde_json::json!({
        "eigenvalues": summary.eigenvalues.to_vec(),
        "variance_fractions": summary.variance_fractions,
        "participation_ratio": summary.participation_ratio,
        "eigenvectors": summary.eigenvectors.outer_iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
        "correlated_pairs": {
            "threshold": gc.pair_threshold,
            "count": pair_count,
            "total_pairs": total_pairs,
            "matrix": "pearson",
        },
    });
    manifest.write_output(&config.out_dir, "eigen.json", &serde_json::to_vec_pretty(&eigen_json)?)?;

    // spectrum.csv
    let mut csv = Csv::new("component,eigenvalue,variance_fraction,cumulative_fraction");
    let mut cum = 0.0;
    for (i, (&l, &f)) in summary
        .eigenvalues
        .iter()
        .zip(summary.variance_fractions.iter())
        .enumerate()
    {
        cum += f;
        csv.row(&[CsvField::U(i), CsvField::F(l), CsvField::F(f), CsvField::F(cum)]);
    }
    manifest.write_output(&config.out_dir, "spectrum.csv", &csv.into_bytes())?;

    // Per-year principal angles (skipped for single-year datasets).
    if working.years().len() >= 2 {
        let angles = spectral::per_year_subspace_angles(&working, gc.top_p_angles)?;
        let mut csv = Csv::new("year_a,year_b,angle_index,angle_deg");
        for pair in &angles {
            for (i, a) in pair.angles_deg.iter().enumerate() {
                csv.row(&[
                    CsvField::I(pair.year_a as i64),
                    CsvField::I(pair.year_b as i64),
                    CsvField::U(i),
                    CsvField::F(*a),
                ]);
            }
        }
        manifest.write_output(&config.out_dir, "angles.csv", &csv.into_bytes())?;
    } else {
        manifest.warn("single-year dataset: per-year angle analysis skipped");
    }

    // Dimension clustering on 1 - |corr|.
    let corr = match gc.cluster_on.as_str() {
        "spearman" => &spearman,
        "pearson" => &pearson,
        other => bail!("cluster_on must be spearman or pearson, got '{other}'"),
    };
    let d = working.dim();
    let k_hi = gc.cluster_k_max.min(d.saturating_sub(1));
    let sweep = cluster_dimensions(&corr.view(), gc.cluster_k_min..=k_hi)?;
    let mut csv = Csv::new("k,silhouette,dim,label");
    for (k, labels, score) in &sweep.per_k {
        for (dim, label) in labels.iter().enumerate() {
            csv.row(&[
                CsvField::U(*k),
                CsvField::F(*score),
                CsvField::U(dim),
                CsvField::U(*label),
            ]);
        }
    }
    manifest.write_output(&config.out_dir, "clusters.csv", &csv.into_bytes())?;
    manifest.warn(format!(
        "silhouette argmax k = {} (score {:.6})",
        sweep.best_k, sweep.best_score
    ));

    // Eigenvector weights are reported raw in eigen.json; this table adds
    // the per-dimension vs covariate rank correlations so both readings of
    // "loading" are available.
    if working.n_covariates() > 0 {
        let mut csv = Csv::new("dim,covariate,spearman");
        for dim in 0..d {
            let col: Vec<f64> = working.vectors.column(dim).iter().map(|&v| v as f64).collect();
            for (j, name) in working.covariate_names.iter().enumerate() {
                if working.covariate_stats[j].constant {
                    continue;
                }
                let cov_col = working.covariate_column(j);
                csv.row(&[
                    CsvField::U(dim),
                    CsvField::Str(name),
                    CsvField::F(atlas_core::stats::spearman(&col, &cov_col)),
                ]);
            }
        }
        manifest.write_output(&config.out_dir, "dim_covariate_corr.csv", &csv.into_bytes())?;
    }

    // PCA projection for plotting.
    let (proj, _) = spectral::pca_project(&working, gc.pca_components.min(d))?;
    let mut header = String::from("lat,lon,year");
    for c in 0..proj.ncols() {
        header.push_str(&format!(",pc{}", c + 1));
    }
    let mut csv = Csv::new(&header);
    for i in 0..working.n() {
        let mut fields = vec![
            CsvField::F(working.lat[i]),
            CsvField::F(working.lon[i]),
            CsvField::I(working.year[i] as i64),
        ];
        for c in 0..proj.ncols() {
            fields.push(CsvField::F(proj[[i, c]]));
        }
        csv.row(&fields);
    }
    manifest.write_output(&config.out_dir, "pca3.csv", &csv.into_bytes())?;

    manifest.finish(&config.out_dir)?;
    Ok(())
}
