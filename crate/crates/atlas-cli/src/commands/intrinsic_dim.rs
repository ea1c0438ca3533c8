//! `intrinsic-dim`: per-point Levina-Bickel estimates over a probe sample,
//! per-k summaries, and optional covariate-band stratification.

use atlas_core::intrinsic::{mle_id_field, stratify_by_band};
use atlas_core::knn::Index;
use atlas_core::local_geom::select_probes;

use crate::config::RunConfig;
use crate::manifest::{Csv, CsvField, Manifest};

pub fn run(config: &RunConfig) -> anyhow::Result<()> {
    let ic = &config.intrinsic_dim;
    let ds = super::load_configured_dataset(config)?;
    let index = Index::build(ds.clone())?;
    let seed = config.sub_seed("intrinsic-dim");

    let mut manifest = Manifest::new("intrinsic-dim", config.seed)
        .with_dataset(&ds)
        .with_parameters(ic);

    let band_covariate = if ic.stratify_covariate.is_empty() {
        None
    } else if ds.covariate_index(&ic.stratify_covariate).is_ok() {
        Some(ic.stratify_covariate.as_str())
    } else {
        manifest.warn(format!(
            "covariate '{}' not in dataset; banded summaries skipped",
            ic.stratify_covariate
        ));
        None
    };

    let probes = select_probes(&ds, ic.probes, None, seed)?;
    let k_list: Vec<usize> = ic
        .k_list
        .iter()
        .copied()
        .filter(|&k| k >= 2 && k <= ds.n() - 1)
        .collect();
    if k_list.len() != ic.k_list.len() {
        manifest.warn("some k values were outside [2, N-1] and were skipped");
    }
    let fields = mle_id_field(&ds, &index, &k_list, &probes)?;

    let mut summary_csv = Csv::new("k,mean,std,valid,flagged");
    for field in &fields {
        summary_csv.row(&[
            CsvField::U(field.k),
            CsvField::F(field.mean),
            CsvField::F(field.std),
            CsvField::U(field.valid),
            CsvField::U(field.flagged),
        ]);
        if field.flagged > 0 {
            manifest.warn(format!(
                "k={}: {} probes flagged by the duplicate policy",
                field.k, field.flagged
            ));
        }

        let mut csv = Csv::new("lat,lon,id");
        for (i, &row) in field.probe_rows.iter().enumerate() {
            if let Some(est) = field.estimates[i] {
                csv.row(&[CsvField::F(ds.lat[row]), CsvField::F(ds.lon[row]), CsvField::F(est)]);
            }
        }
        manifest.write_output(&config.out_dir, &format!("id_field_k{}.csv", field.k), &csv.into_bytes())?;

        if let Some(covariate) = band_covariate {
            let j = ds.covariate_index(covariate)?;
            let band_values: Vec<f64> = field
                .probe_rows
                .iter()
                .map(|&r| ds.covariates[[r, j]])
                .collect();
            let (bands, out_of_range) =
                stratify_by_band(&field.estimates, &band_values, &ic.band_edges)?;
            if out_of_range > 0 {
                manifest.warn(format!(
                    "k={}: {} probes outside all bands",
                    field.k, out_of_range
                ));
            }
            let mut csv = Csv::new("lo,hi,mean,std,count");
            for b in bands {
                csv.row(&[
                    CsvField::F(b.lo),
                    CsvField::F(b.hi),
                    CsvField::F(b.mean.unwrap_or(f64::NAN)),
                    CsvField::F(b.std.unwrap_or(f64::NAN)),
                    CsvField::U(b.count),
                ]);
            }
            manifest.write_output(&config.out_dir, &format!("id_bands_k{}.csv", field.k), &csv.into_bytes())?;
        }
    }
    manifest.write_output(&config.out_dir, "id_summary.csv", &summary_csv.into_bytes())?;
    manifest.finish(&config.out_dir)?;
    Ok(())
}
