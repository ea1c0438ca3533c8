//! `probes`: ridge concept directions at global, regional, and local scales
//! plus direction-stability statistics per property.

use atlas_core::knn::Index;
use atlas_core::local_geom::select_probes;
use atlas_core::probes::{direction_stability, embedding_matrix, fit_ridge_probe, ProbeModel, Scale};

use crate::config::RunConfig;
use crate::manifest::{Csv, CsvField, Manifest};

pub fn run(config: &RunConfig) -> anyhow::Result<()> {
    let pc = &config.probes;
    let ds = super::load_configured_dataset(config)?;
    let index = Index::build(ds.clone())?;
    let seed = config.sub_seed("probes");
    let properties = super::resolve_properties(&ds, &pc.properties)?;
    let regions = super::optional_regions(&pc.regions)?;

    let mut manifest = Manifest::new("probes", config.seed)
        .with_dataset(&ds)
        .with_parameters(pc);

    let all_rows: Vec<usize> = (0..ds.n()).collect();
    let x_all = embedding_matrix(&ds, &all_rows);
    let local_sources = select_probes(&ds, pc.local_probes, None, seed)?;

    let mut models: Vec<ProbeModel> = Vec::new();
    let mut stability_csv = Csv::new("property,scale_a,scale_b,count,mean_abs_cos,median_abs_cos,excluded_zero_direction");
    for prop in &properties {
        let j = ds.covariate_index(prop)?;
        let y_all: Vec<f64> = ds.covariate_column(j);
        let mut per_property = Vec::new();
        per_property.push(fit_ridge_probe(prop, Scale::Global, &x_all.view(), &y_all, pc.alpha)?);

        for region in &regions {
            let rows: Vec<usize> = (0..ds.n())
                .filter(|&i| region.contains(ds.lat[i], ds.lon[i]))
                .collect();
            if rows.len() < 2 {
                manifest.warn(format!("region '{}' has fewer than 2 rows, skipped", region.name));
                continue;
            }
            let x = embedding_matrix(&ds, &rows);
            let y: Vec<f64> = rows.iter().map(|&r| ds.covariates[[r, j]]).collect();
            per_property.push(fit_ridge_probe(
                prop,
                Scale::Regional(region.name.clone()),
                &x.view(),
                &y,
                pc.alpha,
            )?);
        }

        for &source in &local_sources {
            let ns = index.search_row(source, pc.k.min(ds.n() - 1), true)?;
            let mut rows = vec![source];
            rows.extend_from_slice(&ns.indices);
            let x = embedding_matrix(&ds, &rows);
            let y: Vec<f64> = rows.iter().map(|&r| ds.covariates[[r, j]]).collect();
            per_property.push(fit_ridge_probe(prop, Scale::Local(source), &x.view(), &y, pc.alpha)?);
        }

        if per_property.len() >= 2 {
            let report = direction_stability(&per_property)?;
            for pair in &report.pairs {
                stability_csv.row(&[
                    CsvField::Str(prop),
                    CsvField::Str(&pair.scale_a),
                    CsvField::Str(&pair.scale_b),
                    CsvField::U(pair.count),
                    CsvField::F(pair.mean_abs_cos),
                    CsvField::F(pair.median_abs_cos),
                    CsvField::U(report.excluded_zero_direction),
                ]);
            }
        }
        models.extend(per_property);
    }

    manifest.write_output(&config.out_dir, "probe_models.json", &serde_json::to_vec(&models)?)?;
    manifest.write_output(&config.out_dir, "direction_stability.csv", &stability_csv.into_bytes())?;
    manifest.finish(&config.out_dir)?;
    Ok(())
}
