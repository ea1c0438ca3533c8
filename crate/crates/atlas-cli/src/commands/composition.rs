//! `shift`, `transfer`, `analogy`: the compositional-arithmetic experiments.

use anyhow::bail;
use atlas_core::composition::{
    aggregate_outcomes, analogy, experiment_suite, property_transfer, AnalogyMode, ShiftLab,
    ShiftMethod,
};
use atlas_core::knn::Index;
use atlas_core::local_geom::select_probes;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::config::RunConfig;
use crate::manifest::{Csv, CsvField, Manifest};

fn parse_method(s: &str) -> anyhow::Result<ShiftMethod> {
    Ok(match s {
        "global_pc" => ShiftMethod::GlobalPc,
        "local_pc" => ShiftMethod::LocalPc,
        "probe_global" => ShiftMethod::ProbeGlobal,
        "probe_regional" => ShiftMethod::ProbeRegional,
        "probe_local" => ShiftMethod::ProbeLocal,
        "random" => ShiftMethod::Random,
        "geographic_baseline" => ShiftMethod::GeographicBaseline,
        other => bail!("unknown shift method '{other}'"),
    })
}

pub fn run_shift(config: &RunConfig) -> anyhow::Result<()> {
    let sc = &config.shift;
    let ds = super::load_configured_dataset(config)?;
    let index = Index::build(ds.clone())?;
    let seed = config.sub_seed("shift");
    let properties = super::resolve_properties(&ds, &sc.properties)?;
    let methods: Vec<ShiftMethod> = sc
        .methods
        .iter()
        .map(|m| parse_method(m))
        .collect::<anyhow::Result<_>>()?;
    let regions = super::optional_regions(&sc.regions)?;

    let mut manifest = Manifest::new("shift", config.seed)
        .with_dataset(&ds)
        .with_parameters(sc);

    let sources = select_probes(&ds, sc.sources, None, seed)?;
    let lab = ShiftLab::new(&ds, &index, seed)
        .with_k(sc.k)
        .with_regions(regions);
    let outcomes = experiment_suite(&lab, &sources, &properties, &methods, &sc.magnitudes);

    let flagged = outcomes.iter().filter(|o| o.flagged.is_some()).count();
    if flagged > 0 {
        manifest.warn(format!("{flagged} of {} cells flagged", outcomes.len()));
    }

    let mut csv = Csv::new(
        "source,property,method,magnitude,retrieved,target_change_sigma,nontarget_deviation_sigma,flagged",
    );
    for o in &outcomes {
        csv.row(&[
            CsvField::U(o.source),
            CsvField::Str(&o.property),
            CsvField::Str(o.method.name()),
            CsvField::F(o.magnitude),
            match o.retrieved {
                Some(r) => CsvField::U(r),
                None => CsvField::Str(""),
            },
            CsvField::F(o.target_change_sigma),
            CsvField::F(o.nontarget_deviation_sigma),
            CsvField::Str(o.flagged.as_deref().unwrap_or("")),
        ]);
    }
    manifest.write_output(&config.out_dir, "shift_outcomes.csv", &csv.into_bytes())?;

    let mut csv = Csv::new(
        "method,magnitude,count,flagged,mean_target_change,mean_abs_target_change,mean_nontarget_deviation,precision",
    );
    for a in aggregate_outcomes(&outcomes) {
        csv.row(&[
            CsvField::Str(a.method.name()),
            CsvField::F(a.magnitude),
            CsvField::U(a.count),
            CsvField::U(a.flagged),
            CsvField::F(a.mean_target_change),
            CsvField::F(a.mean_abs_target_change),
            CsvField::F(a.mean_nontarget_deviation),
            CsvField::F(a.precision),
        ]);
    }
    manifest.write_output(&config.out_dir, "shift_aggregates.csv", &csv.into_bytes())?;
    manifest.finish(&config.out_dir)?;
    Ok(())
}

pub fn run_transfer(config: &RunConfig) -> anyhow::Result<()> {
    let tc = &config.transfer;
    let ds = super::load_configured_dataset(config)?;
    let index = Index::build(ds.clone())?;
    let seed = config.sub_seed("transfer");
    let properties = super::resolve_properties(&ds, &tc.properties)?;

    let mut manifest = Manifest::new("transfer", config.seed)
        .with_dataset(&ds)
        .with_parameters(tc);

    let mut rng = StdRng::seed_from_u64(seed);
    let mut csv = Csv::new(
        "a,b,property,components,retrieved,target_error_sigma,nontarget_deviation_sigma,flagged",
    );
    let mut flagged = 0usize;
    for prop in &properties {
        for _ in 0..tc.pairs {
            let a = rng.random_range(0..ds.n());
            let mut b = rng.random_range(0..ds.n());
            while b == a {
                b = rng.random_range(0..ds.n());
            }
            match property_transfer(&ds, &index, a, b, prop, tc.k, tc.components) {
                Ok(o) => {
                    let comp = o
                        .replaced_components
                        .iter()
                        .map(|c| c.to_string())
                        .collect::<Vec<_>>()
                        .join(" ");
                    csv.row(&[
                        CsvField::U(o.a),
                        CsvField::U(o.b),
                        CsvField::Str(prop),
                        CsvField::Str(&comp),
                        CsvField::U(o.retrieved),
                        CsvField::F(o.target_error_sigma),
                        CsvField::F(o.nontarget_deviation_sigma),
                        CsvField::Str(""),
                    ]);
                }
                Err(e) => {
                    flagged += 1;
                    csv.row(&[
                        CsvField::U(a),
                        CsvField::U(b),
                        CsvField::Str(prop),
                        CsvField::Str(""),
                        CsvField::Str(""),
                        CsvField::F(f64::NAN),
                        CsvField::F(f64::NAN),
                        CsvField::Str(&e.to_string()),
                    ]);
                }
            }
        }
    }
    if flagged > 0 {
        manifest.warn(format!("{flagged} transfer cells flagged"));
    }
    manifest.write_output(&config.out_dir, "transfer_outcomes.csv", &csv.into_bytes())?;
    manifest.finish(&config.out_dir)?;
    Ok(())
}

pub fn run_analogy(config: &RunConfig) -> anyhow::Result<()> {
    let ac = &config.analogy;
    let ds = super::load_configured_dataset(config)?;
    let index = Index::build(ds.clone())?;
    let seed = config.sub_seed("analogy");
    let properties = super::resolve_properties(&ds, &ac.properties)?;
    let modes: Vec<AnalogyMode> = match ac.mode.as_str() {
        "naive" => vec![AnalogyMode::Naive],
        "tangent_projected" => vec![AnalogyMode::TangentProjected],
        "both" => vec![AnalogyMode::Naive, AnalogyMode::TangentProjected],
        other => bail!("unknown analogy mode '{other}'"),
    };

    let mut manifest = Manifest::new("analogy", config.seed)
        .with_dataset(&ds)
        .with_parameters(ac);

    let mut rng = StdRng::seed_from_u64(seed);
    let mut csv = Csv::new(
        "a,b,c,property,mode,retrieved,target_error_sigma,nontarget_deviation_sigma,flagged",
    );
    let mut flagged = 0usize;
    for prop in &properties {
        // Triples follow the analogy premise: A and C share the target
        // property value (adjacent ranks), B supplies the new value.
        let j = ds.covariate_index(prop)?;
        let mut order: Vec<usize> = (0..ds.n()).collect();
        order.sort_by(|&x, &y| ds.covariates[[x, j]].total_cmp(&ds.covariates[[y, j]]));
        let mut starts: Vec<usize> = (0..ds.n().saturating_sub(1)).collect();
        starts.shuffle(&mut rng);
        let mut used = 0usize;
        for &s in &starts {
            if used >= ac.triples {
                break;
            }
            let a = order[s];
            let c = order[s + 1];
            let b = rng.random_range(0..ds.n());
            if b == a || b == c {
                continue;
            }
            used += 1;
            for &mode in &modes {
                match analogy(&ds, &index, a, b, c, prop, mode, ac.k, ac.tangent_m, ac.paper_sign) {
                    Ok(o) => {
                        let mode_name = match mode {
                            AnalogyMode::Naive => "naive",
                            AnalogyMode::TangentProjected => "tangent_projected",
                        };
                        csv.row(&[
                            CsvField::U(o.a),
                            CsvField::U(o.b),
                            CsvField::U(o.c),
                            CsvField::Str(prop),
                            CsvField::Str(mode_name),
                            CsvField::U(o.retrieved),
                            CsvField::F(o.target_error_sigma),
                            CsvField::F(o.nontarget_deviation_sigma),
                            CsvField::Str(""),
                        ]);
                    }
                    Err(e) => {
                        flagged += 1;
                        csv.row(&[
                            CsvField::U(a),
                            CsvField::U(b),
                            CsvField::U(c),
                            CsvField::Str(prop),
                            CsvField::Str(""),
                            CsvField::Str(""),
                            CsvField::F(f64::NAN),
                            CsvField::F(f64::NAN),
                            CsvField::Str(&e.to_string()),
                        ]);
                    }
                }
            }
        }
    }
    if flagged > 0 {
        manifest.warn(format!("{flagged} analogy cells flagged"));
    }
    manifest.write_output(&config.out_dir, "analogy_outcomes.csv", &csv.into_bytes())?;
    manifest.finish(&config.out_dir)?;
    Ok(())
}
