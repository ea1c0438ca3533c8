//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! with its measured values and elapsed time. Expected values come from
//! closed forms or from synthetic oracles with analytically known geometry;
//! tolerances are pinned in the assertions.
//!
//! Run with `cargo test -p atlas-cli --test acceptance -- --nocapture`.

use std::sync::Arc;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use atlas_core::coherence::{
    build_geometric_dictionary, fit_confidence_model, global_dimension_importance,
    regional_profiles, retrieval_coherence, FeatureContext, GeometricDictionary, Provenance,
    SpreadMode,
};
use atlas_core::composition::{ShiftLab, ShiftMethod};
use atlas_core::data::zscore_covariates;
use atlas_core::dict::DimensionDictionary;
use atlas_core::intrinsic::{mle_id_field, mle_id_point};
use atlas_core::knn::{squared_distance, Index};
use atlas_core::linalg::{random_orthonormal_frame, random_unit_vector};
use atlas_core::local_geom::{probe_survey, select_probes, SurveyConfig};
use atlas_core::probes::{direction_stability, embedding_matrix, fit_ridge_probe, Scale};
use atlas_core::regions::RegionSpec;
use atlas_core::spectral::{covariance_matrix, eigendecompose, participation_ratio};
use atlas_core::stats;
use atlas_core::synth::{
    attach_patch_property, attach_planted_properties, dataset_from_coords, generate_manifold,
    ManifoldSpec, PatchSpec,
};
use atlas_core::tools::{Gazetteer, ToolService};
use atlas_core::EmbeddingDataset;

fn report(criterion: u32, name: &str, pass: bool, details: &str, elapsed: Duration, budget: Duration) {
    let status = if pass && elapsed <= budget { "PASS" } else { "FAIL" };
    eprintln!(
        "ACCEPTANCE C{criterion:02} {name}: {status} [{details}; elapsed {:.1}s, budget {:.0}s]",
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    assert!(pass, "criterion {criterion} ({name}) failed: {details}");
    assert!(
        elapsed <= budget,
        "criterion {criterion} ({name}) exceeded its runtime budget: {:.1}s > {:.0}s",
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
}

#[test]
fn c01_participation_ratio_exactness() {
    let t = Instant::now();
    let a = participation_ratio(&[1.0, 1.0, 1.0, 1.0]).unwrap();
    let b = participation_ratio(&[3.0, 1.0]).unwrap();
    let c = participation_ratio(&[2.0, 0.0, 0.0]).unwrap();
    let pass = (a - 4.0).abs() <= 1e-12 && (b - 1.6).abs() <= 1e-12 && (c - 1.0).abs() <= 1e-12;
    report(
        1,
        "participation ratio closed forms",
        pass,
        &format!("PR values {a:.15}, {b:.15}, {c:.15}"),
        t.elapsed(),
        Duration::from_secs(1),
    );
}

#[test]
fn c02_mle_id_exactness() {
    let t = Instant::now();
    let e = std::f64::consts::E;
    let a = mle_id_point(&[1.0, e]).unwrap();
    let b = mle_id_point(&[1.0, e, e]).unwrap();
    let pass = (a - 1.0).abs() <= 1e-9 && (b - 2.0).abs() <= 1e-9;
    report(
        2,
        "MLE estimator closed forms",
        pass,
        &format!("estimates {a:.12}, {b:.12}"),
        t.elapsed(),
        Duration::from_secs(1),
    );
}

fn id_mean_on(ds: Arc<EmbeddingDataset>, k: usize, probes_wanted: usize) -> f64 {
    let index = Index::build(ds.clone()).unwrap();
    let step = (ds.n() / probes_wanted).max(1);
    let probes: Vec<usize> = (0..ds.n()).step_by(step).collect();
    let fields = mle_id_field(&ds, &index, &[k], &probes).unwrap();
    fields[0].mean
}

#[test]
fn c03_id_recovery_flat_and_swiss_roll() {
    // The d = 10 case runs end to end through the CLI (synth writes the
    // dataset, intrinsic-dim reads it back); the others use the library.
    let budget_each = Duration::from_secs(120);

    for (d, seed) in [(2usize, 101u64), (5, 102)] {
        let t = Instant::now();
        let synth = generate_manifold(&ManifoldSpec::flat(d, 64, 100_000, 0.0, seed)).unwrap();
        let mean = id_mean_on(Arc::new(synth.dataset), 20, 4000);
        let lo = d as f64 * 0.9;
        let hi = d as f64 * 1.1;
        report(
            3,
            &format!("ID recovery, flat d={d}"),
            mean >= lo && mean <= hi,
            &format!("mean {mean:.3} in [{lo:.1}, {hi:.1}]"),
            t.elapsed(),
            budget_each,
        );
    }

    // d = 10 via the CLI pipeline.
    let t = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut config = atlas_cli::config::RunConfig::default();
    config.out_dir = out.clone();
    config.seed = 103;
    config.synth.kind = "flat_subspace".into();
    config.synth.intrinsic_dim = 10;
    config.synth.ambient_dim = 64;
    config.synth.n_samples = 100_000;
    config.synth.noise_std = 0.0;
    atlas_cli::run_command(atlas_cli::Command::Synth, &config).unwrap();
    config.dataset = Some(out.join("dataset"));
    config.intrinsic_dim.k_list = vec![20];
    config.intrinsic_dim.probes = 4000;
    config.intrinsic_dim.stratify_covariate = String::new();
    atlas_cli::run_command(atlas_cli::Command::IntrinsicDim, &config).unwrap();
    let summary = std::fs::read_to_string(out.join("id_summary.csv")).unwrap();
    let mean: f64 = summary
        .lines()
        .nth(1)
        .and_then(|l| l.split(',').nth(1))
        .unwrap()
        .parse()
        .unwrap();
    report(
        3,
        "ID recovery, flat d=10 (CLI synth + intrinsic-dim)",
        (9.0..=11.0).contains(&mean),
        &format!("id_summary.csv mean {mean:.3} in [9, 11]"),
        t.elapsed(),
        budget_each,
    );

    let t = Instant::now();
    let synth = generate_manifold(&ManifoldSpec::swiss_roll(64, 100_000, 0.0, 104)).unwrap();
    let mean = id_mean_on(Arc::new(synth.dataset), 20, 4000);
    report(
        3,
        "ID recovery, swiss roll",
        (1.7..=2.3).contains(&mean),
        &format!("mean {mean:.3} in [1.7, 2.3]"),
        t.elapsed(),
        budget_each,
    );
}

#[test]
fn c04_curvature_diagnostic() {
    let t = Instant::now();
    let ratio_of = |synth: atlas_core::synth::SyntheticDataset| -> f64 {
        let ds = Arc::new(synth.dataset);
        let mean = id_mean_on(ds.clone(), 20, 3000);
        let cov = covariance_matrix(&ds).unwrap();
        let pr = eigendecompose(&cov.view())
            .unwrap()
            .participation_ratio
            .unwrap();
        mean / pr
    };
    let flat = ratio_of(generate_manifold(&ManifoldSpec::flat(10, 64, 50_000, 0.0, 105)).unwrap());
    let patch = ratio_of(
        generate_manifold(&ManifoldSpec::patchwork(
            vec![
                PatchSpec { intrinsic_dim: 2, weight: 0.5 },
                PatchSpec { intrinsic_dim: 8, weight: 0.5 },
            ],
            64,
            50_000,
            0.0,
            106,
            8,
            6.0,
        ))
        .unwrap(),
    );
    let pass = (0.85..=1.15).contains(&flat) && patch < 0.85;
    report(
        4,
        "MLE/PR curvature diagnostic",
        pass,
        &format!("flat ratio {flat:.3} in [0.85, 1.15], patchwork ratio {patch:.3} < 0.85"),
        t.elapsed(),
        Duration::from_secs(180),
    );
}

#[test]
fn c05_random_alignment_baseline() {
    let t = Instant::now();
    let mut rng = StdRng::seed_from_u64(107);
    let n = 100_000;
    let mut total = 0.0;
    for _ in 0..n {
        let u = random_unit_vector(64, &mut rng);
        let v = random_unit_vector(64, &mut rng);
        total += u.dot(&v).abs();
    }
    let mean = total / n as f64;
    // The closed form sqrt(2/(pi*64)) evaluates to 0.0997.
    report(
        5,
        "random |cos| baseline in 64 dims",
        (mean - 0.0997).abs() <= 0.005,
        &format!("Monte Carlo mean {mean:.4} vs 0.0997 +/- 0.005"),
        t.elapsed(),
        Duration::from_secs(10),
    );
}

#[test]
fn c06_local_geometry_contrast() {
    // Flat plate: one dominant axis with thin cross-sections keeps local
    // PC1 locked to the global PC1 inside every k-NN ball.
    let t = Instant::now();
    let n = 50_000;
    let probes_n = 1000;
    let config = SurveyConfig { k: 100, tangent_m: 10, include_self: true };

    let plate = {
        let base = generate_manifold(&ManifoldSpec::flat(10, 64, n, 0.0, 108)).unwrap();
        let mut coords = base.oracle.coords.clone();
        for i in 0..coords.nrows() {
            for j in 1..coords.ncols() {
                coords[[i, j]] *= 3e-4;
            }
        }
        dataset_from_coords(&coords, &base.oracle.frames[0], 0.0, 108).unwrap()
    };
    let ds = Arc::new(plate.dataset);
    let index = Index::build(ds.clone()).unwrap();
    let cov = covariance_matrix(&ds).unwrap();
    let global = eigendecompose(&cov.view()).unwrap();
    let probes = select_probes(&ds, probes_n, None, 9).unwrap();
    let flat_survey = probe_survey(&ds, &index, &probes, &global, None, &config).unwrap();

    let spec = ManifoldSpec::patchwork(
        vec![PatchSpec { intrinsic_dim: 10, weight: 1.0 }],
        64,
        n,
        0.0,
        109,
        32,
        6.0,
    );
    let synth = generate_manifold(&spec).unwrap();
    let ds = Arc::new(synth.dataset);
    let index = Index::build(ds.clone()).unwrap();
    let cov = covariance_matrix(&ds).unwrap();
    let global = eigendecompose(&cov.view()).unwrap();
    let probes = select_probes(&ds, probes_n, None, 10).unwrap();
    let patch_survey = probe_survey(&ds, &index, &probes, &global, None, &config).unwrap();

    let fs = &flat_survey.summary;
    let ps = &patch_survey.summary;
    let pass = fs.mean_align_pc1 > 0.9
        && fs.frac_tangent_gt_60 < 0.05
        && ps.mean_align_pc1 < 0.25
        && ps.frac_tangent_gt_60 > 0.5;
    report(
        6,
        "local-geometry contrast (flat vs patchwork)",
        pass,
        &format!(
            "flat: align {:.3} > 0.9, frac>60 {:.3} < 0.05; patchwork: align {:.3} < 0.25, frac>60 {:.3} > 0.5",
            fs.mean_align_pc1, fs.frac_tangent_gt_60, ps.mean_align_pc1, ps.frac_tangent_gt_60
        ),
        t.elapsed(),
        Duration::from_secs(180),
    );
}

#[test]
fn c07_knn_exactness_vs_naive_oracle() {
    let t = Instant::now();
    let mut rng = StdRng::seed_from_u64(110);
    let n = 2000;
    let d = 32;
    let mut vectors = Array2::<f32>::zeros((n, d));
    for v in vectors.iter_mut() {
        *v = rng.random::<f32>();
    }
    let ds = Arc::new(
        EmbeddingDataset::new(
            vectors,
            vec![0.0; n],
            vec![0.0; n],
            vec![2020; n],
            Array2::zeros((n, 0)),
            vec![],
        )
        .unwrap(),
    );
    let index = Index::build(ds.clone()).unwrap();

    // Naive double-loop oracle: full sort over all (distance, index) pairs.
    let naive = |q: usize, k: usize| -> (Vec<usize>, Vec<u64>) {
        let query: Vec<f32> = ds.vectors.row(q).to_vec();
        let mut all: Vec<(f64, usize)> = (0..n)
            .filter(|&i| i != q)
            .map(|i| (squared_distance(&query, ds.vectors.row(i).as_slice().unwrap()), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(k);
        (
            all.iter().map(|&(_, i)| i).collect(),
            all.iter().map(|&(d2, _)| d2.sqrt().to_bits()).collect(),
        )
    };

    let queries: Vec<usize> = (0..n).step_by(n / 50).take(50).collect();
    let results = index.search_rows(&queries, 25, true).unwrap();
    let mut exact = true;
    for (qi, &q) in queries.iter().enumerate() {
        let (oi, od) = naive(q, 25);
        let got_bits: Vec<u64> = results[qi].distances.iter().map(|d| d.to_bits()).collect();
        if results[qi].indices != oi || got_bits != od {
            exact = false;
            break;
        }
    }
    report(
        7,
        "blocked k-NN equals naive oracle bit-for-bit",
        exact,
        "50 queries x k=25 over 2000 points, indices and distance bits identical",
        t.elapsed(),
        Duration::from_secs(10),
    );
}

#[test]
fn c08_probe_recovery() {
    let t = Instant::now();
    let mut synth = generate_manifold(&ManifoldSpec::flat(8, 64, 10_000, 0.0, 111)).unwrap();
    let planted = synth.oracle.frames[0].column(0).to_owned();
    attach_planted_properties(&mut synth, &[("target".into(), planted.clone())], 0.0, 112).unwrap();
    let ds = synth.dataset;
    let rows: Vec<usize> = (0..ds.n()).collect();
    let x = embedding_matrix(&ds, &rows);
    let j = ds.covariate_index("target").unwrap();
    let y: Vec<f64> = ds.covariate_column(j);
    let model = fit_ridge_probe("target", Scale::Global, &x.view(), &y, 1.0).unwrap();
    let cos = model
        .direction
        .iter()
        .zip(planted.iter())
        .map(|(a, b)| a * b)
        .sum::<f64>()
        .abs();

    // Closed-form ridge oracle on a 3x2 system, solved by a hand 2x2 inverse.
    let x_small = ndarray::array![[1.0, 0.5], [2.0, -1.0], [4.0, 0.25]];
    let y_small = [2.0, -1.0, 3.0];
    let alpha = 1.0;
    let xm = [7.0 / 3.0, -0.25 / 3.0];
    let ym = 4.0 / 3.0;
    let mut g = [[alpha, 0.0], [0.0, alpha]];
    let mut b = [0.0, 0.0];
    for i in 0..3 {
        let xc = [x_small[[i, 0]] - xm[0], x_small[[i, 1]] - xm[1]];
        let yc = y_small[i] - ym;
        for a in 0..2 {
            b[a] += xc[a] * yc;
            for c in 0..2 {
                g[a][c] += xc[a] * xc[c];
            }
        }
    }
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    let beta = [
        (g[1][1] * b[0] - g[0][1] * b[1]) / det,
        (g[0][0] * b[1] - g[1][0] * b[0]) / det,
    ];
    let small = fit_ridge_probe("t", Scale::Global, &x_small.view(), &y_small, alpha).unwrap();
    let closed_form_ok = (small.coefficients[0] - beta[0]).abs() <= 1e-9
        && (small.coefficients[1] - beta[1]).abs() <= 1e-9;

    let pass = model.r2 > 0.99 && cos > 0.99 && closed_form_ok;
    report(
        8,
        "ridge probe recovery",
        pass,
        &format!(
            "R2 {:.4} > 0.99, |cos| {:.4} > 0.99, closed-form match {}",
            model.r2, cos, closed_form_ok
        ),
        t.elapsed(),
        Duration::from_secs(30),
    );
}

#[test]
fn c09_direction_rotation_on_patchwork() {
    let t = Instant::now();
    let spec = ManifoldSpec::patchwork(
        vec![PatchSpec { intrinsic_dim: 3, weight: 1.0 }],
        64,
        20_000,
        0.0,
        113,
        8,
        6.0,
    );
    let mut synth = generate_manifold(&spec).unwrap();
    attach_patch_property(&mut synth, "rotating", 0.0, 114).unwrap();
    let ds = Arc::new(synth.dataset);
    let index = Index::build(ds.clone()).unwrap();

    let j = ds.covariate_index("rotating").unwrap();
    let all_rows: Vec<usize> = (0..ds.n()).collect();
    let x_all = embedding_matrix(&ds, &all_rows);
    let y_all: Vec<f64> = ds.covariate_column(j);
    let global = fit_ridge_probe("rotating", Scale::Global, &x_all.view(), &y_all, 1.0).unwrap();

    let mut models = vec![global];
    let mut r2s = Vec::new();
    for i in 0..200 {
        let probe = (i * 97) % ds.n();
        let ns = index.search_row(probe, 100, true).unwrap();
        let mut rows = vec![probe];
        rows.extend_from_slice(&ns.indices);
        let x = embedding_matrix(&ds, &rows);
        let y: Vec<f64> = rows.iter().map(|&r| ds.covariates[[r, j]]).collect();
        let m = fit_ridge_probe("rotating", Scale::Local(probe), &x.view(), &y, 1.0).unwrap();
        r2s.push(m.r2);
        models.push(m);
    }
    let median_r2 = stats::median(&r2s);
    let report_stats = direction_stability(&models).unwrap();
    let gl = report_stats
        .pairs
        .iter()
        .find(|p| p.scale_a == "global" && p.scale_b == "local")
        .unwrap();
    let pass = gl.median_abs_cos < 0.3 && median_r2 > 0.9;
    report(
        9,
        "concept directions rotate across patches",
        pass,
        &format!(
            "median local-vs-global |cos| {:.3} < 0.3 with median local R2 {:.3} > 0.9",
            gl.median_abs_cos, median_r2
        ),
        t.elapsed(),
        Duration::from_secs(180),
    );
}

#[test]
fn c10_shift_sanity() {
    // Plate oracle: the target property lives on a short axis the k-NN
    // neighborhood fully covers, so one local sigma equals one global sigma.
    let t = Instant::now();
    let n = 20_000;
    let scales = [0.089, 1.0, 1.0];
    let mut rng = StdRng::seed_from_u64(115);
    let mut coords = Array2::<f64>::zeros((n, 3));
    for i in 0..n {
        for j in 0..3 {
            coords[[i, j]] = rng.random::<f64>() * scales[j];
        }
    }
    let frame = random_orthonormal_frame(64, 3, &mut rng);
    let mut synth = dataset_from_coords(&coords, &frame, 0.0, 115).unwrap();
    let dirs: Vec<(String, Array1<f64>)> = (0..3)
        .map(|j| (format!("p{j}"), frame.column(j).to_owned()))
        .collect();
    attach_planted_properties(&mut synth, &dirs, 0.0, 116).unwrap();
    let ds = Arc::new(synth.dataset);
    let index = Index::build(ds.clone()).unwrap();
    let lab = ShiftLab::new(&ds, &index, 117).with_k(2000);

    // Sources with headroom to increase the target property.
    let p = ds.covariate_index("p0").unwrap();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ds.covariates[[a, p]].total_cmp(&ds.covariates[[b, p]]));
    let sources: Vec<usize> = order[..n / 2].iter().copied().step_by(71).collect();

    let mut local_targets = Vec::new();
    let mut local_nontargets = Vec::new();
    let mut random_targets = Vec::new();
    let mut zero_ok = true;
    for &s in &sources {
        let o = lab.targeted_shift(s, "p0", ShiftMethod::LocalPc, 1.0).unwrap();
        local_targets.push(o.target_change_sigma);
        local_nontargets.push(o.nontarget_deviation_sigma);
        let o = lab.targeted_shift(s, "p0", ShiftMethod::Random, 1.0).unwrap();
        random_targets.push(o.target_change_sigma.abs());
        let o = lab.targeted_shift(s, "p0", ShiftMethod::LocalPc, 0.0).unwrap();
        zero_ok &= o.target_change_sigma == 0.0
            && o.nontarget_deviation_sigma == 0.0
            && o.retrieved == Some(s);
    }
    let mean_target = stats::mean(&local_targets);
    let mean_nontarget = stats::mean(&local_nontargets);
    let mean_random = stats::mean(&random_targets);
    let pass = (0.8..=1.2).contains(&mean_target)
        && mean_nontarget < 0.2
        && mean_random < 0.3 * mean_target
        && zero_ok;
    report(
        10,
        "targeted shift sanity",
        pass,
        &format!(
            "local_pc target {mean_target:.3} in [0.8, 1.2], nontarget {mean_nontarget:.3} < 0.2, \
             random/local ratio {:.3} < 0.3, n=0 exact zeros {zero_ok}",
            mean_random / mean_target
        ),
        t.elapsed(),
        Duration::from_secs(120),
    );
}

#[test]
fn c11_coherence_confidence() {
    let t = Instant::now();
    let spec = ManifoldSpec::patchwork(
        vec![
            PatchSpec { intrinsic_dim: 2, weight: 0.5 },
            PatchSpec { intrinsic_dim: 8, weight: 0.5 },
        ],
        64,
        20_000,
        0.0,
        118,
        8,
        6.0,
    );
    let synth = generate_manifold(&spec).unwrap();
    let ds = Arc::new(zscore_covariates(&synth.dataset));
    let index = Index::build(ds.clone()).unwrap();
    let cov = covariance_matrix(&ds).unwrap();
    let global = eigendecompose(&cov.view()).unwrap();
    let rows: Vec<usize> = (0..ds.n()).step_by(40).collect();
    let ctx = FeatureContext::new(&ds, &index, &global);
    let features = ctx.features_batch(&rows).unwrap();
    let coherence = retrieval_coherence(&ds, &index, &rows, 10, SpreadMode::ZScoreStd).unwrap();
    let coherences: Vec<f64> = coherence.iter().map(|c| c.mean_spread).collect();

    // Planted linear oracle: coherence is an exact linear function of the
    // real geometric features.
    let fmat: Vec<[f64; 5]> = features.iter().filter(|f| !f.degenerate).map(|f| f.vector()).collect();
    let beta = [0.4, -0.15, 2.0, 0.005, -0.8];
    let intercept = 0.3;
    let planted: Vec<f64> = fmat
        .iter()
        .map(|f| intercept + (0..5).map(|j| beta[j] * f[j]).sum::<f64>())
        .collect();
    let model = fit_confidence_model(&fmat, &planted, 0.2, 119).unwrap();
    let coeff_ok = (0..5).all(|j| (model.coefficients[j] - beta[j]).abs() <= 1e-6);
    let planted_ok = model.r2_holdout > 0.99 && coeff_ok;

    // Permuted control: no signal survives.
    let mut shuffled = planted.clone();
    let mut rng = StdRng::seed_from_u64(120);
    shuffled.shuffle(&mut rng);
    let null_model = fit_confidence_model(&fmat, &shuffled, 0.2, 119).unwrap();
    let null_ok = null_model.r2_holdout <= 0.05;

    // Sign check: geometric complexity correlates with incoherence.
    let ids: Vec<f64> = features.iter().map(|f| f.local_id).collect();
    let rho = stats::spearman(&ids, &coherences);
    let pass = planted_ok && null_ok && rho > 0.0;
    report(
        11,
        "coherence confidence model",
        pass,
        &format!(
            "planted holdout R2 {:.4} > 0.99 (coeff to 1e-6: {coeff_ok}), permuted holdout R2 {:.3} <= 0.05, \
             Spearman(ID, coherence) {rho:.3} > 0",
            model.r2_holdout, null_model.r2_holdout
        ),
        t.elapsed(),
        Duration::from_secs(120),
    );
}

fn build_tool_service() -> (Arc<ToolService>, GeometricDictionary) {
    let spec = ManifoldSpec::patchwork(
        vec![
            PatchSpec { intrinsic_dim: 2, weight: 0.5 },
            PatchSpec { intrinsic_dim: 6, weight: 0.5 },
        ],
        32,
        2000,
        0.0,
        121,
        4,
        6.0,
    );
    let synth = generate_manifold(&spec).unwrap();
    let ds = Arc::new(zscore_covariates(&synth.dataset));
    let index = Index::build(ds.clone()).unwrap();
    let cov = covariance_matrix(&ds).unwrap();
    let global = eigendecompose(&cov.view()).unwrap();
    let regions = vec![
        RegionSpec { name: "west".into(), lat_min: 0.0, lat_max: 1.0, lon_min: 0.0, lon_max: 0.5 },
        RegionSpec { name: "east".into(), lat_min: 0.0, lat_max: 1.0, lon_min: 0.5, lon_max: 1.0 },
    ];
    let rows: Vec<usize> = (0..ds.n()).step_by(7).collect();
    let ctx = FeatureContext {
        k_id: 10,
        k_pr: 40,
        k_dist: 10,
        tangent_m: 4,
        include_self: true,
        ..FeatureContext::new(&ds, &index, &global)
    };
    let features = ctx.features_batch(&rows).unwrap();
    let coherence = retrieval_coherence(&ds, &index, &rows, 10, SpreadMode::ZScoreStd).unwrap();
    let coherences: Vec<f64> = coherence.iter().map(|c| c.mean_spread).collect();
    let fmat: Vec<[f64; 5]> = features.iter().map(|f| f.vector()).collect();
    let model = fit_confidence_model(&fmat, &coherences, 0.2, 122).unwrap();
    let profiles = regional_profiles(&ds, &rows, &features, &coherences, &regions).unwrap();
    let importance = global_dimension_importance(&features, ds.dim());
    let dict = build_geometric_dictionary(
        profiles,
        model,
        importance,
        Provenance {
            dataset_hash: format!("{:016x}", ds.content_hash()),
            n: ds.n(),
            d: ds.dim(),
            parameters: Default::default(),
        },
        &regions,
    )
    .unwrap();
    let gazetteer = Gazetteer::new(vec![("Midpoint".into(), 0.5, 0.5)]).unwrap();
    let mut service = ToolService::new(
        ds,
        index,
        global,
        DimensionDictionary::uniform(32),
        dict.clone(),
        regions,
        gazetteer,
    )
    .unwrap();
    service.k_id = 10;
    service.k_pr = 40;
    service.k_dist = 10;
    service.tangent_m = 4;
    (Arc::new(service), dict)
}

#[test]
fn c12_dictionary_and_server_integrity() {
    let t = Instant::now();
    let (service, dict) = build_tool_service();

    // Dictionary round trip.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("geometric_dictionary.json");
    dict.save(&path).unwrap();
    let back = GeometricDictionary::load(&path).unwrap();
    let round_trip_ok = back.content_hash() == dict.content_hash();

    let handle = atlas_cli::server::spawn(service.clone(), 0).unwrap();
    let base = format!("http://{}", handle.addr);

    // Health endpoint.
    let mut res = ureq::get(&format!("{base}/health")).call().unwrap();
    let health: serde_json::Value =
        serde_json::from_str(&res.body_mut().read_to_string().unwrap()).unwrap();
    let health_ok = health["status"] == "ok"
        && health["n"].as_u64().unwrap() as usize == service.dataset().n()
        && health["dictionary_hash"].as_str().unwrap() == service.dictionary_hash();

    // HTTP equals direct library computation on 100 random rows.
    let mut rng = StdRng::seed_from_u64(123);
    let mut http_matches_library = true;
    for _ in 0..100 {
        let row = rng.random_range(0..service.dataset().n());
        let lat = service.dataset().lat[row];
        let lon = service.dataset().lon[row];
        let body = serde_json::json!({"lat": lat, "lon": lon}).to_string();
        let mut res = ureq::post(&format!("{base}/tools/get_geometric_context"))
            .content_type("application/json")
            .send(&body)
            .unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&res.body_mut().read_to_string().unwrap()).unwrap();
        assert_eq!(v["status"], "ok", "tool error: {v}");
        let data = &v["data"];
        let direct = service.features_for_row(row).unwrap();
        let expected_conf = dict.confidence_model.predict(&direct.vector());
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
        if !(close(data["local_id"].as_f64().unwrap(), direct.local_id)
            && close(data["local_pr"].as_f64().unwrap(), direct.local_pr)
            && close(data["features"]["mean_neighbor_distance"].as_f64().unwrap(), direct.mean_neighbor_distance)
            && close(data["features"]["tangent_angle_deg"].as_f64().unwrap(), direct.tangent_angle_deg)
            && close(data["features"]["pc1_alignment"].as_f64().unwrap(), direct.pc1_alignment)
            && close(data["predicted_confidence"].as_f64().unwrap(), expected_conf))
        {
            http_matches_library = false;
            break;
        }
    }

    // 32 concurrent search_similar calls equal serial execution.
    let queries: Vec<(f64, f64)> = (0..32)
        .map(|i| {
            let row = (i * 61) % service.dataset().n();
            (service.dataset().lat[row], service.dataset().lon[row])
        })
        .collect();
    let fetch = |lat: f64, lon: f64| -> serde_json::Value {
        let body = serde_json::json!({"lat": lat, "lon": lon, "k": 5}).to_string();
        let mut res = ureq::post(&format!("{base}/tools/search_similar"))
            .content_type("application/json")
            .send(&body)
            .unwrap();
        serde_json::from_str(&res.body_mut().read_to_string().unwrap()).unwrap()
    };
    let serial: Vec<serde_json::Value> = queries.iter().map(|&(a, b)| fetch(a, b)).collect();
    let concurrent: Vec<serde_json::Value> = std::thread::scope(|scope| {
        let handles: Vec<_> = queries
            .iter()
            .map(|&(a, b)| scope.spawn(move || fetch(a, b)))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let concurrency_ok = serial
        .iter()
        .zip(concurrent.iter())
        .all(|(a, b)| serde_json::to_vec(a).unwrap() == serde_json::to_vec(b).unwrap());

    // Unknown tool: in-band error, transport 200.
    let mut res = ureq::post(&format!("{base}/tools/definitely_unknown"))
        .content_type("application/json")
        .send("{}")
        .unwrap();
    let status = res.status();
    let v: serde_json::Value = serde_json::from_str(&res.body_mut().read_to_string().unwrap()).unwrap();
    let unknown_ok = status == 200 && v["status"] == "error";

    handle.shutdown();
    let pass = round_trip_ok && health_ok && http_matches_library && concurrency_ok && unknown_ok;
    report(
        12,
        "dictionary + tool server integrity",
        pass,
        &format!(
            "round-trip {round_trip_ok}, health {health_ok}, http==library(100 rows) {http_matches_library}, \
             32 concurrent==serial {concurrency_ok}, unknown tool in-band {unknown_ok}"
        ),
        t.elapsed(),
        Duration::from_secs(60),
    );
}

#[test]
fn c13_determinism_across_thread_counts() {
    let t = Instant::now();
    let tmp = tempfile::tempdir().unwrap();

    // Shared synthetic dataset written once through the CLI.
    let data_out = tmp.path().join("synth");
    let mut base = atlas_cli::config::RunConfig::default();
    base.out_dir = data_out.clone();
    base.seed = 124;
    base.synth.kind = "heterogeneous_patchwork".into();
    base.synth.ambient_dim = 32;
    base.synth.n_samples = 5000;
    base.synth.patches = vec![(2, 0.5), (6, 0.5)];
    base.synth.patch_grid = 6;
    atlas_cli::run_command(atlas_cli::Command::Synth, &base).unwrap();

    let run_with = |threads: usize, label: &str| -> Vec<(String, Vec<u8>)> {
        let out = tmp.path().join(label);
        let mut config = atlas_cli::config::RunConfig::default();
        config.dataset = Some(data_out.join("dataset"));
        config.out_dir = out.clone();
        config.seed = 124;
        config.threads = threads;
        config.intrinsic_dim.k_list = vec![10, 20];
        config.intrinsic_dim.probes = 800;
        config.intrinsic_dim.stratify_covariate = "elevation".into();
        atlas_cli::run_command(atlas_cli::Command::IntrinsicDim, &config).unwrap();
        config.coherence.rows = 500;
        atlas_cli::run_command(atlas_cli::Command::Coherence, &config).unwrap();
        config.global_geometry.cluster_k_max = 10;
        atlas_cli::run_command(atlas_cli::Command::GlobalGeometry, &config).unwrap();
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().to_string(),
                    std::fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort_by(|a, b| a.0.cmp(&b.0));
        files
    };

    let one = run_with(1, "threads1");
    let two = run_with(2, "threads2");
    let rerun = run_with(2, "threads2b");

    let names: Vec<&String> = one.iter().map(|(n, _)| n).collect();
    let identical_across_threads = one.len() == two.len()
        && one.iter().zip(two.iter()).all(|(a, b)| a.0 == b.0 && a.1 == b.1);
    let identical_on_rerun = two.iter().zip(rerun.iter()).all(|(a, b)| a.0 == b.0 && a.1 == b.1);
    let pass = identical_across_threads && identical_on_rerun && !one.is_empty();
    report(
        13,
        "thread-count determinism",
        pass,
        &format!(
            "{} output files byte-identical across threads=1/2 and on rerun (files: {names:?})",
            one.len()
        ),
        t.elapsed(),
        Duration::from_secs(300),
    );
}
