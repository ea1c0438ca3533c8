//! Retrieval-coherence scoring, geometric feature assembly, the
//! five-feature confidence model, regional profiles, and the geometric
//! dictionary export.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingDataset;
use crate::dict::DimensionDictionary;
use crate::error::{Error, Result};
use crate::intrinsic;
use crate::knn::Index;
use crate::linalg;
use crate::local_geom;
use crate::regions::{first_match, RegionSpec};
use crate::spectral::EigenSummary;
use crate::stats;

pub const FEATURE_NAMES: [&str; 5] = [
    "local_id",
    "local_pr",
    "mean_neighbor_distance",
    "tangent_angle_deg",
    "pc1_alignment",
];

/// How the per-variable spread among neighbors is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadMode {
    /// Standard deviation of z-scored values (the default; the raw
    /// coefficient of variation is undefined for signed variables).
    ZScoreStd,
    /// Raw coefficient of variation: std / |mean| of the raw values.
    RawCv,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoherenceScore {
    pub row: usize,
    /// Per-variable spread; None for constant-flagged variables.
    pub per_variable: Vec<Option<f64>>,
    /// Mean spread over non-constant variables: the coherence score
    /// (lower = more coherent).
    pub mean_spread: f64,
}

/// Coherence of retrieval at each row: spread of covariate values among the
/// k nearest embedding neighbors, averaged over non-constant variables.
/// With [`SpreadMode::ZScoreStd`] the dataset must be z-scored.
pub fn retrieval_coherence(
    ds: &EmbeddingDataset,
    index: &Index,
    rows: &[usize],
    k: usize,
    mode: SpreadMode,
) -> Result<Vec<CoherenceScore>> {
    if k > ds.n() - 1 {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds N-1")));
    }
    rows.par_iter()
        .map(|&row| {
            let ns = index.search_row(row, k, true)?;
            let mut per_variable = Vec::with_capacity(ds.n_covariates());
            let mut spreads = Vec::new();
            for j in 0..ds.n_covariates() {
                if ds.covariate_stats[j].constant {
                    per_variable.push(None);
                    continue;
                }
                let vals: Vec<f64> = ns.indices.iter().map(|&i| ds.covariates[[i, j]]).collect();
                let spread = match mode {
                    SpreadMode::ZScoreStd => stats::population_std(&vals),
                    SpreadMode::RawCv => {
                        let m = stats::mean(&vals);
                        if m.abs() <= 1e-12 {
                            per_variable.push(None);
                            continue;
                        }
                        stats::population_std(&vals) / m.abs()
                    }
                };
                per_variable.push(Some(spread));
                spreads.push(spread);
            }
            Ok(CoherenceScore {
                row,
                per_variable,
                mean_spread: stats::mean(&spreads),
            })
        })
        .collect()
}

/// The five geometric features for one row, plus the local PC1 vector used
/// for dominant-dimension bookkeeping.
#[derive(Debug, Clone, Serialize)]
pub struct GeoFeatures {
    pub row: usize,
    pub local_id: f64,
    pub local_pr: f64,
    pub mean_neighbor_distance: f64,
    pub tangent_angle_deg: f64,
    pub pc1_alignment: f64,
    pub pc1: Array1<f64>,
    pub degenerate: bool,
}

impl GeoFeatures {
    pub fn vector(&self) -> [f64; 5] {
        [
            self.local_id,
            self.local_pr,
            self.mean_neighbor_distance,
            self.tangent_angle_deg,
            self.pc1_alignment,
        ]
    }
}

/// Context for feature assembly: dataset, index, global basis, and the k
/// values feeding each feature.
pub struct FeatureContext<'a> {
    pub ds: &'a EmbeddingDataset,
    pub index: &'a Index,
    pub global: &'a EigenSummary,
    pub k_id: usize,
    pub k_pr: usize,
    pub k_dist: usize,
    pub tangent_m: usize,
    pub include_self: bool,
}

impl<'a> FeatureContext<'a> {
    pub fn new(ds: &'a EmbeddingDataset, index: &'a Index, global: &'a EigenSummary) -> Self {
        Self {
            ds,
            index,
            global,
            k_id: 20,
            k_pr: 100,
            k_dist: 10,
            tangent_m: 10,
            include_self: true,
        }
    }

    /// Geographically nearest other row, the partner for tangent angles.
    fn adjacent_row(&self, row: usize) -> usize {
        let mut best = (usize::MAX, f64::INFINITY);
        for i in 0..self.ds.n() {
            if i == row {
                continue;
            }
            let dl = self.ds.lat[i] - self.ds.lat[row];
            let dn = self.ds.lon[i] - self.ds.lon[row];
            let d2 = dl * dl + dn * dn;
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        best.0
    }

    fn tangent_basis(&self, row: usize) -> Result<Option<Array2<f64>>> {
        let (summary, degenerate) = local_geom::local_pca(
            self.ds,
            self.index,
            row,
            self.k_pr.min(self.ds.n() - 1),
            self.include_self,
            self.tangent_m,
        )?;
        if degenerate {
            return Ok(None);
        }
        Ok(Some(summary.top_frame(self.tangent_m.min(self.ds.dim()))))
    }

    pub fn features(&self, row: usize) -> Result<GeoFeatures> {
        if row >= self.ds.n() {
            return Err(Error::InvalidArgument(format!("row {row} out of range")));
        }
        let n1 = self.ds.n() - 1;

        // Local intrinsic dimensionality at k_id.
        let ns_id = self.index.search_row(row, self.k_id.min(n1), true)?;
        let positive: Vec<f64> = ns_id.distances.iter().copied().filter(|&d| d > 0.0).collect();
        let local_id = if positive.len() >= 2 {
            intrinsic::mle_id_point(&positive).unwrap_or(f64::NAN)
        } else {
            f64::NAN
        };

        // Local PCA at k_pr: PR, PC1, alignment, tangent basis.
        let (summary, degenerate) = local_geom::local_pca(
            self.ds,
            self.index,
            row,
            self.k_pr.min(n1),
            self.include_self,
            self.tangent_m,
        )?;
        let local_pr = summary.participation_ratio.unwrap_or(f64::NAN);
        let pc1 = summary.pc(0);
        let pc1_alignment = linalg::abs_cosine(&pc1.view(), &self.global.pc(0).view());

        // Mean neighbor distance at k_dist.
        let ns_dist = self.index.search_row(row, self.k_dist.min(n1), true)?;
        let mean_neighbor_distance = stats::mean(&ns_dist.distances);

        // Tangent angle vs the geographically adjacent row.
        let adj = self.adjacent_row(row);
        let tangent_angle_deg = if degenerate {
            f64::NAN
        } else {
            match self.tangent_basis(adj)? {
                Some(other) => {
                    let basis = summary.top_frame(self.tangent_m.min(self.ds.dim()));
                    local_geom::tangent_angle(&basis.view(), &other.view())?
                }
                None => f64::NAN,
            }
        };

        let feat = GeoFeatures {
            row,
            local_id,
            local_pr,
            mean_neighbor_distance,
            tangent_angle_deg,
            pc1_alignment,
            pc1,
            degenerate: degenerate
                || !local_id.is_finite()
                || !local_pr.is_finite()
                || !tangent_angle_deg.is_finite(),
        };
        Ok(feat)
    }

    pub fn features_batch(&self, rows: &[usize]) -> Result<Vec<GeoFeatures>> {
        rows.par_iter().map(|&r| self.features(r)).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfidenceModel {
    #[serde(rename = "features")]
    pub feature_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub r2_fit: f64,
    pub r2_holdout: f64,
    /// Spearman correlation of each feature with coherence, full data.
    pub feature_spearman: Vec<f64>,
    pub n_train: usize,
    pub n_holdout: usize,
    pub used_pseudo_inverse: bool,
}

impl ConfidenceModel {
    /// Prediction is a pure function of the 5-vector.
    pub fn predict(&self, features: &[f64; 5]) -> f64 {
        let mut acc = self.intercept;
        for i in 0..5 {
            acc += self.coefficients[i] * features[i];
        }
        acc
    }
}

/// Ordinary least squares on a seeded train/holdout split. Rank-deficient
/// feature matrices fall back to a pseudo-inverse solution and are flagged.
pub fn fit_confidence_model(
    features: &[[f64; 5]],
    coherence: &[f64],
    holdout_fraction: f64,
    seed: u64,
) -> Result<ConfidenceModel> {
    let n = features.len();
    if n != coherence.len() {
        return Err(Error::DimensionMismatch("features/coherence length".into()));
    }
    if n < 10 {
        return Err(Error::InvalidArgument("need at least 10 rows".into()));
    }
    if !(0.0..1.0).contains(&holdout_fraction) {
        return Err(Error::InvalidArgument("holdout fraction must be in [0, 1)".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = StdRng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_holdout = ((n as f64) * holdout_fraction).floor() as usize;
    let (hold_idx, train_idx) = order.split_at(n_holdout);

    // Centered least squares on the training split.
    let mut f_mean = [0.0f64; 5];
    let mut y_mean = 0.0f64;
    for &i in train_idx {
        for j in 0..5 {
            f_mean[j] += features[i][j];
        }
        y_mean += coherence[i];
    }
    let nt = train_idx.len() as f64;
    for v in f_mean.iter_mut() {
        *v /= nt;
    }
    y_mean /= nt;

    let mut gram = Array2::<f64>::zeros((5, 5));
    let mut fty = Array1::<f64>::zeros(5);
    for &i in train_idx {
        let fc: Vec<f64> = (0..5).map(|j| features[i][j] - f_mean[j]).collect();
        let yc = coherence[i] - y_mean;
        for a in 0..5 {
            fty[a] += fc[a] * yc;
            for b in a..5 {
                gram[[a, b]] += fc[a] * fc[b];
            }
        }
    }
    for a in 0..5 {
        for b in 0..a {
            gram[[a, b]] = gram[[b, a]];
        }
    }
    let (beta, used_pinv) = match linalg::cholesky_solve(&gram.view(), &fty.view()) {
        Ok(b) => (b, false),
        Err(_) => (linalg::pinv_solve_sym(&gram.view(), &fty.view(), 1e-12)?, true),
    };
    let intercept = y_mean - (0..5).map(|j| f_mean[j] * beta[j]).sum::<f64>();

    let r2_on = |idx: &[usize]| -> f64 {
        if idx.is_empty() {
            return f64::NAN;
        }
        let ym = stats::mean(&idx.iter().map(|&i| coherence[i]).collect::<Vec<_>>());
        let mut ss_res = 0.0;
        let mut ss_tot = 0.0;
        for &i in idx {
            let pred = intercept + (0..5).map(|j| beta[j] * features[i][j]).sum::<f64>();
            ss_res += (coherence[i] - pred).powi(2);
            ss_tot += (coherence[i] - ym).powi(2);
        }
        if ss_tot <= 0.0 {
            return 0.0;
        }
        1.0 - ss_res / ss_tot
    };

    let feature_spearman = (0..5)
        .map(|j| {
            let col: Vec<f64> = features.iter().map(|f| f[j]).collect();
            stats::spearman(&col, coherence)
        })
        .collect();

    Ok(ConfidenceModel {
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        coefficients: beta.to_vec(),
        intercept,
        r2_fit: r2_on(train_idx),
        r2_holdout: r2_on(hold_idx),
        feature_spearman,
        n_train: train_idx.len(),
        n_holdout: hold_idx.len(),
        used_pseudo_inverse: used_pinv,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimImportance {
    pub dim: usize,
    /// Fraction of probes where this dimension ranks in the top-3 |loading|
    /// entries of local PC1.
    pub fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionalProfile {
    pub name: String,
    pub count: usize,
    pub mean_coherence: f64,
    pub mean_local_id: f64,
    pub top_dimensions: Vec<DimImportance>,
    /// Mean 5-feature vector, the similarity key for region ranking.
    pub mean_features: Vec<f64>,
}

/// Dimensions in the top-3 |loading| entries of a PC1 vector.
fn top3_dims(pc1: &Array1<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pc1.len()).collect();
    idx.sort_by(|&a, &b| pc1[b].abs().total_cmp(&pc1[a].abs()).then(a.cmp(&b)));
    idx.truncate(3);
    idx
}

fn importance_table(pc1s: &[&Array1<f64>], d: usize) -> Vec<DimImportance> {
    let mut counts = vec![0usize; d];
    for pc1 in pc1s {
        for dim in top3_dims(pc1) {
            counts[dim] += 1;
        }
    }
    let total = pc1s.len().max(1) as f64;
    counts
        .into_iter()
        .enumerate()
        .map(|(dim, c)| DimImportance {
            dim,
            fraction: c as f64 / total,
        })
        .collect()
}

/// Per-region aggregation of coherence, local ID, dominant dimensions, and
/// mean features. Rows are assigned to the first matching region.
pub fn regional_profiles(
    ds: &EmbeddingDataset,
    rows: &[usize],
    features: &[GeoFeatures],
    coherences: &[f64],
    regions: &[RegionSpec],
) -> Result<Vec<RegionalProfile>> {
    if rows.len() != features.len() || rows.len() != coherences.len() {
        return Err(Error::DimensionMismatch(
            "rows, features, and coherences must align".into(),
        ));
    }
    let mut member_rows: Vec<Vec<usize>> = vec![Vec::new(); regions.len()];
    for (i, &row) in rows.iter().enumerate() {
        if let Some(region) = first_match(regions, ds.lat[row], ds.lon[row]) {
            let ri = regions.iter().position(|r| r.name == region.name).expect("present");
            member_rows[ri].push(i);
        }
    }
    let mut profiles = Vec::with_capacity(regions.len());
    for (ri, region) in regions.iter().enumerate() {
        let members = &member_rows[ri];
        if members.is_empty() {
            profiles.push(RegionalProfile {
                name: region.name.clone(),
                count: 0,
                mean_coherence: f64::NAN,
                mean_local_id: f64::NAN,
                top_dimensions: vec![],
                mean_features: vec![f64::NAN; 5],
            });
            continue;
        }
        let cs: Vec<f64> = members.iter().map(|&i| coherences[i]).collect();
        let ids: Vec<f64> = members
            .iter()
            .map(|&i| features[i].local_id)
            .filter(|v| v.is_finite())
            .collect();
        let pc1s: Vec<&Array1<f64>> = members.iter().map(|&i| &features[i].pc1).collect();
        let mut table = importance_table(&pc1s, ds.dim());
        table.sort_by(|a, b| b.fraction.total_cmp(&a.fraction).then(a.dim.cmp(&b.dim)));
        table.truncate(3);
        let mut mean_features = vec![0.0f64; 5];
        let mut counts = [0usize; 5];
        for &i in members {
            let v = features[i].vector();
            for j in 0..5 {
                if v[j].is_finite() {
                    mean_features[j] += v[j];
                    counts[j] += 1;
                }
            }
        }
        for j in 0..5 {
            mean_features[j] = if counts[j] > 0 {
                mean_features[j] / counts[j] as f64
            } else {
                f64::NAN
            };
        }
        profiles.push(RegionalProfile {
            name: region.name.clone(),
            count: members.len(),
            mean_coherence: stats::mean(&cs),
            mean_local_id: stats::mean(&ids),
            top_dimensions: table,
            mean_features,
        });
    }
    Ok(profiles)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset_hash: String,
    pub n: usize,
    pub d: usize,
    pub parameters: std::collections::BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometricDictionary {
    pub regions: Vec<RegionalProfile>,
    pub confidence_model: ConfidenceModel,
    pub dimension_importance: Vec<DimImportance>,
    pub provenance: Provenance,
}

impl GeometricDictionary {
    /// Stable content hash over the canonical JSON serialization.
    pub fn content_hash(&self) -> u64 {
        let bytes = serde_json::to_vec(self).expect("serializable");
        stats::fnv1a64(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(self).expect("serializable");
        std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn profile(&self, name: &str) -> Option<&RegionalProfile> {
        self.regions.iter().find(|r| r.name == name)
    }
}

/// Assemble and validate the dictionary: every expected region must have a
/// profile.
pub fn build_geometric_dictionary(
    profiles: Vec<RegionalProfile>,
    confidence_model: ConfidenceModel,
    dimension_importance: Vec<DimImportance>,
    provenance: Provenance,
    expected_regions: &[RegionSpec],
) -> Result<GeometricDictionary> {
    for r in expected_regions {
        if !profiles.iter().any(|p| p.name == r.name) {
            return Err(Error::InvalidData(format!(
                "missing profile for region '{}'",
                r.name
            )));
        }
    }
    Ok(GeometricDictionary {
        regions: profiles,
        confidence_model,
        dimension_importance,
        provenance,
    })
}

/// Global dimension-importance table across all surveyed rows.
pub fn global_dimension_importance(features: &[GeoFeatures], d: usize) -> Vec<DimImportance> {
    let pc1s: Vec<&Array1<f64>> = features.iter().map(|f| &f.pc1).collect();
    importance_table(&pc1s, d)
}

/// Convenience: dominant category for a feature row, via its local PC1.
pub fn dominant_category_of(
    features: &GeoFeatures,
    dict: &DimensionDictionary,
) -> Result<String> {
    local_geom::dominant_category(&features.pc1.view(), dict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::zscore_covariates;
    use crate::synth::{generate_manifold, ManifoldSpec};
    use rand::Rng;
    use std::sync::Arc;

    #[test]
    fn identical_neighbors_give_zero_coherence() {
        let n = 20;
        let mut vectors = Array2::<f32>::zeros((n, 2));
        for i in 0..n {
            vectors[[i, 0]] = (i / 10) as f32 * 100.0; // two tight clusters
        }
        let mut cov = Array2::<f64>::zeros((n, 1));
        for i in 0..n {
            cov[[i, 0]] = (i / 10) as f64; // constant within cluster
        }
        let ds = EmbeddingDataset::new(
            vectors,
            vec![0.0; n],
            vec![0.0; n],
            vec![2020; n],
            cov,
            vec!["v".into()],
        )
        .unwrap();
        let z = Arc::new(zscore_covariates(&ds));
        let index = Index::build(z.clone()).unwrap();
        let scores = retrieval_coherence(&z, &index, &[0, 15], 5, SpreadMode::ZScoreStd).unwrap();
        for s in scores {
            assert!(s.mean_spread.abs() < 1e-12, "spread {}", s.mean_spread);
        }
    }

    #[test]
    fn spread_matches_analytic_population_std() {
        // Neighbors' z-values are {-1, 0, 1} for one variable -> population
        // std sqrt(2/3) = 0.8165.
        let n = 4;
        let mut vectors = Array2::<f32>::zeros((n, 1));
        for i in 0..n {
            vectors[[i, 0]] = i as f32; // query row 0 -> neighbors 1,2,3
        }
        let mut cov = Array2::<f64>::zeros((n, 1));
        cov[[1, 0]] = -1.0;
        cov[[2, 0]] = 0.0;
        cov[[3, 0]] = 1.0;
        let ds = Arc::new(
            EmbeddingDataset::new(
                vectors,
                vec![0.0; n],
                vec![0.0; n],
                vec![2020; n],
                cov,
                vec!["v".into()],
            )
            .unwrap(),
        );
        let index = Index::build(ds.clone()).unwrap();
        let scores = retrieval_coherence(&ds, &index, &[0], 3, SpreadMode::ZScoreStd).unwrap();
        assert!((scores[0].mean_spread - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn coherence_invariant_to_affine_covariate_rescale() {
        let synth = generate_manifold(&ManifoldSpec::patchwork(
            vec![
                crate::synth::PatchSpec { intrinsic_dim: 2, weight: 0.5 },
                crate::synth::PatchSpec { intrinsic_dim: 4, weight: 0.5 },
            ],
            16,
            1500,
            0.0,
            13,
            4,
            6.0,
        ))
        .unwrap();
        let ds = synth.dataset;
        let mut scaled = ds.clone();
        // y -> 3y + 7 on every covariate
        scaled.covariates.mapv_inplace(|v| 3.0 * v + 7.0);
        let scaled = EmbeddingDataset::new(
            scaled.vectors.clone(),
            scaled.lat.clone(),
            scaled.lon.clone(),
            scaled.year.clone(),
            scaled.covariates.clone(),
            scaled.covariate_names.clone(),
        )
        .unwrap();

        let za = Arc::new(zscore_covariates(&ds));
        let zb = Arc::new(zscore_covariates(&scaled));
        let ia = Index::build(za.clone()).unwrap();
        let ib = Index::build(zb.clone()).unwrap();
        let rows: Vec<usize> = (0..za.n()).step_by(100).collect();
        let sa = retrieval_coherence(&za, &ia, &rows, 10, SpreadMode::ZScoreStd).unwrap();
        let sb = retrieval_coherence(&zb, &ib, &rows, 10, SpreadMode::ZScoreStd).unwrap();
        for (a, b) in sa.iter().zip(sb.iter()) {
            assert!((a.mean_spread - b.mean_spread).abs() < 1e-9);
        }
    }

    #[test]
    fn confidence_recovers_planted_linear_model() {
        // Synthetic features; coherence is an exact linear combination.
        let mut rng = StdRng::seed_from_u64(40);
        let n = 400;
        let mut features = Vec::with_capacity(n);
        let mut coherence = Vec::with_capacity(n);
        let beta = [0.3, -0.2, 1.5, 0.01, -0.7];
        let intercept = 0.4;
        for _ in 0..n {
            let f = [
                rng.random::<f64>() * 10.0,
                rng.random::<f64>() * 8.0,
                rng.random::<f64>(),
                rng.random::<f64>() * 90.0,
                rng.random::<f64>(),
            ];
            let y = intercept + (0..5).map(|j| beta[j] * f[j]).sum::<f64>();
            features.push(f);
            coherence.push(y);
        }
        let model = fit_confidence_model(&features, &coherence, 0.2, 17).unwrap();
        assert!(model.r2_holdout > 0.99, "holdout r2 {}", model.r2_holdout);
        for j in 0..5 {
            assert!(
                (model.coefficients[j] - beta[j]).abs() < 1e-6,
                "coefficient {j}: {} vs {}",
                model.coefficients[j],
                beta[j]
            );
        }
        assert!((model.intercept - intercept).abs() < 1e-6);

        // Permuted coherence: no signal.
        let mut shuffled = coherence.clone();
        let mut rng2 = StdRng::seed_from_u64(18);
        shuffled.shuffle(&mut rng2);
        let null = fit_confidence_model(&features, &shuffled, 0.2, 17).unwrap();
        assert!(null.r2_holdout <= 0.05, "null holdout r2 {}", null.r2_holdout);
    }

    #[test]
    fn prediction_is_pure_function_of_features() {
        let model = ConfidenceModel {
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            coefficients: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            intercept: 0.5,
            r2_fit: 1.0,
            r2_holdout: 1.0,
            feature_spearman: vec![0.0; 5],
            n_train: 10,
            n_holdout: 2,
            used_pseudo_inverse: false,
        };
        let f = [1.0, 1.0, 1.0, 1.0, 1.0];
        assert_eq!(model.predict(&f), model.predict(&f));
        assert!((model.predict(&f) - 15.5).abs() < 1e-12);
    }

    #[test]
    fn single_region_profile_matches_global_means() {
        let synth = generate_manifold(&ManifoldSpec::flat(3, 8, 400, 0.001, 50)).unwrap();
        let ds = Arc::new(synth.dataset);
        let index = Index::build(ds.clone()).unwrap();
        let cov = crate::spectral::covariance_matrix(&ds).unwrap();
        let global = crate::spectral::eigendecompose(&cov.view()).unwrap();
        let ctx = FeatureContext {
            k_id: 10,
            k_pr: 30,
            k_dist: 5,
            tangent_m: 3,
            include_self: true,
            ..FeatureContext::new(&ds, &index, &global)
        };
        let rows: Vec<usize> = (0..ds.n()).step_by(20).collect();
        let features = ctx.features_batch(&rows).unwrap();
        let coherences: Vec<f64> = rows.iter().map(|&r| (r % 7) as f64).collect();
        let everywhere = vec![RegionSpec {
            name: "all".into(),
            lat_min: -1.0,
            lat_max: 2.0,
            lon_min: -1.0,
            lon_max: 2.0,
        }];
        let profiles = regional_profiles(&ds, &rows, &features, &coherences, &everywhere).unwrap();
        assert_eq!(profiles.len(), 1);
        assert_eq!(profiles[0].count, rows.len());
        assert!((profiles[0].mean_coherence - stats::mean(&coherences)).abs() < 1e-12);
        assert_eq!(profiles[0].top_dimensions.len(), 3);
    }

    #[test]
    fn dictionary_round_trip_and_hash() {
        let model = ConfidenceModel {
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            coefficients: vec![0.1; 5],
            intercept: 0.0,
            r2_fit: 0.5,
            r2_holdout: 0.4,
            feature_spearman: vec![0.2; 5],
            n_train: 80,
            n_holdout: 20,
            used_pseudo_inverse: false,
        };
        let profile = RegionalProfile {
            name: "north".into(),
            count: 10,
            mean_coherence: 0.3,
            mean_local_id: 4.2,
            top_dimensions: vec![DimImportance { dim: 3, fraction: 0.8 }],
            mean_features: vec![1.0; 5],
        };
        let regions = vec![RegionSpec {
            name: "north".into(),
            lat_min: 0.0,
            lat_max: 1.0,
            lon_min: 0.0,
            lon_max: 1.0,
        }];
        let provenance = Provenance {
            dataset_hash: "abc123".into(),
            n: 100,
            d: 8,
            parameters: Default::default(),
        };
        let dict = build_geometric_dictionary(
            vec![profile],
            model.clone(),
            vec![DimImportance { dim: 0, fraction: 1.0 }],
            provenance.clone(),
            &regions,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gd.json");
        dict.save(&path).unwrap();
        let back = GeometricDictionary::load(&path).unwrap();
        assert_eq!(dict.content_hash(), back.content_hash());

        // Missing region fails the build.
        let err = build_geometric_dictionary(vec![], model, vec![], provenance, &regions).unwrap_err();
        assert!(err.to_string().contains("north"));
    }
}
