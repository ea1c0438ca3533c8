//! Local PCA at probe locations: local participation ratio, local-global
//! principal-component alignment, tangent-space angles between adjacent
//! probes, dominant environmental category, and the multi-scale sweep.

use ndarray::{Array2, ArrayView1, ArrayView2};
#[cfg(test)]
use ndarray::Array1;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::transform::band_index;
use crate::data::EmbeddingDataset;
use crate::dict::DimensionDictionary;
use crate::error::{Error, Result};
use crate::knn::Index;
use crate::linalg;
use crate::spectral::EigenSummary;
use crate::stats;

/// Everything measured at one probe location.
#[derive(Debug, Clone, Serialize)]
pub struct LocalGeometryRecord {
    pub probe: usize,
    pub k: usize,
    /// Local eigen spectrum, descending.
    pub eigenvalues: Vec<f64>,
    /// Top-m local PC basis (ambient x m).
    pub basis: Array2<f64>,
    pub local_pr: f64,
    /// |cos| between local PC1 and global PC1, and local PC2 vs global PC2.
    pub align_pc1: f64,
    pub align_pc2: f64,
    /// Largest principal angle to the adjacent probe's tangent space.
    pub tangent_deg: Option<f64>,
    pub category: Option<String>,
    pub var_frac_pc1: f64,
    pub degenerate: bool,
}

/// Local PCA over the neighborhood of `probe`: the probe's k nearest
/// neighbors, including the probe itself by default.
pub fn local_pca(
    ds: &EmbeddingDataset,
    index: &Index,
    probe: usize,
    k: usize,
    include_self: bool,
    m: usize,
) -> Result<(EigenSummary, bool)> {
    if k > ds.n() - 1 {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds N-1 = {}",
            ds.n() - 1
        )));
    }
    let ns = index.search_row(probe, k, true)?;
    let mut rows: Vec<usize> = Vec::with_capacity(k + 1);
    if include_self {
        rows.push(probe);
    }
    rows.extend_from_slice(&ns.indices);
    let summary = neighborhood_eigen(ds, &rows)?;
    let degenerate = summary.eigenvalues[0].max(0.0) <= 1e-24;
    let _ = m;
    Ok((summary, degenerate))
}

/// Covariance eigendecomposition of an explicit row set.
pub fn neighborhood_eigen(ds: &EmbeddingDataset, rows: &[usize]) -> Result<EigenSummary> {
    let d = ds.dim();
    if rows.len() < 2 {
        return Err(Error::InvalidArgument("neighborhood needs at least 2 points".into()));
    }
    let mut mean = vec![0.0f64; d];
    for &r in rows {
        let x = ds.vectors.row(r);
        for j in 0..d {
            mean[j] += x[j] as f64;
        }
    }
    for v in mean.iter_mut() {
        *v /= rows.len() as f64;
    }
    let mut cov = Array2::<f64>::zeros((d, d));
    for &r in rows {
        let x = ds.vectors.row(r);
        for i in 0..d {
            let di = x[i] as f64 - mean[i];
            if di == 0.0 {
                continue;
            }
            for j in i..d {
                cov[[i, j]] += di * (x[j] as f64 - mean[j]);
            }
        }
    }
    let denom = (rows.len() - 1) as f64;
    for i in 0..d {
        for j in i..d {
            cov[[i, j]] /= denom;
            cov[[j, i]] = cov[[i, j]];
        }
    }
    crate::spectral::eigendecompose(&cov.view())
}

/// |cos| alignment per component between two bases: entry c is the absolute
/// inner product of local PC(c+1) with global PC(c+1).
pub fn alignment(local: &ArrayView2<f64>, global: &ArrayView2<f64>, components: usize) -> Vec<f64> {
    let c = components
        .min(local.ncols())
        .min(global.ncols());
    (0..c)
        .map(|i| linalg::abs_cosine(&local.column(i), &global.column(i)))
        .collect()
}

/// Largest principal angle between two tangent frames, in degrees.
pub fn tangent_angle(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<f64> {
    let angles = linalg::principal_angles_deg(a, b)?;
    Ok(*angles.last().expect("at least one angle"))
}

/// Category whose dimensions carry the most squared PC1 loading. Ties break
/// by category name order.
pub fn dominant_category(pc1: &ArrayView1<f64>, dict: &DimensionDictionary) -> Result<String> {
    dict.check_dims(pc1.len())?;
    let mut mass: std::collections::BTreeMap<&str, f64> = std::collections::BTreeMap::new();
    for (dim, &w) in pc1.iter().enumerate() {
        let cat = dict.category_of(dim)?;
        *mass.entry(cat).or_insert(0.0) += w * w;
    }
    let mut best: Option<(&str, f64)> = None;
    for (cat, m) in mass {
        // BTreeMap iterates in name order, so strict inequality keeps the
        // lexicographically first category on ties.
        if best.map_or(true, |(_, bm)| m > bm) {
            best = Some((cat, m));
        }
    }
    Ok(best.expect("non-empty dictionary").0.to_string())
}

/// For every probe, the geographically nearest other probe (planar lat/lon).
pub fn nearest_probe_adjacency(ds: &EmbeddingDataset, probes: &[usize]) -> Vec<usize> {
    probes
        .par_iter()
        .enumerate()
        .map(|(pi, &p)| {
            let mut best = (usize::MAX, f64::INFINITY);
            for (qi, &q) in probes.iter().enumerate() {
                if qi == pi {
                    continue;
                }
                let dl = ds.lat[p] - ds.lat[q];
                let dn = ds.lon[p] - ds.lon[q];
                let d2 = dl * dl + dn * dn;
                if d2 < best.1 {
                    best = (qi, d2);
                }
            }
            best.0
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SurveySummary {
    pub k: usize,
    pub n_probes: usize,
    pub degenerate: usize,
    pub frac_tangent_gt_60: f64,
    pub mean_align_pc1: f64,
    pub mean_align_pc2: f64,
    pub mean_local_pr: f64,
    pub mean_var_frac_pc1: f64,
    /// Expected |cos| between random unit vectors in this ambient
    /// dimension, sqrt(2/(pi*D)): the reference point for alignments.
    pub random_alignment_baseline: f64,
    /// (category, fraction of probes) in descending fraction.
    pub category_histogram: Vec<(String, f64)>,
}

#[derive(Debug)]
pub struct Survey {
    pub records: Vec<LocalGeometryRecord>,
    pub summary: SurveySummary,
}

pub struct SurveyConfig {
    pub k: usize,
    /// Tangent-space dimension m for angle computations.
    pub tangent_m: usize,
    pub include_self: bool,
}

impl Default for SurveyConfig {
    fn default() -> Self {
        Self {
            k: 100,
            tangent_m: 10,
            include_self: true,
        }
    }
}

/// Full local-geometry survey across the given probes. Tangent angles pair
/// each probe with its geographically nearest other probe.
pub fn probe_survey(
    ds: &EmbeddingDataset,
    index: &Index,
    probes: &[usize],
    global: &EigenSummary,
    dict: Option<&DimensionDictionary>,
    config: &SurveyConfig,
) -> Result<Survey> {
    if probes.len() < 2 {
        return Err(Error::InvalidArgument("survey needs at least 2 probes".into()));
    }
    for &p in probes {
        if p >= ds.n() {
            return Err(Error::InvalidArgument(format!("probe id {p} out of range")));
        }
    }
    let locals: Vec<(EigenSummary, bool)> = probes
        .par_iter()
        .map(|&p| local_pca(ds, index, p, config.k, config.include_self, config.tangent_m))
        .collect::<Result<_>>()?;

    let adjacency = nearest_probe_adjacency(ds, probes);
    let global_frame = global.top_frame(2);

    let m = config.tangent_m.min(ds.dim());
    let records: Vec<LocalGeometryRecord> = (0..probes.len())
        .into_par_iter()
        .map(|pi| -> Result<LocalGeometryRecord> {
            let (summary, degenerate) = &locals[pi];
            let basis = summary.top_frame(m);
            let aligns = alignment(&basis.view(), &global_frame.view(), 2);
            let adj = adjacency[pi];
            let tangent_deg = if !*degenerate && !locals[adj].1 {
                let other = locals[adj].0.top_frame(m);
                Some(tangent_angle(&basis.view(), &other.view())?)
            } else {
                None
            };
            let category = match dict {
                Some(d) if !*degenerate => Some(dominant_category(&summary.pc(0).view(), d)?),
                _ => None,
            };
            Ok(LocalGeometryRecord {
                probe: probes[pi],
                k: config.k,
                eigenvalues: summary.eigenvalues.to_vec(),
                local_pr: summary.participation_ratio.unwrap_or(f64::NAN),
                align_pc1: aligns.first().copied().unwrap_or(0.0),
                align_pc2: aligns.get(1).copied().unwrap_or(0.0),
                tangent_deg,
                category,
                var_frac_pc1: summary.variance_fractions.first().copied().unwrap_or(0.0),
                degenerate: *degenerate,
                basis,
            })
        })
        .collect::<Result<_>>()?;

    let summary = summarize(&records, config.k, ds.dim());
    Ok(Survey { records, summary })
}

fn summarize(records: &[LocalGeometryRecord], k: usize, ambient_dim: usize) -> SurveySummary {
    let ok: Vec<&LocalGeometryRecord> = records.iter().filter(|r| !r.degenerate).collect();
    let tangents: Vec<f64> = ok.iter().filter_map(|r| r.tangent_deg).collect();
    let frac_gt_60 = if tangents.is_empty() {
        0.0
    } else {
        tangents.iter().filter(|&&t| t > 60.0).count() as f64 / tangents.len() as f64
    };
    let mean_of = |f: &dyn Fn(&LocalGeometryRecord) -> f64| -> f64 {
        let vals: Vec<f64> = ok.iter().map(|r| f(r)).filter(|v| v.is_finite()).collect();
        stats::mean(&vals)
    };
    let mut counts: std::collections::BTreeMap<String, usize> = std::collections::BTreeMap::new();
    for r in &ok {
        if let Some(c) = &r.category {
            *counts.entry(c.clone()).or_insert(0) += 1;
        }
    }
    let mut category_histogram: Vec<(String, f64)> = counts
        .into_iter()
        .map(|(c, n)| (c, n as f64 / ok.len().max(1) as f64))
        .collect();
    category_histogram.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    SurveySummary {
        k,
        n_probes: records.len(),
        degenerate: records.len() - ok.len(),
        frac_tangent_gt_60: frac_gt_60,
        mean_align_pc1: mean_of(&|r| r.align_pc1),
        mean_align_pc2: mean_of(&|r| r.align_pc2),
        mean_local_pr: mean_of(&|r| r.local_pr),
        mean_var_frac_pc1: mean_of(&|r| r.var_frac_pc1),
        random_alignment_baseline: (2.0 / (std::f64::consts::PI * ambient_dim as f64)).sqrt(),
        category_histogram,
    }
}

/// Repeat the survey at several neighborhood sizes over identical probes.
/// k values exceeding N-1 are skipped and reported in `skipped`.
pub struct MultiscaleResult {
    pub surveys: Vec<Survey>,
    pub skipped: Vec<usize>,
}

pub fn multiscale_sweep(
    ds: &EmbeddingDataset,
    index: &Index,
    probes: &[usize],
    k_list: &[usize],
    global: &EigenSummary,
    dict: Option<&DimensionDictionary>,
    tangent_m: usize,
    include_self: bool,
) -> Result<MultiscaleResult> {
    let mut surveys = Vec::new();
    let mut skipped = Vec::new();
    for &k in k_list {
        if k > ds.n() - 1 {
            skipped.push(k);
            continue;
        }
        let config = SurveyConfig {
            k,
            tangent_m,
            include_self,
        };
        surveys.push(probe_survey(ds, index, probes, global, dict, &config)?);
    }
    Ok(MultiscaleResult { surveys, skipped })
}

/// Deterministic probe selection, stratified by a banded covariate when one
/// is supplied; falls back to a plain seeded draw otherwise.
pub fn select_probes(
    ds: &EmbeddingDataset,
    count: usize,
    stratify: Option<(&str, &[f64])>,
    seed: u64,
) -> Result<Vec<usize>> {
    let count = count.min(ds.n());
    let mut rng = StdRng::seed_from_u64(seed);
    let mut probes: Vec<usize> = match stratify {
        None => {
            let mut all: Vec<usize> = (0..ds.n()).collect();
            all.shuffle(&mut rng);
            all.truncate(count);
            all
        }
        Some((covariate, edges)) => {
            let j = ds.covariate_index(covariate)?;
            let col = ds.covariate_column(j);
            let n_bands = edges.len().saturating_sub(1);
            let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); n_bands];
            for (row, &v) in col.iter().enumerate() {
                if let Some(b) = band_index(v, edges) {
                    buckets[b].push(row);
                }
            }
            for b in buckets.iter_mut() {
                b.shuffle(&mut rng);
            }
            // Round-robin across bands until the quota fills.
            let mut out = Vec::with_capacity(count);
            let mut cursors = vec![0usize; n_bands];
            'outer: loop {
                let mut progressed = false;
                for (b, bucket) in buckets.iter().enumerate() {
                    if cursors[b] < bucket.len() {
                        out.push(bucket[cursors[b]]);
                        cursors[b] += 1;
                        progressed = true;
                        if out.len() == count {
                            break 'outer;
                        }
                    }
                }
                if !progressed {
                    break;
                }
            }
            out
        }
    };
    probes.sort_unstable();
    probes.dedup();
    Ok(probes)
}
