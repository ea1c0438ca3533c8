//! Maximum-likelihood local intrinsic dimensionality from nearest-neighbor
//! distance ratios, with per-k sweeps and covariate-band stratification.
//!
//! The per-point estimator is
//! `d_hat = [ (1/(k-1)) * sum_{j=1..k-1} ln(r_k / r_j) ]^{-1}`
//! on ascending neighbor distances r_1..r_k. Neighbors at distance exactly
//! zero (duplicate points) are dropped and k effectively reduced; points
//! left with fewer than two positive distances are flagged and excluded
//! from summaries.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::transform::band_index;
use crate::data::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::knn::Index;
use crate::stats;

/// MLE intrinsic dimension from ascending positive neighbor distances.
pub fn mle_id_point(distances: &[f64]) -> Result<f64> {
    let k = distances.len();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k = {k} must be >= 2")));
    }
    for w in distances.windows(2) {
        if w[0] > w[1] {
            return Err(Error::InvalidArgument("distances must be ascending".into()));
        }
    }
    if distances[0] <= 0.0 {
        return Err(Error::InvalidArgument(
            "zero or negative neighbor distance (duplicate point)".into(),
        ));
    }
    let r_k = distances[k - 1];
    let mut sum = 0.0;
    for &r_j in &distances[..k - 1] {
        sum += (r_k / r_j).ln();
    }
    let mean_log = sum / (k - 1) as f64;
    if mean_log <= 0.0 {
        return Err(Error::Numerical(
            "all neighbor distances equal; estimator diverges".into(),
        ));
    }
    Ok(1.0 / mean_log)
}

/// Per-point estimates for one neighborhood size.
#[derive(Debug, Clone, Serialize)]
pub struct IdField {
    pub k: usize,
    pub probe_rows: Vec<usize>,
    /// One entry per probe; None marks flagged points (duplicates left
    /// fewer than 2 positive distances, or a degenerate spectrum).
    pub estimates: Vec<Option<f64>>,
    pub mean: f64,
    pub std: f64,
    pub valid: usize,
    pub flagged: usize,
}

/// Apply the duplicate policy to one ascending distance list, then estimate.
fn estimate_with_policy(distances: &[f64]) -> Option<f64> {
    let positive: Vec<f64> = distances.iter().copied().filter(|&d| d > 0.0).collect();
    if positive.len() < 2 {
        return None;
    }
    mle_id_point(&positive).ok()
}

/// Levina-Bickel field over the given probes for every k in `k_list`.
/// One neighbor search at max(k) serves all k via the prefix property.
pub fn mle_id_field(
    ds: &EmbeddingDataset,
    index: &Index,
    k_list: &[usize],
    probes: &[usize],
) -> Result<Vec<IdField>> {
    if k_list.is_empty() {
        return Err(Error::InvalidArgument("empty k list".into()));
    }
    let k_max = *k_list.iter().max().expect("non-empty");
    let k_min = *k_list.iter().min().expect("non-empty");
    if k_min < 2 || k_max > ds.n() - 1 {
        return Err(Error::InvalidArgument(format!(
            "k values must lie in [2, {}]",
            ds.n() - 1
        )));
    }
    for &p in probes {
        if p >= ds.n() {
            return Err(Error::InvalidArgument(format!("probe id {p} out of range")));
        }
    }

    let neighbor_distances: Vec<Vec<f64>> = probes
        .par_iter()
        .map(|&p| index.search_row(p, k_max, true).map(|ns| ns.distances))
        .collect::<Result<_>>()?;

    let mut fields = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let estimates: Vec<Option<f64>> = neighbor_distances
            .par_iter()
            .map(|d| estimate_with_policy(&d[..k]))
            .collect();
        let valid_vals: Vec<f64> = estimates.iter().flatten().copied().collect();
        let flagged = estimates.len() - valid_vals.len();
        fields.push(IdField {
            k,
            probe_rows: probes.to_vec(),
            mean: stats::mean(&valid_vals),
            std: stats::population_std(&valid_vals),
            valid: valid_vals.len(),
            flagged,
            estimates,
        });
    }
    Ok(fields)
}

#[derive(Debug, Clone, Serialize)]
pub struct BandSummary {
    pub lo: f64,
    pub hi: f64,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub count: usize,
}

/// Aggregate per-point values into bands of `band_values` given ascending
/// edges. Band i covers [edges[i], edges[i+1]); values outside all bands are
/// counted separately.
pub fn stratify_by_band(
    values: &[Option<f64>],
    band_values: &[f64],
    edges: &[f64],
) -> Result<(Vec<BandSummary>, usize)> {
    if values.len() != band_values.len() {
        return Err(Error::DimensionMismatch(
            "values and band_values must align".into(),
        ));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("edges must be strictly increasing".into()));
    }
    let n_bands = edges.len() - 1;
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); n_bands];
    let mut out_of_range = 0usize;
    for (v, &b) in values.iter().zip(band_values.iter()) {
        match band_index(b, edges) {
            Some(i) => {
                if let Some(x) = v {
                    buckets[i].push(*x);
                }
            }
            None => out_of_range += 1,
        }
    }
    let summaries = buckets
        .iter()
        .enumerate()
        .map(|(i, vals)| BandSummary {
            lo: edges[i],
            hi: edges[i + 1],
            mean: (!vals.is_empty()).then(|| stats::mean(vals)),
            std: (!vals.is_empty()).then(|| stats::population_std(vals)),
            count: vals.len(),
        })
        .collect();
    Ok((summaries, out_of_range))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_manifold, ManifoldSpec};
    use std::sync::Arc;

    #[test]
    fn closed_form_cases() {
        // k=2, r=[1,e]: single log term = 1 -> d = 1
        let e = std::f64::consts::E;
        assert!((mle_id_point(&[1.0, e]).unwrap() - 1.0).abs() < 1e-12);
        // k=3, r=[1,e,e]: mean log = (1+0)/2 -> d = 2
        assert!((mle_id_point(&[1.0, e, e]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn scale_invariance() {
        let r = [0.3, 0.7, 1.1, 2.0, 2.5];
        let scaled: Vec<f64> = r.iter().map(|d| d * 42.0).collect();
        let a = mle_id_point(&r).unwrap();
        let b = mle_id_point(&scaled).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(mle_id_point(&[1.0]).is_err());
        assert!(mle_id_point(&[0.0, 1.0]).is_err());
        assert!(mle_id_point(&[2.0, 1.0]).is_err());
        assert!(mle_id_point(&[1.0, 1.0, 1.0]).is_err()); // diverges
    }

    #[test]
    fn duplicated_rows_are_flagged_not_fatal() {
        // 3 identical points plus a spread-out cloud.
        let mut synth = generate_manifold(&ManifoldSpec::flat(2, 4, 50, 0.0, 3)).unwrap();
        for i in 1..3 {
            let row0 = synth.dataset.vectors.row(0).to_owned();
            synth.dataset.vectors.row_mut(i).assign(&row0);
        }
        let ds = Arc::new(synth.dataset);
        let index = Index::build(ds.clone()).unwrap();
        let probes: Vec<usize> = (0..3).collect();
        let fields = mle_id_field(&ds, &index, &[3], &probes).unwrap();
        // Each duplicate probe sees 2 zero distances in its top-3; after
        // dropping them only 1 positive remains -> flagged.
        assert_eq!(fields[0].flagged, 3);
        assert_eq!(fields[0].valid, 0);
    }

    #[test]
    fn flat_manifold_small_recovery() {
        // Small smoke version of the ID recovery oracle (full-size lives in
        // the acceptance suite): d=5 cube in 16 ambient dims.
        let synth = generate_manifold(&ManifoldSpec::flat(5, 16, 4000, 0.0, 11)).unwrap();
        let ds = Arc::new(synth.dataset);
        let index = Index::build(ds.clone()).unwrap();
        let probes: Vec<usize> = (0..ds.n()).step_by(8).collect();
        let fields = mle_id_field(&ds, &index, &[20], &probes).unwrap();
        let mean = fields[0].mean;
        assert!((4.2..=5.8).contains(&mean), "mean ID {mean}");
    }

    #[test]
    fn banding_aggregates_and_reports_empty_bands() {
        let values = vec![Some(2.0), Some(2.2), Some(8.0), None];
        let bands = vec![0.0, 100.0, 500.0, 1000.0];
        let keys = vec![50.0, 60.0, 700.0, 50.0];
        let (summary, oor) = stratify_by_band(&values, &keys, &bands).unwrap();
        assert_eq!(oor, 0);
        assert_eq!(summary[0].count, 2);
        assert!((summary[0].mean.unwrap() - 2.1).abs() < 1e-12);
        assert_eq!(summary[1].count, 0);
        assert!(summary[1].mean.is_none());
        assert_eq!(summary[2].count, 1);
    }

    #[test]
    fn single_band_mean_equals_global_mean() {
        let values = vec![Some(1.0), Some(2.0), Some(3.0)];
        let keys = vec![10.0, 20.0, 30.0];
        let (summary, _) = stratify_by_band(&values, &keys, &[0.0, 100.0]).unwrap();
        assert!((summary[0].mean.unwrap() - 2.0).abs() < 1e-12);
    }
}
