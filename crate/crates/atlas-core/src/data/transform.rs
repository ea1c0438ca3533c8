//! Covariate normalization and stratified subsampling.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::error::{Error, Result};

use super::{compute_covariate_stats, EmbeddingDataset};

/// Default elevation band edges in meters; the last band is open-ended.
pub fn default_elevation_edges() -> Vec<f64> {
    vec![0.0, 500.0, 1000.0, 2000.0, f64::INFINITY]
}

/// Z-score every covariate column: (x - mean) / population std. Constant
/// columns are mapped to all-zeros and keep their `constant` flag; the
/// transform is idempotent up to floating-point noise.
pub fn zscore_covariates(ds: &EmbeddingDataset) -> EmbeddingDataset {
    let mut covariates = ds.covariates.clone();
    for j in 0..ds.n_covariates() {
        let stat = &ds.covariate_stats[j];
        if stat.constant {
            covariates.column_mut(j).fill(0.0);
        } else {
            covariates
                .column_mut(j)
                .mapv_inplace(|x| (x - stat.mean) / stat.std);
        }
    }
    let mut stats = compute_covariate_stats(&covariates);
    // A column that was flagged constant stays flagged after zeroing.
    for j in 0..stats.len() {
        if ds.covariate_stats[j].constant {
            stats[j].constant = true;
        }
    }
    EmbeddingDataset {
        vectors: ds.vectors.clone(),
        lat: ds.lat.clone(),
        lon: ds.lon.clone(),
        year: ds.year.clone(),
        covariates,
        covariate_names: ds.covariate_names.clone(),
        covariate_stats: stats,
    }
}

/// Grouping key for stratified subsampling.
#[derive(Debug, Clone)]
pub enum GroupKey {
    Year,
    /// Band a covariate (typically elevation) by the given ascending edges;
    /// band i covers [edges[i], edges[i+1]).
    ElevationBand { covariate: String, edges: Vec<f64> },
}

/// Index of the band containing `value`, or None outside all bands.
pub fn band_index(value: f64, edges: &[f64]) -> Option<usize> {
    if edges.len() < 2 {
        return None;
    }
    for i in 0..edges.len() - 1 {
        if value >= edges[i] && value < edges[i + 1] {
            return Some(i);
        }
    }
    None
}

/// Draw up to `per_group` rows from every group, deterministically for a
/// fixed seed. Groups smaller than `per_group` contribute all their rows.
pub fn stratified_subsample(
    ds: &EmbeddingDataset,
    per_group: usize,
    key: &GroupKey,
    seed: u64,
) -> Result<EmbeddingDataset> {
    if per_group == 0 {
        return Err(Error::InvalidArgument("per_group must be >= 1".into()));
    }
    // Group id per row; rows with no group (out-of-band values) are skipped.
    let group_of: Vec<Option<usize>> = match key {
        GroupKey::Year => {
            let years = ds.years();
            ds.year
                .iter()
                .map(|y| years.iter().position(|g| g == y))
                .collect()
        }
        GroupKey::ElevationBand { covariate, edges } => {
            if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidArgument(
                    "band edges must be strictly increasing with at least two entries".into(),
                ));
            }
            let j = ds.covariate_index(covariate)?;
            let col = ds.covariate_column(j);
            col.iter().map(|&v| band_index(v, edges)).collect()
        }
    };
    let n_groups = group_of.iter().flatten().copied().max().map_or(0, |m| m + 1);
    if n_groups == 0 {
        return Err(Error::InvalidData("no rows fall into any group".into()));
    }

    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_groups];
    for (row, g) in group_of.iter().enumerate() {
        if let Some(g) = g {
            groups[*g].push(row);
        }
    }

    let mut rng = StdRng::seed_from_u64(seed);
    let mut selected: Vec<usize> = Vec::new();
    for rows in groups.iter_mut() {
        if rows.len() <= per_group {
            selected.extend_from_slice(rows);
        } else {
            rows.shuffle(&mut rng);
            selected.extend_from_slice(&rows[..per_group]);
        }
    }
    selected.sort_unstable();
    ds.subset(&selected)
}
