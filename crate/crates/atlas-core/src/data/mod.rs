//! Embedding dataset model: an N x D embedding matrix with per-row
//! coordinates, year labels, and co-located environmental covariates.
//!
//! Datasets are immutable after construction and safe to share across
//! threads. Transformations return new datasets.

mod io;
pub mod transform;

pub use io::{load_dataset, save_binary, DatasetFormat};
pub use transform::{default_elevation_edges, stratified_subsample, zscore_covariates, GroupKey};

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::stats;

/// Per-covariate global statistics. `std` is the population standard
/// deviation (1/N); columns with zero spread are flagged constant and
/// excluded from coherence and probe computations.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CovariateStat {
    pub mean: f64,
    pub std: f64,
    pub constant: bool,
}

/// Dense embedding dataset: vectors are stored as f32 (matching the on-disk
/// format and the distance kernel), covariates in f64 for stable statistics.
#[derive(Debug, Clone)]
pub struct EmbeddingDataset {
    pub vectors: Array2<f32>,
    pub lat: Vec<f64>,
    pub lon: Vec<f64>,
    pub year: Vec<i32>,
    pub covariates: Array2<f64>,
    pub covariate_names: Vec<String>,
    pub covariate_stats: Vec<CovariateStat>,
}

impl EmbeddingDataset {
    /// Build and validate a dataset; covariate stats are computed here.
    pub fn new(
        vectors: Array2<f32>,
        lat: Vec<f64>,
        lon: Vec<f64>,
        year: Vec<i32>,
        covariates: Array2<f64>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let n = vectors.nrows();
        if n == 0 {
            return Err(Error::InvalidData("dataset has no rows".into()));
        }
        if lat.len() != n || lon.len() != n || year.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "vectors have {n} rows but coords/yearss have {}/{}/{}",
                lat.len(),
                lon.len(),
                year.len()
            )));
        }
        if covariates.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "vectors have {n} rows, covariates have {}",
                covariates.nrows()
            )));
        }
        if covariates.ncols() != covariate_names.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} covariate columns but {} names",
                covariates.ncols(),
                covariate_names.len()
            )));
        }
        for (i, row) in vectors.outer_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::malformed(i, format!("e{j}"), "non-finite embedding value"));
                }
            }
        }
        for (i, row) in covariates.outer_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::malformed(
                        i,
                        covariate_names[j].clone(),
                        "non-finite covariate value",
                    ));
                }
            }
        }
        for i in 0..n {
            if !(-90.0..=90.0).contains(&lat[i]) {
                return Err(Error::malformed(i, "lat", format!("latitude {} out of range", lat[i])));
            }
            if !(-180.0..=180.0).contains(&lon[i]) {
                return Err(Error::malformed(i, "lon", format!("longitude {} out of range", lon[i])));
            }
        }
        let covariate_stats = compute_covariate_stats(&covariates);
        Ok(Self {
            vectors,
            lat,
            lon,
            year,
            covariates,
            covariate_names,
            covariate_stats,
        })
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn vector(&self, row: usize) -> ArrayView1<'_, f32> {
        self.vectors.row(row)
    }

    /// Row vector widened to f64, for analysis code.
    pub fn vector_f64(&self, row: usize) -> Vec<f64> {
        self.vectors.row(row).iter().map(|&v| v as f64).collect()
    }

    pub fn covariate_index(&self, name: &str) -> Result<usize> {
        self.covariate_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown covariate '{name}'")))
    }

    pub fn covariate_column(&self, j: usize) -> Vec<f64> {
        self.covariates.column(j).to_vec()
    }

    /// Distinct years in ascending order.
    pub fn years(&self) -> Vec<i32> {
        let mut ys = self.year.clone();
        ys.sort_unstable();
        ys.dedup();
        ys
    }

    /// New dataset from a subset of rows (indices must be in range).
    pub fn subset(&self, rows: &[usize]) -> Result<EmbeddingDataset> {
        let d = self.dim();
        let v = self.n_covariates();
        let mut vectors = Array2::<f32>::zeros((rows.len(), d));
        let mut covariates = Array2::<f64>::zeros((rows.len(), v));
        let mut lat = Vec::with_capacity(rows.len());
        let mut lon = Vec::with_capacity(rows.len());
        let mut year = Vec::with_capacity(rows.len());
        for (dst, &src) in rows.iter().enumerate() {
            if src >= self.n() {
                return Err(Error::InvalidArgument(format!("row {src} out of range")));
            }
            vectors.row_mut(dst).assign(&self.vectors.row(src));
            covariates.row_mut(dst).assign(&self.covariates.row(src));
            lat.push(self.lat[src]);
            lon.push(self.lon[src]);
            year.push(self.year[src]);
        }
        EmbeddingDataset::new(vectors, lat, lon, year, covariates, self.covariate_names.clone())
    }

    /// Geographic bounding box (lat_min, lat_max, lon_min, lon_max).
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        let mut lat_min = f64::INFINITY;
        let mut lat_max = f64::NEG_INFINITY;
        let mut lon_min = f64::INFINITY;
        let mut lon_max = f64::NEG_INFINITY;
        for i in 0..self.n() {
            lat_min = lat_min.min(self.lat[i]);
            lat_max = lat_max.max(self.lat[i]);
            lon_min = lon_min.min(self.lon[i]);
            lon_max = lon_max.max(self.lon[i]);
        }
        (lat_min, lat_max, lon_min, lon_max)
    }

    /// Nearest row to (lat, lon) in planar coordinate distance, with the
    /// snap distance in degrees. Ties break toward the lower row index.
    pub fn nearest_row_geo(&self, lat: f64, lon: f64) -> (usize, f64) {
        let mut best = (0usize, f64::INFINITY);
        for i in 0..self.n() {
            let dl = self.lat[i] - lat;
            let dn = self.lon[i] - lon;
            let d2 = dl * dl + dn * dn;
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        (best.0, best.1.sqrt())
    }

    /// Stable content hash over vectors, coordinates, years, and covariates.
    pub fn content_hash(&self) -> u64 {
        let mut bytes: Vec<u8> = Vec::with_capacity(self.n() * (self.dim() * 4 + 32));
        for v in self.vectors.iter() {
            bytes.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        for i in 0..self.n() {
            bytes.extend_from_slice(&self.lat[i].to_bits().to_le_bytes());
            bytes.extend_from_slice(&self.lon[i].to_bits().to_le_bytes());
            bytes.extend_from_slice(&self.year[i].to_le_bytes());
        }
        for c in self.covariates.iter() {
            bytes.extend_from_slice(&c.to_bits().to_le_bytes());
        }
        stats::fnv1a64(&bytes)
    }
}

pub(crate) fn compute_covariate_stats(covariates: &Array2<f64>) -> Vec<CovariateStat> {
    (0..covariates.ncols())
        .map(|j| {
            let col: Vec<f64> = covariates.column(j).to_vec();
            let mean = stats::mean(&col);
            let std = stats::population_std(&col);
            let constant = std < 1e-12 * (1.0 + mean.abs());
            CovariateStat { mean, std, constant }
        })
        .collect()
}
