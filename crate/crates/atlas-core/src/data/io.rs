//! Dataset ingestion and the canonical binary interchange format.
//!
//! Binary layout: a directory holding `meta.json` (counts, covariate names,
//! per-row year list) plus `vectors.f32le`, `covariates.f32le`, and
//! `coords.f32le`, all packed little-endian row-major. CSV is accepted for
//! small desk datasets with header `lat,lon,year,e0..e{D-1},<covariates>`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::EmbeddingDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Binary,
    Csv,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    n: usize,
    d: usize,
    v: usize,
    covariate_names: Vec<String>,
    years: Vec<i32>,
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<EmbeddingDataset> {
    match format {
        DatasetFormat::Binary => load_binary(path),
        DatasetFormat::Csv => load_csv(path),
    }
}

/// Write the canonical binary format into directory `dir` (created if absent).
pub fn save_binary(ds: &EmbeddingDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let meta = Meta {
        n: ds.n(),
        d: ds.dim(),
        v: ds.n_covariates(),
        covariate_names: ds.covariate_names.clone(),
        years: ds.year.clone(),
    };
    let meta_json = serde_json::to_vec_pretty(&meta).expect("meta serialization cannot fail");
    write_file(&dir.join("meta.json"), &meta_json)?;

    let mut vec_bytes = Vec::with_capacity(ds.n() * ds.dim() * 4);
    for v in ds.vectors.iter() {
        vec_bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_file(&dir.join("vectors.f32le"), &vec_bytes)?;

    let mut cov_bytes = Vec::with_capacity(ds.n() * ds.n_covariates() * 4);
    for c in ds.covariates.iter() {
        cov_bytes.extend_from_slice(&(*c as f32).to_le_bytes());
    }
    write_file(&dir.join("covariates.f32le"), &cov_bytes)?;

    let mut coord_bytes = Vec::with_capacity(ds.n() * 8);
    for i in 0..ds.n() {
        coord_bytes.extend_from_slice(&(ds.lat[i] as f32).to_le_bytes());
        coord_bytes.extend_from_slice(&(ds.lon[i] as f32).to_le_bytes());
    }
    write_file(&dir.join("coords.f32le"), &coord_bytes)?;
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_f32_file(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::InvalidData(format!(
            "{}: expected {} f32 values ({} bytes), found {} bytes",
            path.display(),
            expected,
            expected * 4,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn load_binary(dir: &Path) -> Result<EmbeddingDataset> {
    let meta_path = dir.join("meta.json");
    let meta_bytes =
        fs::read(&meta_path).map_err(|e| Error::io(meta_path.display().to_string(), e))?;
    let meta: Meta = serde_json::from_slice(&meta_bytes).map_err(|e| Error::Json {
        path: meta_path.display().to_string(),
        source: e,
    })?;
    if meta.years.len() != meta.n {
        return Err(Error::InvalidData(format!(
            "meta.json: year list has {} entries for n = {}",
            meta.years.len(),
            meta.n
        )));
    }
    if meta.covariate_names.len() != meta.v {
        return Err(Error::InvalidData(format!(
            "meta.json: {} covariate names for v = {}",
            meta.covariate_names.len(),
            meta.v
        )));
    }

    let vec_raw = read_f32_file(&dir.join("vectors.f32le"), meta.n * meta.d)?;
    let cov_raw = read_f32_file(&dir.join("covariates.f32le"), meta.n * meta.v)?;
    let coord_raw = read_f32_file(&dir.join("coords.f32le"), meta.n * 2)?;

    let vectors = Array2::from_shape_vec((meta.n, meta.d), vec_raw)
        .map_err(|e| Error::InvalidData(format!("vectors shape: {e}")))?;
    let covariates = Array2::from_shape_vec(
        (meta.n, meta.v),
        cov_raw.into_iter().map(|v| v as f64).collect(),
    )
    .map_err(|e| Error::InvalidData(format!("covariates shape: {e}")))?;
    let mut lat = Vec::with_capacity(meta.n);
    let mut lon = Vec::with_capacity(meta.n);
    for pair in coord_raw.chunks_exact(2) {
        lat.push(pair[0] as f64);
        lon.push(pair[1] as f64);
    }
    EmbeddingDataset::new(vectors, lat, lon, meta.years, covariates, meta.covariate_names)
}

fn load_csv(path: &Path) -> Result<EmbeddingDataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::InvalidData(format!("csv header: {e}")))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if headers.len() < 3 || headers[0] != "lat" || headers[1] != "lon" || headers[2] != "year" {
        return Err(Error::InvalidData(
            "malformed header: expected columns lat,lon,year,e0..,<covariates>".into(),
        ));
    }
    let mut d = 0;
    while 3 + d < headers.len() && headers[3 + d] == format!("e{d}") {
        d += 1;
    }
    if d == 0 {
        return Err(Error::InvalidData("malformed header: no embedding columns e0..".into()));
    }
    let covariate_names: Vec<String> = headers[3 + d..].to_vec();
    let v = covariate_names.len();

    let mut lat = Vec::new();
    let mut lon = Vec::new();
    let mut year = Vec::new();
    let mut vec_data: Vec<f32> = Vec::new();
    let mut cov_data: Vec<f64> = Vec::new();

    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::malformed(row_idx, "<record>", e.to_string()))?;
        if record.len() != headers.len() {
            return Err(Error::malformed(
                row_idx,
                "<record>",
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        let parse = |col: usize| -> Result<f64> {
            let raw = record.get(col).unwrap_or("").trim();
            let val: f64 = raw
                .parse()
                .map_err(|_| Error::malformed(row_idx, headers[col].clone(), format!("cannot parse '{raw}'")))?;
            if !val.is_finite() {
                return Err(Error::malformed(
                    row_idx,
                    headers[col].clone(),
                    format!("non-finite value '{raw}'"),
                ));
            }
            Ok(val)
        };
        lat.push(parse(0)?);
        lon.push(parse(1)?);
        let yraw = record.get(2).unwrap_or("").trim();
        year.push(yraw.parse::<i32>().map_err(|_| {
            Error::malformed(row_idx, "year", format!("cannot parse '{yraw}' as integer"))
        })?);
        for j in 0..d {
            vec_data.push(parse(3 + j)? as f32);
        }
        for j in 0..v {
            cov_data.push(parse(3 + d + j)?);
        }
    }
    let n = lat.len();
    if n == 0 {
        return Err(Error::InvalidData("csv has no data rows".into()));
    }
    let vectors = Array2::from_shape_vec((n, d), vec_data)
        .map_err(|e| Error::InvalidData(format!("vectors shape: {e}")))?;
    let covariates = Array2::from_shape_vec((n, v), cov_data)
        .map_err(|e| Error::InvalidData(format!("covariates shape: {e}")))?;
    EmbeddingDataset::new(vectors, lat, lon, year, covariates, covariate_names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample() -> EmbeddingDataset {
        EmbeddingDataset::new(
            array![[0.25f32, -1.5], [3.0, 0.125], [-2.0, 7.0]],
            vec![10.0, 11.0, 12.0],
            vec![-100.0, -101.0, -102.0],
            vec![2019, 2020, 2021],
            array![[5.0], [6.0], [7.0]],
            vec!["elevation".into()],
        )
        .unwrap()
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let ds = sample();
        let dir = tempfile::tempdir().unwrap();
        save_binary(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path(), DatasetFormat::Binary).unwrap();
        assert_eq!(ds.vectors, back.vectors);
        assert_eq!(ds.year, back.year);
        assert_eq!(ds.covariate_names, back.covariate_names);
        assert_eq!(ds.content_hash(), back.content_hash());
        // Save the reloaded copy again: still identical.
        let dir2 = tempfile::tempdir().unwrap();
        save_binary(&back, dir2.path()).unwrap();
        let again = load_dataset(dir2.path(), DatasetFormat::Binary).unwrap();
        assert_eq!(back.content_hash(), again.content_hash());
    }

    #[test]
    fn csv_three_rows_with_hand_stats() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mini.csv");
        std::fs::write(
            &path,
            "lat,lon,year,e0,e1,ndvi\n1.0,2.0,2020,0.5,0.5,1.0\n1.1,2.1,2020,1.5,0.25,2.0\n1.2,2.2,2021,2.5,0.125,3.0\n",
        )
        .unwrap();
        let ds = load_dataset(&path, DatasetFormat::Csv).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.n_covariates(), 1);
        assert!((ds.covariate_stats[0].mean - 2.0).abs() < 1e-12);
        assert!((ds.covariate_stats[0].std - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn csv_nan_cell_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "lat,lon,year,e0,ndvi\n1.0,2.0,2020,0.5,1.0\n1.1,2.1,2020,NaN,2.0\n",
        )
        .unwrap();
        let err = load_dataset(&path, DatasetFormat::Csv).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1") && msg.contains("e0"), "{msg}");
    }

    #[test]
    fn csv_bad_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hdr.csv");
        std::fs::write(&path, "longitude,latitude,year,e0\n1,2,2020,0\n").unwrap();
        assert!(load_dataset(&path, DatasetFormat::Csv).is_err());
    }

    #[test]
    fn binary_row_count_mismatch_detected() {
        let ds = sample();
        let dir = tempfile::tempdir().unwrap();
        save_binary(&ds, dir.path()).unwrap();
        // Truncate the covariates file.
        let cov = dir.path().join("covariates.f32le");
        let bytes = std::fs::read(&cov).unwrap();
        std::fs::write(&cov, &bytes[..bytes.len() - 4]).unwrap();
        assert!(load_dataset(dir.path(), DatasetFormat::Binary).is_err());
    }
}
