//! Synthetic datasets with analytically known geometry.
//!
//! These generators are the ground-truth oracles for the analysis modules:
//! flat subspaces with known frames, a swiss roll, uniform spheres, and a
//! heterogeneous patchwork of flat patches with per-patch rotated frames.
//! Generation is deterministic per seed, and the generating frames and
//! coordinates are retained as oracle metadata.

use ndarray::{Array1, Array2};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::linalg::{random_orthonormal_frame, random_unit_vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    FlatSubspace,
    SwissRoll,
    Sphere,
    HeterogeneousPatchwork,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchSpec {
    pub intrinsic_dim: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifoldSpec {
    pub kind: ManifoldKind,
    pub intrinsic_dim: usize,
    pub ambient_dim: usize,
    pub n_samples: usize,
    pub noise_std: f64,
    pub seed: u64,
    /// Patchwork only: patch types as (intrinsic dim, area weight).
    #[serde(default)]
    pub patches: Vec<PatchSpec>,
    /// Patchwork only: cells per side of the spatial checkerboard.
    #[serde(default = "default_patch_grid")]
    pub patch_grid: usize,
    /// Patchwork only: scale of the random per-cell offset in embedding
    /// space. Large values separate patches into distinct clusters; small
    /// values let patch peripheries overlap.
    #[serde(default = "default_offset_scale")]
    pub patch_offset_scale: f64,
}

fn default_patch_grid() -> usize {
    8
}

fn default_offset_scale() -> f64 {
    6.0
}

impl ManifoldSpec {
    pub fn flat(d: usize, ambient: usize, n: usize, noise: f64, seed: u64) -> Self {
        Self {
            kind: ManifoldKind::FlatSubspace,
            intrinsic_dim: d,
            ambient_dim: ambient,
            n_samples: n,
            noise_std: noise,
            seed,
            patches: vec![],
            patch_grid: default_patch_grid(),
            patch_offset_scale: default_offset_scale(),
        }
    }

    pub fn swiss_roll(ambient: usize, n: usize, noise: f64, seed: u64) -> Self {
        Self {
            kind: ManifoldKind::SwissRoll,
            intrinsic_dim: 2,
            ambient_dim: ambient,
            n_samples: n,
            noise_std: noise,
            seed,
            patches: vec![],
            patch_grid: default_patch_grid(),
            patch_offset_scale: default_offset_scale(),
        }
    }

    pub fn sphere(d: usize, ambient: usize, n: usize, noise: f64, seed: u64) -> Self {
        Self {
            kind: ManifoldKind::Sphere,
            intrinsic_dim: d,
            ambient_dim: ambient,
            n_samples: n,
            noise_std: noise,
            seed,
            patches: vec![],
            patch_grid: default_patch_grid(),
            patch_offset_scale: default_offset_scale(),
        }
    }

    pub fn patchwork(
        patches: Vec<PatchSpec>,
        ambient: usize,
        n: usize,
        noise: f64,
        seed: u64,
        patch_grid: usize,
        patch_offset_scale: f64,
    ) -> Self {
        let max_d = patches.iter().map(|p| p.intrinsic_dim).max().unwrap_or(1);
        Self {
            kind: ManifoldKind::HeterogeneousPatchwork,
            intrinsic_dim: max_d,
            ambient_dim: ambient,
            n_samples: n,
            noise_std: noise,
            seed,
            patches,
            patch_grid,
            patch_offset_scale,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.intrinsic_dim == 0 {
            return Err(Error::InvalidArgument("intrinsic dim must be >= 1".into()));
        }
        if self.n_samples < self.intrinsic_dim + 1 {
            return Err(Error::InvalidArgument(format!(
                "need at least d+1 = {} samples, got {}",
                self.intrinsic_dim + 1,
                self.n_samples
            )));
        }
        if self.noise_std < 0.0 {
            return Err(Error::InvalidArgument("noise std must be >= 0".into()));
        }
        match self.kind {
            ManifoldKind::FlatSubspace => {
                if self.intrinsic_dim > self.ambient_dim {
                    return Err(Error::InvalidArgument(format!(
                        "d = {} exceeds ambient dim {}",
                        self.intrinsic_dim, self.ambient_dim
                    )));
                }
            }
            ManifoldKind::SwissRoll => {
                if self.intrinsic_dim != 2 {
                    return Err(Error::InvalidArgument("swiss roll is a 2-manifold".into()));
                }
                if self.ambient_dim < 3 {
                    return Err(Error::InvalidArgument("swiss roll needs ambient dim >= 3".into()));
                }
            }
            ManifoldKind::Sphere => {
                if self.intrinsic_dim + 1 > self.ambient_dim {
                    return Err(Error::InvalidArgument(format!(
                        "sphere S^{} needs ambient dim >= {}",
                        self.intrinsic_dim,
                        self.intrinsic_dim + 1
                    )));
                }
            }
            ManifoldKind::HeterogeneousPatchwork => {
                if self.patches.is_empty() {
                    return Err(Error::InvalidArgument("patchwork needs at least one patch".into()));
                }
                let wsum: f64 = self.patches.iter().map(|p| p.weight).sum();
                if (wsum - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "patch weights must sum to 1, got {wsum}"
                    )));
                }
                for p in &self.patches {
                    if p.intrinsic_dim == 0 || p.intrinsic_dim > self.ambient_dim {
                        return Err(Error::InvalidArgument(format!(
                            "patch dim {} out of range [1, {}]",
                            p.intrinsic_dim, self.ambient_dim
                        )));
                    }
                }
                if self.patch_grid == 0 {
                    return Err(Error::InvalidArgument("patch grid must be >= 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// Generating frames, coordinates, and planted directions: everything
/// needed to compute exact tangent spaces and verify estimates downstream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleMeta {
    pub kind: ManifoldKind,
    pub seed: u64,
    /// Orthonormal frames (ambient x d). One entry for single-frame kinds,
    /// one per cell for the patchwork.
    pub frames: Vec<Array2<f64>>,
    /// Per-cell offsets in embedding space (patchwork only).
    pub offsets: Vec<Array1<f64>>,
    /// Intrinsic (generating) coordinates, one row per sample, padded with
    /// zeros to the widest patch dimension.
    pub coords: Array2<f64>,
    /// Cell id per row (0 for single-frame kinds).
    pub cell_of_row: Vec<usize>,
    /// Intrinsic dimension per cell.
    pub cell_dim: Vec<usize>,
    /// Properties planted by [`attach_planted_properties`]: (name, direction).
    pub planted_directions: Vec<(String, Array1<f64>)>,
    /// Per-cell directions planted by [`attach_patch_property`]: name plus
    /// one unit direction per cell.
    pub patch_directions: Vec<(String, Vec<Array1<f64>>)>,
}

impl OracleMeta {
    /// Exact tangent frame at a row, defined for flat kinds.
    pub fn tangent_frame(&self, row: usize) -> Result<&Array2<f64>> {
        match self.kind {
            ManifoldKind::FlatSubspace => Ok(&self.frames[0]),
            ManifoldKind::HeterogeneousPatchwork => Ok(&self.frames[self.cell_of_row[row]]),
            _ => Err(Error::InvalidArgument(
                "exact tangent frames are defined only for flat kinds".into(),
            )),
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let bytes = serde_json::to_vec(self).expect("serializable");
        std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })
    }
}

pub struct SyntheticDataset {
    pub dataset: EmbeddingDataset,
    pub oracle: OracleMeta,
}

/// Synthetic lat/lon: a near-square grid over a unit square in degrees, so
/// spatial probes and regions work unchanged on synthetic data.
fn grid_coords(n: usize) -> (Vec<f64>, Vec<f64>) {
    let side = (n as f64).sqrt().ceil() as usize;
    let step = 1.0 / side as f64;
    let mut lat = Vec::with_capacity(n);
    let mut lon = Vec::with_capacity(n);
    for i in 0..n {
        let gy = i / side;
        let gx = i % side;
        lat.push((gy as f64 + 0.5) * step);
        lon.push((gx as f64 + 0.5) * step);
    }
    (lat, lon)
}

pub fn generate_manifold(spec: &ManifoldSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = StdRng::seed_from_u64(spec.seed);
    match spec.kind {
        ManifoldKind::FlatSubspace => generate_flat(spec, &mut rng),
        ManifoldKind::SwissRoll => generate_swiss_roll(spec, &mut rng),
        ManifoldKind::Sphere => generate_sphere(spec, &mut rng),
        ManifoldKind::HeterogeneousPatchwork => generate_patchwork(spec, &mut rng),
    }
}

fn add_noise(x: &mut [f64], noise_std: f64, rng: &mut StdRng) {
    if noise_std > 0.0 {
        for v in x.iter_mut() {
            *v += noise_std * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

fn finish(
    spec: &ManifoldSpec,
    flat_vectors: Vec<f64>,
    coords: Array2<f64>,
    frames: Vec<Array2<f64>>,
    offsets: Vec<Array1<f64>>,
    cell_of_row: Vec<usize>,
    cell_dim: Vec<usize>,
    covariates: Array2<f64>,
    covariate_names: Vec<String>,
) -> Result<SyntheticDataset> {
    let n = spec.n_samples;
    let (lat, lon) = grid_coords(n);
    let vectors = Array2::from_shape_vec((n, spec.ambient_dim), flat_vectors)
        .expect("generator produced wrong vector count")
        .mapv(|v| v as f32);
    let dataset = EmbeddingDataset::new(vectors, lat, lon, vec![2020; n], covariates, covariate_names)?;
    Ok(SyntheticDataset {
        dataset,
        oracle: OracleMeta {
            kind: spec.kind,
            seed: spec.seed,
            frames,
            offsets,
            coords,
            cell_of_row,
            cell_dim,
            planted_directions: vec![],
            patch_directions: vec![],
        },
    })
}

fn generate_flat(spec: &ManifoldSpec, rng: &mut StdRng) -> Result<SyntheticDataset> {
    let (n, d, ambient) = (spec.n_samples, spec.intrinsic_dim, spec.ambient_dim);
    let frame = random_orthonormal_frame(ambient, d, rng);
    let mut coords = Array2::<f64>::zeros((n, d));
    let mut flat = vec![0.0f64; n * ambient];
    for i in 0..n {
        for j in 0..d {
            coords[[i, j]] = rng.random::<f64>();
        }
        let row = &mut flat[i * ambient..(i + 1) * ambient];
        for a in 0..ambient {
            let mut acc = 0.0;
            for j in 0..d {
                acc += frame[[a, j]] * (coords[[i, j]] - 0.5);
            }
            row[a] = acc;
        }
        add_noise(row, spec.noise_std, rng);
    }
    finish(
        spec,
        flat,
        coords,
        vec![frame],
        vec![],
        vec![0; n],
        vec![d],
        Array2::zeros((n, 0)),
        vec![],
    )
}

fn generate_swiss_roll(spec: &ManifoldSpec, rng: &mut StdRng) -> Result<SyntheticDataset> {
    let (n, ambient) = (spec.n_samples, spec.ambient_dim);
    let frame = random_orthonormal_frame(ambient, 3, rng);
    let mut coords = Array2::<f64>::zeros((n, 2));
    let mut flat = vec![0.0f64; n * ambient];
    for i in 0..n {
        let t = 1.5 * std::f64::consts::PI * (1.0 + 2.0 * rng.random::<f64>());
        let h = 21.0 * rng.random::<f64>();
        coords[[i, 0]] = t;
        coords[[i, 1]] = h;
        let p3 = [t * t.cos(), h, t * t.sin()];
        let row = &mut flat[i * ambient..(i + 1) * ambient];
        for a in 0..ambient {
            row[a] = frame[[a, 0]] * p3[0] + frame[[a, 1]] * p3[1] + frame[[a, 2]] * p3[2];
        }
        add_noise(row, spec.noise_std, rng);
    }
    finish(
        spec,
        flat,
        coords,
        vec![frame],
        vec![],
        vec![0; n],
        vec![2],
        Array2::zeros((n, 0)),
        vec![],
    )
}

fn generate_sphere(spec: &ManifoldSpec, rng: &mut StdRng) -> Result<SyntheticDataset> {
    let (n, d, ambient) = (spec.n_samples, spec.intrinsic_dim, spec.ambient_dim);
    let frame = random_orthonormal_frame(ambient, d + 1, rng);
    let mut coords = Array2::<f64>::zeros((n, d + 1));
    let mut flat = vec![0.0f64; n * ambient];
    for i in 0..n {
        let s = random_unit_vector(d + 1, rng);
        for j in 0..=d {
            coords[[i, j]] = s[j];
        }
        let row = &mut flat[i * ambient..(i + 1) * ambient];
        for a in 0..ambient {
            let mut acc = 0.0;
            for j in 0..=d {
                acc += frame[[a, j]] * s[j];
            }
            row[a] = acc;
        }
        add_noise(row, spec.noise_std, rng);
    }
    finish(
        spec,
        flat,
        coords,
        vec![frame],
        vec![],
        vec![0; n],
        vec![d + 1],
        Array2::zeros((n, 0)),
        vec![],
    )
}

/// Spatially contiguous checkerboard of flat patches. Cells are assigned to
/// patch types by largest-remainder quotas over the declared weights; each
/// cell gets its own rotated frame and (optionally separated) offset.
/// Covariates: `elevation` encodes 100 x patch dim, `g0`/`g1` are per-cell
/// biased copies of the first intrinsic coordinates, so covariate values
/// jump across patch boundaries but vary smoothly inside a patch.
fn generate_patchwork(spec: &ManifoldSpec, rng: &mut StdRng) -> Result<SyntheticDataset> {
    let (n, ambient, g) = (spec.n_samples, spec.ambient_dim, spec.patch_grid);
    let n_cells = g * g;

    // Largest-remainder assignment of cells to patch types.
    let mut type_of_cell = vec![0usize; n_cells];
    {
        let quotas: Vec<f64> = spec.patches.iter().map(|p| p.weight * n_cells as f64).collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut assigned: usize = counts.iter().sum();
        let mut remainders: Vec<(usize, f64)> = quotas
            .iter()
            .enumerate()
            .map(|(t, q)| (t, q - q.floor()))
            .collect();
        remainders.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut ri = 0;
        while assigned < n_cells {
            counts[remainders[ri % remainders.len()].0] += 1;
            assigned += 1;
            ri += 1;
        }
        // Interleave types across cells so adjacent cells tend to differ.
        let mut remaining = counts;
        let mut cursor = 0usize;
        for cell in 0..n_cells {
            let mut t = cursor;
            let mut hops = 0;
            while remaining[t] == 0 && hops <= spec.patches.len() {
                t = (t + 1) % spec.patches.len();
                hops += 1;
            }
            type_of_cell[cell] = t;
            remaining[t] -= 1;
            cursor = (t + 1) % spec.patches.len();
        }
    }

    let cell_dim: Vec<usize> = type_of_cell
        .iter()
        .map(|&t| spec.patches[t].intrinsic_dim)
        .collect();
    let max_d = cell_dim.iter().copied().max().unwrap_or(1);

    let mut frames = Vec::with_capacity(n_cells);
    let mut offsets = Vec::with_capacity(n_cells);
    let mut cell_bias = Vec::with_capacity(n_cells);
    for &dc in cell_dim.iter() {
        frames.push(random_orthonormal_frame(ambient, dc, rng));
        let dir = random_unit_vector(ambient, rng);
        offsets.push(dir * spec.patch_offset_scale);
        cell_bias.push([rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0]);
    }

    let (lat, lon) = grid_coords(n);
    let mut cell_of_row = Vec::with_capacity(n);
    let mut coords = Array2::<f64>::zeros((n, max_d));
    let mut flat = vec![0.0f64; n * ambient];
    let mut covariates = Array2::<f64>::zeros((n, 3));
    for i in 0..n {
        let cx = ((lon[i] * g as f64).floor() as usize).min(g - 1);
        let cy = ((lat[i] * g as f64).floor() as usize).min(g - 1);
        let cell = cy * g + cx;
        cell_of_row.push(cell);
        let dc = cell_dim[cell];
        for j in 0..dc {
            coords[[i, j]] = rng.random::<f64>();
        }
        let frame = &frames[cell];
        let offset = &offsets[cell];
        let row = &mut flat[i * ambient..(i + 1) * ambient];
        for a in 0..ambient {
            let mut acc = offset[a];
            for j in 0..dc {
                acc += frame[[a, j]] * (coords[[i, j]] - 0.5);
            }
            row[a] = acc;
        }
        add_noise(row, spec.noise_std, rng);
        covariates[[i, 0]] = 100.0 * dc as f64;
        covariates[[i, 1]] = cell_bias[cell][0] + coords[[i, 0]];
        covariates[[i, 2]] = cell_bias[cell][1] + coords[[i, dc.saturating_sub(1).min(1)]];
    }
    finish(
        spec,
        flat,
        coords,
        frames,
        offsets,
        cell_of_row,
        cell_dim,
        covariates,
        vec!["elevation".into(), "g0".into(), "g1".into()],
    )
}

/// Append covariates `y_j = <x, u_j> + eps` for the given unit directions,
/// recording the directions in the oracle metadata.
pub fn attach_planted_properties(
    synth: &mut SyntheticDataset,
    directions: &[(String, Array1<f64>)],
    noise_std: f64,
    seed: u64,
) -> Result<()> {
    let ds = &synth.dataset;
    let d = ds.dim();
    for (name, u) in directions {
        if u.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "direction '{name}' has {} dims, dataset has {d}",
                u.len()
            )));
        }
        let norm = u.dot(u).sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "direction '{name}' is not unit norm ({norm})"
            )));
        }
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let n = ds.n();
    let old_v = ds.n_covariates();
    let mut covariates = Array2::<f64>::zeros((n, old_v + directions.len()));
    covariates
        .slice_mut(ndarray::s![.., ..old_v])
        .assign(&ds.covariates);
    for (jj, (_, u)) in directions.iter().enumerate() {
        for i in 0..n {
            let x = ds.vectors.row(i);
            let mut y = 0.0;
            for a in 0..d {
                y += x[a] as f64 * u[a];
            }
            if noise_std > 0.0 {
                y += noise_std * rng.sample::<f64, _>(StandardNormal);
            }
            covariates[[i, old_v + jj]] = y;
        }
    }
    let mut names = ds.covariate_names.clone();
    names.extend(directions.iter().map(|(n, _)| n.clone()));
    synth.dataset = EmbeddingDataset::new(
        ds.vectors.clone(),
        ds.lat.clone(),
        ds.lon.clone(),
        ds.year.clone(),
        covariates,
        names,
    )?;
    for (name, u) in directions {
        synth
            .oracle
            .planted_directions
            .push((name.clone(), u.clone()));
    }
    Ok(())
}

/// Plant one property whose direction rotates per patch:
/// `y = <x - offset_c, u_c>` with an independent random in-patch unit
/// direction `u_c` for every cell. Patchwork oracles only.
pub fn attach_patch_property(
    synth: &mut SyntheticDataset,
    name: &str,
    noise_std: f64,
    seed: u64,
) -> Result<()> {
    if synth.oracle.kind != ManifoldKind::HeterogeneousPatchwork {
        return Err(Error::InvalidArgument(
            "patch properties require a patchwork oracle".into(),
        ));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let ds = &synth.dataset;
    let d = ds.dim();
    let n_cells = synth.oracle.frames.len();
    let mut cell_dirs: Vec<Array1<f64>> = Vec::with_capacity(n_cells);
    for c in 0..n_cells {
        let frame = &synth.oracle.frames[c];
        let local = random_unit_vector(frame.ncols(), &mut rng);
        cell_dirs.push(frame.dot(&local));
    }
    let n = ds.n();
    let old_v = ds.n_covariates();
    let mut covariates = Array2::<f64>::zeros((n, old_v + 1));
    covariates
        .slice_mut(ndarray::s![.., ..old_v])
        .assign(&ds.covariates);
    for i in 0..n {
        let cell = synth.oracle.cell_of_row[i];
        let u = &cell_dirs[cell];
        let offset = &synth.oracle.offsets[cell];
        let x = ds.vectors.row(i);
        let mut y = 0.0;
        for a in 0..d {
            y += (x[a] as f64 - offset[a]) * u[a];
        }
        if noise_std > 0.0 {
            y += noise_std * rng.sample::<f64, _>(StandardNormal);
        }
        covariates[[i, old_v]] = y;
    }
    let mut names = ds.covariate_names.clone();
    names.push(name.to_string());
    synth.dataset = EmbeddingDataset::new(
        ds.vectors.clone(),
        ds.lat.clone(),
        ds.lon.clone(),
        ds.year.clone(),
        covariates,
        names,
    )?;
    synth.oracle.patch_directions.push((name.to_string(), cell_dirs));
    Ok(())
}

/// Build a dataset directly from intrinsic coordinates and a frame; test and
/// experiment code uses this to control per-axis scales.
pub fn dataset_from_coords(
    coords: &Array2<f64>,
    frame: &Array2<f64>,
    noise_std: f64,
    seed: u64,
) -> Result<SyntheticDataset> {
    let n = coords.nrows();
    let d = coords.ncols();
    if frame.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "frame has {} columns, coords have {d}",
            frame.ncols()
        )));
    }
    let ambient = frame.nrows();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut flat = vec![0.0f64; n * ambient];
    let mean: Vec<f64> = (0..d).map(|j| coords.column(j).sum() / n as f64).collect();
    for i in 0..n {
        let row = &mut flat[i * ambient..(i + 1) * ambient];
        for a in 0..ambient {
            let mut acc = 0.0;
            for j in 0..d {
                acc += frame[[a, j]] * (coords[[i, j]] - mean[j]);
            }
            row[a] = acc;
        }
        add_noise(row, noise_std, &mut rng);
    }
    let (lat, lon) = grid_coords(n);
    let vectors = Array2::from_shape_vec((n, ambient), flat)
        .expect("shape")
        .mapv(|v| v as f32);
    let dataset = EmbeddingDataset::new(vectors, lat, lon, vec![2020; n], Array2::zeros((n, 0)), vec![])?;
    Ok(SyntheticDataset {
        dataset,
        oracle: OracleMeta {
            kind: ManifoldKind::FlatSubspace,
            seed,
            frames: vec![frame.clone()],
            offsets: vec![],
            coords: coords.clone(),
            cell_of_row: vec![0; n],
            cell_dim: vec![d],
            planted_directions: vec![],
            patch_directions: vec![],
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral;

    #[test]
    fn flat_line_has_rank_one() {
        let synth = generate_manifold(&ManifoldSpec::flat(1, 3, 200, 0.0, 1)).unwrap();
        let cov = spectral::covariance_matrix(&synth.dataset).unwrap();
        let summary = spectral::eigendecompose(&cov.view()).unwrap();
        assert!(summary.eigenvalues[0] > 1e-6);
        assert!(summary.eigenvalues[1].abs() < 1e-10 * summary.eigenvalues[0].max(1.0));
    }

    #[test]
    fn sphere_rows_have_unit_norm() {
        let synth = generate_manifold(&ManifoldSpec::sphere(2, 3, 500, 0.0, 2)).unwrap();
        for row in synth.dataset.vectors.outer_iter() {
            let norm: f64 = row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6, "norm {norm}");
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let spec = ManifoldSpec::flat(3, 16, 300, 0.01, 77);
        let a = generate_manifold(&spec).unwrap();
        let b = generate_manifold(&spec).unwrap();
        assert_eq!(a.dataset.content_hash(), b.dataset.content_hash());
        let mut spec2 = spec.clone();
        spec2.seed = 78;
        let c = generate_manifold(&spec2).unwrap();
        assert_ne!(a.dataset.content_hash(), c.dataset.content_hash());
    }

    #[test]
    fn planted_property_along_frame_axis_is_exact_coordinate() {
        let mut synth = generate_manifold(&ManifoldSpec::flat(2, 8, 100, 0.0, 5)).unwrap();
        let u = synth.oracle.frames[0].column(0).to_owned();
        attach_planted_properties(&mut synth, &[("p".into(), u.clone())], 0.0, 9).unwrap();
        let j = synth.dataset.covariate_index("p").unwrap();
        for i in 0..synth.dataset.n() {
            let x = synth.dataset.vector_f64(i);
            let expect: f64 = x.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
            assert!((synth.dataset.covariates[[i, j]] - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn orthogonal_planted_properties_are_uncorrelated() {
        let mut synth = generate_manifold(&ManifoldSpec::flat(4, 16, 10_000, 0.0, 6)).unwrap();
        let u0 = synth.oracle.frames[0].column(0).to_owned();
        let u1 = synth.oracle.frames[0].column(1).to_owned();
        attach_planted_properties(
            &mut synth,
            &[("a".into(), u0), ("b".into(), u1)],
            0.0,
            10,
        )
        .unwrap();
        let a = synth.dataset.covariate_column(0);
        let b = synth.dataset.covariate_column(1);
        let r = crate::stats::pearson(&a, &b);
        assert!(r.abs() < 0.05, "correlation {r}");
    }

    #[test]
    fn non_unit_direction_rejected() {
        let mut synth = generate_manifold(&ManifoldSpec::flat(2, 4, 50, 0.0, 5)).unwrap();
        let bad = Array1::from_vec(vec![2.0, 0.0, 0.0, 0.0]);
        assert!(attach_planted_properties(&mut synth, &[("p".into(), bad)], 0.0, 1).is_err());
    }

    #[test]
    fn patchwork_cells_are_spatially_contiguous() {
        let spec = ManifoldSpec::patchwork(
            vec![
                PatchSpec { intrinsic_dim: 2, weight: 0.5 },
                PatchSpec { intrinsic_dim: 8, weight: 0.5 },
            ],
            32,
            2000,
            0.0,
            3,
            4,
            6.0,
        );
        let synth = generate_manifold(&spec).unwrap();
        let ds = &synth.dataset;
        // Rows in the same grid cell share a cell id.
        for i in 0..ds.n() {
            let cx = ((ds.lon[i] * 4.0).floor() as usize).min(3);
            let cy = ((ds.lat[i] * 4.0).floor() as usize).min(3);
            assert_eq!(synth.oracle.cell_of_row[i], cy * 4 + cx);
        }
        // Both dims appear with roughly even cell counts.
        let d2 = synth.oracle.cell_dim.iter().filter(|&&d| d == 2).count();
        let d8 = synth.oracle.cell_dim.iter().filter(|&&d| d == 8).count();
        assert_eq!(d2 + d8, 16);
        assert_eq!(d2, 8);
        // Elevation covariate encodes patch dim.
        let j = ds.covariate_index("elevation").unwrap();
        for i in 0..ds.n() {
            let dc = synth.oracle.cell_dim[synth.oracle.cell_of_row[i]] as f64;
            assert_eq!(ds.covariates[[i, j]], 100.0 * dc);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate_manifold(&ManifoldSpec::flat(10, 5, 100, 0.0, 1)).is_err());
        assert!(generate_manifold(&ManifoldSpec::flat(3, 8, 3, 0.0, 1)).is_err());
    }
}
