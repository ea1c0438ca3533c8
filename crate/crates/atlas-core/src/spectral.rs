//! Global second-moment analysis: covariance and Spearman matrices,
//! eigendecomposition with participation ratio, per-year subspace angles,
//! correlated-pair census, and PCA projection for plot export.
//!
//! Matrix assembly is blocked over fixed row chunks and the partial sums are
//! reduced in block order, so results do not depend on thread count.

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::stats;

const BLOCK_ROWS: usize = 4096;

/// Eigenvalues (descending), orthonormal eigenvectors (columns), variance
/// fractions, and the participation ratio of the clamped spectrum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenSummary {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
    pub variance_fractions: Vec<f64>,
    pub participation_ratio: Option<f64>,
}

impl EigenSummary {
    /// The top-p eigenvectors as an ambient x p frame.
    pub fn top_frame(&self, p: usize) -> Array2<f64> {
        let d = self.eigenvectors.nrows();
        let p = p.min(self.eigenvectors.ncols());
        let mut frame = Array2::<f64>::zeros((d, p));
        for j in 0..p {
            frame.column_mut(j).assign(&self.eigenvectors.column(j));
        }
        frame
    }

    pub fn pc(&self, i: usize) -> Array1<f64> {
        self.eigenvectors.column(i).to_owned()
    }
}

/// Participation ratio PR = (sum lambda)^2 / sum lambda^2. Eigenvalues must
/// be non-negative up to rounding; tiny negatives are clamped to zero.
pub fn participation_ratio(eigenvalues: &[f64]) -> Result<f64> {
    if eigenvalues.is_empty() {
        return Err(Error::InvalidArgument("empty spectrum".into()));
    }
    let lmax = eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
    if eigenvalues.iter().any(|&l| l < -1e-9 * lmax.max(1e-300)) {
        return Err(Error::InvalidArgument(
            "participation ratio requires a non-negative spectrum".into(),
        ));
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &l in eigenvalues {
        let l = l.max(0.0);
        sum += l;
        sum_sq += l * l;
    }
    if sum_sq <= 0.0 {
        return Err(Error::InvalidArgument("all-zero spectrum".into()));
    }
    Ok(sum * sum / sum_sq)
}

/// Column means of the embedding matrix, blocked and deterministic.
pub fn column_means(ds: &EmbeddingDataset) -> Array1<f64> {
    let d = ds.dim();
    let blocks: Vec<Array1<f64>> = ds
        .vectors
        .axis_chunks_iter(ndarray::Axis(0), BLOCK_ROWS)
        .into_par_iter()
        .map(|chunk| {
            let mut acc = Array1::<f64>::zeros(d);
            for row in chunk.outer_iter() {
                for j in 0..d {
                    acc[j] += row[j] as f64;
                }
            }
            acc
        })
        .collect();
    let mut total = Array1::<f64>::zeros(d);
    for b in blocks {
        total += &b;
    }
    total / ds.n() as f64
}

fn cross_moment(data: &Array2<f64>) -> Array2<f64> {
    let d = data.ncols();
    let blocks: Vec<Array2<f64>> = data
        .axis_chunks_iter(ndarray::Axis(0), BLOCK_ROWS)
        .into_par_iter()
        .map(|chunk| {
            let mut acc = Array2::<f64>::zeros((d, d));
            for row in chunk.outer_iter() {
                for i in 0..d {
                    let ri = row[i];
                    if ri == 0.0 {
                        continue;
                    }
                    for j in i..d {
                        acc[[i, j]] += ri * row[j];
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = Array2::<f64>::zeros((d, d));
    for b in blocks {
        total += &b;
    }
    for i in 0..d {
        for j in 0..i {
            total[[i, j]] = total[[j, i]];
        }
    }
    total
}

/// D x D covariance matrix with the unbiased (N-1) denominator.
pub fn covariance_matrix(ds: &EmbeddingDataset) -> Result<Array2<f64>> {
    if ds.n() < 2 {
        return Err(Error::InvalidData("covariance needs at least 2 rows".into()));
    }
    let means = column_means(ds);
    let centered = centered_f64(ds, &means);
    Ok(cross_moment(&centered) / (ds.n() - 1) as f64)
}

fn centered_f64(ds: &EmbeddingDataset, means: &Array1<f64>) -> Array2<f64> {
    let (n, d) = (ds.n(), ds.dim());
    let mut out = Array2::<f64>::zeros((n, d));
    out.axis_chunks_iter_mut(ndarray::Axis(0), BLOCK_ROWS)
        .into_par_iter()
        .enumerate()
        .for_each(|(bi, mut chunk)| {
            let base = bi * BLOCK_ROWS;
            for (r, mut row) in chunk.outer_iter_mut().enumerate() {
                let src = ds.vectors.row(base + r);
                for j in 0..d {
                    row[j] = src[j] as f64 - means[j];
                }
            }
        });
    out
}

/// D x D Spearman rank correlation matrix (average ranks for ties).
pub fn spearman_matrix(ds: &EmbeddingDataset) -> Result<Array2<f64>> {
    if ds.n() < 2 {
        return Err(Error::InvalidData("spearman needs at least 2 rows".into()));
    }
    let (n, d) = (ds.n(), ds.dim());
    let mut ranks = Array2::<f64>::zeros((n, d));
    let rank_cols: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|j| {
            let col: Vec<f64> = ds.vectors.column(j).iter().map(|&v| v as f64).collect();
            stats::average_ranks(&col)
        })
        .collect();
    for (j, col) in rank_cols.into_iter().enumerate() {
        for i in 0..n {
            ranks[[i, j]] = col[i];
        }
    }
    // Center ranks; all columns share the same mean (n+1)/2.
    let mid = (n as f64 + 1.0) / 2.0;
    ranks.mapv_inplace(|r| r - mid);
    let moment = cross_moment(&ranks);
    let mut corr = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            let denom = (moment[[i, i]] * moment[[j, j]]).sqrt();
            corr[[i, j]] = if denom > 0.0 { moment[[i, j]] / denom } else { 0.0 };
        }
    }
    for i in 0..d {
        corr[[i, i]] = 1.0;
    }
    Ok(corr)
}

/// Pearson correlation matrix derived from a covariance matrix.
pub fn correlation_from_covariance(cov: &ArrayView2<f64>) -> Array2<f64> {
    let d = cov.nrows();
    let mut corr = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            let denom = (cov[[i, i]] * cov[[j, j]]).sqrt();
            corr[[i, j]] = if denom > 0.0 { cov[[i, j]] / denom } else { 0.0 };
        }
    }
    for i in 0..d {
        corr[[i, i]] = 1.0;
    }
    corr
}

/// Eigendecomposition of a symmetric matrix. Variance fractions and the
/// participation ratio are computed on the spectrum clamped at zero; the
/// ratio is `None` when the clamped spectrum vanishes.
pub fn eigendecompose(m: &ArrayView2<f64>) -> Result<EigenSummary> {
    let (eigenvalues, eigenvectors) = linalg::sym_eigen(m)?;
    let clamped: Vec<f64> = eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    let variance_fractions = if total > 0.0 {
        clamped.iter().map(|&l| l / total).collect()
    } else {
        vec![0.0; clamped.len()]
    };
    let participation_ratio = participation_ratio(&clamped).ok();
    Ok(EigenSummary {
        eigenvalues,
        eigenvectors,
        variance_fractions,
        participation_ratio,
    })
}

/// Principal angles between two orthonormal frames, degrees ascending.
pub fn subspace_principal_angles(u: &ArrayView2<f64>, w: &ArrayView2<f64>) -> Result<Vec<f64>> {
    linalg::principal_angles_deg(u, w)
}

/// Count unordered off-diagonal pairs with |r| above the threshold; also
/// returns the total number of pairs D(D-1)/2.
pub fn count_correlated_pairs(corr: &ArrayView2<f64>, threshold: f64) -> Result<(usize, usize)> {
    if !(0.0..1.0).contains(&threshold) || threshold == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "threshold {threshold} must be in (0, 1)"
        )));
    }
    let d = corr.nrows();
    let mut count = 0;
    for i in 0..d {
        for j in (i + 1)..d {
            if corr[[i, j]].abs() > threshold {
                count += 1;
            }
        }
    }
    Ok((count, d * (d - 1) / 2))
}

/// Centered projection of every row onto the top principal components.
/// Column j of the output has sample variance equal to eigenvalue j.
pub fn pca_project(ds: &EmbeddingDataset, n_components: usize) -> Result<(Array2<f64>, EigenSummary)> {
    if n_components > ds.dim() {
        return Err(Error::InvalidArgument(format!(
            "n_components {} exceeds dimension {}",
            n_components,
            ds.dim()
        )));
    }
    let cov = covariance_matrix(ds)?;
    let summary = eigendecompose(&cov.view())?;
    let means = column_means(ds);
    let frame = summary.top_frame(n_components);
    let n = ds.n();
    let mut out = Array2::<f64>::zeros((n, n_components));
    out.axis_chunks_iter_mut(ndarray::Axis(0), BLOCK_ROWS)
        .into_par_iter()
        .enumerate()
        .for_each(|(bi, mut chunk)| {
            let base = bi * BLOCK_ROWS;
            for (r, mut row) in chunk.outer_iter_mut().enumerate() {
                let src = ds.vectors.row(base + r);
                for c in 0..n_components {
                    let mut acc = 0.0;
                    for j in 0..ds.dim() {
                        acc += (src[j] as f64 - means[j]) * frame[[j, c]];
                    }
                    row[c] = acc;
                }
            }
        });
    Ok((out, summary))
}

/// Per-year eigendecomposition and pairwise principal angles between the
/// top-p eigenspaces, mirroring the temporal-stability analysis.
#[derive(Debug, Clone, Serialize)]
pub struct YearPairAngles {
    pub year_a: i32,
    pub year_b: i32,
    pub angles_deg: Vec<f64>,
}

pub fn per_year_subspace_angles(ds: &EmbeddingDataset, top_p: usize) -> Result<Vec<YearPairAngles>> {
    let years = ds.years();
    if years.len() < 2 {
        return Err(Error::InvalidData("need at least two distinct years".into()));
    }
    let mut frames = Vec::new();
    for &y in &years {
        let rows: Vec<usize> = (0..ds.n()).filter(|&i| ds.year[i] == y).collect();
        if rows.len() < 2 {
            return Err(Error::InvalidData(format!("year {y} has fewer than 2 rows")));
        }
        let sub = ds.subset(&rows)?;
        let cov = covariance_matrix(&sub)?;
        let summary = eigendecompose(&cov.view())?;
        frames.push(summary.top_frame(top_p));
    }
    let mut out = Vec::new();
    for i in 0..years.len() {
        for j in (i + 1)..years.len() {
            out.push(YearPairAngles {
                year_a: years[i],
                year_b: years[j],
                angles_deg: subspace_principal_angles(&frames[i].view(), &frames[j].view())?,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn ds_from(vectors: Array2<f32>) -> EmbeddingDataset {
        let n = vectors.nrows();
        EmbeddingDataset::new(
            vectors,
            vec![0.0; n],
            vec![0.0; n],
            vec![2020; n],
            Array2::zeros((n, 0)),
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn participation_ratio_closed_forms() {
        assert!((participation_ratio(&[1.0, 1.0, 1.0, 1.0]).unwrap() - 4.0).abs() < 1e-12);
        assert!((participation_ratio(&[3.0, 1.0]).unwrap() - 1.6).abs() < 1e-12);
        assert!((participation_ratio(&[2.0, 0.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(participation_ratio(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn participation_ratio_scale_invariant() {
        let spec = [5.0, 3.0, 1.0, 0.5];
        let scaled: Vec<f64> = spec.iter().map(|l| l * 7.3).collect();
        let a = participation_ratio(&spec).unwrap();
        let b = participation_ratio(&scaled).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn covariance_matches_hand_table() {
        // 4 rows, 2 columns; unbiased covariance by hand:
        // x = [1,2,3,4], y = [2,4,6,8]; cov(x,x)=5/3, cov(x,y)=10/3, cov(y,y)=20/3
        let ds = ds_from(array![[1.0f32, 2.0], [2.0, 4.0], [3.0, 6.0], [4.0, 8.0]]);
        let cov = covariance_matrix(&ds).unwrap();
        assert!((cov[[0, 0]] - 5.0 / 3.0).abs() < 1e-9);
        assert!((cov[[0, 1]] - 10.0 / 3.0).abs() < 1e-9);
        assert!((cov[[1, 1]] - 20.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn spearman_of_monotone_columns_is_one() {
        let n = 50;
        let mut v = Array2::<f32>::zeros((n, 2));
        for i in 0..n {
            let x = i as f32 / n as f32 - 0.5;
            v[[i, 0]] = x;
            v[[i, 1]] = x * x * x;
        }
        let ds = ds_from(v);
        let s = spearman_matrix(&ds).unwrap();
        assert!((s[[0, 1]] - 1.0).abs() < 1e-12);
        assert_eq!(s[[0, 0]], 1.0);
    }

    #[test]
    fn spearman_invariant_under_monotone_transform() {
        let n = 200;
        let mut v = Array2::<f32>::zeros((n, 3));
        let mut state = 99u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) as f32
        };
        for i in 0..n {
            for j in 0..3 {
                v[[i, j]] = next();
            }
        }
        let ds = ds_from(v.clone());
        let s1 = spearman_matrix(&ds).unwrap();
        // exp is strictly monotone; x^3 is strictly monotone.
        let mut w = v.clone();
        for i in 0..n {
            w[[i, 0]] = w[[i, 0]].exp();
            w[[i, 1]] = w[[i, 1]].powi(3);
        }
        let ds2 = ds_from(w);
        let s2 = spearman_matrix(&ds2).unwrap();
        for (a, b) in s1.iter().zip(s2.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn eigendecompose_identity_and_diag() {
        let id = Array2::<f64>::eye(3);
        let s = eigendecompose(&id.view()).unwrap();
        assert!((s.participation_ratio.unwrap() - 3.0).abs() < 1e-12);

        let d = array![[2.0, 0.0], [0.0, 1.0]];
        let s = eigendecompose(&d.view()).unwrap();
        assert!((s.eigenvalues[0] - 2.0).abs() < 1e-12);
        assert!((s.participation_ratio.unwrap() - 1.8).abs() < 1e-12);
        assert!((s.variance_fractions[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn correlated_pairs_census() {
        let id = Array2::<f64>::eye(4);
        assert_eq!(count_correlated_pairs(&id.view(), 0.5).unwrap(), (0, 6));
        let mut m = Array2::<f64>::eye(4);
        m[[0, 1]] = 0.9;
        m[[1, 0]] = 0.9;
        assert_eq!(count_correlated_pairs(&m.view(), 0.5).unwrap().0, 1);
        // D=64 denominator
        let big = Array2::<f64>::eye(64);
        assert_eq!(count_correlated_pairs(&big.view(), 0.5).unwrap().1, 2016);
    }

    #[test]
    fn pca_projection_variances_match_eigenvalues() {
        let n = 500;
        let mut v = Array2::<f32>::zeros((n, 4));
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) as f32
        };
        for i in 0..n {
            v[[i, 0]] = 3.0 * next();
            v[[i, 1]] = 2.0 * next();
            v[[i, 2]] = 1.0 * next();
            v[[i, 3]] = 0.5 * next();
        }
        let ds = ds_from(v);
        let (proj, summary) = pca_project(&ds, 3).unwrap();
        for c in 0..3 {
            let col: Vec<f64> = proj.column(c).to_vec();
            let var = stats::sample_var(&col);
            let lam = summary.eigenvalues[c];
            assert!(
                (var - lam).abs() <= 1e-6 * lam.max(1e-12),
                "component {c}: variance {var} vs eigenvalue {lam}"
            );
        }
        // Non-increasing projection variance.
        let v0: Vec<f64> = proj.column(0).to_vec();
        let v1: Vec<f64> = proj.column(1).to_vec();
        assert!(stats::sample_var(&v0) >= stats::sample_var(&v1));
    }

    #[test]
    fn plane_data_reconstructs_exactly_with_two_components() {
        let n = 100;
        let mut v = Array2::<f32>::zeros((n, 3));
        for i in 0..n {
            let a = (i as f32) * 0.1;
            let b = ((i * 7 % 13) as f32) * 0.3;
            v[[i, 0]] = a + b;
            v[[i, 1]] = a - b;
            v[[i, 2]] = 2.0 * a + 0.5 * b;
        }
        let ds = ds_from(v);
        let (_, summary) = pca_project(&ds, 2).unwrap();
        // Third eigenvalue is numerically zero for rank-2 data.
        assert!(summary.eigenvalues[2].abs() < 1e-6 * summary.eigenvalues[0]);
    }
}
