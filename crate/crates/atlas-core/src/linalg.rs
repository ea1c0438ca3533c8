//! Dense symmetric linear algebra on small matrices.
//!
//! Everything here targets matrices no larger than the embedding
//! dimensionality (64 by default), so a cyclic Jacobi eigensolver and an
//! unblocked Cholesky are plenty. All routines are deterministic: same
//! input, same bits, regardless of thread count.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Maximum absolute asymmetry tolerated by [`sym_eigen`], relative to the
/// largest entry magnitude (floored at 1).
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching orthonormal
/// eigenvectors as columns. Each eigenvector is sign-normalized so that its
/// largest-magnitude component is positive, which keeps repeated runs and
/// cross-year comparisons stable.
pub fn sym_eigen(m: &ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "expected square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    let scale = m.iter().fold(0.0f64, |acc, &v| acc.max(v.abs())).max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[[i, j]] - m[[j, i]]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidArgument(format!(
                    "matrix is not symmetric at ({i},{j}): {} vs {}",
                    m[[i, j]],
                    m[[j, i]]
                )));
            }
        }
    }

    let mut a = m.to_owned();
    // Symmetrize exactly so the sweep sees a_ij == a_ji.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
    let mut v = Array2::<f64>::eye(n);

    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let tol = 1e-15 * frob;
    const MAX_SWEEPS: usize = 64;

    for _ in 0..MAX_SWEEPS {
        let off: f64 = {
            let mut s = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    s += a[[p, q]] * a[[p, q]];
                }
            }
            s.sqrt()
        };
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let app = a[[p, p]];
                let aqq = a[[q, q]];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                a[[p, p]] = app - t * apq;
                a[[q, q]] = aqq + t * apq;
                a[[p, q]] = 0.0;
                a[[q, p]] = 0.0;
                for i in 0..n {
                    if i != p && i != q {
                        let aip = a[[i, p]];
                        let aiq = a[[i, q]];
                        a[[i, p]] = c * aip - s * aiq;
                        a[[p, i]] = a[[i, p]];
                        a[[i, q]] = s * aip + c * aiq;
                        a[[q, i]] = a[[i, q]];
                    }
                }
                for i in 0..n {
                    let vip = v[[i, p]];
                    let viq = v[[i, q]];
                    v[[i, p]] = c * vip - s * viq;
                    v[[i, q]] = s * vip + c * viq;
                }
            }
        }
    }

    let mut eigvals: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eigvals[j].total_cmp(&eigvals[i]));

    let mut values = Array1::<f64>::zeros(n);
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eigvals[src];
        let mut col: Vec<f64> = (0..n).map(|i| v[[i, src]]).collect();
        // Sign convention: largest-magnitude component made positive.
        let mut arg = 0;
        for (i, c) in col.iter().enumerate() {
            if c.abs() > col[arg].abs() {
                arg = i;
            }
        }
        if col[arg] < 0.0 {
            for c in col.iter_mut() {
                *c = -*c;
            }
        }
        for i in 0..n {
            vectors[[i, dst]] = col[i];
        }
    }
    eigvals.clear();
    Ok((values, vectors))
}

/// Principal angles (degrees, ascending) between the column spans of two
/// orthonormal frames with the same number of columns.
pub fn principal_angles_deg(u: &ArrayView2<f64>, w: &ArrayView2<f64>) -> Result<Vec<f64>> {
    if u.ncols() != w.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "frames have {} and {} columns",
            u.ncols(),
            w.ncols()
        )));
    }
    if u.nrows() != w.nrows() {
        return Err(Error::DimensionMismatch(
            "frames live in different ambient dimensions".into(),
        ));
    }
    check_orthonormal(u)?;
    check_orthonormal(w)?;

    let m = u.t().dot(w); // p x p
    let gram = m.t().dot(&m);
    let (vals, _) = sym_eigen(&gram.view())?;
    let mut angles: Vec<f64> = vals
        .iter()
        .map(|&l| {
            let sigma = l.max(0.0).sqrt().clamp(0.0, 1.0);
            sigma.acos().to_degrees()
        })
        .collect();
    angles.sort_by(|a, b| a.total_cmp(b));
    Ok(angles)
}

fn check_orthonormal(f: &ArrayView2<f64>) -> Result<()> {
    let g = f.t().dot(f);
    let p = g.nrows();
    for i in 0..p {
        for j in 0..p {
            let expect = if i == j { 1.0 } else { 0.0 };
            if (g[[i, j]] - expect).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!(
                    "frame is not orthonormal: gram[{i},{j}] = {}",
                    g[[i, j]]
                )));
            }
        }
    }
    Ok(())
}

/// Solve `A x = b` for symmetric positive definite `A` via Cholesky.
pub fn cholesky_solve(a: &ArrayView2<f64>, b: &ArrayView1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::DimensionMismatch("cholesky_solve shape".into()));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Numerical(format!(
                        "matrix not positive definite at pivot {i} ({s})"
                    )));
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    // Forward: L y = b
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    // Back: L^T x = y
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    Ok(x)
}

/// Solve a symmetric (possibly singular) system via eigen pseudo-inverse.
/// Eigenvalues below `rel_cutoff * lambda_max` are treated as zero.
pub fn pinv_solve_sym(a: &ArrayView2<f64>, b: &ArrayView1<f64>, rel_cutoff: f64) -> Result<Array1<f64>> {
    let (vals, vecs) = sym_eigen(a)?;
    let lmax = vals.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let cut = rel_cutoff * lmax;
    let vt_b = vecs.t().dot(b);
    let mut scaled = Array1::<f64>::zeros(vals.len());
    for i in 0..vals.len() {
        if vals[i].abs() > cut {
            scaled[i] = vt_b[i] / vals[i];
        }
    }
    Ok(vecs.dot(&scaled))
}

/// Random `ambient x d` orthonormal frame (Gaussian columns, modified
/// Gram-Schmidt with one re-orthogonalization pass).
pub fn random_orthonormal_frame<R: Rng>(ambient: usize, d: usize, rng: &mut R) -> Array2<f64> {
    assert!(d <= ambient, "frame wider than ambient dimension");
    let mut frame = Array2::<f64>::zeros((ambient, d));
    let mut col = 0;
    while col < d {
        let mut v: Vec<f64> = (0..ambient).map(|_| rng.sample(StandardNormal)).collect();
        for _pass in 0..2 {
            for j in 0..col {
                let proj: f64 = (0..ambient).map(|i| v[i] * frame[[i, j]]).sum();
                for i in 0..ambient {
                    v[i] -= proj * frame[[i, j]];
                }
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue; // resample a degenerate draw
        }
        for i in 0..ambient {
            frame[[i, col]] = v[i] / norm;
        }
        col += 1;
    }
    frame
}

/// Random unit vector in `dim` dimensions.
pub fn random_unit_vector<R: Rng>(dim: usize, rng: &mut R) -> Array1<f64> {
    loop {
        let v: Array1<f64> = Array1::from_iter((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let n = v.dot(&v).sqrt();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// |cos| of the angle between two vectors; 0 when either is zero.
pub fn abs_cosine(a: &ArrayView1<f64>, b: &ArrayView1<f64>) -> f64 {
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na <= 0.0 || nb <= 0.0 {
        return 0.0;
    }
    (a.dot(b) / (na * nb)).abs().min(1.0)
}
