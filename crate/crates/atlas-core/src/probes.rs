//! Supervised linear probes for concept directions: ridge regression at
//! global, regional, and local scales, PCA-derived direction selection, and
//! direction-stability statistics.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "id")]
pub enum Scale {
    Global,
    Regional(String),
    Local(usize),
}

impl Scale {
    fn class(&self) -> &'static str {
        match self {
            Scale::Global => "global",
            Scale::Regional(_) => "regional",
            Scale::Local(_) => "local",
        }
    }
}

/// A fitted linear probe. `direction` is the unit-normalized coefficient
/// vector; an all-constant target yields a flagged zero direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeModel {
    pub property: String,
    pub scale: Scale,
    pub direction: Array1<f64>,
    pub coefficients: Array1<f64>,
    pub intercept: f64,
    pub r2: f64,
    pub n_train: usize,
    pub zero_direction: bool,
}

/// Ridge regression with centered features and target; the intercept is not
/// penalized. Solves (Xc'Xc + alpha I) beta = Xc' yc.
pub fn fit_ridge_probe(
    property: &str,
    scale: Scale,
    x: &ArrayView2<f64>,
    y: &[f64],
    alpha: f64,
) -> Result<ProbeModel> {
    let n = x.nrows();
    let d = x.ncols();
    if n < 2 {
        return Err(Error::InvalidArgument("ridge fit needs at least 2 rows".into()));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} targets for {} rows",
            y.len(),
            n
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite target value".into()));
    }
    if alpha < 0.0 {
        return Err(Error::InvalidArgument("alpha must be >= 0".into()));
    }

    let y_mean = stats::mean(y);
    let ss_tot: f64 = y.iter().map(|&v| (v - y_mean) * (v - y_mean)).sum();
    if ss_tot <= 0.0 {
        // Constant target: flagged zero-direction model.
        return Ok(ProbeModel {
            property: property.to_string(),
            scale,
            direction: Array1::zeros(d),
            coefficients: Array1::zeros(d),
            intercept: y_mean,
            r2: 0.0,
            n_train: n,
            zero_direction: true,
        });
    }

    let mut x_mean = Array1::<f64>::zeros(d);
    for row in x.outer_iter() {
        x_mean += &row;
    }
    x_mean /= n as f64;

    // Gram matrix of centered features.
    let mut gram = Array2::<f64>::zeros((d, d));
    let mut xty = Array1::<f64>::zeros(d);
    for (i, row) in x.outer_iter().enumerate() {
        let yc = y[i] - y_mean;
        for a in 0..d {
            let xa = row[a] - x_mean[a];
            xty[a] += xa * yc;
            if xa == 0.0 {
                continue;
            }
            for b in a..d {
                gram[[a, b]] += xa * (row[b] - x_mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            gram[[a, b]] = gram[[b, a]];
        }
        gram[[a, a]] += alpha;
    }

    let coefficients = match linalg::cholesky_solve(&gram.view(), &xty.view()) {
        Ok(c) => c,
        Err(_) => linalg::pinv_solve_sym(&gram.view(), &xty.view(), 1e-12)?,
    };
    let norm = coefficients.dot(&coefficients).sqrt();
    let zero_direction = norm <= 1e-12;
    let direction = if zero_direction {
        Array1::zeros(d)
    } else {
        &coefficients / norm
    };
    let intercept = y_mean - x_mean.dot(&coefficients);

    let mut ss_res = 0.0;
    for (i, row) in x.outer_iter().enumerate() {
        let pred = intercept + row.dot(&coefficients);
        let r = y[i] - pred;
        ss_res += r * r;
    }
    let r2 = 1.0 - ss_res / ss_tot;

    Ok(ProbeModel {
        property: property.to_string(),
        scale,
        direction,
        coefficients,
        intercept,
        r2,
        n_train: n,
        zero_direction,
    })
}

/// Outcome of picking the local PC most correlated with a covariate.
#[derive(Debug, Clone)]
pub struct PcSelection {
    pub pc_index: usize,
    /// Basis vector oriented so the correlation is non-negative.
    pub direction: Array1<f64>,
    /// |r| of the selected component.
    pub correlation: f64,
}

/// Correlate the top-p PC scores of a neighborhood with a covariate and
/// return the best component. Scores are projections of the centered
/// neighborhood onto each basis column. Ties break toward the lower PC
/// index; the result is invariant to sign flips of the basis.
pub fn select_pc_direction(
    neighbors: &ArrayView2<f64>,
    basis: &ArrayView2<f64>,
    covariate: &[f64],
    top_p: usize,
) -> Result<PcSelection> {
    let n = neighbors.nrows();
    if covariate.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} covariate values for {} neighbors",
            covariate.len(),
            n
        )));
    }
    let p = top_p.min(basis.ncols());
    if p == 0 {
        return Err(Error::InvalidArgument("no components available".into()));
    }
    if stats::population_std(covariate) <= 0.0 {
        return Err(Error::InvalidData(
            "covariate has zero variance in the neighborhood".into(),
        ));
    }
    let d = neighbors.ncols();
    let mut mean = Array1::<f64>::zeros(d);
    for row in neighbors.outer_iter() {
        mean += &row;
    }
    mean /= n as f64;

    let mut best: Option<(usize, f64)> = None; // (pc, signed r)
    for c in 0..p {
        let col = basis.column(c);
        let scores: Vec<f64> = neighbors
            .outer_iter()
            .map(|row| {
                let mut acc = 0.0;
                for j in 0..d {
                    acc += (row[j] - mean[j]) * col[j];
                }
                acc
            })
            .collect();
        let r = stats::pearson(&scores, covariate);
        let better = match best {
            None => true,
            Some((_, br)) => r.abs() > br.abs(),
        };
        if better {
            best = Some((c, r));
        }
    }
    let (pc_index, r) = best.expect("p >= 1");
    let mut direction = basis.column(pc_index).to_owned();
    if r < 0.0 {
        direction.mapv_inplace(|v| -v);
    }
    Ok(PcSelection {
        pc_index,
        direction,
        correlation: r.abs(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PairStability {
    pub scale_a: String,
    pub scale_b: String,
    pub count: usize,
    pub mean_abs_cos: f64,
    pub median_abs_cos: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub property: String,
    pub pairs: Vec<PairStability>,
    pub excluded_zero_direction: usize,
}

/// |cos| statistics between concept directions across scales for one
/// property. Zero-direction models are excluded and counted.
pub fn direction_stability(models: &[ProbeModel]) -> Result<StabilityReport> {
    if models.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 models".into()));
    }
    let property = models[0].property.clone();
    if models.iter().any(|m| m.property != property) {
        return Err(Error::InvalidArgument(
            "all models must target the same property".into(),
        ));
    }
    let excluded = models.iter().filter(|m| m.zero_direction).count();
    let usable: Vec<&ProbeModel> = models.iter().filter(|m| !m.zero_direction).collect();

    let classes = ["global", "regional", "local"];
    let mut pairs = Vec::new();
    for (ci, &ca) in classes.iter().enumerate() {
        for &cb in classes.iter().skip(ci) {
            let mut cosines = Vec::new();
            for (i, ma) in usable.iter().enumerate() {
                for (j, mb) in usable.iter().enumerate() {
                    let same_class = ca == cb;
                    if same_class && j <= i {
                        continue;
                    }
                    if ma.scale.class() == ca && mb.scale.class() == cb && (!same_class || i < j) {
                        cosines.push(abs_cos(&ma.direction.view(), &mb.direction.view()));
                    }
                }
            }
            if !cosines.is_empty() {
                pairs.push(PairStability {
                    scale_a: ca.to_string(),
                    scale_b: cb.to_string(),
                    count: cosines.len(),
                    mean_abs_cos: stats::mean(&cosines),
                    median_abs_cos: stats::median(&cosines),
                });
            }
        }
    }
    Ok(StabilityReport {
        property,
        pairs,
        excluded_zero_direction: excluded,
    })
}

fn abs_cos(a: &ArrayView1<f64>, b: &ArrayView1<f64>) -> f64 {
    linalg::abs_cosine(a, b)
}

/// Embedding rows as an n x D f64 matrix, for probe fitting.
pub fn embedding_matrix(ds: &crate::data::EmbeddingDataset, rows: &[usize]) -> Array2<f64> {
    let d = ds.dim();
    let mut x = Array2::<f64>::zeros((rows.len(), d));
    for (i, &r) in rows.iter().enumerate() {
        let src = ds.vectors.row(r);
        for j in 0..d {
            x[[i, j]] = src[j] as f64;
        }
    }
    x
}
