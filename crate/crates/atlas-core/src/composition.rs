//! Compositional-arithmetic experiments: targeted shifts along concept
//! directions, property transfer between locations, analogies, and the
//! factorial experiment suite.
//!
//! All outcome metrics are reported in units of each property's global
//! standard deviation, so they are invariant to affine rescaling of the raw
//! covariate columns.

use std::collections::HashMap;
use std::sync::Mutex;

use ndarray::Array1;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::knn::Index;
use crate::linalg::random_unit_vector;
use crate::local_geom::neighborhood_eigen;
use crate::probes::{embedding_matrix, fit_ridge_probe, select_pc_direction, ProbeModel, Scale};
use crate::regions::{first_match, RegionSpec};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMethod {
    GlobalPc,
    LocalPc,
    ProbeGlobal,
    ProbeRegional,
    ProbeLocal,
    Random,
    GeographicBaseline,
}

impl ShiftMethod {
    pub fn name(&self) -> &'static str {
        match self {
            ShiftMethod::GlobalPc => "global_pc",
            ShiftMethod::LocalPc => "local_pc",
            ShiftMethod::ProbeGlobal => "probe_global",
            ShiftMethod::ProbeRegional => "probe_regional",
            ShiftMethod::ProbeLocal => "probe_local",
            ShiftMethod::Random => "random",
            ShiftMethod::GeographicBaseline => "geographic_baseline",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ShiftOutcome {
    pub source: usize,
    pub property: String,
    pub method: ShiftMethod,
    pub magnitude: f64,
    pub retrieved: Option<usize>,
    /// Change in the target property, in global property-sigma units.
    pub target_change_sigma: f64,
    /// Mean |change| over the other non-constant properties, sigma units.
    pub nontarget_deviation_sigma: f64,
    pub flagged: Option<String>,
}

/// Shared context for the shift experiments: dataset, index, neighborhood
/// size, and caches for the global/regional direction fits.
pub struct ShiftLab<'a> {
    pub ds: &'a EmbeddingDataset,
    pub index: &'a Index,
    pub k: usize,
    pub top_p: usize,
    pub alpha: f64,
    /// Cap for the global-direction subsample.
    pub global_sample: usize,
    pub seed: u64,
    pub regions: Vec<RegionSpec>,
    global_pca: Mutex<Option<(Vec<usize>, crate::spectral::EigenSummary)>>,
    global_probes: Mutex<HashMap<String, ProbeModel>>,
    regional_probes: Mutex<HashMap<(String, String), Option<ProbeModel>>>,
}

impl<'a> ShiftLab<'a> {
    pub fn new(ds: &'a EmbeddingDataset, index: &'a Index, seed: u64) -> Self {
        Self {
            ds,
            index,
            k: 100,
            top_p: 10,
            alpha: 1.0,
            global_sample: 50_000,
            seed,
            regions: Vec::new(),
            global_pca: Mutex::new(None),
            global_probes: Mutex::new(HashMap::new()),
            regional_probes: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_regions(mut self, regions: Vec<RegionSpec>) -> Self {
        self.regions = regions;
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    fn property_sigma(&self, p: usize) -> Result<f64> {
        let stat = &self.ds.covariate_stats[p];
        if stat.constant {
            return Err(Error::InvalidData(format!(
                "property '{}' is constant",
                self.ds.covariate_names[p]
            )));
        }
        Ok(stat.std)
    }

    /// Deterministic subsample rows for global fits.
    fn global_rows(&self) -> Vec<usize> {
        let n = self.ds.n();
        if n <= self.global_sample {
            (0..n).collect()
        } else {
            let mut rng = StdRng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            all.truncate(self.global_sample);
            all.sort_unstable();
            all
        }
    }

    fn global_pca(&self) -> Result<(Vec<usize>, crate::spectral::EigenSummary)> {
        let mut guard = self.global_pca.lock().expect("lock");
        if guard.is_none() {
            let rows = self.global_rows();
            let sub = self.ds.subset(&rows)?;
            let cov = crate::spectral::covariance_matrix(&sub)?;
            let summary = crate::spectral::eigendecompose(&cov.view())?;
            *guard = Some((rows, summary));
        }
        Ok(guard.clone().expect("just set"))
    }

    fn global_probe(&self, property: &str) -> Result<ProbeModel> {
        {
            let guard = self.global_probes.lock().expect("lock");
            if let Some(m) = guard.get(property) {
                return Ok(m.clone());
            }
        }
        let rows = self.global_rows();
        let x = embedding_matrix(self.ds, &rows);
        let p = self.ds.covariate_index(property)?;
        let y: Vec<f64> = rows.iter().map(|&r| self.ds.covariates[[r, p]]).collect();
        let model = fit_ridge_probe(property, Scale::Global, &x.view(), &y, self.alpha)?;
        self.global_probes
            .lock()
            .expect("lock")
            .insert(property.to_string(), model.clone());
        Ok(model)
    }

    fn regional_probe(&self, region: &str, property: &str) -> Result<Option<ProbeModel>> {
        let key = (region.to_string(), property.to_string());
        {
            let guard = self.regional_probes.lock().expect("lock");
            if let Some(m) = guard.get(&key) {
                return Ok(m.clone());
            }
        }
        let spec = self
            .regions
            .iter()
            .find(|r| r.name == region)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown region '{region}'")))?;
        let rows: Vec<usize> = (0..self.ds.n())
            .filter(|&i| spec.contains(self.ds.lat[i], self.ds.lon[i]))
            .collect();
        let model = if rows.len() < 2 {
            None
        } else {
            let x = embedding_matrix(self.ds, &rows);
            let p = self.ds.covariate_index(property)?;
            let y: Vec<f64> = rows.iter().map(|&r| self.ds.covariates[[r, p]]).collect();
            Some(fit_ridge_probe(
                property,
                Scale::Regional(region.to_string()),
                &x.view(),
                &y,
                self.alpha,
            )?)
        };
        self.regional_probes.lock().expect("lock").insert(key, model.clone());
        Ok(model)
    }

    /// Concept direction for (source, property, method), not yet oriented.
    fn direction(&self, source: usize, property: &str, method: ShiftMethod) -> Result<Array1<f64>> {
        let p = self.ds.covariate_index(property)?;
        match method {
            ShiftMethod::GlobalPc => {
                let (rows, summary) = self.global_pca()?;
                let x = embedding_matrix(self.ds, &rows);
                let y: Vec<f64> = rows.iter().map(|&r| self.ds.covariates[[r, p]]).collect();
                let basis = summary.top_frame(self.top_p.min(self.ds.dim()));
                let sel = select_pc_direction(&x.view(), &basis.view(), &y, self.top_p)?;
                Ok(sel.direction)
            }
            ShiftMethod::LocalPc => {
                let rows = self.neighborhood_rows(source)?;
                let summary = neighborhood_eigen(self.ds, &rows)?;
                if summary.eigenvalues[0].max(0.0) <= 1e-24 {
                    return Err(Error::InvalidData("degenerate neighborhood".into()));
                }
                let x = embedding_matrix(self.ds, &rows);
                let y: Vec<f64> = rows.iter().map(|&r| self.ds.covariates[[r, p]]).collect();
                let basis = summary.top_frame(self.top_p.min(self.ds.dim()));
                let sel = select_pc_direction(&x.view(), &basis.view(), &y, self.top_p)?;
                Ok(sel.direction)
            }
            ShiftMethod::ProbeGlobal => {
                let m = self.global_probe(property)?;
                if m.zero_direction {
                    return Err(Error::InvalidData("zero-direction global probe".into()));
                }
                Ok(m.direction)
            }
            ShiftMethod::ProbeRegional => {
                let region = first_match(&self.regions, self.ds.lat[source], self.ds.lon[source])
                    .ok_or_else(|| {
                        Error::InvalidData(format!("source row {source} matches no region"))
                    })?;
                let m = self
                    .regional_probe(&region.name.clone(), property)?
                    .ok_or_else(|| Error::InvalidData("region has too few rows".into()))?;
                if m.zero_direction {
                    return Err(Error::InvalidData("zero-direction regional probe".into()));
                }
                Ok(m.direction)
            }
            ShiftMethod::ProbeLocal => {
                let rows = self.neighborhood_rows(source)?;
                let x = embedding_matrix(self.ds, &rows);
                let y: Vec<f64> = rows.iter().map(|&r| self.ds.covariates[[r, p]]).collect();
                let m = fit_ridge_probe(property, Scale::Local(source), &x.view(), &y, self.alpha)?;
                if m.zero_direction {
                    return Err(Error::InvalidData("zero-direction local probe".into()));
                }
                Ok(m.direction)
            }
            ShiftMethod::Random => {
                let mut h = stats::fnv1a64(property.as_bytes());
                h ^= (source as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
                let mut rng = StdRng::seed_from_u64(self.seed ^ h);
                Ok(random_unit_vector(self.ds.dim(), &mut rng))
            }
            ShiftMethod::GeographicBaseline => Err(Error::InvalidArgument(
                "geographic baseline has no direction; use geographic_baseline()".into(),
            )),
        }
    }

    /// Source neighborhood: the source row plus its k nearest neighbors.
    fn neighborhood_rows(&self, source: usize) -> Result<Vec<usize>> {
        let ns = self.index.search_row(source, self.k.min(self.ds.n() - 1), true)?;
        let mut rows = Vec::with_capacity(ns.indices.len() + 1);
        rows.push(source);
        rows.extend_from_slice(&ns.indices);
        Ok(rows)
    }

    /// Shift `source` by n sigma along the method's concept direction and
    /// retrieve the nearest real embedding. The direction is oriented so it
    /// correlates positively with the property over the source neighborhood;
    /// sigma is the neighborhood standard deviation along the direction.
    pub fn targeted_shift(
        &self,
        source: usize,
        property: &str,
        method: ShiftMethod,
        n: f64,
    ) -> Result<ShiftOutcome> {
        if source >= self.ds.n() {
            return Err(Error::InvalidArgument(format!("source row {source} out of range")));
        }
        if method == ShiftMethod::GeographicBaseline {
            return self.geographic_baseline(source, property, n);
        }
        let p = self.ds.covariate_index(property)?;
        let sigma_p = self.property_sigma(p)?;

        if n == 0.0 {
            // No displacement: the retrieved point is the source itself and
            // both deltas are exactly zero.
            return Ok(ShiftOutcome {
                source,
                property: property.to_string(),
                method,
                magnitude: 0.0,
                retrieved: Some(source),
                target_change_sigma: 0.0,
                nontarget_deviation_sigma: 0.0,
                flagged: None,
            });
        }

        let mut direction = self.direction(source, property, method)?;
        let rows = self.neighborhood_rows(source)?;

        // Projections of the neighborhood onto the direction.
        let mut projections = Vec::with_capacity(rows.len());
        let mut prop_vals = Vec::with_capacity(rows.len());
        for &r in &rows {
            let x = self.ds.vectors.row(r);
            let mut t = 0.0;
            for j in 0..self.ds.dim() {
                t += x[j] as f64 * direction[j];
            }
            projections.push(t);
            prop_vals.push(self.ds.covariates[[r, p]]);
        }
        let corr = stats::pearson(&projections, &prop_vals);
        if corr < 0.0 {
            direction.mapv_inplace(|v| -v);
            for t in projections.iter_mut() {
                *t = -*t;
            }
        }
        let sigma_dir = stats::population_std(&projections);
        if sigma_dir <= 0.0 {
            return Ok(self.flagged_outcome(source, property, method, n, "degenerate neighborhood: zero spread along direction"));
        }

        let x_src = self.ds.vector_f64(source);
        let query: Vec<f32> = (0..self.ds.dim())
            .map(|j| (x_src[j] + n * sigma_dir * direction[j]) as f32)
            .collect();
        let ns = self.index.search_vector(&query, 1, Some(source))?;
        let retrieved = ns.indices[0];
        let (target, nontarget) = self.deltas(source, retrieved, p, sigma_p)?;
        Ok(ShiftOutcome {
            source,
            property: property.to_string(),
            method,
            magnitude: n,
            retrieved: Some(retrieved),
            target_change_sigma: target,
            nontarget_deviation_sigma: nontarget,
            flagged: None,
        })
    }

    fn flagged_outcome(
        &self,
        source: usize,
        property: &str,
        method: ShiftMethod,
        n: f64,
        reason: &str,
    ) -> ShiftOutcome {
        ShiftOutcome {
            source,
            property: property.to_string(),
            method,
            magnitude: n,
            retrieved: None,
            target_change_sigma: f64::NAN,
            nontarget_deviation_sigma: f64::NAN,
            flagged: Some(reason.to_string()),
        }
    }

    fn deltas(&self, source: usize, retrieved: usize, p: usize, sigma_p: f64) -> Result<(f64, f64)> {
        let target =
            (self.ds.covariates[[retrieved, p]] - self.ds.covariates[[source, p]]) / sigma_p;
        let mut devs = Vec::new();
        for j in 0..self.ds.n_covariates() {
            if j == p || self.ds.covariate_stats[j].constant {
                continue;
            }
            let s = self.ds.covariate_stats[j].std;
            devs.push(
                ((self.ds.covariates[[retrieved, j]] - self.ds.covariates[[source, j]]) / s).abs(),
            );
        }
        Ok((target, stats::mean(&devs)))
    }

    /// Among rows whose property exceeds the source by at least n sigma in
    /// the intended direction, return the geographically nearest.
    pub fn geographic_baseline(&self, source: usize, property: &str, n: f64) -> Result<ShiftOutcome> {
        if self.ds.n() < 2 {
            return Err(Error::InvalidData("need at least 2 rows".into()));
        }
        let p = self.ds.covariate_index(property)?;
        let sigma_p = self.property_sigma(p)?;
        let y_src = self.ds.covariates[[source, p]];
        let threshold = n.abs() * sigma_p;
        let increase = n >= 0.0;

        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.ds.n() {
            if i == source {
                continue;
            }
            let dy = self.ds.covariates[[i, p]] - y_src;
            let qualifies = if increase { dy >= threshold } else { -dy >= threshold };
            if !qualifies {
                continue;
            }
            let dl = self.ds.lat[i] - self.ds.lat[source];
            let dn = self.ds.lon[i] - self.ds.lon[source];
            let d2 = dl * dl + dn * dn;
            if best.map_or(true, |(_, bd)| d2 < bd) {
                best = Some((i, d2));
            }
        }
        match best {
            None => Ok(self.flagged_outcome(
                source,
                property,
                ShiftMethod::GeographicBaseline,
                n,
                "no row satisfies the requested property change",
            )),
            Some((row, _)) => {
                let (target, nontarget) = self.deltas(source, row, p, sigma_p)?;
                Ok(ShiftOutcome {
                    source,
                    property: property.to_string(),
                    method: ShiftMethod::GeographicBaseline,
                    magnitude: n,
                    retrieved: Some(row),
                    target_change_sigma: target,
                    nontarget_deviation_sigma: nontarget,
                    flagged: None,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TransferOutcome {
    pub a: usize,
    pub b: usize,
    pub property: String,
    pub replaced_components: Vec<usize>,
    pub retrieved: usize,
    /// |retrieved - B| on the target property, sigma units.
    pub target_error_sigma: f64,
    /// Mean |retrieved - A| over other properties, sigma units.
    pub nontarget_deviation_sigma: f64,
}

/// Replace A's coefficients along the j local PCs most correlated with the
/// property by B's projections onto the same basis, then retrieve the
/// nearest real embedding.
pub fn property_transfer(
    ds: &EmbeddingDataset,
    index: &Index,
    a: usize,
    b: usize,
    property: &str,
    k: usize,
    j_components: usize,
) -> Result<TransferOutcome> {
    if a == b {
        return Err(Error::InvalidArgument("a and b must differ".into()));
    }
    let p = ds.covariate_index(property)?;
    let sigma_p = ds.covariate_stats[p].std;
    if ds.covariate_stats[p].constant {
        return Err(Error::InvalidData(format!("property '{property}' is constant")));
    }

    let ns = index.search_row(a, k.min(ds.n() - 1), true)?;
    let mut rows = vec![a];
    rows.extend_from_slice(&ns.indices);
    let summary = neighborhood_eigen(ds, &rows)?;
    if summary.eigenvalues[0].max(0.0) <= 1e-24 {
        return Err(Error::InvalidData("degenerate local basis at A".into()));
    }

    // Rank all components with non-vanishing variance by |corr| with the
    // property over the neighborhood.
    let available: usize = summary
        .eigenvalues
        .iter()
        .filter(|&&l| l > 1e-12 * summary.eigenvalues[0].max(1e-300))
        .count();
    let available = available.max(1).min(ds.dim());
    let x = embedding_matrix(ds, &rows);
    let mut mean = Array1::<f64>::zeros(ds.dim());
    for row in x.outer_iter() {
        mean += &row;
    }
    mean /= rows.len() as f64;
    let y: Vec<f64> = rows.iter().map(|&r| ds.covariates[[r, p]]).collect();

    let mut ranked: Vec<(usize, f64)> = (0..available)
        .map(|c| {
            let col = summary.eigenvectors.column(c);
            let scores: Vec<f64> = x
                .outer_iter()
                .map(|row| {
                    let mut acc = 0.0;
                    for d in 0..ds.dim() {
                        acc += (row[d] - mean[d]) * col[d];
                    }
                    acc
                })
                .collect();
            (c, stats::pearson(&scores, &y).abs())
        })
        .collect();
    ranked.sort_by(|l, r| r.1.total_cmp(&l.1).then(l.0.cmp(&r.0)));
    let chosen: Vec<usize> = ranked
        .iter()
        .take(j_components.min(available))
        .map(|&(c, _)| c)
        .collect();

    let xa = ds.vector_f64(a);
    let xb = ds.vector_f64(b);
    let mut z = xa.clone();
    for &c in &chosen {
        let v = summary.eigenvectors.column(c);
        let mut coef_a = 0.0;
        let mut coef_b = 0.0;
        for d in 0..ds.dim() {
            coef_a += (xa[d] - mean[d]) * v[d];
            coef_b += (xb[d] - mean[d]) * v[d];
        }
        let delta = coef_b - coef_a;
        for d in 0..ds.dim() {
            z[d] += delta * v[d];
        }
    }

    let query: Vec<f32> = z.iter().map(|&v| v as f32).collect();
    let hit = index.search_vector(&query, 1, None)?;
    let retrieved = hit.indices[0];

    let target_error_sigma = ((ds.covariates[[retrieved, p]] - ds.covariates[[b, p]]) / sigma_p).abs();
    let mut devs = Vec::new();
    for jj in 0..ds.n_covariates() {
        if jj == p || ds.covariate_stats[jj].constant {
            continue;
        }
        let s = ds.covariate_stats[jj].std;
        devs.push(((ds.covariates[[retrieved, jj]] - ds.covariates[[a, jj]]) / s).abs());
    }
    Ok(TransferOutcome {
        a,
        b,
        property: property.to_string(),
        replaced_components: chosen,
        retrieved,
        target_error_sigma,
        nontarget_deviation_sigma: stats::mean(&devs),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalogyMode {
    Naive,
    TangentProjected,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalogyOutcome {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub mode: AnalogyMode,
    pub retrieved: usize,
    /// |retrieved - B| on the target property, sigma units.
    pub target_error_sigma: f64,
    /// Mean |retrieved - C| over the other properties, sigma units.
    pub nontarget_deviation_sigma: f64,
}

/// Apply the offset B - A to C (optionally projected onto C's tangent
/// space) and retrieve the nearest real embedding. The expected profile is
/// C's non-target properties with B's target property. With
/// `paper_sign = true` the offset A - B is applied instead, matching the
/// formula as printed rather than its stated intent.
#[allow(clippy::too_many_arguments)]
pub fn analogy(
    ds: &EmbeddingDataset,
    index: &Index,
    a: usize,
    b: usize,
    c: usize,
    property: &str,
    mode: AnalogyMode,
    k: usize,
    tangent_m: usize,
    paper_sign: bool,
) -> Result<AnalogyOutcome> {
    if a == c || b == c {
        return Err(Error::InvalidArgument("rows must be distinct".into()));
    }
    let p = ds.covariate_index(property)?;
    if ds.covariate_stats[p].constant {
        return Err(Error::InvalidData(format!("property '{property}' is constant")));
    }
    let sigma_p = ds.covariate_stats[p].std;

    let xa = ds.vector_f64(a);
    let xb = ds.vector_f64(b);
    let xc = ds.vector_f64(c);
    let mut offset: Vec<f64> = (0..ds.dim()).map(|d| xb[d] - xa[d]).collect();
    if paper_sign {
        for v in offset.iter_mut() {
            *v = -*v;
        }
    }

    if mode == AnalogyMode::TangentProjected {
        let ns = index.search_row(c, k.min(ds.n() - 1), true)?;
        let mut rows = vec![c];
        rows.extend_from_slice(&ns.indices);
        let summary = neighborhood_eigen(ds, &rows)?;
        if summary.eigenvalues[0].max(0.0) <= 1e-24 {
            return Err(Error::InvalidData("degenerate tangent basis at C".into()));
        }
        let basis = summary.top_frame(tangent_m.min(ds.dim()));
        let mut projected = vec![0.0f64; ds.dim()];
        for col in 0..basis.ncols() {
            let v = basis.column(col);
            let mut t = 0.0;
            for d in 0..ds.dim() {
                t += offset[d] * v[d];
            }
            for d in 0..ds.dim() {
                projected[d] += t * v[d];
            }
        }
        offset = projected;
    }

    let query: Vec<f32> = (0..ds.dim()).map(|d| (xc[d] + offset[d]) as f32).collect();
    let hit = index.search_vector(&query, 1, None)?;
    let retrieved = hit.indices[0];

    let target_error_sigma = ((ds.covariates[[retrieved, p]] - ds.covariates[[b, p]]) / sigma_p).abs();
    let mut devs = Vec::new();
    for jj in 0..ds.n_covariates() {
        if jj == p || ds.covariate_stats[jj].constant {
            continue;
        }
        let s = ds.covariate_stats[jj].std;
        devs.push(((ds.covariates[[retrieved, jj]] - ds.covariates[[c, jj]]) / s).abs());
    }
    Ok(AnalogyOutcome {
        a,
        b,
        c,
        mode,
        retrieved,
        target_error_sigma,
        nontarget_deviation_sigma: stats::mean(&devs),
    })
}

/// Per-(method, magnitude) aggregate over suite outcomes.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteAggregate {
    pub method: ShiftMethod,
    pub magnitude: f64,
    pub count: usize,
    pub flagged: usize,
    pub mean_target_change: f64,
    pub mean_abs_target_change: f64,
    pub mean_nontarget_deviation: f64,
    /// Toolkit definition: fraction of outcomes with target change at least
    /// 0.5 n sigma and non-target deviation below n sigma.
    pub precision: f64,
}

/// Full factorial run over sources x properties x methods x magnitudes.
/// Failures are flagged per cell and the suite continues.
pub fn experiment_suite(
    lab: &ShiftLab<'_>,
    sources: &[usize],
    properties: &[String],
    methods: &[ShiftMethod],
    magnitudes: &[f64],
) -> Vec<ShiftOutcome> {
    let mut cells = Vec::new();
    for &s in sources {
        for prop in properties {
            for &m in methods {
                for &n in magnitudes {
                    cells.push((s, prop.clone(), m, n));
                }
            }
        }
    }
    cells
        .par_iter()
        .map(|(s, prop, m, n)| match lab.targeted_shift(*s, prop, *m, *n) {
            Ok(o) => o,
            Err(e) => ShiftOutcome {
                source: *s,
                property: prop.clone(),
                method: *m,
                magnitude: *n,
                retrieved: None,
                target_change_sigma: f64::NAN,
                nontarget_deviation_sigma: f64::NAN,
                flagged: Some(e.to_string()),
            },
        })
        .collect()
}

pub fn aggregate_outcomes(outcomes: &[ShiftOutcome]) -> Vec<SuiteAggregate> {
    let mut groups: std::collections::BTreeMap<(&'static str, u64), Vec<&ShiftOutcome>> =
        std::collections::BTreeMap::new();
    for o in outcomes {
        groups
            .entry((o.method.name(), o.magnitude.to_bits()))
            .or_default()
            .push(o);
    }
    groups
        .into_values()
        .map(|group| {
            let method = group[0].method;
            let magnitude = group[0].magnitude;
            let ok: Vec<&&ShiftOutcome> = group.iter().filter(|o| o.flagged.is_none()).collect();
            let targets: Vec<f64> = ok.iter().map(|o| o.target_change_sigma).collect();
            let abs_targets: Vec<f64> = targets.iter().map(|t| t.abs()).collect();
            let nontargets: Vec<f64> = ok.iter().map(|o| o.nontarget_deviation_sigma).collect();
            let precision = if ok.is_empty() {
                0.0
            } else {
                ok.iter()
                    .filter(|o| {
                        o.target_change_sigma >= 0.5 * magnitude
                            && o.nontarget_deviation_sigma < magnitude
                    })
                    .count() as f64
                    / ok.len() as f64
            };
            SuiteAggregate {
                method,
                magnitude,
                count: group.len(),
                flagged: group.len() - ok.len(),
                mean_target_change: stats::mean(&targets),
                mean_abs_target_change: stats::mean(&abs_targets),
                mean_nontarget_deviation: stats::mean(&nontargets),
                precision,
            }
        })
        .collect()
}
