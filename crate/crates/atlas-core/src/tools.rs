//! Deterministic tool service over a loaded dataset and geometric
//! dictionary: the nine tools an agent framework can call, plus the
//! gazetteer-backed location resolver. Transport lives elsewhere; every
//! handler here is a pure function of (loaded artifacts, request), and all
//! failures are in-band structured errors.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::Serialize;
use serde_json::{json, Value};

use crate::coherence::{dominant_category_of, FeatureContext, GeoFeatures, GeometricDictionary};
use crate::data::EmbeddingDataset;
use crate::dict::DimensionDictionary;
use crate::error::{Error, Result};
use crate::knn::Index;
use crate::regions::RegionSpec;
use crate::spectral::EigenSummary;

pub const TOOL_NAMES: [&str; 9] = [
    "resolve_location",
    "retrieve_embedding",
    "search_similar",
    "interpret_dimensions",
    "compare_locations",
    "get_geometric_context",
    "assess_retrieval_confidence",
    "get_regional_profile",
    "identify_similar_regions",
];

/// Local name -> coordinate table standing in for a network geocoder.
/// Lookup is case-insensitive exact match with a unique-prefix fallback.
#[derive(Debug, Clone)]
pub struct Gazetteer {
    entries: Vec<(String, String, f64, f64)>, // (normalized, display, lat, lon)
}

fn normalize_place(name: &str) -> String {
    name.trim().to_lowercase()
}

impl Gazetteer {
    pub fn new(rows: Vec<(String, f64, f64)>) -> Result<Self> {
        let mut entries: Vec<(String, String, f64, f64)> = rows
            .into_iter()
            .map(|(name, lat, lon)| (normalize_place(&name), name, lat, lon))
            .collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidData(format!(
                    "duplicate gazetteer name '{}' after normalization",
                    w[0].0
                )));
            }
        }
        Ok(Self { entries })
    }

    /// CSV columns: name,lat,lon with a header row.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::malformed(i, "<record>", e.to_string()))?;
            if record.len() != 3 {
                return Err(Error::malformed(i, "<record>", "expected name,lat,lon"));
            }
            let lat: f64 = record[1]
                .trim()
                .parse()
                .map_err(|_| Error::malformed(i, "lat", "cannot parse"))?;
            let lon: f64 = record[2]
                .trim()
                .parse()
                .map_err(|_| Error::malformed(i, "lon", "cannot parse"))?;
            rows.push((record[0].trim().to_string(), lat, lon));
        }
        Self::new(rows)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, name: &str) -> Option<(&str, f64, f64)> {
        let key = normalize_place(name);
        if let Some(e) = self.entries.iter().find(|e| e.0 == key) {
            return Some((e.1.as_str(), e.2, e.3));
        }
        // Unique-prefix fallback.
        let matches: Vec<&(String, String, f64, f64)> =
            self.entries.iter().filter(|e| e.0.starts_with(&key)).collect();
        if matches.len() == 1 {
            let e = matches[0];
            return Some((e.1.as_str(), e.2, e.3));
        }
        None
    }
}

/// In-band tool response: transport always succeeds, failures are data.
#[derive(Debug, Clone, Serialize)]
pub struct ToolResponse {
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_message: Option<String>,
}

impl ToolResponse {
    pub fn ok(data: Value) -> Self {
        Self {
            status: "ok".into(),
            data: Some(data),
            error_message: None,
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Self {
            status: "error".into(),
            data: None,
            error_message: Some(message.into()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// The shared immutable state behind the tool handlers.
pub struct ToolService {
    ds: Arc<EmbeddingDataset>,
    index: Index,
    global: EigenSummary,
    dim_dict: DimensionDictionary,
    geo_dict: GeometricDictionary,
    regions: Vec<RegionSpec>,
    gazetteer: Gazetteer,
    bbox: (f64, f64, f64, f64),
    feature_cache: Mutex<HashMap<usize, GeoFeatures>>,
    /// Maximum cached rows; 0 means unbounded.
    cache_capacity: usize,
    dictionary_hash: String,
    pub k_id: usize,
    pub k_pr: usize,
    pub k_dist: usize,
    pub tangent_m: usize,
}

impl ToolService {
    pub fn new(
        ds: Arc<EmbeddingDataset>,
        index: Index,
        global: EigenSummary,
        dim_dict: DimensionDictionary,
        geo_dict: GeometricDictionary,
        regions: Vec<RegionSpec>,
        gazetteer: Gazetteer,
    ) -> Result<Self> {
        dim_dict.check_dims(ds.dim())?;
        let bbox = ds.bounding_box();
        let dictionary_hash = format!("{:016x}", geo_dict.content_hash());
        Ok(Self {
            ds,
            index,
            global,
            dim_dict,
            geo_dict,
            regions,
            gazetteer,
            bbox,
            feature_cache: Mutex::new(HashMap::new()),
            cache_capacity: 0,
            dictionary_hash,
            k_id: 20,
            k_pr: 100,
            k_dist: 10,
            tangent_m: 10,
        })
    }

    pub fn set_cache_capacity(&mut self, capacity: usize) {
        self.cache_capacity = capacity;
    }

    pub fn dataset(&self) -> &Arc<EmbeddingDataset> {
        &self.ds
    }

    pub fn dictionary_hash(&self) -> &str {
        &self.dictionary_hash
    }

    pub fn health(&self) -> Value {
        json!({
            "status": "ok",
            "n": self.ds.n(),
            "d": self.ds.dim(),
            "dictionary_hash": self.dictionary_hash,
        })
    }

    fn check_bounds(&self, lat: f64, lon: f64) -> Result<()> {
        let (lat_min, lat_max, lon_min, lon_max) = self.bbox;
        let eps = 1e-9;
        if lat < lat_min - eps || lat > lat_max + eps || lon < lon_min - eps || lon > lon_max + eps {
            return Err(Error::InvalidArgument(format!(
                "coordinates ({lat}, {lon}) outside dataset bounding box \
                 [{lat_min}, {lat_max}] x [{lon_min}, {lon_max}]"
            )));
        }
        Ok(())
    }

    /// Features for a row, computed on demand with the module defaults and
    /// cached per row.
    pub fn features_for_row(&self, row: usize) -> Result<GeoFeatures> {
        {
            let cache = self.feature_cache.lock().expect("lock");
            if let Some(f) = cache.get(&row) {
                return Ok(f.clone());
            }
        }
        let ctx = FeatureContext {
            k_id: self.k_id,
            k_pr: self.k_pr,
            k_dist: self.k_dist,
            tangent_m: self.tangent_m,
            include_self: true,
            ..FeatureContext::new(&self.ds, &self.index, &self.global)
        };
        let f = ctx.features(row)?;
        let mut cache = self.feature_cache.lock().expect("lock");
        if self.cache_capacity == 0 || cache.len() < self.cache_capacity {
            cache.insert(row, f.clone());
        }
        Ok(f)
    }

    /// Dispatch a tool call. Unknown names and argument errors come back as
    /// in-band error responses, never transport failures.
    pub fn handle(&self, tool: &str, args: &Value) -> ToolResponse {
        let result = match tool {
            "resolve_location" => self.resolve_location(args),
            "retrieve_embedding" => self.retrieve_embedding(args),
            "search_similar" => self.search_similar(args),
            "interpret_dimensions" => self.interpret_dimensions(args),
            "compare_locations" => self.compare_locations(args),
            "get_geometric_context" => self.get_geometric_context(args),
            "assess_retrieval_confidence" => self.assess_retrieval_confidence(args),
            "get_regional_profile" => self.get_regional_profile(args),
            "identify_similar_regions" => self.identify_similar_regions(args),
            other => Err(Error::InvalidArgument(format!("unknown tool '{other}'"))),
        };
        match result {
            Ok(data) => ToolResponse::ok(data),
            Err(e) => ToolResponse::error(e.to_string()),
        }
    }

    fn arg_f64(args: &Value, key: &str) -> Result<f64> {
        args.get(key)
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::InvalidArgument(format!("missing or non-numeric argument '{key}'")))
    }

    fn arg_str<'v>(args: &'v Value, key: &str) -> Result<&'v str> {
        args.get(key)
            .and_then(Value::as_str)
            .ok_or_else(|| Error::InvalidArgument(format!("missing or non-string argument '{key}'")))
    }

    fn covariate_map(&self, row: usize) -> Value {
        let mut map = serde_json::Map::new();
        for (j, name) in self.ds.covariate_names.iter().enumerate() {
            map.insert(name.clone(), json!(self.ds.covariates[[row, j]]));
        }
        Value::Object(map)
    }

    fn row_profile(&self, row: usize) -> Value {
        json!({
            "row": row,
            "lat": self.ds.lat[row],
            "lon": self.ds.lon[row],
            "year": self.ds.year[row],
            "embedding": self.ds.vector_f64(row),
            "covariates": self.covariate_map(row),
        })
    }

    fn resolve_location(&self, args: &Value) -> Result<Value> {
        let name = Self::arg_str(args, "name")?;
        match self.gazetteer.lookup(name) {
            Some((display, lat, lon)) => Ok(json!({
                "name": display,
                "lat": lat,
                "lon": lon,
            })),
            None => Err(Error::InvalidArgument(format!(
                "unknown place '{name}'"
            ))),
        }
    }

    /// Snaps to the nearest grid row (within the requested year when given)
    /// and reports the snap distance instead of interpolating.
    fn retrieve_embedding(&self, args: &Value) -> Result<Value> {
        let lat = Self::arg_f64(args, "lat")?;
        let lon = Self::arg_f64(args, "lon")?;
        self.check_bounds(lat, lon)?;
        let row = match args.get("year").and_then(Value::as_i64) {
            None => self.ds.nearest_row_geo(lat, lon).0,
            Some(year) => {
                let year = year as i32;
                let mut best: Option<(usize, f64)> = None;
                for i in 0..self.ds.n() {
                    if self.ds.year[i] != year {
                        continue;
                    }
                    let dl = self.ds.lat[i] - lat;
                    let dn = self.ds.lon[i] - lon;
                    let d2 = dl * dl + dn * dn;
                    if best.map_or(true, |(_, bd)| d2 < bd) {
                        best = Some((i, d2));
                    }
                }
                best.ok_or_else(|| {
                    Error::InvalidArgument(format!("no rows for year {year}"))
                })?
                .0
            }
        };
        let dl = self.ds.lat[row] - lat;
        let dn = self.ds.lon[row] - lon;
        let mut v = self.row_profile(row);
        v.as_object_mut()
            .expect("object")
            .insert("snap_distance_deg".into(), json!((dl * dl + dn * dn).sqrt()));
        Ok(v)
    }

    fn search_similar(&self, args: &Value) -> Result<Value> {
        let lat = Self::arg_f64(args, "lat")?;
        let lon = Self::arg_f64(args, "lon")?;
        let k = args.get("k").and_then(Value::as_u64).unwrap_or(10) as usize;
        self.check_bounds(lat, lon)?;
        let (row, snap) = self.ds.nearest_row_geo(lat, lon);
        let ns = self.index.search_row(row, k.min(self.ds.n() - 1).max(1), true)?;
        let neighbors: Vec<Value> = ns
            .indices
            .iter()
            .zip(ns.distances.iter())
            .map(|(&i, &d)| {
                json!({
                    "row": i,
                    "lat": self.ds.lat[i],
                    "lon": self.ds.lon[i],
                    "year": self.ds.year[i],
                    "distance": d,
                    "covariates": self.covariate_map(i),
                })
            })
            .collect();
        Ok(json!({
            "query_row": row,
            "snap_distance_deg": snap,
            "neighbors": neighbors,
        }))
    }

    fn interpret_dimensions(&self, args: &Value) -> Result<Value> {
        let dims = args
            .get("dims")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::InvalidArgument("missing array argument 'dims'".into()))?;
        let mut out = Vec::with_capacity(dims.len());
        for v in dims {
            let dim = v
                .as_u64()
                .ok_or_else(|| Error::InvalidArgument("dims must be non-negative integers".into()))?
                as usize;
            let e = self.dim_dict.entry(dim)?;
            out.push(json!({
                "dim": e.dim,
                "category": e.category,
                "variables": e.variables,
                "strength": e.strength,
            }));
        }
        Ok(json!({ "dimensions": out }))
    }

    fn compare_locations(&self, args: &Value) -> Result<Value> {
        let lat_a = Self::arg_f64(args, "lat_a")?;
        let lon_a = Self::arg_f64(args, "lon_a")?;
        let lat_b = Self::arg_f64(args, "lat_b")?;
        let lon_b = Self::arg_f64(args, "lon_b")?;
        self.check_bounds(lat_a, lon_a)?;
        self.check_bounds(lat_b, lon_b)?;
        let (row_a, _) = self.ds.nearest_row_geo(lat_a, lon_a);
        let (row_b, _) = self.ds.nearest_row_geo(lat_b, lon_b);
        let mut deltas = serde_json::Map::new();
        for (j, name) in self.ds.covariate_names.iter().enumerate() {
            deltas.insert(
                name.clone(),
                json!(self.ds.covariates[[row_b, j]] - self.ds.covariates[[row_a, j]]),
            );
        }
        let dist = crate::knn::squared_distance(
            self.ds.vectors.row(row_a).as_slice().expect("contiguous"),
            self.ds.vectors.row(row_b).as_slice().expect("contiguous"),
        )
        .sqrt();
        Ok(json!({
            "a": self.row_profile(row_a),
            "b": self.row_profile(row_b),
            "covariate_deltas": Value::Object(deltas),
            "embedding_distance": dist,
        }))
    }

    fn geometric_payload(&self, row: usize) -> Result<(GeoFeatures, Value)> {
        let f = self.features_for_row(row)?;
        let vec = f.vector();
        let payload = json!({
            "local_id": vec[0],
            "local_pr": vec[1],
            "mean_neighbor_distance": vec[2],
            "tangent_angle_deg": vec[3],
            "pc1_alignment": vec[4],
        });
        Ok((f, payload))
    }

    fn get_geometric_context(&self, args: &Value) -> Result<Value> {
        let lat = Self::arg_f64(args, "lat")?;
        let lon = Self::arg_f64(args, "lon")?;
        self.check_bounds(lat, lon)?;
        let (row, snap) = self.ds.nearest_row_geo(lat, lon);
        let (features, feature_payload) = self.geometric_payload(row)?;
        let category = dominant_category_of(&features, &self.dim_dict)?;
        let confidence = self.geo_dict.confidence_model.predict(&features.vector());
        let region = crate::regions::first_match(&self.regions, self.ds.lat[row], self.ds.lon[row]);
        let region_profile = region
            .and_then(|r| self.geo_dict.profile(&r.name))
            .map(|p| serde_json::to_value(p).expect("serializable"))
            .unwrap_or(Value::Null);
        Ok(json!({
            "row": row,
            "snap_distance_deg": snap,
            "features": feature_payload,
            "local_id": features.local_id,
            "local_pr": features.local_pr,
            "dominant_category": category,
            "predicted_confidence": confidence,
            "region_profile": region_profile,
        }))
    }

    fn assess_retrieval_confidence(&self, args: &Value) -> Result<Value> {
        let lat = Self::arg_f64(args, "lat")?;
        let lon = Self::arg_f64(args, "lon")?;
        self.check_bounds(lat, lon)?;
        let (row, snap) = self.ds.nearest_row_geo(lat, lon);
        let (features, feature_payload) = self.geometric_payload(row)?;
        let prediction = self.geo_dict.confidence_model.predict(&features.vector());
        Ok(json!({
            "row": row,
            "snap_distance_deg": snap,
            "predicted_coherence": prediction,
            "features": feature_payload,
            "note": "lower predicted coherence means more physically consistent retrieval",
        }))
    }

    fn get_regional_profile(&self, args: &Value) -> Result<Value> {
        let name = Self::arg_str(args, "name")?;
        match self.geo_dict.profile(name) {
            Some(p) => Ok(serde_json::to_value(p).expect("serializable")),
            None => Err(Error::InvalidArgument(format!("unknown region '{name}'"))),
        }
    }

    /// Ranks regions by Euclidean distance between the location's 5-feature
    /// vector and each region's mean feature vector. The metric is a toolkit
    /// definition and is labeled as such in the response.
    fn identify_similar_regions(&self, args: &Value) -> Result<Value> {
        let lat = Self::arg_f64(args, "lat")?;
        let lon = Self::arg_f64(args, "lon")?;
        self.check_bounds(lat, lon)?;
        let (row, _) = self.ds.nearest_row_geo(lat, lon);
        let (features, _) = self.geometric_payload(row)?;
        let fv = features.vector();
        let mut ranked: Vec<(f64, &crate::coherence::RegionalProfile)> = self
            .geo_dict
            .regions
            .iter()
            .filter(|p| p.count > 0)
            .map(|p| {
                let mut acc = 0.0;
                for j in 0..5 {
                    let d = fv[j] - p.mean_features[j];
                    acc += d * d;
                }
                (acc.sqrt(), p)
            })
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.name.cmp(&b.1.name)));
        let out: Vec<Value> = ranked
            .iter()
            .map(|(d, p)| {
                json!({
                    "region": p.name,
                    "feature_distance": d,
                    "mean_features": p.mean_features,
                })
            })
            .collect();
        Ok(json!({
            "row": row,
            "metric": "euclidean distance on the 5 geometric features (toolkit definition)",
            "ranking": out,
        }))
    }
}
