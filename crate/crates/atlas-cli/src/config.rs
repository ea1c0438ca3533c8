//! Run configuration: one TOML file with per-subcommand parameter blocks.
//! Unknown keys are rejected; every key is individually optional and falls
//! back to its documented default. The `--out`, `--seed`, and `--threads`
//! flags override file values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

fn d_format() -> String {
    "binary".into()
}
fn d_out() -> PathBuf {
    PathBuf::from("out")
}
fn d_seed() -> u64 {
    42
}
fn d_true() -> bool {
    true
}
fn d_k100() -> usize {
    100
}
fn d_tangent_m() -> usize {
    10
}
fn d_alpha() -> f64 {
    1.0
}
fn d_elevation() -> String {
    "elevation".into()
}
fn d_band_edges() -> Vec<f64> {
    atlas_core::data::default_elevation_edges()
}
fn d_probes_10k() -> usize {
    10_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset location: a binary dataset directory or a CSV file.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default = "d_format")]
    pub dataset_format: String,
    #[serde(default = "d_out")]
    pub out_dir: PathBuf,
    #[serde(default = "d_seed")]
    pub seed: u64,
    /// 0 means all available cores.
    #[serde(default)]
    pub threads: usize,

    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub ingest: IngestConfig,
    #[serde(default)]
    pub global_geometry: GlobalGeometryConfig,
    #[serde(default)]
    pub intrinsic_dim: IntrinsicDimConfig,
    #[serde(default)]
    pub local_geometry: LocalGeometryConfig,
    #[serde(default)]
    pub multiscale: MultiscaleConfig,
    #[serde(default)]
    pub probes: ProbesConfig,
    #[serde(default)]
    pub shift: ShiftConfig,
    #[serde(default)]
    pub transfer: TransferConfig,
    #[serde(default)]
    pub analogy: AnalogyConfig,
    #[serde(default)]
    pub coherence: CoherenceConfig,
    #[serde(default)]
    pub confidence: ConfidenceConfig,
    #[serde(default)]
    pub dictionary: DictionaryConfig,
    #[serde(default)]
    pub serve: ServeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config is valid")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))?;
        Ok(config)
    }

    /// Sub-seed for one subcommand: the run seed mixed with a stable hash of
    /// the subcommand name, so partial reruns stay reproducible.
    pub fn sub_seed(&self, subcommand: &str) -> u64 {
        self.seed ^ atlas_core::stats::fnv1a64(subcommand.as_bytes())
    }
}

fn d_synth_kind() -> String {
    "flat_subspace".into()
}
fn d_synth_dim() -> usize {
    10
}
fn d_ambient() -> usize {
    64
}
fn d_synth_n() -> usize {
    10_000
}
fn d_patches() -> Vec<(usize, f64)> {
    vec![(2, 0.5), (8, 0.5)]
}
fn d_patch_grid() -> usize {
    8
}
fn d_offset_scale() -> f64 {
    6.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub kind: String,
    pub intrinsic_dim: usize,
    pub ambient_dim: usize,
    pub n_samples: usize,
    pub noise_std: f64,
    /// Plant the first p frame columns as covariates p0..p{p-1}.
    pub planted: usize,
    /// Patchwork patch types as (intrinsic dim, weight) pairs.
    pub patches: Vec<(usize, f64)>,
    pub patch_grid: usize,
    pub patch_offset_scale: f64,
    /// Output directory for the generated dataset (defaults to out_dir/dataset).
    pub dataset_out: Option<PathBuf>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            kind: d_synth_kind(),
            intrinsic_dim: d_synth_dim(),
            ambient_dim: d_ambient(),
            n_samples: d_synth_n(),
            noise_std: 0.0,
            planted: 0,
            patches: d_patches(),
            patch_grid: d_patch_grid(),
            patch_offset_scale: d_offset_scale(),
            dataset_out: None,
        }
    }
}

fn d_csv() -> String {
    "csv".into()
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default = "d_csv")]
    pub format: String,
    #[serde(default)]
    pub dataset_out: Option<PathBuf>,
}

fn d_top_p() -> usize {
    5
}
fn d_k_min() -> usize {
    2
}
fn d_k_max() -> usize {
    30
}
fn d_cluster_on() -> String {
    "spearman".into()
}
fn d_pca_components() -> usize {
    3
}
fn d_pair_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlobalGeometryConfig {
    /// Balanced per-year subsample size; 0 uses every row.
    pub subsample_per_year: usize,
    pub top_p_angles: usize,
    pub cluster_k_min: usize,
    pub cluster_k_max: usize,
    /// "spearman" or "pearson"
    pub cluster_on: String,
    pub pca_components: usize,
    pub pair_threshold: f64,
}

impl Default for GlobalGeometryConfig {
    fn default() -> Self {
        Self {
            subsample_per_year: 0,
            top_p_angles: d_top_p(),
            cluster_k_min: d_k_min(),
            cluster_k_max: d_k_max(),
            cluster_on: d_cluster_on(),
            pca_components: d_pca_components(),
            pair_threshold: d_pair_threshold(),
        }
    }
}

fn d_id_k_list() -> Vec<usize> {
    vec![5, 10, 20, 30, 50, 75, 100]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntrinsicDimConfig {
    pub k_list: Vec<usize>,
    pub probes: usize,
    /// Banded summaries are emitted when this covariate exists; "" disables.
    pub stratify_covariate: String,
    pub band_edges: Vec<f64>,
}

impl Default for IntrinsicDimConfig {
    fn default() -> Self {
        Self {
            k_list: d_id_k_list(),
            probes: d_probes_10k(),
            stratify_covariate: d_elevation(),
            band_edges: d_band_edges(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalGeometryConfig {
    pub k: usize,
    pub probes: usize,
    pub tangent_m: usize,
    pub include_self: bool,
    /// Probe selection stratifies by this covariate's bands when it exists.
    pub stratify_covariate: String,
    pub band_edges: Vec<f64>,
    pub dimension_dictionary: Option<PathBuf>,
}

impl Default for LocalGeometryConfig {
    fn default() -> Self {
        Self {
            k: d_k100(),
            probes: d_probes_10k(),
            tangent_m: d_tangent_m(),
            include_self: true,
            stratify_covariate: d_elevation(),
            band_edges: d_band_edges(),
            dimension_dictionary: None,
        }
    }
}

fn d_ms_k_list() -> Vec<usize> {
    vec![20, 100, 500, 2000]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultiscaleConfig {
    pub k_list: Vec<usize>,
    pub probes: usize,
    pub tangent_m: usize,
    pub include_self: bool,
    pub dimension_dictionary: Option<PathBuf>,
}

impl Default for MultiscaleConfig {
    fn default() -> Self {
        Self {
            k_list: d_ms_k_list(),
            probes: d_probes_10k(),
            tangent_m: d_tangent_m(),
            include_self: true,
            dimension_dictionary: None,
        }
    }
}

fn d_local_probes() -> usize {
    500
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbesConfig {
    /// Properties to probe; empty means every non-constant covariate.
    pub properties: Vec<String>,
    pub alpha: f64,
    pub local_probes: usize,
    pub k: usize,
    pub regions: Option<PathBuf>,
}

impl Default for ProbesConfig {
    fn default() -> Self {
        Self {
            properties: vec![],
            alpha: d_alpha(),
            local_probes: d_local_probes(),
            k: d_k100(),
            regions: None,
        }
    }
}

fn d_shift_methods() -> Vec<String> {
    vec![
        "global_pc".into(),
        "local_pc".into(),
        "probe_global".into(),
        "probe_local".into(),
        "random".into(),
        "geographic_baseline".into(),
    ]
}
fn d_magnitudes() -> Vec<f64> {
    vec![0.5, 1.0, 1.5, 2.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShiftConfig {
    pub sources: usize,
    pub properties: Vec<String>,
    pub methods: Vec<String>,
    pub magnitudes: Vec<f64>,
    pub k: usize,
    pub regions: Option<PathBuf>,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        Self {
            sources: d_local_probes(),
            properties: vec![],
            methods: d_shift_methods(),
            magnitudes: d_magnitudes(),
            k: d_k100(),
            regions: None,
        }
    }
}

fn d_pairs() -> usize {
    200
}
fn d_components() -> usize {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferConfig {
    pub pairs: usize,
    pub properties: Vec<String>,
    pub k: usize,
    pub components: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            pairs: d_pairs(),
            properties: vec![],
            k: d_k100(),
            components: d_components(),
        }
    }
}

fn d_analogy_mode() -> String {
    "both".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalogyConfig {
    pub triples: usize,
    pub properties: Vec<String>,
    /// "naive", "tangent_projected", or "both"
    pub mode: String,
    /// Apply the offset A - B as printed rather than B - A as intended.
    pub paper_sign: bool,
    pub k: usize,
    pub tangent_m: usize,
}

impl Default for AnalogyConfig {
    fn default() -> Self {
        Self {
            triples: d_pairs(),
            properties: vec![],
            mode: d_analogy_mode(),
            paper_sign: false,
            k: d_k100(),
            tangent_m: d_tangent_m(),
        }
    }
}

fn d_coherence_k() -> usize {
    10
}
fn d_spread() -> String {
    "zscore_std".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoherenceConfig {
    pub k: usize,
    pub rows: usize,
    /// "zscore_std" or "raw_cv"
    pub spread: String,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        Self {
            k: d_coherence_k(),
            rows: d_probes_10k(),
            spread: d_spread(),
        }
    }
}

fn d_conf_rows() -> usize {
    2_000
}
fn d_holdout() -> f64 {
    0.2
}
fn d_k_id() -> usize {
    20
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfidenceConfig {
    pub rows: usize,
    pub holdout: f64,
    pub k_id: usize,
    pub k_pr: usize,
    pub k_dist: usize,
    pub tangent_m: usize,
}

impl Default for ConfidenceConfig {
    fn default() -> Self {
        Self {
            rows: d_conf_rows(),
            holdout: d_holdout(),
            k_id: d_k_id(),
            k_pr: d_k100(),
            k_dist: d_coherence_k(),
            tangent_m: d_tangent_m(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DictionaryConfig {
    pub regions: Option<PathBuf>,
    pub rows: usize,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        Self {
            regions: None,
            rows: d_conf_rows(),
        }
    }
}

fn d_port() -> u16 {
    8080
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServeConfig {
    pub port: u16,
    pub dictionary: Option<PathBuf>,
    pub dimension_dictionary: Option<PathBuf>,
    pub regions: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    /// Feature-cache capacity in rows; 0 = unbounded.
    pub cache_size: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            port: d_port(),
            dictionary: None,
            dimension_dictionary: None,
            regions: None,
            gazetteer: None,
            cache_size: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gets_defaults() {
        let c: RunConfig = toml::from_str("").unwrap();
        assert_eq!(c.seed, 42);
        assert_eq!(c.intrinsic_dim.k_list, vec![5, 10, 20, 30, 50, 75, 100]);
        assert_eq!(c.multiscale.k_list, vec![20, 100, 500, 2000]);
    }

    #[test]
    fn partial_blocks_fill_remaining_defaults() {
        let c: RunConfig = toml::from_str("[analogy]\ntriples = 10\n[shift]\nk = 60").unwrap();
        assert_eq!(c.analogy.triples, 10);
        assert_eq!(c.analogy.mode, "both");
        assert_eq!(c.shift.k, 60);
        assert_eq!(c.shift.magnitudes, vec![0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = toml::from_str::<RunConfig>("definitely_not_a_key = 1").unwrap_err();
        assert!(err.to_string().contains("definitely_not_a_key"));
        let err = toml::from_str::<RunConfig>("[shift]\nbogus = 2").unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn sub_seeds_differ_per_subcommand() {
        let c = RunConfig::default();
        assert_ne!(c.sub_seed("shift"), c.sub_seed("coherence"));
    }

    #[test]
    fn infinity_band_edge_parses() {
        let c: RunConfig = toml::from_str("[intrinsic_dim]\nband_edges=[0.0, inf]").unwrap();
        assert!(c.intrinsic_dim.band_edges[1].is_infinite());
        assert_eq!(c.intrinsic_dim.probes, 10_000);
    }
}
