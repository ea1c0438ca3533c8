//! Geometry characterization for dense embedding spaces.
//!
//! The crate is organized around a pipeline: load or synthesize an
//! [`data::EmbeddingDataset`], build an exact [`knn::Index`], then run the
//! analyses: global spectra ([`spectral`]), intrinsic dimensionality
//! ([`intrinsic`]), local tangent structure ([`local_geom`]), concept
//! directions ([`probes`]), compositional experiments ([`composition`]),
//! and retrieval coherence with its confidence model ([`coherence`]).
//! [`tools`] exposes the resulting artifacts as a deterministic tool
//! service for agent frameworks.

pub mod coherence;
pub mod composition;
pub mod data;
pub mod dict;
pub mod error;
pub mod intrinsic;
pub mod knn;
pub mod linalg;
pub mod local_geom;
pub mod probes;
pub mod regions;
pub mod spectral;
pub mod stats;
pub mod synth;
pub mod tools;

mod cluster;
pub use cluster::{cluster_dimensions, silhouette_score, ward_linkage, ClusterSweep, Merge};

pub use data::EmbeddingDataset;
pub use error::{Error, Result};
pub use knn::{Index, NeighborSet};
pub use spectral::EigenSummary;
