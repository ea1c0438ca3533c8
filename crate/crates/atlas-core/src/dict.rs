//! Dimension dictionary: maps each embedding dimension to an environmental
//! category and its associated variables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed set of category labels, in tie-break (lexicographic) order.
pub const CATEGORIES: [&str; 6] = [
    "hydrology",
    "other",
    "soil",
    "temperature",
    "terrain",
    "vegetation",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimensionEntry {
    pub dim: usize,
    pub category: String,
    pub variables: Vec<String>,
    pub strength: f64,
}

#[derive(Debug, Clone)]
pub struct DimensionDictionary {
    entries: Vec<DimensionEntry>, // sorted by dim, contiguous from 0
}

impl DimensionDictionary {
    pub fn new(mut entries: Vec<DimensionEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidData("dimension dictionary is empty".into()));
        }
        entries.sort_by_key(|e| e.dim);
        for (i, e) in entries.iter().enumerate() {
            if e.dim != i {
                return Err(Error::InvalidData(format!(
                    "dimension dictionary missing dim {i} (found dim {} instead)",
                    e.dim
                )));
            }
            if !CATEGORIES.contains(&e.category.as_str()) {
                return Err(Error::InvalidData(format!(
                    "dim {}: unknown category '{}' (expected one of {:?})",
                    e.dim, e.category, CATEGORIES
                )));
            }
            if !(-1.0..=1.0).contains(&e.strength) {
                return Err(Error::InvalidData(format!(
                    "dim {}: strength {} outside [-1, 1]",
                    e.dim, e.strength
                )));
            }
        }
        // Duplicate dims collide with the contiguity check above unless they
        // repeat an existing index; catch that explicitly.
        for w in entries.windows(2) {
            if w[0].dim == w[1].dim {
                return Err(Error::InvalidData(format!("duplicate entry for dim {}", w[0].dim)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let entries: Vec<DimensionEntry> =
            serde_json::from_slice(&bytes).map_err(|e| Error::Json {
                path: path.display().to_string(),
                source: e,
            })?;
        Self::new(entries)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(&self.entries).expect("serializable");
        std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[DimensionEntry] {
        &self.entries
    }

    pub fn category_of(&self, dim: usize) -> Result<&str> {
        self.entries
            .get(dim)
            .map(|e| e.category.as_str())
            .ok_or_else(|| Error::InvalidArgument(format!("dim {dim} not in dictionary")))
    }

    pub fn entry(&self, dim: usize) -> Result<&DimensionEntry> {
        self.entries
            .get(dim)
            .ok_or_else(|| Error::InvalidArgument(format!("dim {dim} not in dictionary")))
    }

    /// Ensure the dictionary covers exactly `d` dimensions.
    pub fn check_dims(&self, d: usize) -> Result<()> {
        if self.entries.len() != d {
            return Err(Error::InvalidData(format!(
                "dimension dictionary covers {} dims but dataset has {}",
                self.entries.len(),
                d
            )));
        }
        Ok(())
    }

    /// A uniform dictionary that labels every dimension `other`, for runs
    /// without a curated dictionary file.
    pub fn uniform(d: usize) -> Self {
        let entries = (0..d)
            .map(|dim| DimensionEntry {
                dim,
                category: "other".into(),
                variables: vec![],
                strength: 0.0,
            })
            .collect();
        Self { entries }
    }
}
