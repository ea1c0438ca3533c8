//! Exact k-nearest-neighbor search over the embedding matrix.
//!
//! Distances are Euclidean, computed from f32 inputs with f64 accumulation
//! over a single fixed-order loop, so every code path produces bit-identical
//! results. The k smallest (squared distance, row index) pairs form a total
//! order, which makes the selection independent of scan order and thread
//! count; ties in distance break toward the lower row index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::data::EmbeddingDataset;
use crate::error::{Error, Result};

/// Sorted neighbors of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub k: usize,
    /// Row indices, ordered by ascending (distance, index).
    pub indices: Vec<usize>,
    /// Euclidean distances matching `indices`, non-decreasing.
    pub distances: Vec<f64>,
}

#[derive(Copy, Clone, PartialEq)]
struct Candidate {
    d2: f64,
    idx: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Immutable exact index: a blocked scan over the dataset rows.
#[derive(Clone)]
pub struct Index {
    ds: Arc<EmbeddingDataset>,
}

impl Index {
    pub fn build(ds: Arc<EmbeddingDataset>) -> Result<Self> {
        if ds.n() == 0 {
            return Err(Error::InvalidData("cannot index an empty dataset".into()));
        }
        Ok(Self { ds })
    }

    pub fn dataset(&self) -> &Arc<EmbeddingDataset> {
        &self.ds
    }

    pub fn n(&self) -> usize {
        self.ds.n()
    }

    fn check_k(&self, k: usize, excluded: usize) -> Result<()> {
        let max_k = self.ds.n() - excluded;
        if k == 0 || k > max_k {
            return Err(Error::InvalidArgument(format!(
                "k = {k} out of range [1, {max_k}]"
            )));
        }
        Ok(())
    }

    /// Search with an arbitrary query vector; `exclude` removes one row
    /// (used when the query is itself a dataset row).
    pub fn search_vector(&self, query: &[f32], k: usize, exclude: Option<usize>) -> Result<NeighborSet> {
        if query.len() != self.ds.dim() {
            return Err(Error::DimensionMismatch(format!(
                "query has {} dims, dataset has {}",
                query.len(),
                self.ds.dim()
            )));
        }
        if query.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite query vector".into()));
        }
        self.check_k(k, usize::from(exclude.is_some()))?;

        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        let data = &self.ds.vectors;
        for row in 0..self.ds.n() {
            if exclude == Some(row) {
                continue;
            }
            let d2 = squared_distance(query, data.row(row).as_slice().expect("contiguous row"));
            let cand = Candidate { d2, idx: row };
            if heap.len() < k {
                heap.push(cand);
            } else if cand < *heap.peek().expect("non-empty heap") {
                heap.pop();
                heap.push(cand);
            }
        }
        let mut sorted = heap.into_vec();
        sorted.sort();
        Ok(NeighborSet {
            k,
            indices: sorted.iter().map(|c| c.idx).collect(),
            distances: sorted.iter().map(|c| c.d2.sqrt()).collect(),
        })
    }

    /// Search using a dataset row as the query.
    pub fn search_row(&self, row: usize, k: usize, exclude_self: bool) -> Result<NeighborSet> {
        if row >= self.ds.n() {
            return Err(Error::InvalidArgument(format!("query row {row} out of range")));
        }
        let query: Vec<f32> = self.ds.vectors.row(row).to_vec();
        self.search_vector(&query, k, exclude_self.then_some(row))
    }

    /// Batch row queries, parallelized over queries; output order matches input.
    pub fn search_rows(&self, rows: &[usize], k: usize, exclude_self: bool) -> Result<Vec<NeighborSet>> {
        rows.par_iter()
            .map(|&r| self.search_row(r, k, exclude_self))
            .collect()
    }
}

/// f32 inputs, f64 accumulation, fixed dimension order.
#[inline]
pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for i in 0..a.len() {
        let d = a[i] as f64 - b[i] as f64;
        acc += d * d;
    }
    acc
}
