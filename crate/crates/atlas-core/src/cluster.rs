//! Ward hierarchical clustering of embedding dimensions on the distance
//! 1 - |corr|, with a silhouette sweep to pick the cluster count.

use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use crate::error::{Error, Result};

/// One agglomeration step: clusters `a` and `b` (scipy-style ids: leaves are
/// 0..n-1, merge t creates id n+t) joined at `height`, forming `size` leaves.
#[derive(Debug, Clone, Serialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

/// Ward linkage over a full symmetric distance matrix via the
/// Lance-Williams recurrence on squared distances. Ties break toward the
/// lexicographically smallest active pair for determinism.
pub fn ward_linkage(dist: &ArrayView2<f64>) -> Result<Vec<Merge>> {
    let n = dist.nrows();
    if dist.ncols() != n {
        return Err(Error::DimensionMismatch("distance matrix must be square".into()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 items".into()));
    }

    // Active cluster list; d2[i][j] between active clusters i and j.
    let mut d2 = Array2::<f64>::zeros((2 * n - 1, 2 * n - 1));
    for i in 0..n {
        for j in 0..n {
            d2[[i, j]] = dist[[i, j]] * dist[[i, j]];
        }
    }
    let mut size = vec![0usize; 2 * n - 1];
    for s in size.iter_mut().take(n) {
        *s = 1;
    }
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);

    for t in 0..(n - 1) {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for (ai, &ca) in active.iter().enumerate() {
            for &cb in active.iter().skip(ai + 1) {
                let d = d2[[ca, cb]];
                if d < best.2 {
                    best = (ca, cb, d);
                }
            }
        }
        let (ca, cb, dmin) = best;
        let new_id = n + t;
        let (na, nb) = (size[ca] as f64, size[cb] as f64);
        size[new_id] = size[ca] + size[cb];
        for &ck in active.iter() {
            if ck == ca || ck == cb {
                continue;
            }
            let nk = size[ck] as f64;
            let v = ((na + nk) * d2[[ck, ca]] + (nb + nk) * d2[[ck, cb]] - nk * dmin)
                / (na + nb + nk);
            d2[[ck, new_id]] = v;
            d2[[new_id, ck]] = v;
        }
        active.retain(|&c| c != ca && c != cb);
        active.push(new_id);
        merges.push(Merge {
            a: ca,
            b: cb,
            height: dmin.max(0.0).sqrt(),
            size: size[new_id],
        });
    }
    Ok(merges)
}

/// Cut the dendrogram into k clusters. Labels are relabeled contiguously by
/// first appearance in item order.
pub fn cut_to_k(merges: &[Merge], n: usize, k: usize) -> Vec<usize> {
    assert!(k >= 1 && k <= n);
    // Union-find replaying the first n-k merges.
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (t, m) in merges.iter().take(n - k).enumerate() {
        let new_id = n + t;
        let ra = find(&mut parent, m.a);
        let rb = find(&mut parent, m.b);
        parent[ra] = new_id;
        parent[rb] = new_id;
    }
    let mut label_of_root = std::collections::HashMap::new();
    let mut labels = vec![0usize; n];
    for (i, l) in labels.iter_mut().enumerate() {
        let root = find(&mut parent, i);
        let next = label_of_root.len();
        *l = *label_of_root.entry(root).or_insert(next);
    }
    labels
}

/// Mean silhouette over all items for the given labels, computed on the
/// supplied distance matrix. Singleton clusters score 0 for their item;
/// returns 0 when every item is alone or all in one cluster.
pub fn silhouette_score(dist: &ArrayView2<f64>, labels: &[usize]) -> f64 {
    let n = labels.len();
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    if k < 2 || n < 2 {
        return 0.0;
    }
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        let li = labels[i];
        if counts[li] <= 1 {
            continue; // silhouette 0 for singletons
        }
        let mut sums = vec![0.0f64; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += dist[[i, j]];
            }
        }
        let a = sums[li] / (counts[li] - 1) as f64;
        let mut b = f64::INFINITY;
        for (c, &cnt) in counts.iter().enumerate() {
            if c != li && cnt > 0 {
                b = b.min(sums[c] / cnt as f64);
            }
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterSweep {
    /// (k, labels, silhouette) per swept cluster count.
    pub per_k: Vec<(usize, Vec<usize>, f64)>,
    pub best_k: usize,
    pub best_score: f64,
}

/// Ward clustering of dimensions on 1 - |corr| with a silhouette sweep over
/// `k_range` (inclusive). The correlation matrix must be symmetric with a
/// unit diagonal.
pub fn cluster_dimensions(
    corr: &ArrayView2<f64>,
    k_range: std::ops::RangeInclusive<usize>,
) -> Result<ClusterSweep> {
    let d = corr.nrows();
    if corr.ncols() != d {
        return Err(Error::DimensionMismatch("correlation matrix must be square".into()));
    }
    for i in 0..d {
        if (corr[[i, i]] - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument(format!(
                "correlation diagonal entry {i} is {}, expected 1",
                corr[[i, i]]
            )));
        }
    }
    let (k_lo, k_hi) = (*k_range.start(), *k_range.end());
    if k_lo < 2 || k_hi > d - 1 || k_lo > k_hi {
        return Err(Error::InvalidArgument(format!(
            "k range [{k_lo}, {k_hi}] outside [2, {}]",
            d - 1
        )));
    }

    let mut dist = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            if i != j {
                dist[[i, j]] = (1.0 - corr[[i, j]].abs()).max(0.0);
            }
        }
    }
    let merges = ward_linkage(&dist.view())?;
    let mut per_k = Vec::new();
    let mut best = (k_lo, f64::NEG_INFINITY);
    for k in k_lo..=k_hi {
        let labels = cut_to_k(&merges, d, k);
        let score = silhouette_score(&dist.view(), &labels);
        if score > best.1 {
            best = (k, score);
        }
        per_k.push((k, labels, score));
    }
    Ok(ClusterSweep {
        per_k,
        best_k: best.0,
        best_score: best.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Correlation matrix with three planted blocks: |r| = 0.9 inside a
    /// block, 0 across blocks.
    fn planted_blocks(d: usize, blocks: usize) -> Array2<f64> {
        let mut corr = Array2::<f64>::eye(d);
        let per = d / blocks;
        for i in 0..d {
            for j in 0..d {
                if i != j && i / per == j / per && i / per < blocks {
                    corr[[i, j]] = 0.9;
                }
            }
        }
        corr
    }

    #[test]
    fn planted_three_blocks_recovered() {
        let corr = planted_blocks(12, 3);
        let sweep = cluster_dimensions(&corr.view(), 2..=6).unwrap();
        assert_eq!(sweep.best_k, 3, "sweep: {:?}", sweep.per_k.iter().map(|(k, _, s)| (*k, *s)).collect::<Vec<_>>());
        // Check the 3-cluster labels actually split by block.
        let labels = &sweep.per_k.iter().find(|(k, _, _)| *k == 3).unwrap().1;
        for i in 0..12 {
            for j in 0..12 {
                assert_eq!(labels[i] == labels[j], i / 4 == j / 4);
            }
        }
    }

    #[test]
    fn identity_correlations_do_not_crash() {
        let corr = Array2::<f64>::eye(8);
        let sweep = cluster_dimensions(&corr.view(), 2..=5).unwrap();
        assert!(sweep.best_score.abs() < 1e-12); // flat/degenerate
    }

    #[test]
    fn k_range_validated() {
        let corr = Array2::<f64>::eye(8);
        assert!(cluster_dimensions(&corr.view(), 1..=4).is_err());
        assert!(cluster_dimensions(&corr.view(), 2..=8).is_err());
    }

    #[test]
    fn ward_merges_nearest_pair_first() {
        // Three points on a line at 0, 1, 10.
        let mut dist = Array2::<f64>::zeros((3, 3));
        let pos = [0.0f64, 1.0, 10.0];
        for i in 0..3 {
            for j in 0..3 {
                dist[[i, j]] = (pos[i] - pos[j]).abs();
            }
        }
        let merges = ward_linkage(&dist.view()).unwrap();
        assert_eq!((merges[0].a, merges[0].b), (0, 1));
        assert!((merges[0].height - 1.0).abs() < 1e-12);
    }
}
