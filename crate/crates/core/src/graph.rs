//! Per-view KNN graphs, the symmetric propagation normalization
//! D^(-1/2) (A + I) D^(-1/2), and linear graph convolution of features.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::preprocess::FeatureMatrix;

/// Unweighted symmetric adjacency with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    pub matrix: DMatrix<f64>,
}

impl Adjacency {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }
}

/// The symmetric GCN propagation matrix for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    pub matrix: DMatrix<f64>,
}

impl NormalizedAdjacency {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Identity propagation (no graph smoothing); useful for ablations.
    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n, n),
        }
    }
}

/// Connect every sample to its `k` nearest neighbors by Euclidean distance,
/// then OR-symmetrize: the edge (i, j) is present iff either endpoint ranks
/// the other among its k nearest. Ties break toward the lower index; a
/// sample is never its own neighbor.
pub fn knn_adjacency(features: &FeatureMatrix, k: usize) -> Result<Adjacency> {
    let n = features.n_samples();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples for a KNN graph, got {n}"
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "neighbor count {k} out of range 1..{n}"
        )));
    }

    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| features.values.row(i).iter().copied().collect())
        .collect();

    let neighbor_lists: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut dist: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d2 = rows[i]
                        .iter()
                        .zip(&rows[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>();
                    (d2, j)
                })
                .collect();
            dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            dist.truncate(k);
            dist.into_iter().map(|(_, j)| j).collect()
        })
        .collect();

    let mut matrix = DMatrix::zeros(n, n);
    for (i, neighbors) in neighbor_lists.iter().enumerate() {
        for &j in neighbors {
            matrix[(i, j)] = 1.0;
            matrix[(j, i)] = 1.0;
        }
    }
    Ok(Adjacency { matrix })
}

/// D^(-1/2) (A + I) D^(-1/2) with D the degree matrix of A + I. Self-loops
/// make every degree positive.
pub fn normalize_adjacency(adjacency: &Adjacency) -> NormalizedAdjacency {
    let n = adjacency.n();
    let mut with_loops = adjacency.matrix.clone();
    for i in 0..n {
        with_loops[(i, i)] += 1.0;
    }
    let inv_sqrt_degree: Vec<f64> = (0..n)
        .map(|i| with_loops.row(i).sum().sqrt().recip())
        .collect();
    for i in 0..n {
        for j in 0..n {
            with_loops[(i, j)] *= inv_sqrt_degree[i] * inv_sqrt_degree[j];
        }
    }
    NormalizedAdjacency { matrix: with_loops }
}

/// Apply `hops` rounds of propagation: returns A^m F in the row-sample
/// convention.
pub fn graph_convolve(
    features: &FeatureMatrix,
    normalized: &NormalizedAdjacency,
    hops: usize,
) -> Result<FeatureMatrix> {
    if hops == 0 {
        return Err(Error::InvalidArgument("hops must be >= 1".into()));
    }
    if normalized.n() != features.n_samples() {
        return Err(Error::Shape(format!(
            "adjacency is {}x{0} but features have {} samples",
            normalized.n(),
            features.n_samples()
        )));
    }
    let mut out = features.values.clone();
    for _ in 0..hops {
        out = &normalized.matrix * out;
    }
    FeatureMatrix::new(out)
}
