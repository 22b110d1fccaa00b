//! Spectral clustering of the fused affinity: symmetric normalized
//! Laplacian, eigen-embedding with row normalization, and Lloyd's k-means
//! with k-means++ seeding and restarts.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::subspace::AffinityMatrix;

/// Per-sample cluster labels in 0..K-1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
}

impl ClusterAssignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for k = {k}"
            )));
        }
        Ok(Self { labels, k })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Embed samples as the eigenvectors of the K smallest eigenvalues of
/// L_sym = I - D^(-1/2) Y D^(-1/2), rows rescaled to unit Euclidean norm.
///
/// Zero-degree nodes use the convention D^(-1/2) = 0, and their all-zero
/// embedding rows stay zero. Each eigenvector is sign-fixed so its
/// largest-magnitude entry is positive.
pub fn spectral_embedding(affinity: &AffinityMatrix, k: usize) -> Result<DMatrix<f64>> {
    let n = affinity.n();
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!(
            "cluster count {k} out of range 2..={n}"
        )));
    }

    let inv_sqrt_degree: Vec<f64> = (0..n)
        .map(|i| {
            let degree: f64 = affinity.matrix.row(i).sum();
            if degree > 0.0 {
                degree.sqrt().recip()
            } else {
                0.0
            }
        })
        .collect();
    let mut laplacian = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            laplacian[(i, j)] = -affinity.matrix[(i, j)] * inv_sqrt_degree[i] * inv_sqrt_degree[j];
        }
        laplacian[(i, i)] += 1.0;
    }
    // Enforce exact symmetry before the eigensolve.
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (laplacian[(i, j)] + laplacian[(j, i)]);
            laplacian[(i, j)] = v;
            laplacian[(j, i)] = v;
        }
    }

    let eig = nalgebra::SymmetricEigen::new(laplacian);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());

    let mut embedding = DMatrix::zeros(n, k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        let mut v = eig.eigenvectors.column(idx).clone_owned();
        let mut max_abs = 0.0;
        let mut max_idx = 0;
        for (i, &x) in v.iter().enumerate() {
            if x.abs() > max_abs {
                max_abs = x.abs();
                max_idx = i;
            }
        }
        if v[max_idx] < 0.0 {
            v.neg_mut();
        }
        embedding.set_column(col, &v);
    }
    for i in 0..n {
        let norm = embedding.row(i).norm();
        if norm > 0.0 {
            for j in 0..k {
                embedding[(i, j)] /= norm;
            }
        }
    }
    Ok(embedding)
}

/// One k-means run plus bookkeeping for restart selection.
#[derive(Debug, Clone)]
pub struct KmeansOutcome {
    pub assignment: ClusterAssignment,
    /// Sum of squared distances to assigned centroids.
    pub objective: f64,
    /// Set when the data had fewer distinct rows than requested clusters.
    pub degenerate: bool,
}

/// Lloyd's algorithm with k-means++ seeding; best of `restarts` runs by
/// objective, restart r seeded with `seed + r`. Empty clusters are repaired
/// by reassigning the farthest point. Convergence is stable assignments or
/// 300 iterations.
pub fn kmeans(points: &DMatrix<f64>, k: usize, restarts: usize, seed: u64) -> Result<KmeansOutcome> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "cluster count {k} out of range 1..={n}"
        )));
    }
    if restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be >= 1".into()));
    }

    let mut distinct = 0usize;
    {
        let mut seen: Vec<usize> = Vec::new();
        'rows: for i in 0..n {
            for &j in &seen {
                if points.row(i) == points.row(j) {
                    continue 'rows;
                }
            }
            seen.push(i);
            distinct += 1;
            if distinct >= k {
                break;
            }
        }
    }
    let degenerate = distinct < k;

    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..restarts {
        let (labels, objective) = lloyd_run(points, k, seed.wrapping_add(restart as u64));
        let better = match &best {
            None => true,
            Some((best_objective, _)) => objective < *best_objective,
        };
        if better {
            best = Some((objective, labels));
        }
    }
    let (objective, labels) = best.expect("restarts >= 1");
    Ok(KmeansOutcome {
        assignment: ClusterAssignment::new(labels, k)?,
        objective,
        degenerate,
    })
}

fn squared_distance(points: &DMatrix<f64>, i: usize, centroid: &[f64]) -> f64 {
    points
        .row(i)
        .iter()
        .zip(centroid)
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn lloyd_run(points: &DMatrix<f64>, k: usize, seed: u64) -> (Vec<usize>, f64) {
    let n = points.nrows();
    let d = points.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    centroids.push(points.row(first).iter().copied().collect());
    let mut min_dist2: Vec<f64> = (0..n)
        .map(|i| squared_distance(points, i, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = min_dist2.iter().sum();
        let chosen = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in min_dist2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            // All points coincide with a centroid already.
            rng.random_range(0..n)
        };
        centroids.push(points.row(chosen).iter().copied().collect());
        for i in 0..n {
            let dist = squared_distance(points, i, centroids.last().unwrap());
            if dist < min_dist2[i] {
                min_dist2[i] = dist;
            }
        }
    }

    let mut labels = vec![0usize; n];
    for _ in 0..300 {
        // Assignment step; ties go to the lower cluster index.
        let mut changed = false;
        for i in 0..n {
            let mut best_c = 0;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let dist = squared_distance(points, i, centroid);
                if dist < best_d {
                    best_d = dist;
                    best_c = c;
                }
            }
            if labels[i] != best_c {
                labels[i] = best_c;
                changed = true;
            }
        }

        // Empty-cluster repair: move in the point farthest from its centroid.
        loop {
            let mut counts = vec![0usize; k];
            for &l in &labels {
                counts[l] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let mut far_i = usize::MAX;
            let mut far_d = -1.0;
            for i in 0..n {
                if counts[labels[i]] <= 1 {
                    continue;
                }
                let dist = squared_distance(points, i, &centroids[labels[i]]);
                if dist > far_d {
                    far_d = dist;
                    far_i = i;
                }
            }
            if far_i == usize::MAX {
                break;
            }
            labels[far_i] = empty;
            centroids[empty] = points.row(far_i).iter().copied().collect();
            changed = true;
        }

        // Update step.
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for j in 0..d {
                sums[labels[i]][j] += points[(i, j)];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..d {
                    centroids[c][j] = sums[c][j] / counts[c] as f64;
                }
            }
        }

        if !changed {
            break;
        }
    }

    let objective = (0..n)
        .map(|i| squared_distance(points, i, &centroids[labels[i]]))
        .sum();
    (labels, objective)
}

/// Spectral embedding followed by k-means.
pub fn spectral_cluster(
    affinity: &AffinityMatrix,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<ClusterAssignment> {
    let embedding = spectral_embedding(affinity, k)?;
    Ok(kmeans(&embedding, k, restarts, seed)?.assignment)
}
