//! Seeded synthetic data with known ground truth: union-of-subspaces
//! feature matrices and blocky stripe cubes. These are the verifiable
//! oracle layer for the end-to-end tests.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hsi_io::{HsiCube, LabelMap};
use crate::preprocess::FeatureMatrix;

/// Parameters of a union-of-subspaces instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub clusters: usize,
    pub ambient_dim: usize,
    pub subspace_dim: usize,
    pub per_cluster: usize,
    pub noise: f64,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.clusters == 0 || self.per_cluster == 0 {
            return Err(Error::InvalidArgument(
                "need at least one cluster and one sample per cluster".into(),
            ));
        }
        if self.subspace_dim == 0 || self.subspace_dim >= self.ambient_dim {
            return Err(Error::InvalidArgument(format!(
                "subspace dimension {} must lie in 1..{}",
                self.subspace_dim, self.ambient_dim
            )));
        }
        if self.noise < 0.0 {
            return Err(Error::InvalidArgument("noise must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Draw `per_cluster` samples from each of `clusters` random linear
/// subspaces: orthonormal bases from QR of seeded Gaussians, unit-norm
/// coefficient vectors, plus isotropic Gaussian noise.
pub fn gen_union_of_subspaces(spec: &SynthSpec) -> Result<(FeatureMatrix, Vec<usize>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.clusters * spec.per_cluster;
    let mut values = DMatrix::zeros(n, spec.ambient_dim);
    let mut truth = Vec::with_capacity(n);

    for cluster in 0..spec.clusters {
        let gaussian: DMatrix<f64> = DMatrix::from_fn(spec.ambient_dim, spec.subspace_dim, |_, _| {
            StandardNormal.sample(&mut rng)
        });
        let basis = gaussian.qr().q();
        for s in 0..spec.per_cluster {
            let mut coeff: nalgebra::DVector<f64> =
                nalgebra::DVector::from_fn(spec.subspace_dim, |_, _| {
                    StandardNormal.sample(&mut rng)
                });
            let norm = coeff.norm();
            if norm > 0.0 {
                coeff /= norm;
            }
            let mut sample: nalgebra::DVector<f64> = &basis * coeff;
            for v in sample.iter_mut() {
                let noise: f64 = StandardNormal.sample(&mut rng);
                *v += spec.noise * noise;
            }
            let row = cluster * spec.per_cluster + s;
            for j in 0..spec.ambient_dim {
                values[(row, j)] = sample[j];
            }
            truth.push(cluster);
        }
    }
    Ok((FeatureMatrix::new(values)?, truth))
}

/// Generate a stripes cube: `k` horizontal regions, each with a smooth
/// random-walk spectral signature plus i.i.d. noise, labels 1..=k, and a
/// seeded 5% of pixels relabeled background 0.
///
/// Values are quantized to f32 so the cube survives the on-disk format
/// bit-exactly.
pub fn gen_synthetic_hsi(
    rows: usize,
    cols: usize,
    k: usize,
    bands: usize,
    sigma: f64,
    seed: u64,
) -> Result<(HsiCube, LabelMap)> {
    if rows == 0 || cols == 0 || bands == 0 {
        return Err(Error::InvalidArgument(format!(
            "invalid shape {rows}x{cols}x{bands}"
        )));
    }
    if k == 0 || k > rows {
        return Err(Error::InvalidArgument(format!(
            "cluster count {k} must lie in 1..={rows} for stripe geometry"
        )));
    }
    if sigma < 0.0 {
        return Err(Error::InvalidArgument("noise must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Per-class signatures: random walks over bands from spread-out starts.
    let mut signatures = vec![vec![0.0f64; bands]; k];
    for (class, signature) in signatures.iter_mut().enumerate() {
        let mut level = class as f64 + rng.random::<f64>();
        for value in signature.iter_mut() {
            let step: f64 = StandardNormal.sample(&mut rng);
            level += 0.35 * step;
            *value = level;
        }
    }

    let stripe_height = rows.div_ceil(k);
    let mut data = Vec::with_capacity(rows * cols * bands);
    let mut labels = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let class = (r / stripe_height).min(k - 1);
        for _c in 0..cols {
            labels.push(class as u32 + 1);
            for b in 0..bands {
                let noise: f64 = StandardNormal.sample(&mut rng);
                let v = signatures[class][b] + sigma * noise;
                data.push(f64::from(v as f32));
            }
        }
    }

    // Knock out a seeded 5% of pixels as background.
    let n_pixels = rows * cols;
    let n_background = n_pixels / 20;
    let mut ids: Vec<usize> = (0..n_pixels).collect();
    for i in (1..n_pixels).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    for &pixel in ids.iter().take(n_background) {
        labels[pixel] = 0;
    }

    Ok((
        HsiCube::new(rows, cols, bands, data)?,
        LabelMap::new(rows, cols, labels)?,
    ))
}
