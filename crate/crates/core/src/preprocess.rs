//! Band reduction and the two feature views: spatial-spectral patches from a
//! sliding window, and morphological-profile texture features.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hsi_io::{HsiCube, SampleIndex};

/// n samples x d features for one view, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: DMatrix<f64>,
}

impl FeatureMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix".into()));
        }
        Ok(Self { values })
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }
}

/// Principal-component model fitted on per-pixel spectra.
#[derive(Debug, Clone)]
pub struct PcaModel {
    /// Per-band mean over all pixels.
    pub mean: DVector<f64>,
    /// bands x d matrix of orthonormal columns, leading components first.
    pub components: DMatrix<f64>,
    /// Covariance eigenvalues of the kept components, nonincreasing.
    pub eigenvalues: Vec<f64>,
    /// Sum of all covariance eigenvalues (trace of the covariance).
    pub total_variance: f64,
}

impl PcaModel {
    /// Fraction of total variance captured by the kept components.
    pub fn explained_variance_ratio(&self) -> f64 {
        if self.total_variance <= 0.0 {
            1.0
        } else {
            self.eigenvalues.iter().sum::<f64>() / self.total_variance
        }
    }
}

/// Center per-pixel spectra and project onto the top-`d` covariance
/// eigenvectors. All pixels are observations, labeled or not.
///
/// Sign convention: each component's largest-magnitude entry is positive.
/// The covariance divisor is `n_pixels - 1`.
pub fn pca_fit_transform(cube: &HsiCube, d: usize) -> Result<(HsiCube, PcaModel)> {
    let bands = cube.bands;
    let n = cube.n_pixels();
    if d == 0 || d > bands {
        return Err(Error::InvalidArgument(format!(
            "pca dimension {d} out of range 1..={bands}"
        )));
    }

    let mut mean = DVector::zeros(bands);
    for p in 0..n {
        for b in 0..bands {
            mean[b] += cube.data[p * bands + b];
        }
    }
    mean /= n as f64;

    // Accumulate the covariance in pixel chunks so only a chunk of centered
    // spectra is ever materialized.
    let chunk_rows = 4096.min(n);
    let mut cov = DMatrix::zeros(bands, bands);
    let mut chunk = DMatrix::zeros(chunk_rows, bands);
    let mut start = 0;
    while start < n {
        let len = chunk_rows.min(n - start);
        for i in 0..len {
            for b in 0..bands {
                chunk[(i, b)] = cube.data[(start + i) * bands + b] - mean[b];
            }
        }
        let view = chunk.view((0, 0), (len, bands));
        cov += view.transpose() * view;
        start += len;
    }
    let divisor = if n > 1 { (n - 1) as f64 } else { 1.0 };
    cov /= divisor;

    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..bands).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let total_variance = eig.eigenvalues.iter().map(|&v| v.max(0.0)).sum();
    let mut components = DMatrix::zeros(bands, d);
    let mut eigenvalues = Vec::with_capacity(d);
    for (j, &idx) in order.iter().take(d).enumerate() {
        let mut col = eig.eigenvectors.column(idx).clone_owned();
        let mut max_abs = 0.0;
        let mut max_idx = 0;
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > max_abs {
                max_abs = v.abs();
                max_idx = i;
            }
        }
        if col[max_idx] < 0.0 {
            col.neg_mut();
        }
        components.set_column(j, &col);
        eigenvalues.push(eig.eigenvalues[idx].max(0.0));
    }

    // Project in the same chunked fashion.
    let mut projected = vec![0.0f64; n * d];
    let mut start = 0;
    while start < n {
        let len = chunk_rows.min(n - start);
        for i in 0..len {
            for b in 0..bands {
                chunk[(i, b)] = cube.data[(start + i) * bands + b] - mean[b];
            }
        }
        let out = chunk.view((0, 0), (len, bands)) * &components;
        for i in 0..len {
            for j in 0..d {
                projected[(start + i) * d + j] = out[(i, j)];
            }
        }
        start += len;
    }

    let reduced = HsiCube::new(cube.rows, cube.cols, d, projected)?;
    Ok((
        reduced,
        PcaModel {
            mean,
            components,
            eigenvalues,
            total_variance,
        },
    ))
}

/// Mirror an out-of-range index back into `0..n` without repeating the edge
/// sample (reflect-101). Valid for offsets up to `n - 1`.
#[inline]
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    debug_assert!((0..n).contains(&i));
    i as usize
}

/// For each sample pixel, flatten its s x s x d neighborhood row-major
/// (row, col, band) with mirror padding at the image borders.
pub fn extract_patches(cube: &HsiCube, s: usize, index: &SampleIndex) -> Result<FeatureMatrix> {
    if s % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "window size must be odd, got {s}"
        )));
    }
    if s > 2 * cube.rows.min(cube.cols) {
        return Err(Error::InvalidArgument(format!(
            "window size {s} exceeds twice the smaller image side of {}x{}",
            cube.rows, cube.cols
        )));
    }
    let half = (s / 2) as isize;
    let d = cube.bands;
    let mut values = DMatrix::zeros(index.len(), s * s * d);
    for (row_idx, &pixel) in index.pixel_ids.iter().enumerate() {
        let r = (pixel / cube.cols) as isize;
        let c = (pixel % cube.cols) as isize;
        let mut col_idx = 0;
        for dr in -half..=half {
            let rr = mirror(r + dr, cube.rows);
            for dc in -half..=half {
                let cc = mirror(c + dc, cube.cols);
                let spectrum = cube.spectrum(rr, cc);
                for b in 0..d {
                    values[(row_idx, col_idx + b)] = spectrum[b];
                }
                col_idx += d;
            }
        }
    }
    FeatureMatrix::new(values)
}

/// One grayscale channel of the reduced cube, rows x cols.
pub type Channel = DMatrix<f64>;

/// Disk structuring element offsets {(dr, dc): dr^2 + dc^2 <= radius^2}.
fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut offsets = Vec::new();
    for dr in -r..=r {
        for dc in -r..=r {
            if dr * dr + dc * dc <= r * r {
                offsets.push((dr, dc));
            }
        }
    }
    offsets
}

/// Flat grayscale erosion by a disk; out-of-image samples are ignored.
fn erode_disk(image: &Channel, radius: usize) -> Channel {
    let (rows, cols) = image.shape();
    let offsets = disk_offsets(radius);
    let mut out = Channel::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut min = f64::INFINITY;
            for &(dr, dc) in &offsets {
                let rr = r as isize + dr;
                let cc = c as isize + dc;
                if rr >= 0 && cc >= 0 && (rr as usize) < rows && (cc as usize) < cols {
                    min = min.min(image[(rr as usize, cc as usize)]);
                }
            }
            out[(r, c)] = min;
        }
    }
    out
}

/// Reconstruction by dilation of `marker` under `mask` with 4-connectivity,
/// iterated to stability via alternating raster sweeps.
fn reconstruct_by_dilation(marker: &Channel, mask: &Channel) -> Channel {
    let (rows, cols) = mask.shape();
    let mut out = marker.clone();
    loop {
        let mut changed = false;
        // Forward sweep: north and west neighbors are already updated.
        for r in 0..rows {
            for c in 0..cols {
                let mut v = out[(r, c)];
                if r > 0 {
                    v = v.max(out[(r - 1, c)]);
                }
                if c > 0 {
                    v = v.max(out[(r, c - 1)]);
                }
                v = v.min(mask[(r, c)]);
                if v > out[(r, c)] {
                    out[(r, c)] = v;
                    changed = true;
                }
            }
        }
        // Backward sweep: south and east neighbors.
        for r in (0..rows).rev() {
            for c in (0..cols).rev() {
                let mut v = out[(r, c)];
                if r + 1 < rows {
                    v = v.max(out[(r + 1, c)]);
                }
                if c + 1 < cols {
                    v = v.max(out[(r, c + 1)]);
                }
                v = v.min(mask[(r, c)]);
                if v > out[(r, c)] {
                    out[(r, c)] = v;
                    changed = true;
                }
            }
        }
        if !changed {
            return out;
        }
    }
}

/// Opening by reconstruction: erode with the disk of `radius`, then dilate
/// geodesically under the original image until stable.
pub fn morph_reconstruct_open(image: &Channel, radius: usize) -> Result<Channel> {
    if radius == 0 {
        return Err(Error::InvalidArgument("radius must be >= 1".into()));
    }
    let marker = erode_disk(image, radius);
    Ok(reconstruct_by_dilation(&marker, image))
}

/// Closing by reconstruction, the dual of the opening under image negation.
pub fn morph_reconstruct_close(image: &Channel, radius: usize) -> Result<Channel> {
    let negated = image.map(|v| -v);
    Ok(morph_reconstruct_open(&negated, radius)?.map(|v| -v))
}

/// Per principal component, the profile
/// `[close_r_m, ..., close_r_1, original, open_r_1, ..., open_r_m]`
/// giving `d * (2m + 1)` features per sample. Each channel is min-max
/// scaled to [0, 1] before morphology.
pub fn emp_features(cube: &HsiCube, radii: &[usize], index: &SampleIndex) -> Result<FeatureMatrix> {
    if radii.is_empty() {
        return Err(Error::InvalidArgument("radii list must be nonempty".into()));
    }
    if radii.windows(2).any(|w| w[0] >= w[1]) || radii[0] == 0 {
        return Err(Error::InvalidArgument(
            "radii must be strictly increasing and >= 1".into(),
        ));
    }
    let m = radii.len();
    let profile_len = 2 * m + 1;
    let mut values = DMatrix::zeros(index.len(), cube.bands * profile_len);

    for band in 0..cube.bands {
        let mut channel = Channel::zeros(cube.rows, cube.cols);
        for r in 0..cube.rows {
            for c in 0..cube.cols {
                channel[(r, c)] = cube.value(r, c, band);
            }
        }
        let min = channel.min();
        let max = channel.max();
        if max > min {
            channel.apply(|v| *v = (*v - min) / (max - min));
        } else {
            channel.fill(0.0);
        }

        let mut profile: Vec<Channel> = Vec::with_capacity(profile_len);
        for &radius in radii.iter().rev() {
            profile.push(morph_reconstruct_close(&channel, radius)?);
        }
        profile.push(channel.clone());
        for &radius in radii {
            profile.push(morph_reconstruct_open(&channel, radius)?);
        }

        for (e, img) in profile.iter().enumerate() {
            let col = band * profile_len + e;
            for (row_idx, &pixel) in index.pixel_ids.iter().enumerate() {
                values[(row_idx, col)] = img[(pixel / cube.cols, pixel % cube.cols)];
            }
        }
    }
    FeatureMatrix::new(values)
}

/// Scale every column to zero mean and unit variance (population divisor);
/// constant columns become all-zero.
pub fn standardize_columns(features: &FeatureMatrix) -> FeatureMatrix {
    let n = features.n_samples();
    let mut values = features.values.clone();
    for mut col in values.column_iter_mut() {
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        if var > 0.0 {
            let std = var.sqrt();
            col.apply(|v| *v = (*v - mean) / std);
        } else {
            col.fill(0.0);
        }
    }
    FeatureMatrix { values }
}

/// Scale every column to [0, 1] by its own min and max; constant columns
/// become all-zero.
///
/// This is the per-view scaling the pipeline uses before graph
/// construction: it balances column scales for Euclidean KNN without
/// centering. Centering is harmful downstream, because the affinity takes
/// |Z| and cannot tell strong negative correlations (which centering
/// manufactures between classes) from positive ones.
pub fn minmax_scale_columns(features: &FeatureMatrix) -> FeatureMatrix {
    let mut values = features.values.clone();
    for mut col in values.column_iter_mut() {
        let min = col.min();
        let max = col.max();
        if max > min {
            col.apply(|v| *v = (*v - min) / (max - min));
        } else {
            col.fill(0.0);
        }
    }
    FeatureMatrix { values }
}
