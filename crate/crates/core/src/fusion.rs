//! Attention fusion of per-view affinities: per-sample view-importance
//! weights from the tanh/softmax/l2 chain over the stacked affinities, the
//! weighted row-broadcast fusion, and a gradient-descent training loop for
//! the attention weight matrix.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::preprocess::FeatureMatrix;
use crate::subspace::AffinityMatrix;

/// The attention weight matrix, (p * n) x p.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub weights: DMatrix<f64>,
    pub views: usize,
    pub n: usize,
}

impl AttentionParams {
    pub fn zeros(views: usize, n: usize) -> Self {
        Self {
            weights: DMatrix::zeros(views * n, views),
            views,
            n,
        }
    }

    /// Seeded initialization with entries i.i.d. uniform in [-0.1, 0.1].
    pub fn seeded(views: usize, n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights =
            DMatrix::from_fn(views * n, views, |_, _| rng.random::<f64>() * 0.2 - 0.1);
        Self { weights, views, n }
    }
}

/// Per-sample view-importance weights; every row is nonnegative with unit
/// Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    /// n x p; column p weighs view p per sample.
    pub weights: DMatrix<f64>,
}

impl AttentionWeights {
    /// The untrained fallback: every view weighted 1/sqrt(p).
    pub fn uniform(n: usize, views: usize) -> Self {
        Self {
            weights: DMatrix::from_element(n, views, 1.0 / (views as f64).sqrt()),
        }
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn views(&self) -> usize {
        self.weights.ncols()
    }

    /// Mean weight per view, a diagnostic for run reports.
    pub fn view_means(&self) -> Vec<f64> {
        (0..self.views())
            .map(|p| self.weights.column(p).sum() / self.n() as f64)
            .collect()
    }
}

fn check_views(affinities: &[AffinityMatrix]) -> Result<(usize, usize)> {
    if affinities.is_empty() {
        return Err(Error::InvalidArgument("no views supplied".into()));
    }
    let n = affinities[0].n();
    for (p, y) in affinities.iter().enumerate() {
        if y.n() != n {
            return Err(Error::Shape(format!(
                "view {p} affinity is {}x{0}, expected {n}x{n}",
                y.n()
            )));
        }
    }
    Ok((affinities.len(), n))
}

/// Horizontal concatenation [Y_1 ... Y_p], n x (p * n).
fn stack_views(affinities: &[AffinityMatrix]) -> DMatrix<f64> {
    let p = affinities.len();
    let n = affinities[0].n();
    let mut stacked = DMatrix::zeros(n, p * n);
    for (v, y) in affinities.iter().enumerate() {
        stacked.view_mut((0, v * n), (n, n)).copy_from(&y.matrix);
    }
    stacked
}

struct ForwardTrace {
    /// tanh([Y_1 ... Y_p] W), n x p.
    activated: DMatrix<f64>,
    /// Row-wise softmax of `activated`.
    softmaxed: DMatrix<f64>,
    /// Euclidean norm of each softmax row.
    row_norms: Vec<f64>,
    weights: AttentionWeights,
}

fn forward_trace(stacked: &DMatrix<f64>, params: &AttentionParams) -> ForwardTrace {
    let activated = (stacked * &params.weights).map(f64::tanh);
    let n = activated.nrows();
    let p = activated.ncols();
    let mut softmaxed = DMatrix::zeros(n, p);
    for i in 0..n {
        let row_max = activated.row(i).max();
        let mut total = 0.0;
        for j in 0..p {
            let e = (activated[(i, j)] - row_max).exp();
            softmaxed[(i, j)] = e;
            total += e;
        }
        for j in 0..p {
            softmaxed[(i, j)] /= total;
        }
    }
    let mut weights = softmaxed.clone();
    let mut row_norms = Vec::with_capacity(n);
    for i in 0..n {
        let norm = weights.row(i).norm();
        row_norms.push(norm);
        for j in 0..p {
            weights[(i, j)] /= norm;
        }
    }
    ForwardTrace {
        activated,
        softmaxed,
        row_norms,
        weights: AttentionWeights { weights },
    }
}

/// Compute per-sample view weights: row-wise softmax of
/// tanh([Y_1 ... Y_p] W) over the p view columns, each row rescaled to unit
/// Euclidean norm.
pub fn attention_forward(
    affinities: &[AffinityMatrix],
    params: &AttentionParams,
) -> Result<AttentionWeights> {
    let (p, n) = check_views(affinities)?;
    if params.weights.nrows() != p * n || params.weights.ncols() != p {
        return Err(Error::Shape(format!(
            "attention weights are {}x{}, expected {}x{p}",
            params.weights.nrows(),
            params.weights.ncols(),
            p * n
        )));
    }
    Ok(forward_trace(&stack_views(affinities), params).weights)
}

/// Weighted fusion: row i of the raw result is sum_p a[i, p] * Y_p[i, :],
/// then the whole matrix is symmetrized as (Y + Y') / 2 so spectral
/// clustering sees a symmetric affinity.
pub fn fuse(affinities: &[AffinityMatrix], attention: &AttentionWeights) -> Result<AffinityMatrix> {
    let (p, n) = check_views(affinities)?;
    if attention.n() != n || attention.views() != p {
        return Err(Error::Shape(format!(
            "attention weights are {}x{}, expected {n}x{p}",
            attention.n(),
            attention.views()
        )));
    }
    let raw = fuse_raw(affinities, attention);
    let mut fused = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            fused[(i, j)] = 0.5 * (raw[(i, j)] + raw[(j, i)]);
        }
    }
    AffinityMatrix::new(fused)
}

fn fuse_raw(affinities: &[AffinityMatrix], attention: &AttentionWeights) -> DMatrix<f64> {
    let n = affinities[0].n();
    let mut raw = DMatrix::zeros(n, n);
    for (v, y) in affinities.iter().enumerate() {
        for i in 0..n {
            let w = attention.weights[(i, v)];
            for j in 0..n {
                raw[(i, j)] += w * y.matrix[(i, j)];
            }
        }
    }
    raw
}

/// Outcome of attention training: the parameters and the loss recorded
/// after every epoch (non-increasing under backtracking).
#[derive(Debug, Clone)]
pub struct AttentionTraining {
    pub params: AttentionParams,
    pub loss_trace: Vec<f64>,
}

/// Fused self-expression reconstruction loss
/// `sum_p ||B_p - Y_F' B_p||^2 + lambda ||Y_F||^2` with `B_p = A_p F_p` and
/// `Y_F = fuse(Ys, attention_forward(Ys, W))`.
fn fused_loss(
    affinities: &[AffinityMatrix],
    convolved: &[DMatrix<f64>],
    stacked: &DMatrix<f64>,
    params: &AttentionParams,
    lambda: f64,
) -> f64 {
    let trace = forward_trace(stacked, params);
    let fused = symmetrized(&fuse_raw(affinities, &trace.weights));
    loss_of_fused(&fused, convolved, lambda)
}

fn symmetrized(raw: &DMatrix<f64>) -> DMatrix<f64> {
    let n = raw.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = 0.5 * (raw[(i, j)] + raw[(j, i)]);
        }
    }
    out
}

fn loss_of_fused(fused: &DMatrix<f64>, convolved: &[DMatrix<f64>], lambda: f64) -> f64 {
    let mut loss = lambda * fused.norm_squared();
    for b in convolved {
        let residual = b - fused.transpose() * b;
        loss += residual.norm_squared();
    }
    loss
}

/// Analytic gradient of the fused loss with respect to W, backpropagated
/// through fusion, l2 row normalization, softmax and tanh.
fn fused_loss_gradient(
    affinities: &[AffinityMatrix],
    convolved: &[DMatrix<f64>],
    stacked: &DMatrix<f64>,
    params: &AttentionParams,
    lambda: f64,
) -> (f64, DMatrix<f64>) {
    let p = affinities.len();
    let n = affinities[0].n();
    let trace = forward_trace(stacked, params);
    let fused = symmetrized(&fuse_raw(affinities, &trace.weights));
    let loss = loss_of_fused(&fused, convolved, lambda);

    // d loss / d Y_F = sum_p -2 B_p R_p' + 2 lambda Y_F, R_p = B_p - Y_F' B_p.
    let mut grad_fused = fused.scale(2.0 * lambda);
    for b in convolved {
        let residual = b - fused.transpose() * b;
        grad_fused -= (b * residual.transpose()).scale(2.0);
    }
    // Symmetrization is self-adjoint.
    let grad_raw = symmetrized(&grad_fused);

    // d loss / d a[i, v] = <grad_raw row i, Y_v row i>.
    let mut grad_attention = DMatrix::zeros(n, p);
    for (v, y) in affinities.iter().enumerate() {
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += grad_raw[(i, j)] * y.matrix[(i, j)];
            }
            grad_attention[(i, v)] = acc;
        }
    }

    // Backward through a = s / ||s|| and the row softmax.
    let mut grad_activated = DMatrix::zeros(n, p);
    for i in 0..n {
        let norm = trace.row_norms[i];
        let a_dot_g: f64 = (0..p)
            .map(|j| grad_attention[(i, j)] * trace.weights.weights[(i, j)])
            .sum();
        let mut grad_softmax = vec![0.0; p];
        for j in 0..p {
            grad_softmax[j] =
                (grad_attention[(i, j)] - a_dot_g * trace.weights.weights[(i, j)]) / norm;
        }
        let s_dot_g: f64 = (0..p).map(|j| grad_softmax[j] * trace.softmaxed[(i, j)]).sum();
        for j in 0..p {
            let s = trace.softmaxed[(i, j)];
            let grad_t = s * (grad_softmax[j] - s_dot_g);
            grad_activated[(i, j)] = grad_t * (1.0 - trace.activated[(i, j)].powi(2));
        }
    }

    let grad_weights = stacked.transpose() * grad_activated;
    (loss, grad_weights)
}

/// Train the attention weight matrix by gradient descent with backtracking
/// on the fused self-expression reconstruction loss. `epochs = 0` returns
/// the seeded initialization untouched.
pub fn train_attention(
    affinities: &[AffinityMatrix],
    features: &[FeatureMatrix],
    normalized: &[NormalizedAdjacency],
    lambda: f64,
    epochs: usize,
    step: f64,
    seed: u64,
) -> Result<AttentionTraining> {
    let (p, n) = check_views(affinities)?;
    if features.len() != p || normalized.len() != p {
        return Err(Error::Shape(format!(
            "expected {p} feature matrices and propagation matrices, got {} and {}",
            features.len(),
            normalized.len()
        )));
    }
    if step <= 0.0 || step.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "step must be positive, got {step}"
        )));
    }
    for (v, (f, a)) in features.iter().zip(normalized).enumerate() {
        if f.n_samples() != n || a.n() != n {
            return Err(Error::Shape(format!(
                "view {v} features/propagation do not match the {n} samples"
            )));
        }
    }

    let convolved: Vec<DMatrix<f64>> = features
        .iter()
        .zip(normalized)
        .map(|(f, a)| &a.matrix * &f.values)
        .collect();
    let stacked = stack_views(affinities);

    let mut params = AttentionParams::seeded(p, n, seed);
    if epochs == 0 {
        return Ok(AttentionTraining {
            params,
            loss_trace: Vec::new(),
        });
    }

    let mut step = step;
    let mut loss_trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let (mut current, gradient) =
            fused_loss_gradient(affinities, &convolved, &stacked, &params, lambda);
        let mut accepted = false;
        for _ in 0..30 {
            let candidate = AttentionParams {
                weights: &params.weights - gradient.scale(step),
                views: p,
                n,
            };
            let candidate_loss = fused_loss(affinities, &convolved, &stacked, &candidate, lambda);
            if candidate_loss <= current {
                params = candidate;
                current = candidate_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        loss_trace.push(current);
        if !accepted {
            // Step shrank 30 times without improving: converged.
            break;
        }
    }
    Ok(AttentionTraining { params, loss_trace })
}
