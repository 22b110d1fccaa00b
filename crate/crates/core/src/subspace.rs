//! Closed-form graph self-expression per view, and the conversion of the
//! coefficient matrix into a symmetric nonnegative affinity.
//!
//! With squared-Frobenius norms the self-expression objective
//! `min_Z ||B' Z - F'||^2 + lambda ||Z||^2` (where B = A_norm * F, primes
//! denoting transposes of the row-sample layout) is a ridge problem whose
//! unique minimizer solves `(B B' + lambda I) Z = B F'`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::preprocess::FeatureMatrix;

/// Self-expression coefficients, n x n.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    pub matrix: DMatrix<f64>,
}

impl CoefficientMatrix {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Symmetric nonnegative n x n sample-similarity graph.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub matrix: DMatrix<f64>,
}

impl AffinityMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Shape(format!(
                "affinity must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let n = matrix.nrows();
        for i in 0..n {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "affinity not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if matrix.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "affinity entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { matrix })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Solve the graph self-expression problem in closed form.
///
/// The system matrix `B B' + lambda I` is symmetric positive definite for
/// any `lambda > 0`, so the solve goes through a Cholesky factorization,
/// never an explicit inverse. With `zero_diag` the diagonal is zeroed after
/// solving.
pub fn solve_self_expression(
    features: &FeatureMatrix,
    normalized: &NormalizedAdjacency,
    lambda: f64,
    zero_diag: bool,
) -> Result<CoefficientMatrix> {
    if lambda <= 0.0 || lambda.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "regularization must be positive, got {lambda}"
        )));
    }
    if normalized.n() != features.n_samples() {
        return Err(Error::Shape(format!(
            "adjacency is {}x{0} but features have {} samples",
            normalized.n(),
            features.n_samples()
        )));
    }
    let n = features.n_samples();
    let convolved = &normalized.matrix * &features.values;
    let mut gram = &convolved * convolved.transpose();
    for i in 0..n {
        gram[(i, i)] += lambda;
    }
    let rhs = &convolved * features.values.transpose();
    let chol = nalgebra::Cholesky::new(gram).ok_or_else(|| {
        Error::InvalidArgument("self-expression system is not positive definite".into())
    })?;
    let mut solution = chol.solve(&rhs);
    if zero_diag {
        for i in 0..n {
            solution[(i, i)] = 0.0;
        }
    }
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("self-expression coefficients".into()));
    }
    Ok(CoefficientMatrix { matrix: solution })
}

/// The self-expression objective value for a candidate coefficient matrix.
pub fn self_expression_loss(
    features: &FeatureMatrix,
    normalized: &NormalizedAdjacency,
    candidate: &DMatrix<f64>,
    lambda: f64,
) -> f64 {
    let convolved = &normalized.matrix * &features.values;
    let residual = convolved.transpose() * candidate - features.values.transpose();
    residual.norm_squared() + lambda * candidate.norm_squared()
}

/// Frobenius norm of the representation error of the convolved
/// reconstruction; reported as a diagnostic, never stored as a matrix.
pub fn reconstruction_residual(
    features: &FeatureMatrix,
    normalized: &NormalizedAdjacency,
    coefficients: &CoefficientMatrix,
) -> f64 {
    let convolved = &normalized.matrix * &features.values;
    (convolved.transpose() * &coefficients.matrix - features.values.transpose()).norm()
}

/// Y = (|Z| + |Z|') / 2, entrywise absolute value.
pub fn build_affinity(coefficients: &CoefficientMatrix) -> AffinityMatrix {
    let n = coefficients.n();
    let mut matrix = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            matrix[(i, j)] =
                0.5 * (coefficients.matrix[(i, j)].abs() + coefficients.matrix[(j, i)].abs());
        }
    }
    AffinityMatrix { matrix }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{knn_adjacency, normalize_adjacency};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_features(n: usize, d: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureMatrix::new(DMatrix::from_fn(n, d, |_, _| {
            rng.random::<f64>() * 2.0 - 1.0
        }))
        .unwrap()
    }

    /// Gradient-descent oracle for the same objective, started from zero.
    /// The step is tuned from the spectrum so 500 iterations converge well
    /// past the comparison tolerance.
    pub(crate) fn gradient_descent_solution(
        features: &FeatureMatrix,
        normalized: &NormalizedAdjacency,
        lambda: f64,
        steps: usize,
    ) -> DMatrix<f64> {
        let n = features.n_samples();
        let convolved = &normalized.matrix * &features.values;
        let gram = &convolved * convolved.transpose();
        let rhs = &convolved * features.values.transpose();
        let eig = nalgebra::SymmetricEigen::new(gram.clone());
        let sigma_max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        // Lipschitz and strong-convexity constants of the objective.
        let lipschitz = 2.0 * (sigma_max + lambda);
        let mu = 2.0 * lambda;
        let step = 2.0 / (lipschitz + mu);
        let mut z = DMatrix::zeros(n, n);
        for _ in 0..steps {
            let gradient = (&gram * &z - &rhs).scale(2.0) + z.scale(2.0 * lambda);
            z -= gradient.scale(step);
        }
        z
    }

    #[test]
    fn ridge_norm_shrinks_as_lambda_grows() {
        let f = random_features(15, 4, 1);
        let a = knn_adjacency(&f, 4).unwrap();
        let normalized = normalize_adjacency(&a);
        let mut previous = f64::INFINITY;
        for lambda in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let z = solve_self_expression(&f, &normalized, lambda, false).unwrap();
            let norm = z.matrix.norm();
            assert!(norm < previous, "norm {norm} did not shrink at {lambda}");
            previous = norm;
        }
    }

    // Normal-equation + gradient-descent oracle on a 12-sample instance
    // with identity propagation.
    #[test]
    fn closed_form_satisfies_normal_equations_and_matches_gd() {
        let f = random_features(12, 5, 2);
        let normalized = NormalizedAdjacency::identity(12);
        let lambda = 1.0;
        let z = solve_self_expression(&f, &normalized, lambda, false).unwrap();

        let b = &normalized.matrix * &f.values;
        let mut gram = &b * b.transpose();
        for i in 0..12 {
            gram[(i, i)] += lambda;
        }
        let rhs = &b * f.values.transpose();
        let residual = (&gram * &z.matrix - &rhs).norm();
        assert!(residual <= 1e-10, "normal-equation residual {residual}");

        let gd = gradient_descent_solution(&f, &normalized, lambda, 500);
        let rel = (&z.matrix - &gd).norm() / z.matrix.norm();
        assert!(rel <= 1e-6, "gd mismatch {rel}");
    }

    #[test]
    fn identical_samples_get_identical_rows() {
        let mut f = random_features(10, 3, 3);
        for j in 0..3 {
            let v = f.values[(4, j)];
            f.values[(7, j)] = v;
        }
        // Identity propagation keeps rows of B identical too.
        let normalized = NormalizedAdjacency::identity(10);
        let z = solve_self_expression(&f, &normalized, 0.5, false).unwrap();
        for j in 0..10 {
            assert!((z.matrix[(4, j)] - z.matrix[(7, j)]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_diag_flag_zeroes_the_diagonal() {
        let f = random_features(8, 3, 4);
        let a = knn_adjacency(&f, 2).unwrap();
        let normalized = normalize_adjacency(&a);
        let z = solve_self_expression(&f, &normalized, 0.1, true).unwrap();
        for i in 0..8 {
            assert_eq!(z.matrix[(i, i)], 0.0);
        }
    }

    #[test]
    fn rejects_nonpositive_lambda() {
        let f = random_features(5, 2, 5);
        let normalized = NormalizedAdjacency::identity(5);
        assert!(solve_self_expression(&f, &normalized, 0.0, false).is_err());
        assert!(solve_self_expression(&f, &normalized, -1.0, false).is_err());
    }

    // Global-optimality spot check: the closed form attains a loss no
    // worse than 500 gradient-descent steps from zero.
    #[test]
    fn closed_form_beats_gradient_descent_loss() {
        for seed in 0..3 {
            let f = random_features(14, 4, 60 + seed);
            let a = knn_adjacency(&f, 3).unwrap();
            let normalized = normalize_adjacency(&a);
            let lambda = 0.5;
            let z = solve_self_expression(&f, &normalized, lambda, false).unwrap();
            let gd = gradient_descent_solution(&f, &normalized, lambda, 500);
            let closed = self_expression_loss(&f, &normalized, &z.matrix, lambda);
            let descended = self_expression_loss(&f, &normalized, &gd, lambda);
            assert!(closed <= descended + 1e-8, "{closed} vs {descended}");
        }
    }

    #[test]
    fn affinity_fixed_point_on_symmetric_nonnegative_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let raw = DMatrix::from_fn(6, 6, |_, _| rng.random::<f64>());
        let sym = (&raw + raw.transpose()).scale(0.5);
        let z = CoefficientMatrix { matrix: sym.clone() };
        let y = build_affinity(&z);
        assert!((y.matrix - sym).abs().max() < 1e-15);
    }

    #[test]
    fn affinity_hand_case() {
        let z = CoefficientMatrix {
            matrix: DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 4.0, 0.0]),
        };
        let y = build_affinity(&z);
        assert_eq!(y.matrix, DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 3.0, 0.0]));
    }

    // Random-matrix property check: symmetric, nonnegative, zero diagonal
    // whenever Z has one.
    #[test]
    fn affinity_symmetric_nonnegative_for_random_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let mut matrix = DMatrix::from_fn(9, 9, |_, _| rng.random::<f64>() * 4.0 - 2.0);
            for i in 0..9 {
                matrix[(i, i)] = 0.0;
            }
            let y = build_affinity(&CoefficientMatrix { matrix });
            assert_eq!(y.matrix, y.matrix.transpose());
            assert!(y.matrix.iter().all(|&v| v >= 0.0));
            for i in 0..9 {
                assert_eq!(y.matrix[(i, i)], 0.0);
            }
        }
    }

    #[test]
    fn solve_is_permutation_equivariant() {
        let f = random_features(10, 3, 30);
        let a = knn_adjacency(&f, 3).unwrap();
        let normalized = normalize_adjacency(&a);
        let z = solve_self_expression(&f, &normalized, 0.7, true).unwrap();
        let y = build_affinity(&z);

        let perm: Vec<usize> = vec![9, 3, 0, 7, 5, 1, 8, 2, 6, 4];
        let f_perm =
            FeatureMatrix::new(DMatrix::from_fn(10, 3, |i, j| f.values[(perm[i], j)])).unwrap();
        let n_perm = NormalizedAdjacency {
            matrix: DMatrix::from_fn(10, 10, |i, j| normalized.matrix[(perm[i], perm[j])]),
        };
        let z_perm = solve_self_expression(&f_perm, &n_perm, 0.7, true).unwrap();
        let y_perm = build_affinity(&z_perm);
        for i in 0..10 {
            for j in 0..10 {
                assert!((z_perm.matrix[(i, j)] - z.matrix[(perm[i], perm[j])]).abs() < 1e-9);
                assert!((y_perm.matrix[(i, j)] - y.matrix[(perm[i], perm[j])]).abs() < 1e-9);
            }
        }
    }

    // Union-of-subspaces block structure at desk scale: with identity
    // propagation and small lambda, each row's l1 affinity mass concentrates
    // in the row's true block.
    #[test]
    fn affinity_mass_concentrates_in_true_blocks() {
        let spec = crate::synth::SynthSpec {
            clusters: 3,
            ambient_dim: 20,
            subspace_dim: 3,
            per_cluster: 25,
            noise: 0.0,
            seed: 12,
        };
        let (f, truth) = crate::synth::gen_union_of_subspaces(&spec).unwrap();
        let normalized = NormalizedAdjacency::identity(f.n_samples());
        let z = solve_self_expression(&f, &normalized, 1e-3, true).unwrap();
        let y = build_affinity(&z);
        for i in 0..f.n_samples() {
            let total: f64 = y.matrix.row(i).iter().sum();
            let own: f64 = (0..f.n_samples())
                .filter(|&j| truth[j] == truth[i])
                .map(|j| y.matrix[(i, j)])
                .sum();
            assert!(own >= 0.9 * total, "row {i}: {own} of {total} in block");
        }
    }
}
