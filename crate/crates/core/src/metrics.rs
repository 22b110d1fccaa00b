//! Clustering evaluation: optimal cluster-to-class mapping via the
//! Hungarian algorithm, overall accuracy, normalized mutual information
//! and Cohen's kappa.

use crate::error::{Error, Result};

/// K_pred x K_true contingency counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
    pub n: usize,
}

impl ConfusionMatrix {
    pub fn from_labels(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::Shape(format!(
                "prediction has {} entries, truth has {}",
                pred.len(),
                truth.len()
            )));
        }
        if pred.is_empty() {
            return Err(Error::InvalidArgument("empty label arrays".into()));
        }
        let k_pred = pred.iter().max().unwrap() + 1;
        let k_true = truth.iter().max().unwrap() + 1;
        let mut counts = vec![vec![0usize; k_true]; k_pred];
        for (&p, &t) in pred.iter().zip(truth) {
            counts[p][t] += 1;
        }
        Ok(Self {
            counts,
            n: pred.len(),
        })
    }
}

/// Exact minimum-cost assignment on a square cost matrix (Kuhn-Munkres with
/// potentials, O(n^3)). Returns for each row its assigned column.
fn hungarian_min(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    const INF: i64 = i64::MAX / 4;
    // 1-indexed potentials and matching, the classic formulation.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut matched = vec![0usize; n + 1]; // column -> row

    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0usize;
        let mut min_v = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < min_v[j] {
                        min_v[j] = cur;
                        way[j] = j0;
                    }
                    if min_v[j] < delta {
                        delta = min_v[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if matched[j] != 0 {
            assignment[matched[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Maximum-agreement one-to-one mapping between predicted clusters and
/// ground-truth classes, solved exactly on the square-padded confusion
/// matrix. Returns the relabeled predictions and the cluster -> class
/// permutation.
pub fn best_map(pred: &[usize], truth: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let confusion = ConfusionMatrix::from_labels(pred, truth)?;
    let k_pred = confusion.counts.len();
    let k_true = confusion.counts[0].len();
    let size = k_pred.max(k_true);

    // Maximize agreement == minimize negated counts on the padded square.
    let cost: Vec<Vec<i64>> = (0..size)
        .map(|i| {
            (0..size)
                .map(|j| {
                    if i < k_pred && j < k_true {
                        -(confusion.counts[i][j] as i64)
                    } else {
                        0
                    }
                })
                .collect()
        })
        .collect();
    let permutation_full = hungarian_min(&cost);
    let permutation: Vec<usize> = permutation_full[..k_pred].to_vec();
    let mapped = pred.iter().map(|&p| permutation[p]).collect();
    Ok((mapped, permutation))
}

/// Fraction of positions where the two label arrays agree.
pub fn overall_accuracy(mapped_pred: &[usize], truth: &[usize]) -> Result<f64> {
    if mapped_pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "prediction has {} entries, truth has {}",
            mapped_pred.len(),
            truth.len()
        )));
    }
    if mapped_pred.is_empty() {
        return Err(Error::InvalidArgument("empty label arrays".into()));
    }
    let agree = mapped_pred
        .iter()
        .zip(truth)
        .filter(|(a, b)| a == b)
        .count();
    Ok(agree as f64 / truth.len() as f64)
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information with natural-log entropies and the
/// arithmetic-mean normalization `I / ((H(pred) + H(truth)) / 2)`.
/// Invariant under relabeling either side.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let confusion = ConfusionMatrix::from_labels(pred, truth)?;
    let n = confusion.n;
    let k_pred = confusion.counts.len();
    let k_true = confusion.counts[0].len();
    let row_sums: Vec<usize> = confusion.counts.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<usize> = (0..k_true)
        .map(|j| confusion.counts.iter().map(|r| r[j]).sum())
        .collect();

    let h_pred = entropy(&row_sums, n);
    let h_true = entropy(&col_sums, n);
    if h_pred == 0.0 && h_true == 0.0 {
        // Both sides are a single cluster: identical partitions.
        return Ok(1.0);
    }
    if h_pred == 0.0 || h_true == 0.0 {
        return Ok(0.0);
    }

    let mut mutual = 0.0;
    for i in 0..k_pred {
        for j in 0..k_true {
            let joint = confusion.counts[i][j];
            if joint == 0 {
                continue;
            }
            let p_joint = joint as f64 / n as f64;
            let p_i = row_sums[i] as f64 / n as f64;
            let p_j = col_sums[j] as f64 / n as f64;
            mutual += p_joint * (p_joint / (p_i * p_j)).ln();
        }
    }
    Ok(mutual / ((h_pred + h_true) / 2.0))
}

/// Cohen's kappa `(p_o - p_e) / (1 - p_e)` on best-mapped predictions;
/// 1 when chance and observed agreement are both perfect, 0 when only
/// chance agreement is.
pub fn kappa(mapped_pred: &[usize], truth: &[usize]) -> Result<f64> {
    let confusion = ConfusionMatrix::from_labels(mapped_pred, truth)?;
    let n = confusion.n as f64;
    let p_o = overall_accuracy(mapped_pred, truth)?;

    let k_pred = confusion.counts.len();
    let k_true = confusion.counts[0].len();
    let classes = k_pred.max(k_true);
    let mut p_e = 0.0;
    for c in 0..classes {
        let row: usize = if c < k_pred {
            confusion.counts[c].iter().sum()
        } else {
            0
        };
        let col: usize = if c < k_true {
            confusion.counts.iter().map(|r| r[c]).sum()
        } else {
            0
        };
        p_e += (row as f64 / n) * (col as f64 / n);
    }
    if (1.0 - p_e).abs() < 1e-15 {
        return Ok(if (p_o - 1.0).abs() < 1e-15 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Report lines with four decimal places.
pub fn format_report(oa: f64, nmi: f64, kappa: f64) -> String {
    format!("oa = {oa:.4}\nnmi = {nmi:.4}\nkappa = {kappa:.4}\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force assignment oracle: try every injective mapping of
    /// predicted clusters to padded class slots and count agreements.
    pub(crate) fn brute_force_best_oa(pred: &[usize], truth: &[usize]) -> f64 {
        let k_pred = pred.iter().max().unwrap() + 1;
        let k_true = truth.iter().max().unwrap() + 1;
        let size = k_pred.max(k_true);
        let mut slots: Vec<usize> = (0..size).collect();
        let mut best = 0usize;
        permute(&mut slots, 0, &mut |perm| {
            let agree = pred
                .iter()
                .zip(truth)
                .filter(|&(&p, &t)| perm[p] == t)
                .count();
            best = best.max(agree);
        });
        best as f64 / truth.len() as f64
    }

    fn permute(items: &mut Vec<usize>, at: usize, visit: &mut impl FnMut(&[usize])) {
        if at == items.len() {
            visit(items);
            return;
        }
        for i in at..items.len() {
            items.swap(at, i);
            permute(items, at + 1, visit);
            items.swap(at, i);
        }
    }

    #[test]
    fn identical_labels_map_to_identity() {
        let truth = vec![0, 1, 2, 1, 0];
        let (mapped, perm) = best_map(&truth, &truth).unwrap();
        assert_eq!(mapped, truth);
        assert_eq!(perm, vec![0, 1, 2]);
        assert_eq!(overall_accuracy(&mapped, &truth).unwrap(), 1.0);
    }

    #[test]
    fn renamed_labels_still_reach_perfect_accuracy() {
        let truth = vec![0, 0, 1, 1, 2, 2];
        let pred = vec![2, 2, 0, 0, 1, 1];
        let (mapped, _) = best_map(&pred, &truth).unwrap();
        assert_eq!(overall_accuracy(&mapped, &truth).unwrap(), 1.0);
    }

    // Brute-force permutation oracle over all 3! mappings.
    #[test]
    fn best_map_hand_case() {
        let truth = vec![0, 0, 1, 1, 2];
        let pred = vec![1, 1, 0, 2, 2];
        let (mapped, perm) = best_map(&pred, &truth).unwrap();
        assert_eq!(perm, vec![1, 0, 2]);
        let oa = overall_accuracy(&mapped, &truth).unwrap();
        assert!((oa - 0.8).abs() < 1e-15);
        assert_eq!(oa, brute_force_best_oa(&pred, &truth));
    }

    #[test]
    fn best_map_matches_brute_force_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(500);
        for _ in 0..50 {
            let n = rng.random_range(3..25);
            let k_pred = rng.random_range(1..6usize);
            let k_true = rng.random_range(1..6usize);
            let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..k_pred)).collect();
            let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..k_true)).collect();
            let (mapped, _) = best_map(&pred, &truth).unwrap();
            let oa = overall_accuracy(&mapped, &truth).unwrap();
            let brute = brute_force_best_oa(&pred, &truth);
            assert!(
                (oa - brute).abs() < 1e-15,
                "hungarian {oa} vs brute {brute} (pred {pred:?}, truth {truth:?})"
            );
        }
    }

    #[test]
    fn best_map_dominates_every_injective_relabeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(501);
        let n = 20;
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let (mapped, _) = best_map(&pred, &truth).unwrap();
        let best_oa = overall_accuracy(&mapped, &truth).unwrap();
        let mut slots: Vec<usize> = (0..4).collect();
        permute(&mut slots, 0, &mut |perm| {
            let relabeled: Vec<usize> = pred.iter().map(|&p| perm[p]).collect();
            let oa = overall_accuracy(&relabeled, &truth).unwrap();
            assert!(best_oa >= oa);
        });
    }

    #[test]
    fn accuracy_edge_cases() {
        assert_eq!(overall_accuracy(&[0], &[1]).unwrap(), 0.0);
        assert!(overall_accuracy(&[0, 1], &[0]).is_err());
        assert!(overall_accuracy(&[], &[]).is_err());
    }

    #[test]
    fn nmi_identical_partitions_is_one() {
        let truth = vec![0, 0, 1, 1, 2];
        let renamed = vec![2, 2, 0, 0, 1];
        assert!((nmi(&renamed, &truth).unwrap() - 1.0).abs() < 1e-12);
        // Single-cluster on both sides counts as identical.
        assert_eq!(nmi(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn nmi_constant_prediction_is_zero() {
        assert_eq!(nmi(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap(), 0.0);
    }

    // Hand entropy computation from the 2x2 joint table [[2, 1], [0, 1]].
    #[test]
    fn nmi_hand_oracle() {
        let truth = vec![0, 0, 1, 1];
        let pred = vec![0, 0, 0, 1];
        let h_pred = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        let h_true = -(0.5f64 * 0.5f64.ln() + 0.5 * 0.5f64.ln());
        let mutual = 0.5 * (0.5f64 / (0.75 * 0.5)).ln() + 0.25 * (0.25f64 / (0.75 * 0.5)).ln()
            + 0.25 * (0.25f64 / (0.25 * 0.5)).ln();
        let expected = mutual / ((h_pred + h_true) / 2.0);
        assert!((nmi(&pred, &truth).unwrap() - expected).abs() < 1e-12);
        // Symmetry in the arguments.
        assert!((nmi(&truth, &pred).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn nmi_invariant_under_relabeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 30;
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let base = nmi(&pred, &truth).unwrap();
        let relabeled: Vec<usize> = pred.iter().map(|&p| [3, 0, 2, 1][p]).collect();
        assert!((nmi(&relabeled, &truth).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn kappa_perfect_agreement_is_one() {
        let truth = vec![0, 1, 2, 0, 1, 2];
        assert!((kappa(&truth, &truth).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kappa_constant_prediction_on_balanced_truth_is_zero() {
        let truth = vec![0, 0, 1, 1, 2, 2];
        let pred = vec![0, 0, 0, 0, 0, 0];
        assert!(kappa(&pred, &truth).unwrap().abs() < 1e-15);
    }

    // Hand confusion-matrix arithmetic: [[3, 1], [1, 3]] over n = 8 gives
    // p_o = 0.75, p_e = 0.5, kappa = 0.5.
    #[test]
    fn kappa_hand_case() {
        let truth = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let pred = vec![0, 0, 0, 1, 0, 1, 1, 1];
        let confusion = ConfusionMatrix::from_labels(&pred, &truth).unwrap();
        assert_eq!(confusion.counts, vec![vec![3, 1], vec![1, 3]]);
        assert!((kappa(&pred, &truth).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kappa_degenerate_single_class() {
        // p_e = 1 with perfect agreement.
        assert_eq!(kappa(&[0, 0], &[0, 0]).unwrap(), 1.0);
    }

    #[test]
    fn confusion_totals_match_n() {
        let pred = vec![0, 1, 1, 2];
        let truth = vec![1, 1, 0, 2];
        let confusion = ConfusionMatrix::from_labels(&pred, &truth).unwrap();
        let total: usize = confusion.counts.iter().flatten().sum();
        assert_eq!(total, 4);
        assert_eq!(confusion.n, 4);
    }

    #[test]
    fn report_has_four_decimals() {
        let report = format_report(0.98765, 0.5, 1.0);
        assert_eq!(report, "oa = 0.9877\nnmi = 0.5000\nkappa = 1.0000\n");
    }
}
