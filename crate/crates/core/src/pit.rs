//! Permutation-invariant BCE loss: brute-force reference, assignment-based
//! fast path, and best-permutation extraction.

use itertools::Itertools;

use crate::assignment::min_cost_square;
use crate::error::{Error, Result};
use crate::labels::{frame_durations_match, LabelMatrix};

/// Probabilities are clamped to [eps, 1 - eps] before taking logs so the
/// loss stays finite at hard 0/1 predictions.
pub const DEFAULT_EPS: f64 = 1e-7;

/// Largest N accepted by the brute-force path (N! permutations).
pub const BRUTE_FORCE_LIMIT: usize = 8;

/// Real-valued per-frame singer activity predictions in [0,1]^(N x T).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    num_singers: usize,
    num_frames: usize,
    frame_duration: f64,
    data: Vec<f64>, // row-major
}

impl PredictionMatrix {
    pub fn from_rows(rows: &[Vec<f64>], frame_duration: f64) -> Result<Self> {
        let num_singers = rows.len();
        let num_frames = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != num_frames) {
            return Err(Error::ShapeMismatch {
                detail: "prediction rows have unequal lengths".into(),
            });
        }
        let mut data = Vec::with_capacity(num_singers * num_frames);
        for (n, row) in rows.iter().enumerate() {
            for (t, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidParameter(format!(
                        "prediction ({n},{t}) = {p}; probabilities must be in [0, 1]"
                    )));
                }
                data.push(p);
            }
        }
        Ok(Self {
            num_singers,
            num_frames,
            frame_duration,
            data,
        })
    }

    pub fn num_singers(&self) -> usize {
        self.num_singers
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn frame_duration(&self) -> f64 {
        self.frame_duration
    }

    pub fn get(&self, singer: usize, frame: usize) -> f64 {
        self.data[singer * self.num_frames + frame]
    }

    pub fn row(&self, singer: usize) -> &[f64] {
        let start = singer * self.num_frames;
        &self.data[start..start + self.num_frames]
    }

    /// Reorders rows; `order[i]` is the source row for output row `i`.
    pub fn permuted_rows(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.num_singers {
            return Err(Error::ShapeMismatch {
                detail: "permutation length != number of singers".into(),
            });
        }
        let rows: Vec<Vec<f64>> = order.iter().map(|&i| self.row(i).to_vec()).collect();
        Self::from_rows(&rows, self.frame_duration)
    }
}

/// Result of a PIT loss evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PitResult {
    /// Mean BCE under the best permutation: 1/(N*T) * sum of matched pair costs.
    pub loss: f64,
    /// `permutation[n]` is the label row paired with prediction row n.
    pub permutation: Vec<usize>,
    /// `per_pair_cost[n][m]`: summed BCE of prediction row n against label row m.
    pub per_pair_cost: Vec<Vec<f64>>,
}

/// Binary cross entropy for one (label, probability) pair, with the
/// probability clamped to [eps, 1 - eps].
pub fn bce(y: bool, y_hat: f64, eps: f64) -> f64 {
    debug_assert!(eps > 0.0 && eps < 0.5);
    let p = y_hat.clamp(eps, 1.0 - eps);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

fn check_shapes(y: &LabelMatrix, y_hat: &PredictionMatrix) -> Result<(usize, usize)> {
    if y.num_singers() != y_hat.num_singers() || y.num_frames() != y_hat.num_frames() {
        return Err(Error::ShapeMismatch {
            detail: format!(
                "labels {}x{} vs predictions {}x{}",
                y.num_singers(),
                y.num_frames(),
                y_hat.num_singers(),
                y_hat.num_frames()
            ),
        });
    }
    if !frame_durations_match(y.frame_duration(), y_hat.frame_duration()) {
        return Err(Error::FrameDurationMismatch {
            left: y.frame_duration(),
            right: y_hat.frame_duration(),
        });
    }
    if y.num_singers() == 0 || y.num_frames() == 0 {
        return Err(Error::EmptyInput("PIT loss needs N >= 1 and T >= 1".into()));
    }
    Ok((y.num_singers(), y.num_frames()))
}

/// per_pair_cost[n][m] = sum_t BCE(y[m,t], y_hat[n,t]).
fn pair_costs(y: &LabelMatrix, y_hat: &PredictionMatrix, eps: f64) -> Vec<Vec<f64>> {
    let n = y.num_singers();
    (0..n)
        .map(|pred| {
            (0..n)
                .map(|label| {
                    let row = y.row(label);
                    y_hat
                        .row(pred)
                        .iter()
                        .zip(row)
                        .map(|(&p, &v)| bce(v == 1, p, eps))
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Sums the matched pair costs in sorted order, so the total depends only
/// on the multiset of matched costs and row permutations of either input
/// reproduce the loss bit-for-bit.
fn matched_total(per_pair: &[Vec<f64>], perm: &[usize]) -> f64 {
    let n = perm.len();
    let mut stack = [0.0f64; BRUTE_FORCE_LIMIT];
    let mut heap;
    let picked: &mut [f64] = if n <= BRUTE_FORCE_LIMIT {
        &mut stack[..n]
    } else {
        heap = vec![0.0f64; n];
        &mut heap
    };
    for (slot, (pred, &label)) in picked.iter_mut().zip(perm.iter().enumerate()) {
        *slot = per_pair[pred][label];
    }
    picked.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite BCE"));
    picked.iter().sum()
}

/// Exhaustive minimum over all N! permutations. Ties resolve to the
/// lexicographically smallest permutation.
pub fn pit_loss_bruteforce(y: &LabelMatrix, y_hat: &PredictionMatrix) -> Result<PitResult> {
    let (n, t) = check_shapes(y, y_hat)?;
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooManySingers {
            n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let per_pair = pair_costs(y, y_hat, DEFAULT_EPS);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in (0..n).permutations(n) {
        let total = matched_total(&per_pair, &perm);
        // Permutations arrive in lexicographic order, so strict < keeps
        // the lexicographically smallest argmin.
        if best.as_ref().is_none_or(|(b, _)| total < *b) {
            best = Some((total, perm));
        }
    }
    let (total, permutation) = best.expect("n >= 1");
    Ok(PitResult {
        loss: total / (n * t) as f64,
        permutation,
        per_pair_cost: per_pair,
    })
}

/// Assignment-based fast path. The PIT objective decomposes into a sum of
/// independent pair costs, so a min-cost assignment over per_pair_cost is
/// exact; ties may pick a different permutation than the brute force but
/// never a different loss.
pub fn pit_loss_assignment(y: &LabelMatrix, y_hat: &PredictionMatrix) -> Result<PitResult> {
    let (n, t) = check_shapes(y, y_hat)?;
    let per_pair = pair_costs(y, y_hat, DEFAULT_EPS);
    let flat: Vec<f64> = per_pair.iter().flatten().copied().collect();
    let permutation = min_cost_square(&flat, n);
    let total = matched_total(&per_pair, &permutation);
    Ok(PitResult {
        loss: total / (n * t) as f64,
        permutation,
        per_pair_cost: per_pair,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn labels(rows: &[&[u8]]) -> LabelMatrix {
        let ids = (0..rows.len()).map(|i| format!("s{i}")).collect();
        LabelMatrix::from_rows(ids, &rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), 0.1)
            .unwrap()
    }

    fn preds(rows: &[&[f64]]) -> PredictionMatrix {
        PredictionMatrix::from_rows(
            &rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn bce_analytic_values() {
        assert_abs_diff_eq!(bce(true, 0.5, DEFAULT_EPS), (2.0f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(bce(false, 0.9, DEFAULT_EPS), -(0.1f64).ln(), epsilon = 1e-12);
        assert!(bce(true, 1.0, 1e-7) < 2e-7);
        assert!(bce(true, 0.0, 1e-7).is_finite());
    }

    #[test]
    fn perfect_prediction_identity_permutation() {
        let y = labels(&[&[1, 0, 1, 0], &[0, 1, 1, 0]]);
        let yh = preds(&[&[1.0, 0.0, 1.0, 0.0], &[0.0, 1.0, 1.0, 0.0]]);
        let r = pit_loss_bruteforce(&y, &yh).unwrap();
        assert_eq!(r.permutation, vec![0, 1]);
        assert!(r.loss <= 2.0 * DEFAULT_EPS);
    }

    #[test]
    fn swapped_rows_same_loss_swap_permutation() {
        let y = labels(&[&[1, 1, 0], &[0, 0, 1]]);
        let yh_id = preds(&[&[0.9, 0.8, 0.1], &[0.2, 0.1, 0.7]]);
        let yh_sw = preds(&[&[0.2, 0.1, 0.7], &[0.9, 0.8, 0.1]]);
        let a = pit_loss_bruteforce(&y, &yh_id).unwrap();
        let b = pit_loss_bruteforce(&y, &yh_sw).unwrap();
        assert_eq!(a.loss, b.loss); // bit-exact by sorted summation
        assert_eq!(a.permutation, vec![0, 1]);
        assert_eq!(b.permutation, vec![1, 0]);
    }

    #[test]
    fn hand_derived_two_by_one_case() {
        // y = [[1],[0]], y_hat = [[0.2],[0.7]].
        // identity: (-ln 0.2 - ln 0.3) / 2 ~ 1.40671
        // swap:     (-ln 0.8 - ln 0.7) / 2 ~ 0.28991
        let y = labels(&[&[1], &[0]]);
        let yh = preds(&[&[0.2], &[0.7]]);
        let r = pit_loss_bruteforce(&y, &yh).unwrap();
        let expected_swap = (-(0.8f64).ln() - (0.7f64).ln()) / 2.0;
        let expected_id = (-(0.2f64).ln() - (0.3f64).ln()) / 2.0;
        assert!(expected_swap < expected_id);
        assert_abs_diff_eq!(r.loss, expected_swap, epsilon = 1e-9);
        assert_abs_diff_eq!(r.loss, 0.28991, epsilon = 1e-5);
        assert_eq!(r.permutation, vec![1, 0]);
        assert_abs_diff_eq!(r.per_pair_cost[0][0], -(0.2f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.per_pair_cost[1][0], -(0.7f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn loss_formula_matches_per_pair_decomposition() {
        let y = labels(&[&[1, 0], &[1, 1], &[0, 0]]);
        let yh = preds(&[&[0.3, 0.3], &[0.6, 0.2], &[0.5, 0.9]]);
        let r = pit_loss_bruteforce(&y, &yh).unwrap();
        let n = 3.0;
        let t = 2.0;
        let direct: f64 = r
            .permutation
            .iter()
            .enumerate()
            .map(|(i, &m)| r.per_pair_cost[i][m])
            .sum();
        assert_abs_diff_eq!(r.loss, direct / (n * t), epsilon = 1e-12);
    }

    #[test]
    fn assignment_equals_brute_force_randomized() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(1..=6);
            let t = rng.gen_range(1..=64);
            let rows: Vec<Vec<u8>> = (0..n)
                .map(|_| (0..t).map(|_| rng.gen_range(0..=1)).collect())
                .collect();
            let ids = (0..n).map(|i| format!("s{i}")).collect();
            let y = LabelMatrix::from_rows(ids, &rows, 0.1).unwrap();
            let prows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..t).map(|_| rng.gen_range(0.0..=1.0)).collect())
                .collect();
            let yh = PredictionMatrix::from_rows(&prows, 0.1).unwrap();
            let bf = pit_loss_bruteforce(&y, &yh).unwrap();
            let asg = pit_loss_assignment(&y, &yh).unwrap();
            assert!((bf.loss - asg.loss).abs() < 1e-9);
        }
    }

    #[test]
    fn single_singer_is_mean_bce() {
        let y = labels(&[&[1, 0, 1]]);
        let yh = preds(&[&[0.9, 0.2, 0.6]]);
        let r = pit_loss_assignment(&y, &yh).unwrap();
        let expected =
            (bce(true, 0.9, DEFAULT_EPS) + bce(false, 0.2, DEFAULT_EPS) + bce(true, 0.6, DEFAULT_EPS))
                / 3.0;
        assert_abs_diff_eq!(r.loss, expected, epsilon = 1e-12);
        assert_eq!(r.permutation, vec![0]);
    }

    #[test]
    fn dominant_diagonal_gives_identity() {
        let y = labels(&[&[1, 1, 0, 0], &[0, 0, 1, 1], &[1, 0, 1, 0]]);
        let yh = preds(&[
            &[0.95, 0.9, 0.05, 0.1],
            &[0.1, 0.05, 0.9, 0.95],
            &[0.9, 0.1, 0.95, 0.05],
        ]);
        assert_eq!(pit_loss_assignment(&y, &yh).unwrap().permutation, vec![0, 1, 2]);
    }

    #[test]
    fn degrading_one_frame_strictly_increases_loss() {
        let y = labels(&[&[1, 0, 1], &[0, 1, 0]]);
        let yh = preds(&[&[1.0, 0.0, 1.0], &[0.0, 1.0, 0.0]]);
        let perfect = pit_loss_bruteforce(&y, &yh).unwrap().loss;
        let yh_bad = preds(&[&[1.0, 0.4, 1.0], &[0.0, 1.0, 0.0]]);
        let degraded = pit_loss_bruteforce(&y, &yh_bad).unwrap().loss;
        assert!(degraded > perfect);
    }

    #[test]
    fn shape_and_size_guards() {
        let y = labels(&[&[1, 0]]);
        let yh = preds(&[&[0.5, 0.5], &[0.5, 0.5]]);
        assert!(matches!(
            pit_loss_bruteforce(&y, &yh),
            Err(Error::ShapeMismatch { .. })
        ));
        let big_rows: Vec<Vec<u8>> = (0..9).map(|i| vec![u8::from(i % 2 == 0)]).collect();
        let ids = (0..9).map(|i| format!("s{i}")).collect();
        let y9 = LabelMatrix::from_rows(ids, &big_rows, 0.1).unwrap();
        let p9 = PredictionMatrix::from_rows(&vec![vec![0.5]; 9], 0.1).unwrap();
        assert!(matches!(
            pit_loss_bruteforce(&y9, &p9),
            Err(Error::TooManySingers { .. })
        ));
        // The assignment path has no enumeration limit.
        assert!(pit_loss_assignment(&y9, &p9).is_ok());
    }

    #[test]
    fn rejects_out_of_range_probability() {
        assert!(PredictionMatrix::from_rows(&[vec![1.2]], 0.1).is_err());
        assert!(PredictionMatrix::from_rows(&[vec![-0.1]], 0.1).is_err());
    }
}
