//! Loss, error, distance, and loss-ratio metrics used by the improvement
//! guarantee and the experiment harness.

use crate::estimators::{classify, decision_values, WeightVector};
use crate::numerics::{gram, Matrix, Vector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("supervised loss is zero; ratio undefined")]
    DegenerateDenominator,
}

/// Where a comparison was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    TrainAll,
    UnlabeledOnly,
    Test,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::TrainAll => "train_all",
            Scope::UnlabeledOnly => "unlabeled_only",
            Scope::Test => "test",
        }
    }
}

/// Paired evaluation of a semi-supervised fit against its supervised
/// counterpart on one scope.
#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub loss_sup: f64,
    pub loss_semi: f64,
    pub ratio: f64,
    pub error_sup: f64,
    pub error_semi: f64,
    pub scope: Scope,
}

/// Sum of squared residuals `‖Xw − y‖²`. Not averaged; harness reports
/// divide by the row count where a per-object figure is wanted.
pub fn quadratic_loss(w: &WeightVector, x: &Matrix, y: &Vector) -> f64 {
    assert_eq!(x.rows(), y.len(), "quadratic_loss: row/label mismatch");
    decision_values(w, x)
        .iter()
        .zip(y.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum()
}

/// Fraction of rows misclassified at the 0.5 threshold.
pub fn error_rate(w: &WeightVector, x: &Matrix, y: &Vector) -> f64 {
    assert_eq!(x.rows(), y.len(), "error_rate: row/label mismatch");
    if x.rows() == 0 {
        return 0.0;
    }
    let wrong = classify(w, x)
        .iter()
        .zip(y.iter())
        .filter(|(p, t)| p != t)
        .count();
    wrong as f64 / x.rows() as f64
}

/// Data-weighted distance `sqrt((w−w')^T X_o^T X_o (w−w'))`, evaluated
/// through the Gram quadratic form. Identical (up to rounding) to the norm
/// of the prediction difference `‖X_o w − X_o w'‖`.
pub fn metric_distance(w: &WeightVector, w2: &WeightVector, x_o: &Matrix) -> f64 {
    assert_eq!(w.len(), w2.len(), "metric_distance: weight length mismatch");
    let diff = Vector::new_unchecked(
        w.as_vector()
            .iter()
            .zip(w2.as_vector().iter())
            .map(|(a, b)| a - b)
            .collect(),
    );
    let g = gram(x_o);
    diff.dot(&g.matvec(&diff)).max(0.0).sqrt()
}

/// Ratio of quadratic losses on the same data. Errors out when the
/// supervised loss vanishes, so callers must skip (and log) such trials
/// rather than report an infinity.
pub fn loss_ratio(
    w_semi: &WeightVector,
    w_sup: &WeightVector,
    x: &Matrix,
    y: &Vector,
) -> Result<f64, EvalError> {
    let denom = quadratic_loss(w_sup, x, y);
    if denom == 0.0 {
        return Err(EvalError::DegenerateDenominator);
    }
    Ok(quadratic_loss(w_semi, x, y) / denom)
}

/// Worst-case loss difference `max over y_u in [0,1]^{N_u}` of
/// `L(w, X_e, y_e) − L(w_sup, X_e, y_e)`, in closed form.
///
/// The difference is affine in each soft label with coefficient
/// `−2 x_u^T (w − w_sup)`, so the maximizing vertex assigns 0 where the
/// prediction under `w` exceeds the one under `w_sup` and 1 otherwise.
pub fn contrastive_value(
    w: &WeightVector,
    w_sup: &WeightVector,
    x: &Matrix,
    y: &Vector,
    x_u: &Matrix,
) -> f64 {
    let base = quadratic_loss(w, x, y) - quadratic_loss(w_sup, x, y);
    let pred_w = decision_values(w, x_u);
    let pred_sup = decision_values(w_sup, x_u);
    let mut total = base;
    for (a, b) in pred_w.iter().zip(pred_sup.iter()) {
        // residual difference for label t: (a−t)² − (b−t)² = a²−b² −2t(a−b)
        total += a * a - b * b;
        if a <= b {
            total += -2.0 * (a - b);
        }
    }
    total
}

/// Builds an [`EvalRecord`] comparing a fit against the supervised fit on
/// one block of data.
pub fn compare(
    w_semi: &WeightVector,
    w_sup: &WeightVector,
    x: &Matrix,
    y: &Vector,
    scope: Scope,
) -> Result<EvalRecord, EvalError> {
    let loss_sup = quadratic_loss(w_sup, x, y);
    if loss_sup == 0.0 {
        return Err(EvalError::DegenerateDenominator);
    }
    let loss_semi = quadratic_loss(w_semi, x, y);
    Ok(EvalRecord {
        ratio: loss_semi / loss_sup,
        loss_sup,
        loss_semi,
        error_sup: error_rate(w_sup, x, y),
        error_semi: error_rate(w_semi, x, y),
        scope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{fit_supervised, RidgeConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn quadratic_loss_zero_case() {
        let w = WeightVector::new(Vector::zeros(1));
        let x = Matrix::from_rows(&[&[1.0], &[2.0]]);
        let y = Vector::zeros(2);
        assert_eq!(quadratic_loss(&w, &x, &y), 0.0);
    }

    #[test]
    fn quadratic_loss_residual_sum() {
        let w = WeightVector::new(Vector::new(vec![1.0]).unwrap());
        let x = Matrix::from_rows(&[&[1.0], &[2.0]]);
        let y = Vector::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(quadratic_loss(&w, &x, &y), 2.0);
    }

    #[test]
    fn quadratic_loss_minimized_by_least_squares() {
        let x = Matrix::from_rows(&[&[1.0, 0.3], &[1.0, -0.4], &[1.0, 1.7], &[1.0, 0.9]]);
        let y = Vector::new(vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let w = fit_supervised(&x, &y, &RidgeConfig::none()).unwrap();
        let base = quadratic_loss(&w, &x, &y);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let perturbed = WeightVector::new(
                Vector::new(
                    w.as_vector()
                        .iter()
                        .map(|v| v + rng.gen_range(-0.3..0.3))
                        .collect(),
                )
                .unwrap(),
            );
            assert!(quadratic_loss(&perturbed, &x, &y) >= base - 1e-12);
        }
    }

    #[test]
    fn error_rate_perfect_and_constant() {
        let x = Matrix::from_rows(&[&[1.0, -2.0], &[1.0, -1.0], &[1.0, 1.0], &[1.0, 2.0]]);
        let y = Vector::new(vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let w = fit_supervised(&x, &y, &RidgeConfig::none()).unwrap();
        assert_eq!(error_rate(&w, &x, &y), 0.0);
        // constant-1 classifier errs on the two zeros
        let ones = WeightVector::new(Vector::new(vec![1.0, 0.0]).unwrap());
        assert_eq!(error_rate(&ones, &x, &y), 0.5);
    }

    #[test]
    fn error_rate_complement_symmetry() {
        let x = Matrix::from_rows(&[&[1.0, 0.4], &[1.0, -1.0], &[1.0, 2.0]]);
        let y = Vector::new(vec![1.0, 0.0, 1.0]).unwrap();
        let w = WeightVector::new(Vector::new(vec![0.2, 0.3]).unwrap());
        let flipped = Vector::new(y.iter().map(|v| 1.0 - v).collect()).unwrap();
        let e = error_rate(&w, &x, &y);
        let e_flipped = error_rate(&w, &x, &flipped);
        assert_close(e + e_flipped, 1.0, 1e-15);
    }

    #[test]
    fn metric_distance_axioms() {
        let x_o = Matrix::from_rows(&[&[1.0, 0.2], &[1.0, -0.7], &[1.0, 1.4]]);
        let w1 = WeightVector::new(Vector::new(vec![0.1, -0.5]).unwrap());
        let w2 = WeightVector::new(Vector::new(vec![-0.3, 0.8]).unwrap());
        assert_eq!(metric_distance(&w1, &w1, &x_o), 0.0);
        assert_eq!(metric_distance(&w1, &w2, &x_o), metric_distance(&w2, &w1, &x_o));
    }

    #[test]
    fn metric_distance_equals_prediction_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let x_o = Matrix::new_unchecked(
                4,
                3,
                (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            );
            let w1 = WeightVector::new(
                Vector::new((0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
            );
            let w2 = WeightVector::new(
                Vector::new((0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
            );
            let d = metric_distance(&w1, &w2, &x_o);
            let pred_diff: f64 = decision_values(&w1, &x_o)
                .iter()
                .zip(decision_values(&w2, &x_o).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert_close(d, pred_diff, 1e-10);
        }
    }

    #[test]
    fn metric_distance_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let x_o = Matrix::new_unchecked(
                5,
                2,
                (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            );
            let mk = |rng: &mut ChaCha8Rng| {
                WeightVector::new(
                    Vector::new((0..2).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
                )
            };
            let (a, b, c) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
            let lhs = metric_distance(&a, &c, &x_o);
            let rhs = metric_distance(&a, &b, &x_o) + metric_distance(&b, &c, &x_o);
            assert!(lhs <= rhs + 1e-12, "{lhs} > {rhs}");
        }
    }

    #[test]
    fn loss_ratio_identical_weights_is_one() {
        let x = Matrix::from_rows(&[&[1.0, 0.5], &[1.0, -0.5]]);
        let y = Vector::new(vec![1.0, 0.0]).unwrap();
        let w = WeightVector::new(Vector::new(vec![0.4, 0.2]).unwrap());
        assert_eq!(loss_ratio(&w, &w, &x, &y).unwrap(), 1.0);
    }

    #[test]
    fn loss_ratio_degenerate_denominator() {
        let x = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let y = Vector::new(vec![1.0, 0.0]).unwrap();
        // Exact interpolation: supervised loss 0.
        let w_sup = fit_supervised(&x, &y, &RidgeConfig::none()).unwrap();
        let other = WeightVector::new(Vector::new(vec![0.5, 0.5]).unwrap());
        assert!(matches!(
            loss_ratio(&other, &w_sup, &x, &y),
            Err(EvalError::DegenerateDenominator)
        ));
    }

    #[test]
    fn contrastive_identical_weights_is_zero() {
        let x = Matrix::from_rows(&[&[1.0, 0.5], &[1.0, -0.5]]);
        let y = Vector::new(vec![1.0, 0.0]).unwrap();
        let x_u = Matrix::from_rows(&[&[1.0, 2.0]]);
        let w = WeightVector::new(Vector::new(vec![0.4, 0.2]).unwrap());
        assert_eq!(contrastive_value(&w, &w, &x, &y, &x_u), 0.0);
    }

    #[test]
    fn contrastive_empty_unlabeled_reduces_to_loss_difference() {
        let x = Matrix::from_rows(&[&[1.0, 0.5], &[1.0, -0.5]]);
        let y = Vector::new(vec![1.0, 0.0]).unwrap();
        let x_u = Matrix::zeros(0, 2);
        let w = WeightVector::new(Vector::new(vec![0.9, -0.1]).unwrap());
        let w_sup = WeightVector::new(Vector::new(vec![0.4, 0.2]).unwrap());
        let expected = quadratic_loss(&w, &x, &y) - quadratic_loss(&w_sup, &x, &y);
        assert_close(contrastive_value(&w, &w_sup, &x, &y, &x_u), expected, 1e-15);
    }

    #[test]
    fn contrastive_matches_grid_maximization() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Matrix::from_rows(&[&[1.0, 0.3], &[1.0, -0.8], &[1.0, 1.2]]);
        let y = Vector::new(vec![0.0, 0.0, 1.0]).unwrap();
        for trial in 0..30 {
            let n_u = 1 + (trial % 2);
            let x_u = Matrix::new_unchecked(
                n_u,
                2,
                (0..2 * n_u)
                    .map(|i| if i % 2 == 0 { 1.0 } else { rng.gen_range(-2.0..2.0) })
                    .collect(),
            );
            let mk = |rng: &mut ChaCha8Rng| {
                WeightVector::new(
                    Vector::new((0..2).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
                )
            };
            let w = mk(&mut rng);
            let w_sup = mk(&mut rng);
            let closed = contrastive_value(&w, &w_sup, &x, &y, &x_u);
            // Grid maximization of the loss difference over soft labels.
            let x_e = Matrix::vstack(&x, &x_u);
            let steps = 100usize;
            let mut best = f64::NEG_INFINITY;
            let eval = |labels: &Vector| {
                let y_e = y.concat(labels);
                quadratic_loss(&w, &x_e, &y_e) - quadratic_loss(&w_sup, &x_e, &y_e)
            };
            if n_u == 1 {
                for i in 0..=steps {
                    let v = i as f64 / steps as f64;
                    best = best.max(eval(&Vector::new_unchecked(vec![v])));
                }
            } else {
                for i in 0..=steps {
                    for j in 0..=steps {
                        let v = Vector::new_unchecked(vec![
                            i as f64 / steps as f64,
                            j as f64 / steps as f64,
                        ]);
                        best = best.max(eval(&v));
                    }
                }
            }
            assert_close(closed, best, 1e-6);
        }
    }

    #[test]
    fn compare_builds_consistent_record() {
        let x = Matrix::from_rows(&[&[1.0, 0.3], &[1.0, -0.8], &[1.0, 1.2]]);
        let y = Vector::new(vec![0.0, 0.0, 1.0]).unwrap();
        let w_sup = fit_supervised(&x, &y, &RidgeConfig::none()).unwrap();
        let w_semi = WeightVector::new(Vector::new(vec![0.1, 0.2]).unwrap());
        let rec = compare(&w_semi, &w_sup, &x, &y, Scope::Test).unwrap();
        assert_close(rec.ratio, rec.loss_semi / rec.loss_sup, 1e-15);
        assert!(rec.error_sup >= 0.0 && rec.error_sup <= 1.0);
        assert_eq!(rec.scope, Scope::Test);
    }
}
