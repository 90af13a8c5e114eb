//! Box-constrained convex quadratic programming.
//!
//! The solver is projected gradient descent with a fixed `1/L` step, where
//! `L` is the spectral bound of the Hessian. No line search, no momentum:
//! descent is monotone for convex quadratics and every run is deterministic.

use crate::numerics::{spectral_bound, Matrix, Vector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("grid oracle limited to 2 variables, got {got}")]
    DimensionTooLarge { got: usize },
}

/// Convex quadratic `J(y) = 1/2 y^T H y + g^T y + c` over the box `[0,1]^n`.
#[derive(Debug, Clone)]
pub struct BoxQp {
    h: Matrix,
    g: Vector,
    c: f64,
}

impl BoxQp {
    /// `h` must be symmetric positive semi-definite; symmetry is asserted
    /// to 1e-10 on construction.
    pub fn new(h: Matrix, g: Vector, c: f64) -> Self {
        assert_eq!(h.rows(), h.cols(), "Hessian must be square");
        assert_eq!(h.rows(), g.len(), "Hessian and gradient sizes differ");
        for i in 0..h.rows() {
            for j in (i + 1)..h.cols() {
                assert!(
                    (h.get(i, j) - h.get(j, i)).abs() <= 1e-10,
                    "Hessian asymmetric at ({i},{j})"
                );
            }
        }
        Self { h, g, c }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn hessian(&self) -> &Matrix {
        &self.h
    }

    pub fn linear(&self) -> &Vector {
        &self.g
    }

    pub fn constant(&self) -> f64 {
        self.c
    }

    /// `J(y) = 1/2 y^T H y + g^T y + c`.
    pub fn objective(&self, y: &Vector) -> f64 {
        assert_eq!(y.len(), self.dim(), "objective: dimension mismatch");
        let hy = self.h.matvec(y);
        0.5 * y.dot(&hy) + self.g.dot(y) + self.c
    }

    /// `∇J(y) = H y + g`.
    pub fn gradient(&self, y: &Vector) -> Vector {
        assert_eq!(y.len(), self.dim(), "gradient: dimension mismatch");
        let hy = self.h.matvec(y);
        Vector::new_unchecked(
            hy.iter().zip(self.g.iter()).map(|(a, b)| a + b).collect(),
        )
    }
}

/// Stopping and budget knobs for [`solve`].
#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    /// Relative projected-gradient tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 10_000 }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub y: Vector,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Projected-gradient norm at exit.
    pub pg_norm: f64,
}

fn clip01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

fn projected_gradient_norm(y: &Vector, grad: &Vector) -> f64 {
    y.iter()
        .zip(grad.iter())
        .map(|(yi, gi)| {
            let moved = yi - clip01(yi - gi);
            moved * moved
        })
        .sum::<f64>()
        .sqrt()
}

/// Minimizes a [`BoxQp`] by projected gradient descent from `init`
/// (clipped into the box if necessary).
///
/// Stops when `‖y - clip(y - ∇J(y))‖ ≤ tol·(1 + ‖g‖)` or the iteration
/// budget runs out; in the latter case the best iterate is still returned
/// with `converged = false`.
pub fn solve(qp: &BoxQp, init: &Vector, opts: &QpOptions) -> QpSolution {
    assert_eq!(init.len(), qp.dim(), "solve: init dimension mismatch");
    let mut y = Vector::new_unchecked(init.iter().map(|v| clip01(*v)).collect());
    let tol_scale = opts.tol * (1.0 + qp.linear().norm());
    let lipschitz = spectral_bound(qp.hessian());

    // Zero Hessian: the objective is affine; in the projection pipeline this
    // only happens with g = 0, so the clipped start is already optimal.
    if lipschitz == 0.0 {
        let grad = qp.gradient(&y);
        let pg_norm = projected_gradient_norm(&y, &grad);
        return QpSolution {
            objective: qp.objective(&y),
            converged: pg_norm <= tol_scale,
            iterations: 0,
            pg_norm,
            y,
        };
    }

    let step = 1.0 / lipschitz;
    let mut iterations = 0;
    let mut converged = false;
    let mut pg_norm;
    #[cfg(debug_assertions)]
    let mut prev_objective = qp.objective(&y);
    loop {
        let grad = qp.gradient(&y);
        pg_norm = projected_gradient_norm(&y, &grad);
        if pg_norm <= tol_scale {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        y = Vector::new_unchecked(
            y.iter()
                .zip(grad.iter())
                .map(|(yi, gi)| clip01(yi - step * gi))
                .collect(),
        );
        iterations += 1;
        #[cfg(debug_assertions)]
        {
            let objective = qp.objective(&y);
            debug_assert!(
                objective <= prev_objective + 1e-9 * (1.0 + prev_objective.abs()),
                "objective increased: {prev_objective} -> {objective}"
            );
            prev_objective = objective;
        }
    }
    QpSolution {
        objective: qp.objective(&y),
        iterations,
        converged,
        pg_norm,
        y,
    }
}

/// Exhaustive minimization over the grid `{0, res, 2·res, …, 1}^n`.
///
/// Testing oracle only; refuses more than two variables. Ties keep the
/// first grid point in lexicographic scan order.
pub fn grid_oracle(qp: &BoxQp, resolution: f64) -> Result<Vector, QpError> {
    let n = qp.dim();
    if n > 2 {
        return Err(QpError::DimensionTooLarge { got: n });
    }
    assert!(resolution > 0.0 && resolution <= 1.0, "bad resolution");
    let steps = (1.0 / resolution).round() as usize;
    let point = |i: usize| {
        if i == steps {
            1.0
        } else {
            (i as f64 * resolution).min(1.0)
        }
    };
    let mut best = Vector::zeros(n);
    let mut best_objective = qp.objective(&best);
    match n {
        0 => {}
        1 => {
            for i in 0..=steps {
                let y = Vector::new_unchecked(vec![point(i)]);
                let obj = qp.objective(&y);
                if obj < best_objective {
                    best_objective = obj;
                    best = y;
                }
            }
        }
        2 => {
            for i in 0..=steps {
                for j in 0..=steps {
                    let y = Vector::new_unchecked(vec![point(i), point(j)]);
                    let obj = qp.objective(&y);
                    if obj < best_objective {
                        best_objective = obj;
                        best = y;
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn qp1(h: f64, g: f64, c: f64) -> BoxQp {
        BoxQp::new(
            Matrix::new(1, 1, vec![h]).unwrap(),
            Vector::new(vec![g]).unwrap(),
            c,
        )
    }

    #[test]
    fn objective_constant_when_h_and_g_vanish() {
        let qp = BoxQp::new(Matrix::zeros(2, 2), Vector::zeros(2), 5.0);
        let y = Vector::new(vec![0.3, 0.9]).unwrap();
        assert_eq!(qp.objective(&y), 5.0);
    }

    #[test]
    fn objective_hand_evaluation() {
        let qp = qp1(2.0, -1.0, 0.5);
        let y = Vector::new(vec![0.5]).unwrap();
        assert!((qp.objective(&y) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn objective_at_origin_is_constant_term() {
        let qp = BoxQp::new(
            Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]),
            Vector::new(vec![-3.0, 0.0]).unwrap(),
            1.25,
        );
        assert_eq!(qp.objective(&Vector::zeros(2)), 1.25);
    }

    #[test]
    fn gradient_at_origin_is_linear_term() {
        let qp = BoxQp::new(
            Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]),
            Vector::new(vec![-3.0, 0.5]).unwrap(),
            0.0,
        );
        let g = qp.gradient(&Vector::zeros(2));
        assert_eq!(g.as_slice(), &[-3.0, 0.5]);
    }

    #[test]
    fn gradient_identity_hessian_returns_point() {
        let qp = BoxQp::new(Matrix::identity(3), Vector::zeros(3), 0.0);
        let y = Vector::new(vec![0.1, 0.5, 0.9]).unwrap();
        assert_eq!(qp.gradient(&y).as_slice(), y.as_slice());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let n = 1 + rng.gen_range(0..3usize);
            let mut b = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    b.set(i, j, rng.gen_range(-1.0..1.0));
                }
            }
            let h = crate::numerics::gram(&b);
            let g = Vector::new((0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
            let qp = BoxQp::new(h, g, rng.gen_range(-1.0..1.0));
            let y = Vector::new((0..n).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
            let analytic = qp.gradient(&y);
            let step = 1e-5;
            for i in 0..n {
                let mut plus = y.as_slice().to_vec();
                let mut minus = plus.clone();
                plus[i] += step;
                minus[i] -= step;
                let fd = (qp.objective(&Vector::new_unchecked(plus))
                    - qp.objective(&Vector::new_unchecked(minus)))
                    / (2.0 * step);
                let denom = 1.0 + analytic[i].abs();
                assert!(
                    (analytic[i] - fd).abs() <= 1e-6 * denom,
                    "component {i}: {} vs {fd}",
                    analytic[i]
                );
            }
        }
    }

    #[test]
    fn solve_interior_optimum() {
        let qp = qp1(2.0, -1.0, 0.0);
        let sol = solve(&qp, &Vector::zeros(1), &QpOptions::default());
        assert!(sol.converged);
        assert!((sol.y[0] - 0.5).abs() < 1e-7, "y {}", sol.y[0]);
    }

    #[test]
    fn solve_active_lower_bound() {
        let qp = qp1(2.0, 6.0, 0.0);
        let sol = solve(&qp, &Vector::new(vec![0.7]).unwrap(), &QpOptions::default());
        assert!(sol.converged);
        assert_eq!(sol.y[0], 0.0);
    }

    #[test]
    fn solve_coupled_2d_matches_grid_oracle() {
        let qp = BoxQp::new(
            Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]),
            Vector::new(vec![-3.0, 0.0]).unwrap(),
            0.0,
        );
        let sol = solve(&qp, &Vector::zeros(2), &QpOptions::default());
        let grid = grid_oracle(&qp, 1e-3).unwrap();
        assert!(sol.converged);
        for i in 0..2 {
            assert!(
                (sol.y[i] - grid[i]).abs() <= 2e-3,
                "coordinate {i}: {} vs {}",
                sol.y[i],
                grid[i]
            );
        }
    }

    #[test]
    fn solve_zero_hessian_returns_clipped_init() {
        let qp = BoxQp::new(Matrix::zeros(2, 2), Vector::zeros(2), 3.0);
        let sol = solve(&qp, &Vector::new(vec![1.7, -0.4]).unwrap(), &QpOptions::default());
        assert_eq!(sol.y.as_slice(), &[1.0, 0.0]);
        assert!(sol.converged);
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn solve_iterates_stay_feasible_and_objective_descends() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let n = 1 + rng.gen_range(0..2usize);
            let mut b = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    b.set(i, j, rng.gen_range(-1.0..1.0));
                }
            }
            let h = crate::numerics::gram(&b);
            let g = Vector::new((0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
            let qp = BoxQp::new(h, g, 0.0);
            let init =
                Vector::new((0..n).map(|_| rng.gen_range(-0.5..1.5)).collect()).unwrap();
            // Monotone descent is debug-asserted inside solve on every step.
            let sol = solve(&qp, &init, &QpOptions::default());
            for i in 0..n {
                assert!((-1e-12..=1.0 + 1e-12).contains(&sol.y[i]));
            }
            assert!((qp.objective(&sol.y) - sol.objective).abs() <= 1e-10);
        }
    }

    #[test]
    fn solve_kkt_conditions_at_exit() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let opts = QpOptions::default();
        for _ in 0..50 {
            let n = 2;
            let mut b = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    b.set(i, j, rng.gen_range(-1.0..1.0));
                }
            }
            let mut h = crate::numerics::gram(&b);
            for i in 0..n {
                h.set(i, i, h.get(i, i) + 0.1);
            }
            let g = Vector::new((0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
            let qp = BoxQp::new(h, g, 0.0);
            let sol = solve(&qp, &Vector::zeros(n), &opts);
            if !sol.converged {
                continue;
            }
            let slack = 10.0 * opts.tol * (1.0 + qp.linear().norm());
            let grad = qp.gradient(&sol.y);
            for i in 0..n {
                if sol.y[i] <= 1e-12 {
                    assert!(grad[i] >= -slack, "lower bound KKT: {}", grad[i]);
                } else if sol.y[i] >= 1.0 - 1e-12 {
                    assert!(grad[i] <= slack, "upper bound KKT: {}", grad[i]);
                } else {
                    assert!(grad[i].abs() <= slack, "interior KKT: {}", grad[i]);
                }
            }
        }
    }

    #[test]
    fn grid_oracle_constant_objective_returns_origin() {
        let qp = BoxQp::new(Matrix::zeros(2, 2), Vector::zeros(2), 1.0);
        let best = grid_oracle(&qp, 0.25).unwrap();
        assert_eq!(best.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn grid_oracle_finds_on_grid_interior_optimum() {
        let qp = qp1(2.0, -1.0, 0.0);
        let best = grid_oracle(&qp, 0.25).unwrap();
        assert_eq!(best.as_slice(), &[0.5]);
    }

    #[test]
    fn grid_oracle_rejects_large_instances() {
        let qp = BoxQp::new(Matrix::zeros(3, 3), Vector::zeros(3), 0.0);
        assert!(matches!(
            grid_oracle(&qp, 0.5),
            Err(QpError::DimensionTooLarge { got: 3 })
        ));
    }

    #[test]
    fn solve_agrees_with_grid_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let resolution = 1e-2;
        for trial in 0..100 {
            let n = 1 + (trial % 2);
            let mut b = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    b.set(i, j, rng.gen_range(-1.0..1.0));
                }
            }
            let mut h = crate::numerics::gram(&b);
            for i in 0..n {
                h.set(i, i, h.get(i, i) + 0.1);
            }
            let g = Vector::new((0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap();
            let qp = BoxQp::new(h, g, 0.0);
            let sol = solve(&qp, &Vector::zeros(n), &QpOptions::default());
            let grid = grid_oracle(&qp, resolution).unwrap();
            for i in 0..n {
                assert!(
                    (sol.y[i] - grid[i]).abs() <= 2.0 * resolution,
                    "coordinate {i}: {} vs {}",
                    sol.y[i],
                    grid[i]
                );
            }
        }
    }
}
