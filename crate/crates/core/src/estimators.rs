//! The supervised/ridge closed form, the oracle fit, self-learning, and the
//! projected estimator family.
//!
//! The projected estimators work by mapping every soft labeling
//! `y_u ∈ [0,1]^{N_u}` of the unlabeled block to the least-squares solution
//! it would induce, projecting the supervised solution onto that convex set
//! of solutions, and refitting on the imputed labels. The distance used for
//! the projection is a data-weighted metric; which rows weight it is what
//! distinguishes the three variants.

use crate::data::SemiSplit;
use crate::numerics::{gram, Cholesky, Matrix, NumericsError, Vector};
use crate::qp::{solve, BoxQp, QpOptions};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimatorError {
    /// The Gram matrix behind a closed form is rank deficient. Adding a
    /// ridge term (or more labeled data) is the remedy.
    #[error("{context}: {source}")]
    NotPositiveDefinite {
        context: &'static str,
        source: NumericsError,
    },
}

fn pd_context(context: &'static str) -> impl FnOnce(NumericsError) -> EstimatorError {
    move |source| EstimatorError::NotPositiveDefinite { context, source }
}

/// Linear classifier parameters; entry 0 is the bias weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    w: Vector,
}

impl WeightVector {
    pub fn new(w: Vector) -> Self {
        Self { w }
    }

    pub fn as_vector(&self) -> &Vector {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// L2 regularization strength for the supervised fit. The bias weight is
/// left unpenalized unless `penalize_bias` is set.
#[derive(Debug, Clone, Copy)]
pub struct RidgeConfig {
    pub lambda: f64,
    pub penalize_bias: bool,
}

impl RidgeConfig {
    pub fn none() -> Self {
        Self { lambda: 0.0, penalize_bias: false }
    }

    pub fn with_lambda(lambda: f64) -> Self {
        assert!(lambda >= 0.0, "lambda must be non-negative");
        Self { lambda, penalize_bias: false }
    }
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self::none()
    }
}

/// Which rows weight the projection metric and which constraint set is used.
///
/// * `Projection` — metric over labeled+unlabeled rows, constraint set from
///   soft labelings of the unlabeled block appended to the known labels.
/// * `Icls` — same constraint set, metric over labeled rows only.
/// * `Transductive` — metric and constraint set from unlabeled rows alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Projection,
    Icls,
    Transductive,
}

/// Outcome of a projected fit: the recovered weights, the imputed soft
/// labels, and the QP diagnostics.
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub w_semi: WeightVector,
    pub y_u_hat: Vector,
    pub qp_objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Self-learning outcome with its stopping diagnostics.
#[derive(Debug, Clone)]
pub struct SelfLearningFit {
    pub w: WeightVector,
    pub refits: usize,
    pub converged: bool,
}

fn ridge_gram(x: &Matrix, ridge: &RidgeConfig) -> Matrix {
    let mut g = gram(x);
    if ridge.lambda > 0.0 {
        let skip = usize::from(!ridge.penalize_bias);
        for i in skip..g.rows() {
            g.set(i, i, g.get(i, i) + ridge.lambda);
        }
    }
    g
}

/// Least squares fit `(X^T X + λI')^{-1} X^T y`, where `I'` is the identity
/// with a zero at the bias entry unless `penalize_bias` is set. Fractional
/// labels in `[0,1]` are accepted; the projection recovery relies on that.
pub fn fit_supervised(
    x: &Matrix,
    y: &Vector,
    ridge: &RidgeConfig,
) -> Result<WeightVector, EstimatorError> {
    assert_eq!(x.rows(), y.len(), "fit_supervised: row/label mismatch");
    let g = ridge_gram(x, ridge);
    let rhs = x.transpose_matvec(y);
    let w = Cholesky::new(&g)
        .map_err(pd_context("supervised fit"))?
        .solve_vec(&rhs);
    Ok(WeightVector::new(w))
}

/// The fit we would obtain if the unlabeled objects carried their true
/// labels: a supervised fit on the stacked design. Evaluation only.
pub fn fit_oracle(split: &SemiSplit, ridge: &RidgeConfig) -> Result<WeightVector, EstimatorError> {
    fit_supervised(
        &split.extended_design(),
        &split.extended_true_labels(),
        ridge,
    )
}

/// `X · w`.
pub fn decision_values(w: &WeightVector, x: &Matrix) -> Vector {
    x.matvec(w.as_vector())
}

/// Hard labels: 1 when the decision value is at least 0.5, else 0.
pub fn classify(w: &WeightVector, x: &Matrix) -> Vector {
    Vector::new_unchecked(
        decision_values(w, x)
            .iter()
            .map(|v| if *v >= 0.5 { 1.0 } else { 0.0 })
            .collect(),
    )
}

/// Iterated pseudo-labeling: hard-classify every unlabeled object, refit on
/// labeled plus pseudo-labeled rows, and stop once the pseudo-labels repeat
/// or `max_iter` refits have run.
pub fn fit_self_learning(
    split: &SemiSplit,
    ridge: &RidgeConfig,
    max_iter: usize,
) -> Result<SelfLearningFit, EstimatorError> {
    let mut w = fit_supervised(split.x(), split.y(), ridge)?;
    if split.n_unlabeled() == 0 {
        return Ok(SelfLearningFit { w, refits: 0, converged: true });
    }
    let x_e = split.extended_design();
    let mut previous: Option<Vector> = None;
    let mut refits = 0;
    let mut converged = false;
    while refits < max_iter {
        let pseudo = classify(&w, split.x_unlabeled());
        if previous.as_ref() == Some(&pseudo) {
            converged = true;
            break;
        }
        w = fit_supervised(&x_e, &split.y().concat(&pseudo), ridge)?;
        previous = Some(pseudo);
        refits += 1;
    }
    if !converged && refits < max_iter {
        converged = true;
    }
    Ok(SelfLearningFit { w, refits, converged })
}

/// True when some unlabeled decision value falls outside `[0,1]`, i.e. when
/// no soft labeling can reproduce the supervised solution and the projection
/// will move it.
pub fn needs_update(w_sup: &WeightVector, x_u: &Matrix) -> bool {
    decision_values(w_sup, x_u)
        .iter()
        .any(|v| *v > 1.0 || *v < 0.0)
}

struct ConstraintMap {
    /// `G^{-1} D^T` restricted to unlabeled columns.
    a_u: Matrix,
    /// `A_l y` for the labeled columns; zero for the transductive set.
    base: Vector,
    /// Factor of the constraint-set Gram, reused for the recovery solve.
    chol: Cholesky,
}

fn constraint_map(split: &SemiSplit, variant: Variant) -> Result<ConstraintMap, EstimatorError> {
    let d = split.n_columns();
    match variant {
        Variant::Projection | Variant::Icls => {
            let x_e = split.extended_design();
            let g = gram(&x_e);
            let chol = Cholesky::new(&g).map_err(pd_context("constraint set"))?;
            let a = chol.solve_mat(&x_e.transpose());
            let a_l = a.columns(0, split.n_labeled());
            let a_u = a.columns(split.n_labeled(), a.cols());
            let base = a_l.matvec(split.y());
            Ok(ConstraintMap { a_u, base, chol })
        }
        Variant::Transductive => {
            let x_u = split.x_unlabeled();
            let g = gram(x_u);
            let chol = Cholesky::new(&g).map_err(pd_context("transductive constraint set"))?;
            let a_u = chol.solve_mat(&x_u.transpose());
            Ok(ConstraintMap { a_u, base: Vector::zeros(d), chol })
        }
    }
}

fn metric_gram(split: &SemiSplit, variant: Variant) -> Matrix {
    match variant {
        Variant::Projection => gram(&split.extended_design()),
        Variant::Icls => gram(split.x()),
        Variant::Transductive => gram(split.x_unlabeled()),
    }
}

fn build_qp_from_map(
    split: &SemiSplit,
    variant: Variant,
    map: &ConstraintMap,
    reference: &WeightVector,
) -> BoxQp {
    let m = metric_gram(split, variant);
    let n_u = split.n_unlabeled();

    // r = A_l y - w_ref
    let r = Vector::new_unchecked(
        map.base
            .iter()
            .zip(reference.as_vector().iter())
            .map(|(b, w)| b - w)
            .collect(),
    );

    // H = 2 A_u^T M A_u, g = 2 A_u^T M r, c = r^T M r
    let b = m.matmul(&map.a_u);
    let a_u_t = map.a_u.transpose();
    let mut h = a_u_t.matmul(&b);
    for i in 0..n_u {
        for j in i..n_u {
            let v = 2.0 * h.get(i, j);
            h.set(i, j, v);
            h.set(j, i, v);
        }
    }
    let m_r = m.matvec(&r);
    let g = Vector::new_unchecked(a_u_t.matvec(&m_r).iter().map(|v| 2.0 * v).collect());
    let c = r.dot(&m_r);
    BoxQp::new(h, g, c)
}

/// Builds the box-constrained QP whose objective at `y_u` equals the squared
/// projection distance between the solution induced by `y_u` and the
/// supervised solution under `ridge`.
pub fn build_projection_qp(
    split: &SemiSplit,
    variant: Variant,
    ridge: &RidgeConfig,
) -> Result<BoxQp, EstimatorError> {
    let w_sup = fit_supervised(split.x(), split.y(), ridge)?;
    let map = constraint_map(split, variant)?;
    Ok(build_qp_from_map(split, variant, &map, &w_sup))
}

/// Projects an arbitrary reference solution onto the variant's constraint
/// set and refits on the imputed labels.
pub fn project_reference(
    split: &SemiSplit,
    variant: Variant,
    reference: &WeightVector,
    opts: &QpOptions,
) -> Result<ProjectionResult, EstimatorError> {
    let map = constraint_map(split, variant)?;
    let qp = build_qp_from_map(split, variant, &map, reference);
    // Warm start at the clipped reference predictions: when all decision
    // values already lie in [0,1] this is the optimum and the solver exits
    // after zero iterations.
    let init = Vector::new_unchecked(
        decision_values(reference, split.x_unlabeled())
            .iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect(),
    );
    let sol = solve(&qp, &init, opts);

    // Recover the weights through the unregularized closed form on the
    // imputed labels, reusing the constraint-set factorization; membership
    // in the constraint set is by construction.
    let w_semi = match variant {
        Variant::Projection | Variant::Icls => {
            let x_e = split.extended_design();
            let labels = split.y().concat(&sol.y);
            let rhs = x_e.transpose_matvec(&labels);
            WeightVector::new(map.chol.solve_vec(&rhs))
        }
        Variant::Transductive => {
            let rhs = split.x_unlabeled().transpose_matvec(&sol.y);
            WeightVector::new(map.chol.solve_vec(&rhs))
        }
    };
    debug_assert!(sol.objective >= -1e-9, "negative squared distance {}", sol.objective);
    debug_assert!(sol.y.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
    Ok(ProjectionResult {
        w_semi,
        y_u_hat: sol.y,
        qp_objective: sol.objective,
        iterations: sol.iterations,
        converged: sol.converged,
    })
}

/// The projected semi-supervised fit: solve the soft-label QP against the
/// supervised solution under `ridge`, then refit on the imputed labels.
pub fn fit_projected(
    split: &SemiSplit,
    variant: Variant,
    ridge: &RidgeConfig,
    opts: &QpOptions,
) -> Result<ProjectionResult, EstimatorError> {
    let w_sup = fit_supervised(split.x(), split.y(), ridge)?;
    project_reference(split, variant, &w_sup, opts)
}
