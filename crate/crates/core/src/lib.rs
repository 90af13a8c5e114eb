//! Safe semi-supervised least squares classification.
//!
//! The centerpiece is a projected estimator: the supervised least-squares
//! solution is projected onto the convex set of solutions reachable by soft
//! labelings of the unlabeled data. Measured on the labeled and unlabeled
//! training rows together, its quadratic loss never exceeds the supervised
//! loss. The crate also ships the standard baselines (self-learning, the
//! all-labels oracle), the metrics the guarantee is stated in, and a seeded
//! experiment harness with a CLI for loss-ratio, learning-curve, and
//! cross-validation protocols.

pub mod data;
pub mod estimators;
pub mod evaluation;
pub mod harness;
pub mod numerics;
pub mod qp;

pub use data::{
    augment_bias, impute_median, kfold_indices, load_csv, sample_split, split_from_indices,
    DataError, Dataset, Seed, SemiSplit, SplitOptions,
};
pub use estimators::{
    build_projection_qp, classify, decision_values, fit_oracle, fit_projected,
    fit_self_learning, fit_supervised, needs_update, project_reference, EstimatorError,
    ProjectionResult, RidgeConfig, SelfLearningFit, Variant, WeightVector,
};
pub use evaluation::{
    compare, contrastive_value, error_rate, loss_ratio, metric_distance, quadratic_loss,
    EvalError, EvalRecord, Scope,
};
pub use harness::{
    aggregate_learning_curve, emit_report, fit_estimator, read_report, run_cross_validation,
    run_learning_curve, run_loss_ratio, CurvePoint, EstimatorKind, ExperimentConfig,
    FittedEstimator, HarnessError, Protocol, ReportFormat, ReportRow, DEFAULT_CURVE_SIZES,
    HARNESS_QP_OPTIONS,
};
pub use numerics::{
    gram, spd_solve_mat, spd_solve_vec, spectral_bound, Cholesky, Matrix, NumericsError, Vector,
};
pub use qp::{grid_oracle, solve as solve_qp, BoxQp, QpError, QpOptions, QpSolution};
