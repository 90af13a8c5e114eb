//! Seeded experiment protocols and report emission.
//!
//! Three protocols: loss-ratio resampling, learning curves over growing
//! unlabeled subsets, and repeated k-fold cross-validation with a small
//! labeled budget per fold. Every repeat draws its randomness from
//! `base_seed + repeat`, so reports are reproducible regardless of how
//! repeats are scheduled; rows are sorted deterministically before they are
//! returned or written.

use crate::data::{
    draw_split_indices, split_from_indices, Dataset, Seed, SemiSplit, SplitOptions,
};
use crate::estimators::{
    decision_values, fit_oracle, fit_projected, fit_self_learning, fit_supervised,
    EstimatorError, RidgeConfig, Variant, WeightVector,
};
use crate::evaluation::{error_rate, quadratic_loss, Scope};
use crate::numerics::{Matrix, Vector};
use crate::qp::QpOptions;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error("every trial failed; nothing to report")]
    AllTrialsFailed,
    #[error(
        "improvement guarantee violated: converged projection trial (repeat {repeat}) \
         has train_all ratio {ratio}"
    )]
    GuaranteeViolated { repeat: usize, ratio: f64 },
    #[error("report has no rows")]
    EmptyReport,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serialize(String),
}

/// The estimators the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EstimatorKind {
    Supervised,
    SelfLearning,
    Projection,
    Icls,
    Transductive,
    Oracle,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::Supervised,
        EstimatorKind::SelfLearning,
        EstimatorKind::Projection,
        EstimatorKind::Icls,
        EstimatorKind::Transductive,
        EstimatorKind::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Supervised => "supervised",
            EstimatorKind::SelfLearning => "self_learning",
            EstimatorKind::Projection => "projection",
            EstimatorKind::Icls => "icls",
            EstimatorKind::Transductive => "transductive",
            EstimatorKind::Oracle => "oracle",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "supervised" => Ok(EstimatorKind::Supervised),
            "self_learning" => Ok(EstimatorKind::SelfLearning),
            "projection" => Ok(EstimatorKind::Projection),
            "icls" => Ok(EstimatorKind::Icls),
            "transductive" => Ok(EstimatorKind::Transductive),
            "oracle" => Ok(EstimatorKind::Oracle),
            other => Err(format!(
                "unknown estimator '{other}' (expected one of supervised, self_learning, \
                 projection, icls, transductive, oracle)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    LossRatio,
    LearningCurve,
    CrossValidation,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::LossRatio => "loss_ratio",
            Protocol::LearningCurve => "learning_curve",
            Protocol::CrossValidation => "cross_validation",
        }
    }
}

/// Everything a protocol run needs besides the dataset itself.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub dataset_name: String,
    pub estimators: Vec<EstimatorKind>,
    pub n_repeats: usize,
    pub seed: Seed,
    pub lambda: f64,
    /// Labeled draw size; defaults to `2d` for loss-ratio and learning-curve
    /// runs and `d+5` for cross-validation when unset.
    pub n_labeled: Option<usize>,
    /// Loss-ratio protocol: unlabeled/test draw sizes and replacement flags.
    pub n_unlabeled: usize,
    pub n_test: usize,
    pub unlabeled_with_replacement: bool,
    pub test_with_replacement: bool,
    /// Learning-curve protocol: unlabeled subset sizes.
    pub sizes: Vec<usize>,
    /// Cross-validation protocol: fold count.
    pub folds: usize,
    pub standardize: bool,
    /// When false every row reports a wall time of zero, making whole
    /// reports byte-reproducible.
    pub record_wall_time: bool,
    pub qp: QpOptions,
    pub self_learning_max_iter: usize,
}

pub const DEFAULT_CURVE_SIZES: [usize; 9] = [2, 4, 8, 16, 32, 64, 128, 256, 512];

/// The QP tolerance used by the harness. Tighter than the solver default so
/// that reported loss ratios honor the improvement guarantee down to the
/// audit tolerance of 1e-9.
pub const HARNESS_QP_OPTIONS: QpOptions = QpOptions { tol: 1e-10, max_iter: 50_000 };

const RATIO_AUDIT_SLACK: f64 = 1e-9;

impl ExperimentConfig {
    fn base(protocol: Protocol, seed: Seed) -> Self {
        Self {
            protocol,
            dataset_name: "dataset".to_string(),
            estimators: vec![
                EstimatorKind::Supervised,
                EstimatorKind::SelfLearning,
                EstimatorKind::Projection,
            ],
            n_repeats: 100,
            seed,
            lambda: 0.0,
            n_labeled: None,
            n_unlabeled: 1000,
            n_test: 1000,
            unlabeled_with_replacement: true,
            test_with_replacement: true,
            sizes: DEFAULT_CURVE_SIZES.to_vec(),
            folds: 10,
            standardize: false,
            record_wall_time: true,
            qp: HARNESS_QP_OPTIONS,
            self_learning_max_iter: 100,
        }
    }

    /// Resampling protocol: `2d` labeled rows, unlabeled/test resampled with
    /// replacement, 100 repeats.
    pub fn loss_ratio(seed: Seed) -> Self {
        Self::base(Protocol::LossRatio, seed)
    }

    /// Learning curves over doubling unlabeled subsets, 100 repeats.
    pub fn learning_curve(seed: Seed) -> Self {
        let mut cfg = Self::base(Protocol::LearningCurve, seed);
        cfg.estimators = vec![
            EstimatorKind::Supervised,
            EstimatorKind::SelfLearning,
            EstimatorKind::Projection,
            EstimatorKind::Icls,
        ];
        cfg
    }

    /// 10-fold cross-validation with `d+5` labeled rows per fold, 20 repeats.
    pub fn cross_validation(seed: Seed) -> Self {
        let mut cfg = Self::base(Protocol::CrossValidation, seed);
        cfg.n_repeats = 20;
        cfg.estimators = vec![
            EstimatorKind::Supervised,
            EstimatorKind::SelfLearning,
            EstimatorKind::Icls,
            EstimatorKind::Projection,
        ];
        cfg
    }

    fn ridge(&self) -> RidgeConfig {
        RidgeConfig { lambda: self.lambda, penalize_bias: false }
    }

    fn validate(&self, expected: Protocol) -> Result<(), HarnessError> {
        if self.protocol != expected {
            return Err(HarnessError::InvalidConfig(format!(
                "config is for protocol {}, runner expects {}",
                self.protocol.as_str(),
                expected.as_str()
            )));
        }
        if self.estimators.is_empty() {
            return Err(HarnessError::InvalidConfig("no estimators selected".into()));
        }
        if self.n_repeats == 0 {
            return Err(HarnessError::InvalidConfig("n_repeats must be at least 1".into()));
        }
        if self.lambda < 0.0 {
            return Err(HarnessError::InvalidConfig("lambda must be non-negative".into()));
        }
        Ok(())
    }
}

/// One result row. Field order here is the column order of emitted reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub protocol: String,
    pub dataset: String,
    pub estimator: String,
    pub repeat: u64,
    /// Fold index for per-fold rows; -1 where folds do not apply.
    pub fold: i64,
    pub n_labeled: u64,
    pub n_unlabeled: u64,
    pub scope: String,
    /// Per-object average quadratic loss on the scope.
    pub loss: f64,
    pub error: f64,
    /// Loss relative to the supervised fit on the same scope.
    pub ratio: f64,
    pub converged: bool,
    pub wall_time_ms: f64,
}

/// A fitted estimator plus its convergence diagnostic.
pub struct FittedEstimator {
    pub w: WeightVector,
    pub converged: bool,
}

/// Fits one estimator on a split. The convergence flag is true for the
/// closed-form estimators, reports pseudo-label stabilization for
/// self-learning, and reports QP convergence for the projected family.
pub fn fit_estimator(
    kind: EstimatorKind,
    split: &SemiSplit,
    ridge: &RidgeConfig,
    qp: &QpOptions,
    self_learning_max_iter: usize,
) -> Result<FittedEstimator, EstimatorError> {
    match kind {
        EstimatorKind::Supervised => Ok(FittedEstimator {
            w: fit_supervised(split.x(), split.y(), ridge)?,
            converged: true,
        }),
        EstimatorKind::SelfLearning => {
            let fit = fit_self_learning(split, ridge, self_learning_max_iter)?;
            Ok(FittedEstimator { w: fit.w, converged: fit.converged })
        }
        EstimatorKind::Projection => {
            let res = fit_projected(split, Variant::Projection, ridge, qp)?;
            Ok(FittedEstimator { w: res.w_semi, converged: res.converged })
        }
        EstimatorKind::Icls => {
            let res = fit_projected(split, Variant::Icls, ridge, qp)?;
            Ok(FittedEstimator { w: res.w_semi, converged: res.converged })
        }
        EstimatorKind::Transductive => {
            let res = fit_projected(split, Variant::Transductive, ridge, qp)?;
            Ok(FittedEstimator { w: res.w_semi, converged: res.converged })
        }
        EstimatorKind::Oracle => Ok(FittedEstimator {
            w: fit_oracle(split, ridge)?,
            converged: true,
        }),
    }
}

fn sort_rows(rows: &mut [ReportRow]) {
    rows.sort_by(|a, b| {
        (&a.estimator, a.repeat, a.fold, a.n_unlabeled, &a.scope).cmp(&(
            &b.estimator,
            b.repeat,
            b.fold,
            b.n_unlabeled,
            &b.scope,
        ))
    });
}

fn finalize(
    mut per_repeat: Vec<Vec<ReportRow>>,
    failures: usize,
) -> Result<Vec<ReportRow>, HarnessError> {
    let mut rows: Vec<ReportRow> = per_repeat.drain(..).flatten().collect();
    if rows.is_empty() {
        let _ = failures;
        return Err(HarnessError::AllTrialsFailed);
    }
    sort_rows(&mut rows);
    Ok(rows)
}

/// Fails the run when a converged projection trial reports a train-all loss
/// ratio above 1 + 1e-9; the guarantee is a per-trial claim.
fn audit_guarantee(rows: &[ReportRow]) -> Result<(), HarnessError> {
    for row in rows {
        if row.estimator == EstimatorKind::Projection.as_str()
            && row.scope == Scope::TrainAll.as_str()
            && row.converged
            && row.ratio > 1.0 + RATIO_AUDIT_SLACK
        {
            return Err(HarnessError::GuaranteeViolated {
                repeat: row.repeat as usize,
                ratio: row.ratio,
            });
        }
    }
    Ok(())
}

struct ScopedBlock<'a> {
    scope: Scope,
    x: &'a Matrix,
    y: &'a Vector,
}

/// Loss-ratio resampling: per repeat, draw `2d` labeled rows without
/// replacement plus unlabeled and test rows per the replacement flags, fit
/// every estimator, and report per-object losses, errors, and ratios
/// against the supervised fit on the combined train block and the test
/// block.
pub fn run_loss_ratio(ds: &Dataset, cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, HarnessError> {
    cfg.validate(Protocol::LossRatio)?;
    let n_labeled = cfg.n_labeled.unwrap_or(2 * ds.n_features());
    if n_labeled == 0 || n_labeled > ds.n_rows() {
        return Err(HarnessError::Data(crate::data::DataError::InsufficientRows {
            requested: n_labeled.max(1),
            available: ds.n_rows(),
        }));
    }
    let ridge = cfg.ridge();

    let per_repeat: Vec<Vec<ReportRow>> = (0..cfg.n_repeats)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.seed.offset(r as u64);
            let drawn = match draw_split_indices(
                ds.n_rows(),
                n_labeled,
                cfg.n_unlabeled,
                cfg.n_test,
                seed,
                cfg.unlabeled_with_replacement,
                cfg.test_with_replacement,
            ) {
                Ok(d) => d,
                Err(e) => {
                    log::warn!("loss_ratio repeat {r}: split draw failed: {e}");
                    return Vec::new();
                }
            };
            let split = match split_from_indices(
                ds,
                &drawn.labeled,
                &drawn.unlabeled,
                &drawn.test,
                SplitOptions { standardize: cfg.standardize },
            ) {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("loss_ratio repeat {r}: split assembly failed: {e}");
                    return Vec::new();
                }
            };
            let w_sup = match fit_supervised(split.x(), split.y(), &ridge) {
                Ok(w) => w,
                Err(e) => {
                    log::warn!("loss_ratio repeat {r}: supervised fit failed: {e}");
                    return Vec::new();
                }
            };

            let x_e = split.extended_design();
            let y_e = split.extended_true_labels();
            let mut blocks = vec![ScopedBlock { scope: Scope::TrainAll, x: &x_e, y: &y_e }];
            if let (Some(xt), Some(yt)) = (split.x_test(), split.y_test()) {
                blocks.push(ScopedBlock { scope: Scope::Test, x: xt, y: yt });
            }

            let mut rows = Vec::new();
            for &kind in &cfg.estimators {
                let started = Instant::now();
                let fitted =
                    match fit_estimator(kind, &split, &ridge, &cfg.qp, cfg.self_learning_max_iter)
                    {
                        Ok(f) => f,
                        Err(e) => {
                            log::warn!("loss_ratio repeat {r}: {kind} failed: {e}");
                            continue;
                        }
                    };
                let wall = if cfg.record_wall_time {
                    started.elapsed().as_secs_f64() * 1e3
                } else {
                    0.0
                };
                for block in &blocks {
                    let denom = quadratic_loss(&w_sup, block.x, block.y);
                    if denom == 0.0 {
                        log::warn!(
                            "loss_ratio repeat {r}: supervised loss is zero on {}; trial skipped",
                            block.scope.as_str()
                        );
                        continue;
                    }
                    let loss = quadratic_loss(&fitted.w, block.x, block.y);
                    rows.push(ReportRow {
                        protocol: cfg.protocol.as_str().to_string(),
                        dataset: cfg.dataset_name.clone(),
                        estimator: kind.as_str().to_string(),
                        repeat: r as u64,
                        fold: -1,
                        n_labeled: n_labeled as u64,
                        n_unlabeled: split.n_unlabeled() as u64,
                        scope: block.scope.as_str().to_string(),
                        loss: loss / block.x.rows() as f64,
                        error: error_rate(&fitted.w, block.x, block.y),
                        ratio: loss / denom,
                        converged: fitted.converged,
                        wall_time_ms: wall,
                    });
                }
            }
            rows
        })
        .collect();

    let rows = finalize(per_repeat, 0)?;
    audit_guarantee(&rows)?;
    Ok(rows)
}

/// Learning curves: per repeat, draw `2d` labeled rows, reserve a nested
/// pool for growing unlabeled subsets, and hold the rest out as the test
/// set. Sizes that exceed the pool are dropped.
pub fn run_learning_curve(
    ds: &Dataset,
    cfg: &ExperimentConfig,
) -> Result<Vec<ReportRow>, HarnessError> {
    cfg.validate(Protocol::LearningCurve)?;
    let n_labeled = cfg.n_labeled.unwrap_or(2 * ds.n_features());
    let max_size = cfg.sizes.iter().copied().max().unwrap_or(0);
    if cfg.sizes.is_empty() || max_size == 0 {
        return Err(HarnessError::InvalidConfig("no unlabeled sizes".into()));
    }
    // Need the labeled rows, the smallest subset, and a non-empty test set.
    let min_size = cfg.sizes.iter().copied().min().unwrap_or(0);
    if ds.n_rows() < n_labeled + min_size + 1 {
        return Err(HarnessError::Data(crate::data::DataError::InsufficientRows {
            requested: n_labeled + min_size + 1,
            available: ds.n_rows(),
        }));
    }
    let ridge = cfg.ridge();

    let per_repeat: Vec<Vec<ReportRow>> = (0..cfg.n_repeats)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.seed.offset(r as u64);
            let mut rng = seed.rng();
            let mut order: Vec<usize> = (0..ds.n_rows()).collect();
            order.shuffle(&mut rng);
            let labeled = &order[..n_labeled];
            let rest = &order[n_labeled..];
            // Reserve the unlabeled pool up front so the test set is fixed
            // within the repeat; subsets are nested prefixes of the pool.
            let pool_size = max_size.min(rest.len().saturating_sub(1));
            let pool = &rest[..pool_size];
            let test = &rest[pool_size..];
            let sizes: Vec<usize> =
                cfg.sizes.iter().copied().filter(|s| *s <= pool_size).collect();

            let mut rows = Vec::new();
            for &size in &sizes {
                let split = match split_from_indices(
                    ds,
                    labeled,
                    &pool[..size],
                    test,
                    SplitOptions { standardize: cfg.standardize },
                ) {
                    Ok(s) => s,
                    Err(e) => {
                        log::warn!("learning_curve repeat {r} size {size}: {e}");
                        continue;
                    }
                };
                let w_sup = match fit_supervised(split.x(), split.y(), &ridge) {
                    Ok(w) => w,
                    Err(e) => {
                        log::warn!(
                            "learning_curve repeat {r} size {size}: supervised fit failed: {e}"
                        );
                        continue;
                    }
                };
                let (xt, yt) = (
                    split.x_test().expect("test block present"),
                    split.y_test().expect("test labels present"),
                );
                let denom = quadratic_loss(&w_sup, xt, yt);
                if denom == 0.0 {
                    log::warn!(
                        "learning_curve repeat {r} size {size}: supervised loss is zero; skipped"
                    );
                    continue;
                }
                for &kind in &cfg.estimators {
                    let started = Instant::now();
                    let fitted = match fit_estimator(
                        kind,
                        &split,
                        &ridge,
                        &cfg.qp,
                        cfg.self_learning_max_iter,
                    ) {
                        Ok(f) => f,
                        Err(e) => {
                            log::warn!("learning_curve repeat {r} size {size}: {kind} failed: {e}");
                            continue;
                        }
                    };
                    let wall = if cfg.record_wall_time {
                        started.elapsed().as_secs_f64() * 1e3
                    } else {
                        0.0
                    };
                    let loss = quadratic_loss(&fitted.w, xt, yt);
                    rows.push(ReportRow {
                        protocol: cfg.protocol.as_str().to_string(),
                        dataset: cfg.dataset_name.clone(),
                        estimator: kind.as_str().to_string(),
                        repeat: r as u64,
                        fold: -1,
                        n_labeled: n_labeled as u64,
                        n_unlabeled: size as u64,
                        scope: Scope::Test.as_str().to_string(),
                        loss: loss / xt.rows() as f64,
                        error: error_rate(&fitted.w, xt, yt),
                        ratio: loss / denom,
                        converged: fitted.converged,
                        wall_time_ms: wall,
                    });
                }
            }
            rows
        })
        .collect();

    finalize(per_repeat, 0)
}

/// Repeated k-fold cross-validation: per fold, a small labeled set is drawn
/// from the training portion and the rest of it serves as unlabeled data;
/// each object is predicted exactly once per repeat. One row per estimator
/// and repeat.
pub fn run_cross_validation(
    ds: &Dataset,
    cfg: &ExperimentConfig,
) -> Result<Vec<ReportRow>, HarnessError> {
    cfg.validate(Protocol::CrossValidation)?;
    if cfg.folds < 2 {
        return Err(HarnessError::InvalidConfig("folds must be at least 2".into()));
    }
    if ds.n_rows() < cfg.folds {
        return Err(HarnessError::Data(crate::data::DataError::InsufficientRows {
            requested: cfg.folds,
            available: ds.n_rows(),
        }));
    }
    let n_labeled = cfg.n_labeled.unwrap_or(ds.n_features() + 5);
    let y_all = ds.labels().ok_or(crate::data::DataError::NoLabels)?.clone();
    let n = ds.n_rows();
    let ridge = cfg.ridge();

    let per_repeat: Vec<Vec<ReportRow>> = (0..cfg.n_repeats)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.seed.offset(r as u64);
            let mut rng = seed.rng();
            let folds = crate::data::kfold_from_rng(n, cfg.folds, &mut rng);

            // Per-estimator decision values over the whole dataset, filled
            // fold by fold; an estimator that fails on any fold is dropped
            // for the repeat.
            let mut values: Vec<Option<Vec<f64>>> =
                vec![Some(vec![0.0; n]); cfg.estimators.len()];
            let mut sup_values: Option<Vec<f64>> = Some(vec![0.0; n]);
            let mut converged = vec![true; cfg.estimators.len()];
            let mut wall = vec![0.0f64; cfg.estimators.len()];
            let mut min_unlabeled = usize::MAX;

            for (fold_idx, fold) in folds.iter().enumerate() {
                let mut pool: Vec<usize> = (0..n).filter(|i| !fold.contains(i)).collect();
                pool.shuffle(&mut rng);
                if pool.len() < n_labeled {
                    log::warn!(
                        "cross_validation repeat {r} fold {fold_idx}: pool smaller than \
                         labeled budget"
                    );
                    sup_values = None;
                    break;
                }
                let labeled = &pool[..n_labeled];
                let unlabeled = &pool[n_labeled..];
                min_unlabeled = min_unlabeled.min(unlabeled.len());
                let split = match split_from_indices(
                    ds,
                    labeled,
                    unlabeled,
                    fold,
                    SplitOptions { standardize: cfg.standardize },
                ) {
                    Ok(s) => s,
                    Err(e) => {
                        log::warn!("cross_validation repeat {r} fold {fold_idx}: {e}");
                        sup_values = None;
                        break;
                    }
                };
                let xt = split.x_test().expect("fold block present");
                match fit_supervised(split.x(), split.y(), &ridge) {
                    Ok(w) => {
                        let preds = decision_values(&w, xt);
                        if let Some(sv) = sup_values.as_mut() {
                            for (slot, &obj) in fold.iter().enumerate() {
                                sv[obj] = preds[slot];
                            }
                        }
                    }
                    Err(e) => {
                        log::warn!(
                            "cross_validation repeat {r} fold {fold_idx}: supervised fit \
                             failed: {e}"
                        );
                        sup_values = None;
                        break;
                    }
                }
                for (e_idx, &kind) in cfg.estimators.iter().enumerate() {
                    if values[e_idx].is_none() {
                        continue;
                    }
                    let started = Instant::now();
                    match fit_estimator(kind, &split, &ridge, &cfg.qp, cfg.self_learning_max_iter)
                    {
                        Ok(fitted) => {
                            if cfg.record_wall_time {
                                wall[e_idx] += started.elapsed().as_secs_f64() * 1e3;
                            }
                            converged[e_idx] &= fitted.converged;
                            let preds = decision_values(&fitted.w, xt);
                            let slots = values[e_idx].as_mut().expect("checked above");
                            for (slot, &obj) in fold.iter().enumerate() {
                                slots[obj] = preds[slot];
                            }
                        }
                        Err(e) => {
                            log::warn!(
                                "cross_validation repeat {r} fold {fold_idx}: {kind} \
                                 failed: {e}; estimator dropped for the repeat"
                            );
                            values[e_idx] = None;
                        }
                    }
                }
            }

            let Some(sup_values) = sup_values else {
                return Vec::new();
            };
            let sup_loss: f64 = sup_values
                .iter()
                .zip(y_all.iter())
                .map(|(p, t)| (p - t) * (p - t))
                .sum();
            let mut rows = Vec::new();
            for (e_idx, &kind) in cfg.estimators.iter().enumerate() {
                let Some(vals) = &values[e_idx] else { continue };
                let loss: f64 = vals
                    .iter()
                    .zip(y_all.iter())
                    .map(|(p, t)| (p - t) * (p - t))
                    .sum();
                let errors = vals
                    .iter()
                    .zip(y_all.iter())
                    .filter(|(p, t)| f64::from(**p >= 0.5) != **t)
                    .count();
                if sup_loss == 0.0 {
                    log::warn!("cross_validation repeat {r}: supervised loss is zero; skipped");
                    continue;
                }
                rows.push(ReportRow {
                    protocol: cfg.protocol.as_str().to_string(),
                    dataset: cfg.dataset_name.clone(),
                    estimator: kind.as_str().to_string(),
                    repeat: r as u64,
                    fold: -1,
                    n_labeled: n_labeled as u64,
                    n_unlabeled: if min_unlabeled == usize::MAX {
                        0
                    } else {
                        min_unlabeled as u64
                    },
                    scope: Scope::Test.as_str().to_string(),
                    loss: loss / n as f64,
                    error: errors as f64 / n as f64,
                    ratio: loss / sup_loss,
                    converged: converged[e_idx],
                    wall_time_ms: wall[e_idx],
                });
            }
            rows
        })
        .collect();

    finalize(per_repeat, 0)
}

/// Aggregated learning-curve point: mean and standard error of the mean per
/// estimator and unlabeled size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub estimator: String,
    pub n_unlabeled: u64,
    pub repeats: u64,
    pub mean_loss: f64,
    pub se_loss: f64,
    pub mean_error: f64,
    pub se_error: f64,
}

/// Groups test-scope rows by (estimator, unlabeled size) and reports means
/// with standard errors (sample standard deviation over sqrt of the count).
pub fn aggregate_learning_curve(rows: &[ReportRow]) -> Vec<CurvePoint> {
    let mut groups: Vec<(&str, u64, Vec<&ReportRow>)> = Vec::new();
    for row in rows {
        if row.scope != Scope::Test.as_str() {
            continue;
        }
        match groups
            .iter_mut()
            .find(|(e, s, _)| *e == row.estimator && *s == row.n_unlabeled)
        {
            Some((_, _, bucket)) => bucket.push(row),
            None => groups.push((&row.estimator, row.n_unlabeled, vec![row])),
        }
    }
    let stats = |values: &[f64]| -> (f64, f64) {
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        if values.len() < 2 {
            return (mean, 0.0);
        }
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
        (mean, (var / k).sqrt())
    };
    let mut points: Vec<CurvePoint> = groups
        .into_iter()
        .map(|(estimator, size, bucket)| {
            let losses: Vec<f64> = bucket.iter().map(|r| r.loss).collect();
            let errors: Vec<f64> = bucket.iter().map(|r| r.error).collect();
            let (mean_loss, se_loss) = stats(&losses);
            let (mean_error, se_error) = stats(&errors);
            CurvePoint {
                estimator: estimator.to_string(),
                n_unlabeled: size,
                repeats: bucket.len() as u64,
                mean_loss,
                se_loss,
                mean_error,
                se_error,
            }
        })
        .collect();
    points.sort_by(|a, b| (&a.estimator, a.n_unlabeled).cmp(&(&b.estimator, b.n_unlabeled)));
    points
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

/// Writes rows as CSV (header row matching the field names, in declared
/// order) or as a JSON array of objects with the same keys. Floats are
/// written in shortest round-trip form, so reading the file back restores
/// them bit for bit.
pub fn emit_report(rows: &[ReportRow], format: ReportFormat, path: &Path) -> Result<(), HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    match format {
        ReportFormat::Csv => {
            let mut writer = csv::Writer::from_path(path)
                .map_err(|e| HarnessError::Serialize(e.to_string()))?;
            for row in rows {
                writer
                    .serialize(row)
                    .map_err(|e| HarnessError::Serialize(e.to_string()))?;
            }
            writer.flush()?;
        }
        ReportFormat::Json => {
            let file = std::fs::File::create(path)?;
            let mut writer = std::io::BufWriter::new(file);
            serde_json::to_writer_pretty(&mut writer, rows)
                .map_err(|e| HarnessError::Serialize(e.to_string()))?;
            use std::io::Write;
            writeln!(writer)?;
        }
    }
    Ok(())
}

/// Reads a report back; the inverse of [`emit_report`].
pub fn read_report(path: &Path, format: ReportFormat) -> Result<Vec<ReportRow>, HarnessError> {
    match format {
        ReportFormat::Csv => {
            let mut reader = csv::Reader::from_path(path)
                .map_err(|e| HarnessError::Serialize(e.to_string()))?;
            let mut rows = Vec::new();
            for record in reader.deserialize() {
                rows.push(record.map_err(|e| HarnessError::Serialize(e.to_string()))?);
            }
            Ok(rows)
        }
        ReportFormat::Json => {
            let file = std::fs::File::open(path)?;
            serde_json::from_reader(std::io::BufReader::new(file))
                .map_err(|e| HarnessError::Serialize(e.to_string()))
        }
    }
}
