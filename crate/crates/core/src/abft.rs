//! Split and fused checksum checkers for one graph-convolution layer.
//!
//! Both checkers compute the layer in combination-first order: `X = H W`,
//! then `S X`. The split checker verifies each product on its own. The
//! fused checker only predicts the checksum of the final product from
//! `s_c (H w_r)`, so it needs no check state for `H`.
//!
//! Only the checksum entries that feed a verdict are computed. The
//! off-diagonal blocks of the enhanced products (`h_c W`, `s_c X`) are never
//! materialized.

use crate::matrix::{
    col_checksum_wide, dot_wide, multiply, spmm, total_checksum, DenseMatrix, FaultHook, Matrix,
    MatrixError, OpCounter, SparseMatrix,
};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AbftError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("threshold must be positive and finite, got {0}")]
    InvalidThreshold(f64),
    #[error("invalid layer dimensions: {0}")]
    InvalidDimensions(String),
    #[error("phase-1 check flagged (predicted {}, actual {}); layer aborted", .0.predicted, .0.actual)]
    EarlyAbort(CheckVerdict),
}

/// Absolute checksum-difference bound. Differences strictly greater than
/// the threshold are flagged.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct CheckThreshold(f64);

impl CheckThreshold {
    pub fn new(tau: f64) -> Result<Self, AbftError> {
        if tau.is_finite() && tau > 0.0 {
            Ok(Self(tau))
        } else {
            Err(AbftError::InvalidThreshold(tau))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for CheckThreshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CheckerKind {
    Split,
    Fused,
}

impl CheckerKind {
    pub const ALL: [CheckerKind; 2] = [CheckerKind::Split, CheckerKind::Fused];

    pub fn name(self) -> &'static str {
        match self {
            CheckerKind::Split => "split",
            CheckerKind::Fused => "fused",
        }
    }
}

impl fmt::Display for CheckerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Multiplication step of a layer. `LayerEnd` marks the single fused verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Phase1,
    Phase2,
    LayerEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    Pass,
    Exceeded,
    /// A checksum or their difference is infinite or NaN.
    NonFinite,
}

impl Comparison {
    pub fn flagged(self) -> bool {
        !matches!(self, Comparison::Pass)
    }
}

/// `|predicted - actual| > tau`, with non-finite inputs always flagged.
pub fn compare(predicted: f64, actual: f64, tau: CheckThreshold) -> Comparison {
    judge(predicted, actual, predicted - actual, tau)
}

fn judge(predicted: f64, actual: f64, difference: f64, tau: CheckThreshold) -> Comparison {
    if !(predicted.is_finite() && actual.is_finite() && difference.is_finite()) {
        Comparison::NonFinite
    } else if difference.abs() > tau.value() {
        Comparison::Exceeded
    } else {
        Comparison::Pass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckVerdict {
    pub phase: Phase,
    pub predicted: f64,
    pub actual: f64,
    /// `predicted - actual` as computed on the (faultable) checking datapath.
    pub difference: f64,
    pub outcome: Comparison,
}

impl CheckVerdict {
    pub fn flagged(&self) -> bool {
        self.outcome.flagged()
    }

    /// Re-evaluates the stored checksums against another threshold.
    pub fn flagged_at(&self, tau: CheckThreshold) -> bool {
        judge(self.predicted, self.actual, self.difference, tau).flagged()
    }
}

fn verdict(
    phase: Phase,
    predicted: f64,
    actual: f64,
    tau: CheckThreshold,
    counter: &mut OpCounter,
    hook: &mut FaultHook,
) -> CheckVerdict {
    let difference = hook.accum(predicted - actual);
    counter.compare();
    CheckVerdict {
        phase,
        predicted,
        actual,
        difference,
        outcome: judge(predicted, actual, difference, tau),
    }
}

/// Operations on the true-output path versus the checking path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCounters {
    pub output: OpCounter,
    pub check: OpCounter,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCounters {
    pub phase1: PhaseCounters,
    pub phase2: PhaseCounters,
}

impl LayerCounters {
    pub fn output(&self) -> OpCounter {
        self.phase1.output + self.phase2.output
    }

    pub fn check(&self) -> OpCounter {
        self.phase1.check + self.phase2.check
    }
}

/// One hook per multiplication step; op indices restart in each.
#[derive(Debug, Clone, Default)]
pub struct LayerHooks {
    pub phase1: FaultHook,
    pub phase2: FaultHook,
}

impl LayerHooks {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn phase_mut(&mut self, phase: Phase) -> &mut FaultHook {
        match phase {
            Phase::Phase1 => &mut self.phase1,
            Phase::Phase2 | Phase::LayerEnd => &mut self.phase2,
        }
    }
}

/// Operands of one layer together with their precomputed checksum vectors.
#[derive(Debug, Clone, Copy)]
pub struct LayerOperands<'a> {
    pub adjacency: &'a SparseMatrix,
    /// `s_c = eᵀS`, `1 x n`.
    pub adjacency_col_checksum: &'a DenseMatrix,
    pub features: &'a Matrix,
    pub weight: &'a DenseMatrix,
    /// `w_r = W e`, `f_in x 1`.
    pub weight_row_checksum: &'a DenseMatrix,
}

impl LayerOperands<'_> {
    fn validate(&self) -> Result<(), AbftError> {
        let n = self.adjacency.rows();
        let (hr, hc) = self.features.shape();
        let (wr, _) = self.weight.shape();
        let mismatch =
            |op, left, right| AbftError::Matrix(MatrixError::DimensionMismatch { op, left, right });
        if self.adjacency.cols() != hr {
            return Err(mismatch(
                "adjacency x features",
                self.adjacency.shape(),
                (hr, hc),
            ));
        }
        if hc != wr {
            return Err(mismatch("features x weight", (hr, hc), self.weight.shape()));
        }
        if self.adjacency_col_checksum.shape() != (1, self.adjacency.cols()) {
            return Err(AbftError::InvalidDimensions(format!(
                "adjacency checksum is {:?}, expected (1, {})",
                self.adjacency_col_checksum.shape(),
                self.adjacency.cols()
            )));
        }
        if self.weight_row_checksum.shape() != (wr, 1) {
            return Err(AbftError::InvalidDimensions(format!(
                "weight checksum is {:?}, expected ({wr}, 1)",
                self.weight_row_checksum.shape()
            )));
        }
        debug_assert!(n >= 1);
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LayerCheck {
    /// `S H W` before activation.
    pub pre_activation: DenseMatrix,
    pub verdicts: Vec<CheckVerdict>,
}

impl LayerCheck {
    pub fn flagged(&self) -> bool {
        self.verdicts.iter().any(CheckVerdict::flagged)
    }
}

fn widen(m: &DenseMatrix) -> Vec<f64> {
    m.as_slice().iter().map(|&v| f64::from(v)).collect()
}

/// Per-multiplication checking.
///
/// Phase 1 predicts `h_c w_r` with `h_c` accumulated online, and compares
/// it against the sum of `X`. Phase 2 predicts `s_c x_r` and compares it
/// against the sum of `S X`. With `early_abort`, a flagged phase-1 verdict
/// stops the layer before the second product.
pub fn split_check_layer(
    ops: LayerOperands<'_>,
    tau: CheckThreshold,
    counters: &mut LayerCounters,
    hooks: &mut LayerHooks,
    early_abort: bool,
) -> Result<LayerCheck, AbftError> {
    ops.validate()?;
    let p1 = &mut counters.phase1;
    let hook = &mut hooks.phase1;

    let h_c = col_checksum_wide(ops.features, &mut p1.check, hook);
    let x = multiply(ops.features, ops.weight, &mut p1.output, hook)?;
    let x_r = multiply(ops.features, ops.weight_row_checksum, &mut p1.check, hook)?;
    let predicted = dot_wide(&h_c, &widen(ops.weight_row_checksum), &mut p1.check, hook)?;
    let actual = total_checksum(&x, &mut p1.check, hook);
    let first = verdict(Phase::Phase1, predicted, actual, tau, &mut p1.check, hook);
    if early_abort && first.flagged() {
        return Err(AbftError::EarlyAbort(first));
    }

    let (pre_activation, second) =
        second_phase(ops, &x, &x_r, Phase::Phase2, tau, counters, hooks)?;
    Ok(LayerCheck {
        pre_activation,
        verdicts: vec![first, second],
    })
}

/// Fused checking: `H [W w_r]` carries no check state for `H`, and a single
/// verdict compares `s_c (H w_r)` with the sum of `S H W` at the end of the layer.
pub fn fused_check_layer(
    ops: LayerOperands<'_>,
    tau: CheckThreshold,
    counters: &mut LayerCounters,
    hooks: &mut LayerHooks,
) -> Result<LayerCheck, AbftError> {
    ops.validate()?;
    let p1 = &mut counters.phase1;
    let hook = &mut hooks.phase1;
    let x = multiply(ops.features, ops.weight, &mut p1.output, hook)?;
    let x_r = multiply(ops.features, ops.weight_row_checksum, &mut p1.check, hook)?;

    let (pre_activation, only) =
        second_phase(ops, &x, &x_r, Phase::LayerEnd, tau, counters, hooks)?;
    Ok(LayerCheck {
        pre_activation,
        verdicts: vec![only],
    })
}

fn second_phase(
    ops: LayerOperands<'_>,
    x: &DenseMatrix,
    x_r: &DenseMatrix,
    phase: Phase,
    tau: CheckThreshold,
    counters: &mut LayerCounters,
    hooks: &mut LayerHooks,
) -> Result<(DenseMatrix, CheckVerdict), AbftError> {
    let p2 = &mut counters.phase2;
    let hook = &mut hooks.phase2;
    let out = spmm(ops.adjacency, x, &mut p2.output, hook)?;
    let predicted = dot_wide(
        &widen(ops.adjacency_col_checksum),
        &widen(x_r),
        &mut p2.check,
        hook,
    )?;
    let actual = total_checksum(&out, &mut p2.check, hook);
    let v = verdict(phase, predicted, actual, tau, &mut p2.check, hook);
    Ok((out, v))
}

/// Runs the requested checker on one layer (split without early abort).
pub fn check_layer(
    kind: CheckerKind,
    ops: LayerOperands<'_>,
    tau: CheckThreshold,
    counters: &mut LayerCounters,
    hooks: &mut LayerHooks,
) -> Result<LayerCheck, AbftError> {
    match kind {
        CheckerKind::Split => split_check_layer(ops, tau, counters, hooks, false),
        CheckerKind::Fused => fused_check_layer(ops, tau, counters, hooks),
    }
}

/// Shape of one layer for the closed-form op formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDims {
    pub nodes: u64,
    pub in_features: u64,
    pub out_features: u64,
    /// Stored entries of `H` when it is sparse; `None` for dense `H`.
    pub feature_nnz: Option<u64>,
    pub adjacency_nnz: u64,
}

impl LayerDims {
    fn validate(&self) -> Result<(), AbftError> {
        if self.nodes == 0 || self.in_features == 0 || self.out_features == 0 {
            return Err(AbftError::InvalidDimensions(format!(
                "n={}, f={}, h={} must all be positive",
                self.nodes, self.in_features, self.out_features
            )));
        }
        Ok(())
    }

    fn feature_entries(&self) -> u64 {
        self.feature_nnz.unwrap_or(self.nodes * self.in_features)
    }
}

/// Checking cost of one layer.
///
/// Shared by both checkers: `x_r = H w_r` (2 per stored entry of `H`),
/// `s_c x_r` (2n), the sum of the output (n·h) and one comparison.
/// Split adds `h_c` (1 per stored entry of `H`), `h_c w_r` (2f), the sum of
/// `X` (n·h) and a second comparison.
pub fn check_ops_formula(kind: CheckerKind, dims: &LayerDims) -> Result<u64, AbftError> {
    dims.validate()?;
    let (n, f, h) = (dims.nodes, dims.in_features, dims.out_features);
    let entries = dims.feature_entries();
    let shared = 2 * entries + 2 * n + n * h + 1;
    Ok(match kind {
        CheckerKind::Fused => shared,
        CheckerKind::Split => shared + entries + 2 * f + n * h + 1,
    })
}

/// True-output cost of one layer: both products at 2 ops per multiply-add.
pub fn output_ops_formula(dims: &LayerDims) -> Result<u64, AbftError> {
    dims.validate()?;
    Ok(2 * dims.feature_entries() * dims.out_features + 2 * dims.adjacency_nnz * dims.out_features)
}
