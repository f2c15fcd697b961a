//! Operation accounting: instrumented op-count tables with a closed-form
//! cross-check, and per-layer phase shares used as a runtime proxy.

use crate::abft::{check_ops_formula, output_ops_formula, CheckThreshold, CheckerKind, LayerDims};
use crate::gcn::{infer_clean, GcnModel, ModelError};
use crate::matrix::Matrix;
use serde::{Deserialize, Serialize};

// Counting does not depend on the threshold.
fn any_tau() -> CheckThreshold {
    CheckThreshold::new(1e-7).expect("positive")
}

/// Shapes of every layer as seen by the formulas. Only the first layer can
/// have sparse input; later inputs are dense activations.
pub fn layer_dims(model: &GcnModel, features: &Matrix) -> Vec<LayerDims> {
    let n = model.num_nodes() as u64;
    let adjacency_nnz = model.adjacency().matrix().nnz() as u64;
    model
        .layers()
        .iter()
        .enumerate()
        .map(|(k, layer)| LayerDims {
            nodes: n,
            in_features: layer.in_features() as u64,
            out_features: layer.out_features() as u64,
            feature_nnz: match features {
                Matrix::Sparse(s) if k == 0 => Some(s.nnz() as u64),
                _ => None,
            },
            adjacency_nnz,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpCountRow {
    pub checker: CheckerKind,
    pub check_ops: u64,
    pub total_ops: u64,
    pub formula_check_ops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpCountTable {
    /// Operations needed for the layer outputs alone.
    pub output_ops: u64,
    pub formula_output_ops: u64,
    pub rows: Vec<OpCountRow>,
    /// Fused versus split, in percent of split. Present when both ran.
    pub check_savings_pct: Option<f64>,
    pub total_savings_pct: Option<f64>,
}

impl OpCountTable {
    pub fn row(&self, checker: CheckerKind) -> Option<&OpCountRow> {
        self.rows.iter().find(|r| r.checker == checker)
    }
}

pub fn op_count_table(
    model: &GcnModel,
    features: &Matrix,
    checkers: &[CheckerKind],
) -> Result<OpCountTable, ModelError> {
    let dims = layer_dims(model, features);
    let formula_output_ops = dims
        .iter()
        .map(output_ops_formula)
        .sum::<Result<u64, _>>()?;
    let mut output_ops = 0;
    let mut rows = Vec::with_capacity(checkers.len());
    for &checker in checkers {
        let trace = infer_clean(model, features, checker, any_tau())?;
        output_ops = trace
            .layers
            .iter()
            .map(|l| l.counters.output().total())
            .sum();
        let check_ops = trace
            .layers
            .iter()
            .map(|l| l.counters.check().total())
            .sum();
        let formula_check_ops = dims
            .iter()
            .map(|d| check_ops_formula(checker, d))
            .sum::<Result<u64, _>>()?;
        rows.push(OpCountRow {
            checker,
            check_ops,
            total_ops: output_ops + check_ops,
            formula_check_ops,
        });
    }
    let mut table = OpCountTable {
        output_ops,
        formula_output_ops,
        rows,
        check_savings_pct: None,
        total_savings_pct: None,
    };
    if let (Some(split), Some(fused)) =
        (table.row(CheckerKind::Split), table.row(CheckerKind::Fused))
    {
        let pct = |s: u64, f: u64| (s as f64 - f as f64) / s as f64 * 100.0;
        let check = pct(split.check_ops, fused.check_ops);
        let total = pct(split.total_ops, fused.total_ops);
        table.check_savings_pct = Some(check);
        table.total_savings_pct = Some(total);
    }
    Ok(table)
}

/// Share of a layer's output operations spent in each multiplication step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseShare {
    pub layer: usize,
    pub phase1_ops: u64,
    pub phase2_ops: u64,
    pub phase1_share: f64,
    pub phase2_share: f64,
}

pub fn phase_shares(model: &GcnModel, features: &Matrix) -> Result<Vec<PhaseShare>, ModelError> {
    let trace = infer_clean(model, features, CheckerKind::Fused, any_tau())?;
    Ok(trace
        .layers
        .iter()
        .enumerate()
        .map(|(layer, t)| {
            let phase1_ops = t.counters.phase1.output.total();
            let phase2_ops = t.counters.phase2.output.total();
            let total = phase1_ops + phase2_ops;
            let (phase1_share, phase2_share) = if total == 0 {
                (0.0, 0.0)
            } else {
                let p1 = phase1_ops as f64 / total as f64;
                (p1, 1.0 - p1)
            };
            PhaseShare {
                layer,
                phase1_ops,
                phase2_ops,
                phase1_share,
                phase2_share,
            }
        })
        .collect())
}
