//! Graph normalization and combination-first GCN inference.

use crate::abft::{
    check_layer, AbftError, CheckThreshold, CheckVerdict, CheckerKind, LayerCounters, LayerHooks,
    LayerOperands,
};
use crate::matrix::{
    col_checksum, row_checksum, DenseMatrix, Matrix, MatrixError, OpCounter, SparseMatrix,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Abft(#[from] AbftError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("edge ({u}, {v}) references a node outside 0..{num_nodes}")]
    EdgeOutOfRange {
        u: usize,
        v: usize,
        num_nodes: usize,
    },
    #[error("graph must have at least one node")]
    EmptyGraph,
    #[error("invalid adjacency: {0}")]
    InvalidAdjacency(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("expected {expected} hook sets, got {got}")]
    HookCount { expected: usize, got: usize },
}

/// Undirected simple graph. Edges are stored once as `(min, max)`; self
/// loops are dropped since normalization adds them anyway.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, ModelError> {
        if num_nodes == 0 {
            return Err(ModelError::EmptyGraph);
        }
        let mut canonical = BTreeSet::new();
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(ModelError::EdgeOutOfRange { u, v, num_nodes });
            }
            if u != v {
                canonical.insert((u.min(v), u.max(v)));
            }
        }
        Ok(Self {
            num_nodes,
            edges: canonical.into_iter().collect(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Canonical edges, sorted, each with `u < v`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }
}

/// `S = D^{-1/2} (A + I) D^{-1/2}` with its column checksum `s_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedAdjacency {
    matrix: SparseMatrix,
    col_checksum: DenseMatrix,
}

impl NormalizedAdjacency {
    pub fn from_graph(graph: &Graph) -> Self {
        let n = graph.num_nodes();
        let mut neighbors: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(u, v) in graph.edges() {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        let degree: Vec<f64> = neighbors.iter().map(|row| row.len() as f64).collect();
        let mut triplets = Vec::with_capacity(neighbors.iter().map(Vec::len).sum());
        for (i, row) in neighbors.iter().enumerate() {
            for &j in row {
                let w = 1.0 / (degree[i] * degree[j]).sqrt();
                triplets.push((i, j, w as f32));
            }
        }
        let matrix = SparseMatrix::from_triplets(n, n, triplets)
            .expect("normalized entries are positive and unique");
        Self::unchecked(matrix)
    }

    /// Wraps an arbitrary square matrix, requiring every column to hold a
    /// stored entry and the sparsity pattern to be symmetric.
    pub fn from_matrix(matrix: SparseMatrix) -> Result<Self, ModelError> {
        let (rows, cols) = matrix.shape();
        if rows != cols {
            return Err(ModelError::InvalidAdjacency(format!(
                "not square: {rows}x{cols}"
            )));
        }
        let pattern: BTreeSet<(usize, usize)> = (0..rows)
            .flat_map(|i| matrix.row_entries(i).map(move |(j, _)| (i, j)))
            .collect();
        if let Some(&(i, j)) = pattern.iter().find(|&&(i, j)| !pattern.contains(&(j, i))) {
            return Err(ModelError::InvalidAdjacency(format!(
                "asymmetric pattern at ({i}, {j})"
            )));
        }
        let mut covered = vec![false; cols];
        for &(_, j) in &pattern {
            covered[j] = true;
        }
        if let Some(j) = covered.iter().position(|c| !c) {
            return Err(ModelError::InvalidAdjacency(format!(
                "column {j} is entirely zero"
            )));
        }
        Ok(Self::unchecked(matrix))
    }

    /// Skips validation. Only for constructing adversarial cases such as a
    /// column of zeros.
    pub fn unchecked(matrix: SparseMatrix) -> Self {
        let col_checksum = col_checksum(&matrix, &mut OpCounter::new());
        Self {
            matrix,
            col_checksum,
        }
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    /// `s_c = eᵀS`, computed once at construction.
    pub fn col_checksum(&self) -> &DenseMatrix {
        &self.col_checksum
    }

    pub fn num_nodes(&self) -> usize {
        self.matrix.rows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnLayer {
    weight: DenseMatrix,
    row_checksum: DenseMatrix,
    apply_activation: bool,
}

impl GcnLayer {
    pub fn new(weight: DenseMatrix, apply_activation: bool) -> Self {
        let row_checksum = row_checksum(&weight, &mut OpCounter::new());
        Self {
            weight,
            row_checksum,
            apply_activation,
        }
    }

    /// Uses a caller-supplied `w_r` as loaded alongside the weights, without
    /// checking it against `W e`.
    pub fn with_row_checksum(
        weight: DenseMatrix,
        row_checksum: DenseMatrix,
        apply_activation: bool,
    ) -> Result<Self, ModelError> {
        if row_checksum.shape() != (weight.rows(), 1) {
            return Err(ModelError::InvalidModel(format!(
                "weight checksum must be {}x1, got {:?}",
                weight.rows(),
                row_checksum.shape()
            )));
        }
        Ok(Self {
            weight,
            row_checksum,
            apply_activation,
        })
    }

    pub fn weight(&self) -> &DenseMatrix {
        &self.weight
    }

    /// `w_r = W e`, one sum per row of `W`.
    pub fn row_checksum(&self) -> &DenseMatrix {
        &self.row_checksum
    }

    pub fn apply_activation(&self) -> bool {
        self.apply_activation
    }

    pub fn in_features(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_features(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnModel {
    adjacency: NormalizedAdjacency,
    layers: Vec<GcnLayer>,
}

impl GcnModel {
    /// ReLU after every layer except the last, which returns raw logits.
    pub fn new(
        adjacency: NormalizedAdjacency,
        weights: Vec<DenseMatrix>,
    ) -> Result<Self, ModelError> {
        let count = weights.len();
        let layers = weights
            .into_iter()
            .enumerate()
            .map(|(i, w)| GcnLayer::new(w, i + 1 < count))
            .collect();
        Self::from_layers(adjacency, layers)
    }

    pub fn from_layers(
        adjacency: NormalizedAdjacency,
        layers: Vec<GcnLayer>,
    ) -> Result<Self, ModelError> {
        if layers.is_empty() {
            return Err(ModelError::InvalidModel(
                "at least one layer required".into(),
            ));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_features() != pair[1].in_features() {
                return Err(ModelError::InvalidModel(format!(
                    "layer {k} outputs {} features but layer {} expects {}",
                    pair[0].out_features(),
                    k + 1,
                    pair[1].in_features()
                )));
            }
        }
        Ok(Self { adjacency, layers })
    }

    pub fn adjacency(&self) -> &NormalizedAdjacency {
        &self.adjacency
    }

    pub fn layers(&self) -> &[GcnLayer] {
        &self.layers
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.num_nodes()
    }
}

/// Everything observable about one layer of a run.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub verdicts: Vec<CheckVerdict>,
    pub counters: LayerCounters,
}

#[derive(Debug, Clone)]
pub struct InferenceTrace {
    /// Pre-activation output of the last layer.
    pub logits: DenseMatrix,
    pub layers: Vec<LayerTrace>,
}

impl InferenceTrace {
    pub fn verdicts(&self) -> impl Iterator<Item = &CheckVerdict> {
        self.layers.iter().flat_map(|l| l.verdicts.iter())
    }

    pub fn flagged_at(&self, tau: CheckThreshold) -> bool {
        self.verdicts().any(|v| v.flagged_at(tau))
    }
}

/// One layer: checked `S H W`, then ReLU if the layer asks for it. The
/// activation is not counted.
pub fn layer_forward(
    model: &GcnModel,
    layer_index: usize,
    input: &Matrix,
    checker: CheckerKind,
    tau: CheckThreshold,
    counters: &mut LayerCounters,
    hooks: &mut LayerHooks,
) -> Result<(DenseMatrix, Vec<CheckVerdict>), ModelError> {
    let layer = model
        .layers
        .get(layer_index)
        .ok_or_else(|| ModelError::InvalidModel(format!("no layer {layer_index}")))?;
    let ops = LayerOperands {
        adjacency: model.adjacency.matrix(),
        adjacency_col_checksum: model.adjacency.col_checksum(),
        features: input,
        weight: &layer.weight,
        weight_row_checksum: &layer.row_checksum,
    };
    let checked = check_layer(checker, ops, tau, counters, hooks)?;
    let out = if layer.apply_activation {
        checked.pre_activation.map(|v| v.max(0.0))
    } else {
        checked.pre_activation
    };
    Ok((out, checked.verdicts))
}

/// Runs every layer. `hooks` holds one set per layer.
pub fn infer(
    model: &GcnModel,
    features: &Matrix,
    checker: CheckerKind,
    tau: CheckThreshold,
    hooks: &mut [LayerHooks],
) -> Result<InferenceTrace, ModelError> {
    if hooks.len() != model.layers.len() {
        return Err(ModelError::HookCount {
            expected: model.layers.len(),
            got: hooks.len(),
        });
    }
    let mut traces = Vec::with_capacity(model.layers.len());
    let mut current: Option<Matrix> = None;
    for (k, layer_hooks) in hooks.iter_mut().enumerate() {
        let input = current.as_ref().unwrap_or(features);
        let mut counters = LayerCounters::default();
        let (out, verdicts) =
            layer_forward(model, k, input, checker, tau, &mut counters, layer_hooks)?;
        traces.push(LayerTrace { verdicts, counters });
        current = Some(Matrix::Dense(out));
    }
    let logits = match current {
        Some(Matrix::Dense(m)) => m,
        _ => unreachable!("model has at least one layer"),
    };
    Ok(InferenceTrace {
        logits,
        layers: traces,
    })
}

/// Fault-free inference.
pub fn infer_clean(
    model: &GcnModel,
    features: &Matrix,
    checker: CheckerKind,
    tau: CheckThreshold,
) -> Result<InferenceTrace, ModelError> {
    let mut hooks = vec![LayerHooks::none(); model.layers.len()];
    infer(model, features, checker, tau, &mut hooks)
}

/// Per-row argmax; ties go to the lowest class index.
pub fn classify(logits: &DenseMatrix) -> Vec<usize> {
    (0..logits.rows())
        .map(|i| {
            logits
                .row(i)
                .iter()
                .enumerate()
                .fold((0, f32::NEG_INFINITY), |best, (j, &v)| {
                    if v > best.1 {
                        (j, v)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(rows: &[&[f32]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn tau() -> CheckThreshold {
        CheckThreshold::new(1e-7).unwrap()
    }

    #[test]
    fn graph_dedups_and_validates() {
        let g = Graph::new(3, [(0, 1), (1, 0), (1, 2), (2, 2)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert!(matches!(
            Graph::new(2, [(0, 2)]),
            Err(ModelError::EdgeOutOfRange { .. })
        ));
        assert!(matches!(Graph::new(0, []), Err(ModelError::EmptyGraph)));
    }

    #[test]
    fn normalize_single_edge() {
        let s = NormalizedAdjacency::from_graph(&Graph::new(2, [(0, 1)]).unwrap());
        assert_eq!(s.matrix().to_dense().as_slice(), &[0.5, 0.5, 0.5, 0.5]);
        assert_eq!(s.col_checksum().as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn normalize_isolated_node() {
        let s = NormalizedAdjacency::from_graph(&Graph::new(1, []).unwrap());
        assert_eq!(s.matrix().to_dense().as_slice(), &[1.0]);
    }

    #[test]
    fn explicit_self_loop_is_merged_with_identity() {
        let with = NormalizedAdjacency::from_graph(&Graph::new(2, [(0, 0), (0, 1)]).unwrap());
        let without = NormalizedAdjacency::from_graph(&Graph::new(2, [(0, 1)]).unwrap());
        assert_eq!(with, without);
    }

    #[test]
    fn adjacency_validation() {
        let zero_col = dm(&[&[1.0, 0.0], &[1.0, 0.0]]).to_sparse();
        assert!(NormalizedAdjacency::from_matrix(zero_col.clone()).is_err());
        let asym = dm(&[&[1.0, 1.0], &[0.0, 1.0]]).to_sparse();
        assert!(NormalizedAdjacency::from_matrix(asym).is_err());
        let adv = NormalizedAdjacency::unchecked(zero_col);
        assert_eq!(adv.col_checksum().as_slice(), &[2.0, 0.0]);
        assert!(
            NormalizedAdjacency::from_matrix(dm(&[&[0.0, 1.0], &[1.0, 0.0]]).to_sparse()).is_ok()
        );
    }

    #[test]
    fn relu_applied_after_check() {
        let adj = NormalizedAdjacency::from_graph(&Graph::new(1, []).unwrap());
        let model = GcnModel::from_layers(
            adj,
            vec![GcnLayer::new(DenseMatrix::identity(2).unwrap(), true)],
        )
        .unwrap();
        let h = Matrix::Dense(dm(&[&[1.0, -2.0]]));
        let mut counters = LayerCounters::default();
        let (out, verdicts) = layer_forward(
            &model,
            0,
            &h,
            CheckerKind::Split,
            tau(),
            &mut counters,
            &mut LayerHooks::none(),
        )
        .unwrap();
        assert_eq!(out.as_slice(), &[1.0, 0.0]);
        assert!(verdicts.iter().all(|v| !v.flagged()));
        assert_eq!(verdicts[0].actual, -1.0);
    }

    #[test]
    fn swap_graph_without_activation() {
        let adj =
            NormalizedAdjacency::from_matrix(dm(&[&[0.0, 1.0], &[1.0, 0.0]]).to_sparse()).unwrap();
        let model = GcnModel::new(adj, vec![DenseMatrix::identity(2).unwrap()]).unwrap();
        let h = Matrix::Dense(dm(&[&[1.0, 2.0], &[3.0, 4.0]]));
        for kind in CheckerKind::ALL {
            let trace = infer_clean(&model, &h, kind, tau()).unwrap();
            assert_eq!(trace.logits.as_slice(), &[3.0, 4.0, 1.0, 2.0]);
            assert!(!trace.flagged_at(tau()));
        }
    }

    #[test]
    fn single_identity_layer_passes_features_through() {
        let adj = NormalizedAdjacency::from_graph(&Graph::new(3, []).unwrap());
        let model = GcnModel::new(adj, vec![DenseMatrix::identity(2).unwrap()]).unwrap();
        let feats = dm(&[&[0.5, -1.0], &[2.0, 0.0], &[-3.0, 7.0]]);
        let trace = infer_clean(
            &model,
            &Matrix::Dense(feats.clone()),
            CheckerKind::Fused,
            tau(),
        )
        .unwrap();
        assert!(trace.logits.bit_eq(&feats));
    }

    #[test]
    fn model_rejects_broken_chain_and_hook_count() {
        let adj = NormalizedAdjacency::from_graph(&Graph::new(2, []).unwrap());
        let bad = GcnModel::new(
            adj.clone(),
            vec![
                DenseMatrix::zeros(2, 3).unwrap(),
                DenseMatrix::zeros(2, 2).unwrap(),
            ],
        );
        assert!(matches!(bad, Err(ModelError::InvalidModel(_))));
        let model = GcnModel::new(adj, vec![DenseMatrix::identity(2).unwrap()]).unwrap();
        let h = Matrix::Dense(DenseMatrix::identity(2).unwrap());
        let err = infer(&model, &h, CheckerKind::Fused, tau(), &mut []).unwrap_err();
        assert!(matches!(
            err,
            ModelError::HookCount {
                expected: 1,
                got: 0
            }
        ));
    }

    #[test]
    fn classify_argmax_with_low_index_ties() {
        assert_eq!(classify(&dm(&[&[0.1, 0.9], &[0.7, 0.3]])), vec![1, 0]);
        assert_eq!(classify(&dm(&[&[0.5, 0.5]])), vec![0]);
        let mut m = dm(&[&[0.2, 0.6, 0.4]]);
        assert_eq!(classify(&m), vec![1]);
        m.set(0, 1, 0.3);
        assert_eq!(classify(&m), vec![2]);
    }

    #[test]
    fn with_row_checksum_checks_shape() {
        let w = DenseMatrix::identity(2).unwrap();
        assert!(
            GcnLayer::with_row_checksum(w.clone(), DenseMatrix::zeros(1, 2).unwrap(), false)
                .is_err()
        );
        let layer =
            GcnLayer::with_row_checksum(w, DenseMatrix::zeros(2, 1).unwrap(), false).unwrap();
        assert_eq!(layer.row_checksum().as_slice(), &[0.0, 0.0]);
    }
}
