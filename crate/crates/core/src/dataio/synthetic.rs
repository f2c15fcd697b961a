use super::{DataError, DatasetBundle, Result};
use crate::gcn::Graph;
use crate::matrix::{DenseMatrix, Matrix, SparseMatrix};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// How generated features are stored. Values are the same either way.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureStorage {
    #[default]
    Sparse,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_nodes: usize,
    pub edge_probability: f64,
    pub feature_dim: usize,
    pub feature_density: f64,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub seed: u64,
    pub feature_storage: FeatureStorage,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_nodes: 64,
            edge_probability: 0.1,
            feature_dim: 32,
            feature_density: 1.0,
            hidden_dims: vec![16],
            num_classes: 4,
            seed: 0,
            feature_storage: FeatureStorage::Sparse,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let invalid = |m: &str| Err(DataError::InvalidSpec(m.into()));
        if self.num_nodes == 0 || self.feature_dim == 0 || self.num_classes == 0 {
            return invalid("num_nodes, feature_dim and num_classes must be at least 1");
        }
        if self.hidden_dims.contains(&0) {
            return invalid("hidden dimensions must be at least 1");
        }
        if !(self.edge_probability > 0.0 && self.edge_probability <= 1.0) {
            return invalid("edge_probability must lie in (0, 1]");
        }
        if !(self.feature_density > 0.0 && self.feature_density <= 1.0) {
            return invalid("feature_density must lie in (0, 1]");
        }
        Ok(())
    }

    /// Layer widths from input features to classes.
    pub fn layer_widths(&self) -> Vec<usize> {
        std::iter::once(self.feature_dim)
            .chain(self.hidden_dims.iter().copied())
            .chain(std::iter::once(self.num_classes))
            .collect()
    }
}

fn nonzero_uniform(rng: &mut ChaCha8Rng, bound: f32) -> f32 {
    loop {
        let v = rng.gen_range(-bound..=bound);
        if v != 0.0 {
            return v;
        }
    }
}

/// Erdős–Rényi graph, features uniform in [-1, 1] at the requested density,
/// and Glorot-range uniform weights, all drawn from one seeded generator in
/// that order.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<DatasetBundle> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.num_nodes;

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(spec.edge_probability) {
                edges.push((u, v));
            }
        }
    }
    let graph = Graph::new(n, edges)?;

    let mut triplets = Vec::new();
    for i in 0..n {
        for j in 0..spec.feature_dim {
            if rng.gen_bool(spec.feature_density) {
                triplets.push((i, j, nonzero_uniform(&mut rng, 1.0)));
            }
        }
    }
    let sparse = SparseMatrix::from_triplets(n, spec.feature_dim, triplets)?;
    let features = match spec.feature_storage {
        FeatureStorage::Sparse => Matrix::Sparse(sparse),
        FeatureStorage::Dense => Matrix::Dense(sparse.to_dense()),
    };

    let widths = spec.layer_widths();
    let weights = widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
            let data = (0..fan_in * fan_out)
                .map(|_| nonzero_uniform(&mut rng, s))
                .collect();
            DenseMatrix::from_vec(fan_in, fan_out, data)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;

    Ok(DatasetBundle {
        name: format!("synthetic-n{n}-seed{}", spec.seed),
        graph,
        features,
        weights,
        weight_checksums: None,
        golden_labels: None,
    })
}
