//! Dense and CSR matrices plus the instrumented kernels the checkers run on.
//!
//! All products work in single precision. Checksum accumulations that feed
//! a verdict run in double precision. Every kernel takes an [`OpCounter`]
//! and a [`FaultHook`] so that arithmetic can be audited and a single bit
//! of any intermediate result can be flipped deterministically.

mod counter;
mod fault;
mod kernels;

pub use counter::OpCounter;
pub use fault::{flip_bit, flip_bit_f32, flip_bit_f64, BitFlip, FaultHook, Stream, Width};
pub use kernels::{
    col_checksum, col_checksum_wide, dot_wide, gemm, multiply, row_checksum, spmm, total_checksum,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("dimension mismatch in {op}: {left:?} x {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("bit {bit} out of range for {width:?} value")]
    BitOutOfRange { bit: u32, width: Width },
    #[error("invalid shape {rows}x{cols}: {reason}")]
    InvalidShape {
        rows: usize,
        cols: usize,
        reason: String,
    },
    #[error("explicit zero stored at ({row}, {col})")]
    ExplicitZero { row: usize, col: usize },
    #[error("malformed CSR structure: {0}")]
    MalformedCsr(String),
}

pub type Result<T> = std::result::Result<T, MatrixError>;

/// Row-major single-precision matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl DenseMatrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(MatrixError::InvalidShape {
                rows,
                cols,
                reason: "both dimensions must be at least 1".into(),
            });
        }
        if data.len() != rows * cols {
            return Err(MatrixError::InvalidShape {
                rows,
                cols,
                reason: format!("expected {} values, got {}", rows * cols, data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(MatrixError::InvalidShape {
                rows: rows.len(),
                cols,
                reason: "ragged rows".into(),
            });
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::from_vec(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f32) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    /// Bitwise equality, so that `-0.0 != 0.0` and identical NaN payloads compare equal.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.shape() == other.shape()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn to_sparse(&self) -> SparseMatrix {
        let mut row_offsets = Vec::with_capacity(self.rows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for i in 0..self.rows {
            for (j, &v) in self.row(i).iter().enumerate() {
                if v != 0.0 {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(values.len());
        }
        SparseMatrix {
            rows: self.rows,
            cols: self.cols,
            row_offsets,
            col_indices,
            values,
        }
    }
}

/// Compressed sparse row matrix. Stored values are always nonzero so that
/// operation counts derived from `nnz` are exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f32>,
}

impl SparseMatrix {
    pub fn from_csr(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f32>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(MatrixError::InvalidShape {
                rows,
                cols,
                reason: "both dimensions must be at least 1".into(),
            });
        }
        if row_offsets.len() != rows + 1 {
            return Err(MatrixError::MalformedCsr(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                rows + 1
            )));
        }
        if row_offsets[0] != 0 || row_offsets[rows] != values.len() {
            return Err(MatrixError::MalformedCsr(
                "row_offsets must start at 0 and end at nnz".into(),
            ));
        }
        if col_indices.len() != values.len() {
            return Err(MatrixError::MalformedCsr(
                "col_indices and values differ in length".into(),
            ));
        }
        for i in 0..rows {
            let (start, end) = (row_offsets[i], row_offsets[i + 1]);
            if start > end || end > values.len() {
                return Err(MatrixError::MalformedCsr(format!(
                    "row_offsets decrease at row {i}"
                )));
            }
            let cols_in_row = &col_indices[start..end];
            if cols_in_row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(MatrixError::MalformedCsr(format!(
                    "column indices in row {i} are not strictly increasing"
                )));
            }
            if let Some(&c) = cols_in_row.last() {
                if c >= cols {
                    return Err(MatrixError::MalformedCsr(format!(
                        "column index {c} out of range in row {i}"
                    )));
                }
            }
            for p in start..end {
                if values[p] == 0.0 {
                    return Err(MatrixError::ExplicitZero {
                        row: i,
                        col: col_indices[p],
                    });
                }
            }
        }
        Ok(Self {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds from `(row, col, value)` triplets in any order. Duplicates and
    /// explicit zeros are rejected.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f32)>,
    ) -> Result<Self> {
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        if let Some(&(i, j, _)) = triplets.iter().find(|&&(i, j, _)| i >= rows || j >= cols) {
            return Err(MatrixError::MalformedCsr(format!(
                "entry ({i}, {j}) outside {rows}x{cols}"
            )));
        }
        if let Some(w) = triplets
            .windows(2)
            .find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1))
        {
            return Err(MatrixError::MalformedCsr(format!(
                "duplicate entry ({}, {})",
                w[0].0, w[0].1
            )));
        }
        let mut row_offsets = vec![0usize; rows + 1];
        for &(i, _, _) in &triplets {
            row_offsets[i + 1] += 1;
        }
        for i in 0..rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        let (col_indices, values) = triplets.into_iter().map(|(_, j, v)| (j, v)).unzip();
        Self::from_csr(rows, cols, row_offsets, col_indices, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Iterates `(col, value)` over the stored entries of one row.
    pub fn row_entries(&self, row: usize) -> impl Iterator<Item = (usize, f32)> + '_ {
        let range = self.row_offsets[row]..self.row_offsets[row + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut data = vec![0.0; self.rows * self.cols];
        for i in 0..self.rows {
            for (j, v) in self.row_entries(i) {
                data[i * self.cols + j] = v;
            }
        }
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }
}

/// A matrix in whichever representation the caller chose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Matrix {
    Dense(DenseMatrix),
    Sparse(SparseMatrix),
}

impl Matrix {
    pub fn rows(&self) -> usize {
        match self {
            Matrix::Dense(m) => m.rows(),
            Matrix::Sparse(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Matrix::Dense(m) => m.cols(),
            Matrix::Sparse(m) => m.cols(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    /// Number of stored entries: `nnz` for sparse, `rows * cols` for dense.
    pub fn stored_len(&self) -> usize {
        match self {
            Matrix::Dense(m) => m.rows() * m.cols(),
            Matrix::Sparse(m) => m.nnz(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Matrix::Sparse(_))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            Matrix::Dense(m) => m.clone(),
            Matrix::Sparse(m) => m.to_dense(),
        }
    }
}

/// Borrowed view over either representation, accepted by the kernels.
#[derive(Debug, Clone, Copy)]
pub enum MatrixRef<'a> {
    Dense(&'a DenseMatrix),
    Sparse(&'a SparseMatrix),
}

impl MatrixRef<'_> {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            MatrixRef::Dense(m) => m.shape(),
            MatrixRef::Sparse(m) => m.shape(),
        }
    }
}

impl<'a> From<&'a DenseMatrix> for MatrixRef<'a> {
    fn from(m: &'a DenseMatrix) -> Self {
        MatrixRef::Dense(m)
    }
}

impl<'a> From<&'a SparseMatrix> for MatrixRef<'a> {
    fn from(m: &'a SparseMatrix) -> Self {
        MatrixRef::Sparse(m)
    }
}

impl<'a> From<&'a Matrix> for MatrixRef<'a> {
    fn from(m: &'a Matrix) -> Self {
        match m {
            Matrix::Dense(d) => MatrixRef::Dense(d),
            Matrix::Sparse(s) => MatrixRef::Sparse(s),
        }
    }
}

impl From<DenseMatrix> for Matrix {
    fn from(m: DenseMatrix) -> Self {
        Matrix::Dense(m)
    }
}

impl From<SparseMatrix> for Matrix {
    fn from(m: SparseMatrix) -> Self {
        Matrix::Sparse(m)
    }
}
