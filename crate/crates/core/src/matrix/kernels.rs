//! Instrumented kernels.
//!
//! Products iterate outputs in row-major order and, per output, the
//! reduction dimension in increasing order; that is also the order in which
//! `MacResult` ops are numbered. Checksum accumulations walk stored entries
//! in storage order.

use super::{DenseMatrix, FaultHook, MatrixError, MatrixRef, OpCounter, Result, SparseMatrix};

fn check_inner(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Result<()> {
    if left.1 != right.0 {
        return Err(MatrixError::DimensionMismatch { op, left, right });
    }
    Ok(())
}

/// Dense product `a * b` in single precision.
pub fn gemm(
    a: &DenseMatrix,
    b: &DenseMatrix,
    counter: &mut OpCounter,
    hook: &mut FaultHook,
) -> Result<DenseMatrix> {
    check_inner("gemm", a.shape(), b.shape())?;
    let (n, inner, m) = (a.rows(), a.cols(), b.cols());
    let bs = b.as_slice();
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        let a_row = a.row(i);
        for j in 0..m {
            let mut acc = 0.0f32;
            for k in 0..inner {
                acc = hook.mac(acc + a_row[k] * bs[k * m + j]);
                counter.mac();
            }
            out.push(acc);
        }
    }
    DenseMatrix::from_vec(n, m, out)
}

/// Sparse-times-dense product. Only stored entries of `a` are touched, so
/// each output costs one multiply-add per stored value in its row.
pub fn spmm(
    a: &SparseMatrix,
    b: &DenseMatrix,
    counter: &mut OpCounter,
    hook: &mut FaultHook,
) -> Result<DenseMatrix> {
    check_inner("spmm", a.shape(), b.shape())?;
    let (n, m) = (a.rows(), b.cols());
    let bs = b.as_slice();
    let offsets = a.row_offsets();
    let cols = a.col_indices();
    let vals = a.values();
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        let range = offsets[i]..offsets[i + 1];
        for j in 0..m {
            let mut acc = 0.0f32;
            for p in range.clone() {
                acc = hook.mac(acc + vals[p] * bs[cols[p] * m + j]);
                counter.mac();
            }
            out.push(acc);
        }
    }
    DenseMatrix::from_vec(n, m, out)
}

/// Dispatches to [`gemm`] or [`spmm`] by the left operand's representation.
pub fn multiply<'a>(
    a: impl Into<MatrixRef<'a>>,
    b: &DenseMatrix,
    counter: &mut OpCounter,
    hook: &mut FaultHook,
) -> Result<DenseMatrix> {
    match a.into() {
        MatrixRef::Dense(d) => gemm(d, b, counter, hook),
        MatrixRef::Sparse(s) => spmm(s, b, counter, hook),
    }
}

fn for_each_stored(m: MatrixRef<'_>, mut f: impl FnMut(usize, usize, f32)) {
    match m {
        MatrixRef::Dense(d) => {
            for i in 0..d.rows() {
                for (j, &v) in d.row(i).iter().enumerate() {
                    f(i, j, v);
                }
            }
        }
        MatrixRef::Sparse(s) => {
            for i in 0..s.rows() {
                for (j, v) in s.row_entries(i) {
                    f(i, j, v);
                }
            }
        }
    }
}

/// Per-column sums `eᵀM` as a `1 x cols` matrix, accumulated in single
/// precision. One addition per stored entry.
pub fn col_checksum<'a>(m: impl Into<MatrixRef<'a>>, counter: &mut OpCounter) -> DenseMatrix {
    let m = m.into();
    let (_, cols) = m.shape();
    let mut sums = vec![0.0f32; cols];
    for_each_stored(m, |_, j, v| {
        sums[j] += v;
        counter.addition();
    });
    DenseMatrix::from_vec(1, cols, sums).expect("shape checked at construction")
}

/// Per-row sums `Me` as a `rows x 1` matrix, accumulated in single precision.
pub fn row_checksum<'a>(m: impl Into<MatrixRef<'a>>, counter: &mut OpCounter) -> DenseMatrix {
    let m = m.into();
    let (rows, _) = m.shape();
    let mut sums = vec![0.0f32; rows];
    for_each_stored(m, |i, _, v| {
        sums[i] += v;
        counter.addition();
    });
    DenseMatrix::from_vec(rows, 1, sums).expect("shape checked at construction")
}

/// Per-column sums accumulated in double precision, for check state that
/// is computed online and therefore exposed to `ChecksumAccum` faults.
pub fn col_checksum_wide<'a>(
    m: impl Into<MatrixRef<'a>>,
    counter: &mut OpCounter,
    hook: &mut FaultHook,
) -> Vec<f64> {
    let m = m.into();
    let (_, cols) = m.shape();
    let mut sums = vec![0.0f64; cols];
    for_each_stored(m, |_, j, v| {
        sums[j] = hook.accum(sums[j] + f64::from(v));
        counter.addition();
    });
    sums
}

/// Sum of every entry, accumulated in double precision from zero.
pub fn total_checksum(m: &DenseMatrix, counter: &mut OpCounter, hook: &mut FaultHook) -> f64 {
    let mut acc = 0.0f64;
    for &v in m.as_slice() {
        acc = hook.accum(acc + f64::from(v));
        counter.addition();
    }
    acc
}

/// Double-precision dot product used for predicted checksums. Both the
/// product and the running sum of each term are exposed to the hook.
pub fn dot_wide(
    a: &[f64],
    b: &[f64],
    counter: &mut OpCounter,
    hook: &mut FaultHook,
) -> Result<f64> {
    if a.len() != b.len() {
        return Err(MatrixError::DimensionMismatch {
            op: "dot",
            left: (1, a.len()),
            right: (b.len(), 1),
        });
    }
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let product = hook.accum(x * y);
        acc = hook.accum(acc + product);
        counter.mac();
    }
    Ok(acc)
}
