//! Reference implementations used as test oracles. Nothing here calls into
//! the crate's kernels or checkers.

#![allow(dead_code)]

use gcn_abft::matrix::DenseMatrix;
use rand::Rng;

pub type Grid = Vec<Vec<f64>>;

pub fn to_grid(m: &DenseMatrix) -> Grid {
    (0..m.rows())
        .map(|i| m.row(i).iter().map(|&v| f64::from(v)).collect())
        .collect()
}

pub fn to_grid32(m: &DenseMatrix) -> Vec<Vec<f32>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn from_grid32(g: &[Vec<f32>]) -> DenseMatrix {
    DenseMatrix::from_rows(g).unwrap()
}

/// Textbook triple loop in double precision.
pub fn matmul_f64(a: &Grid, b: &Grid) -> Grid {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i][p] * b[p][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

/// Single-precision triple loop accumulating `acc = acc + a*b` with `p`
/// ascending, optionally skipping structural zeros of `a`.
pub fn matmul_f32_ordered(a: &[Vec<f32>], b: &[Vec<f32>], skip_zeros: bool) -> Vec<Vec<f32>> {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0f32; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut acc = 0.0f32;
            for p in 0..k {
                if skip_zeros && a[i][p] == 0.0 {
                    continue;
                }
                let prod = a[i][p] * b[p][j];
                acc += prod;
            }
            out[i][j] = acc;
        }
    }
    out
}

pub fn frobenius(a: &Grid) -> f64 {
    a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

/// `||got - want||_F / ||want||_F`, or the absolute norm when `want` is zero.
pub fn relative_error(got: &Grid, want: &Grid) -> f64 {
    let diff: Grid = got
        .iter()
        .zip(want)
        .map(|(g, w)| g.iter().zip(w).map(|(x, y)| x - y).collect())
        .collect();
    let denom = frobenius(want);
    if denom == 0.0 {
        frobenius(&diff)
    } else {
        frobenius(&diff) / denom
    }
}

/// `D^{-1/2} (A + I) D^{-1/2}` for an undirected edge list, in double.
pub fn normalized_adjacency_f64(n: usize, edges: &[(usize, usize)]) -> Grid {
    let mut a = vec![vec![0.0; n]; n];
    for &(u, v) in edges {
        if u != v {
            a[u][v] = 1.0;
            a[v][u] = 1.0;
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| a[i][j] / (deg[i].sqrt() * deg[j].sqrt()))
                .collect()
        })
        .collect()
}

/// Full forward pass in double: `S H W` per layer, ReLU between layers.
pub fn gcn_forward_f64(s: &Grid, h: &Grid, weights: &[Grid]) -> Grid {
    let mut cur = h.clone();
    for (k, w) in weights.iter().enumerate() {
        let mut out = matmul_f64(s, &matmul_f64(&cur, w));
        if k + 1 < weights.len() {
            for v in out.iter_mut().flatten() {
                *v = v.max(0.0);
            }
        }
        cur = out;
    }
    cur
}

pub fn column_sums(a: &Grid) -> Vec<f64> {
    (0..a[0].len())
        .map(|j| a.iter().map(|r| r[j]).sum())
        .collect()
}

pub fn row_sums(a: &Grid) -> Vec<f64> {
    a.iter().map(|r| r.iter().sum()).collect()
}

pub fn random_grid32<R: Rng>(rng: &mut R, rows: usize, cols: usize, density: f64) -> Vec<Vec<f32>> {
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| {
                    if rng.gen_bool(density) {
                        rng.gen_range(-1.0f32..=1.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

pub fn random_edges<R: Rng>(rng: &mut R, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Operation counts of one layer derived by hand from the kernel loop
/// structure (a multiply-add is two operations, a comparison one).
pub struct HandCounts {
    pub output: u64,
    pub fused_check: u64,
    pub split_check: u64,
}

pub fn hand_counts(n: u64, f: u64, h: u64, nnz_h: u64, nnz_s: u64) -> HandCounts {
    let output = 2 * nnz_h * h + 2 * nnz_s * h;
    // x_r = H w_r, s_c . x_r, sum of n*h outputs, final difference
    let fused_check = 2 * nnz_h + 2 * n + n * h + 1;
    // h_c sums, h_c . w_r, sum of n*h entries of X, phase-1 difference
    let split_check = fused_check + nnz_h + 2 * f + n * h + 1;
    HandCounts {
        output,
        fused_check,
        split_check,
    }
}
