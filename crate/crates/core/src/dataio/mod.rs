//! Text file formats, dataset bundles, seeded synthetic instances and run
//! configuration.
//!
//! * Graphs: one `u v` edge per line (0-based), optional `n <count>` header.
//! * Dense matrices: comma-separated rows.
//! * Sparse matrices: a `rows cols nnz` header followed by `i j v` lines.
//! * Labels: one class index per line.
//!
//! Blank lines and lines starting with `#` are skipped everywhere; LF and
//! CRLF line endings are both accepted.

mod config;
mod synthetic;

pub use config::{load_config, parse_config, DataSource, RunConfig};
pub use synthetic::{generate_synthetic, FeatureStorage, SyntheticSpec};

use crate::gcn::{GcnLayer, GcnModel, Graph, ModelError, NormalizedAdjacency};
use crate::matrix::{DenseMatrix, Matrix, MatrixError, SparseMatrix};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: node index {index} outside 0..{num_nodes}")]
    IndexOutOfRange {
        line: usize,
        index: usize,
        num_nodes: usize,
    },
    #[error("inconsistent shape: {0}")]
    ShapeInconsistent(String),
    #[error("line {line}: explicit zero in sparse matrix")]
    ExplicitZero { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("key `{key}`: cannot read `{value}` as {expected}")]
    TypeError {
        key: String,
        value: String,
        expected: String,
    },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixFormat {
    Dense,
    Sparse,
}

impl MatrixFormat {
    pub fn name(self) -> &'static str {
        match self {
            MatrixFormat::Dense => "dense",
            MatrixFormat::Sparse => "sparse",
        }
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Non-blank, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_field<T: std::str::FromStr>(line: usize, field: &str, what: &str) -> Result<T> {
    field.parse().map_err(|_| DataError::Parse {
        line,
        message: format!("expected {what}, found `{field}`"),
    })
}

fn expect_fields<'a>(line: usize, text: &'a str, count: usize) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != count {
        return Err(DataError::Parse {
            line,
            message: format!("expected {count} fields, found {}", fields.len()),
        });
    }
    Ok(fields)
}

pub fn parse_graph(text: &str) -> Result<Graph> {
    let mut declared = None;
    let mut edges = Vec::new();
    for (line, content) in content_lines(text) {
        let fields = expect_fields(line, content, 2)?;
        if fields[0] == "n" {
            if declared.is_some() || !edges.is_empty() {
                return Err(DataError::Parse {
                    line,
                    message: "node-count header must come first".into(),
                });
            }
            declared = Some(parse_field::<usize>(line, fields[1], "a node count")?);
            continue;
        }
        let u: usize = parse_field(line, fields[0], "a node index")?;
        let v: usize = parse_field(line, fields[1], "a node index")?;
        if let Some(n) = declared {
            if let Some(&index) = [u, v].iter().find(|&&x| x >= n) {
                return Err(DataError::IndexOutOfRange {
                    line,
                    index,
                    num_nodes: n,
                });
            }
        }
        edges.push((u, v));
    }
    let num_nodes = match declared {
        Some(n) => n,
        None => edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0),
    };
    Ok(Graph::new(num_nodes, edges)?)
}

pub fn load_graph(path: &Path) -> Result<Graph> {
    parse_graph(&read_text(path)?)
}

/// Canonical edge list with an explicit node-count header.
pub fn format_graph(graph: &Graph) -> String {
    let mut out = format!("n {}\n", graph.num_nodes());
    for (u, v) in graph.edges() {
        let _ = writeln!(out, "{u} {v}");
    }
    out
}

pub fn write_graph(path: &Path, graph: &Graph) -> Result<()> {
    write_text(path, &format_graph(graph))
}

pub fn parse_matrix(text: &str, format: MatrixFormat) -> Result<Matrix> {
    match format {
        MatrixFormat::Dense => parse_dense(text).map(Matrix::Dense),
        MatrixFormat::Sparse => parse_sparse(text).map(Matrix::Sparse),
    }
}

pub fn parse_dense(text: &str) -> Result<DenseMatrix> {
    let mut rows: Vec<Vec<f32>> = Vec::new();
    for (line, content) in content_lines(text) {
        let row = content
            .split(',')
            .map(|f| parse_field::<f32>(line, f.trim(), "a real number"))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(DataError::ShapeInconsistent(format!(
                    "line {line} has {} values, expected {}",
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::ShapeInconsistent("no rows".into()));
    }
    Ok(DenseMatrix::from_rows(&rows)?)
}

pub fn parse_sparse(text: &str) -> Result<SparseMatrix> {
    let mut lines = content_lines(text);
    let (line, header) = lines
        .next()
        .ok_or_else(|| DataError::ShapeInconsistent("missing `rows cols nnz` header".into()))?;
    let fields = expect_fields(line, header, 3)?;
    let rows: usize = parse_field(line, fields[0], "a row count")?;
    let cols: usize = parse_field(line, fields[1], "a column count")?;
    let nnz: usize = parse_field(line, fields[2], "an entry count")?;
    let mut triplets = Vec::with_capacity(nnz);
    for (line, content) in lines {
        let fields = expect_fields(line, content, 3)?;
        let i: usize = parse_field(line, fields[0], "a row index")?;
        let j: usize = parse_field(line, fields[1], "a column index")?;
        let v: f32 = parse_field(line, fields[2], "a real number")?;
        if v == 0.0 {
            return Err(DataError::ExplicitZero { line });
        }
        if i >= rows || j >= cols {
            return Err(DataError::ShapeInconsistent(format!(
                "line {line}: entry ({i}, {j}) outside {rows}x{cols}"
            )));
        }
        triplets.push((i, j, v));
    }
    if triplets.len() != nnz {
        return Err(DataError::ShapeInconsistent(format!(
            "header declares {nnz} entries, found {}",
            triplets.len()
        )));
    }
    SparseMatrix::from_triplets(rows, cols, triplets)
        .map_err(|e| DataError::ShapeInconsistent(e.to_string()))
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<Matrix> {
    parse_matrix(&read_text(path)?, format)
}

pub fn load_dense(path: &Path) -> Result<DenseMatrix> {
    parse_dense(&read_text(path)?)
}

/// Shortest representation that parses back to the same `f32`.
pub fn format_matrix(matrix: &Matrix) -> String {
    let mut out = String::new();
    match matrix {
        Matrix::Dense(m) => {
            for i in 0..m.rows() {
                let row: Vec<String> = m.row(i).iter().map(f32::to_string).collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
        Matrix::Sparse(s) => {
            let _ = writeln!(out, "{} {} {}", s.rows(), s.cols(), s.nnz());
            for i in 0..s.rows() {
                for (j, v) in s.row_entries(i) {
                    let _ = writeln!(out, "{i} {j} {v}");
                }
            }
        }
    }
    out
}

pub fn write_matrix(path: &Path, matrix: &Matrix) -> Result<()> {
    write_text(path, &format_matrix(matrix))
}

pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    content_lines(text)
        .map(|(line, l)| parse_field(line, l, "a class index"))
        .collect()
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    parse_labels(&read_text(path)?)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
    write_text(path, &text)
}

/// Everything needed to build and run a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub name: String,
    pub graph: Graph,
    pub features: Matrix,
    pub weights: Vec<DenseMatrix>,
    /// Stored `w_r` per layer; derived from the weights when absent.
    #[serde(default)]
    pub weight_checksums: Option<Vec<DenseMatrix>>,
    pub golden_labels: Option<Vec<usize>>,
}

impl DatasetBundle {
    pub fn validate(&self) -> Result<()> {
        let n = self.graph.num_nodes();
        if self.features.rows() != n {
            return Err(DataError::ShapeInconsistent(format!(
                "features have {} rows for {n} nodes",
                self.features.rows()
            )));
        }
        if self.weights.is_empty() {
            return Err(DataError::ShapeInconsistent("no weight matrices".into()));
        }
        let mut width = self.features.cols();
        for (k, w) in self.weights.iter().enumerate() {
            if w.rows() != width {
                return Err(DataError::ShapeInconsistent(format!(
                    "weight {k} has {} rows, expected {width}",
                    w.rows()
                )));
            }
            width = w.cols();
        }
        if let Some(sums) = &self.weight_checksums {
            if sums.len() != self.weights.len() {
                return Err(DataError::ShapeInconsistent(format!(
                    "{} weight checksums for {} weights",
                    sums.len(),
                    self.weights.len()
                )));
            }
        }
        if let Some(labels) = &self.golden_labels {
            if labels.len() != n {
                return Err(DataError::ShapeInconsistent(format!(
                    "{} labels for {n} nodes",
                    labels.len()
                )));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<GcnModel> {
        self.validate()?;
        let adjacency = NormalizedAdjacency::from_graph(&self.graph);
        let Some(sums) = &self.weight_checksums else {
            return Ok(GcnModel::new(adjacency, self.weights.clone())?);
        };
        let last = self.weights.len() - 1;
        let layers = self
            .weights
            .iter()
            .zip(sums)
            .enumerate()
            .map(|(k, (w, r))| GcnLayer::with_row_checksum(w.clone(), r.clone(), k < last))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(GcnModel::from_layers(adjacency, layers)?)
    }
}

/// Writes every component next to a `dataset.cfg` that reloads them, and
/// returns that file's path.
pub fn write_bundle(dir: &Path, bundle: &DatasetBundle) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| DataError::Io {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })?;
    let format = if bundle.features.is_sparse() {
        MatrixFormat::Sparse
    } else {
        MatrixFormat::Dense
    };
    write_graph(&dir.join("graph.txt"), &bundle.graph)?;
    write_matrix(&dir.join("features.txt"), &bundle.features)?;
    let mut weight_names = Vec::new();
    for (k, w) in bundle.weights.iter().enumerate() {
        let name = format!("weight{k}.csv");
        write_matrix(&dir.join(&name), &Matrix::Dense(w.clone()))?;
        weight_names.push(name);
    }
    let mut cfg = format!(
        "name = {}\ngraph = graph.txt\nfeatures = features.txt\nfeatures_format = {}\nweights = {}\n",
        bundle.name,
        format.name(),
        weight_names.join(",")
    );
    if let Some(sums) = &bundle.weight_checksums {
        let mut names = Vec::new();
        for (k, r) in sums.iter().enumerate() {
            let name = format!("weight{k}_checksum.csv");
            write_matrix(&dir.join(&name), &Matrix::Dense(r.clone()))?;
            names.push(name);
        }
        let _ = writeln!(cfg, "weight_checksums = {}", names.join(","));
    }
    if let Some(labels) = &bundle.golden_labels {
        write_labels(&dir.join("labels.txt"), labels)?;
        cfg.push_str("labels = labels.txt\n");
    }
    let path = dir.join("dataset.cfg");
    write_text(&path, &cfg)?;
    Ok(path)
}
