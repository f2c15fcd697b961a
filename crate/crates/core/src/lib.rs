//! Graph convolutional network inference with two interchangeable
//! checksum-based error checkers, a single-bit fault-injection lab and
//! operation-count accounting.
//!
//! * [`matrix`]: dense/CSR matrices, instrumented kernels, fault hooks.
//! * [`abft`]: split (per-product) and fused (per-layer) checkers.
//! * [`gcn`]: adjacency normalization, layer forward pass, inference.
//! * [`accounting`]: op-count tables and per-layer phase shares.
//! * [`fault_lab`]: fault scheduling, trials and campaigns.
//! * [`dataio`]: file formats, synthetic datasets, run configuration.
//! * [`report`]: JSON, CSV and text renderings.
//! * [`cli`]: the `gcn-abft` command-line front end.

pub mod abft;
pub mod accounting;
pub mod cli;
pub mod dataio;
pub mod fault_lab;
pub mod gcn;
pub mod matrix;
pub mod report;
