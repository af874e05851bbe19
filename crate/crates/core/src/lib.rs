//! Pack-attend-unpack inference for token-pruned vision transformers.
//!
//! The crate is organized around a ragged batch layout: surviving tokens of a
//! pruned batch are stored contiguously in a flat `[T_total, D]` buffer
//! delimited by a `cu_seqlens` offset vector, and attention runs over that
//! buffer with a tiled online-softmax kernel (one logical program per
//! image-head pair). A padded-masked baseline and a naive quadratic oracle
//! provide ground truth, and a measurement harness reproduces the
//! warmup/timed-iteration protocol, sparsity sweeps, and dispatch-floor
//! overhead decomposition used to study these kernels.
//!
//! Modules:
//! - [`config`]: model shapes (`ModelConfig` presets) and kernel tile sizes.
//! - [`ragged`]: the ragged containers (`RaggedBatch`, `RaggedQkv`,
//!   `KeepMask`) and `cu_seqlens` validation.
//! - [`tensor`]: dense batch container and the RGT1/RGI1 binary formats.
//! - [`reference`]: naive quadratic attention and the padded-masked baseline.
//! - [`attention`]: the tiled ragged attention kernel.
//! - [`packing`]: mask -> pack plan -> gather/scatter between dense and ragged.
//! - [`pruning`]: keep-mask generators (l2 top-k and synthetic random masks).
//! - [`pipeline`]: miniature ViT forward passes in both backends, FLOP
//!   accounting, and the theoretical speedup model.
//! - [`bench`]: timing protocol, sweep grids, and overhead decomposition.
//! - [`report`]: CSV/SVG emission and CSV parsing.
//! - [`check`]: the oracle- and backend-equivalence suites.

pub mod attention;
pub mod bench;
pub mod check;
pub mod config;
pub mod error;
pub mod packing;
pub mod pipeline;
pub mod pruning;
pub mod ragged;
pub mod reference;
pub mod report;
pub mod tensor;

pub use config::{ModelConfig, TileConfig};
pub use error::{Error, Result};
pub use ragged::{validate_cu_seqlens, KeepMask, RaggedBatch, RaggedQkv};
pub use tensor::DenseBatch;
