//! Context-guided anisotropic diffusion on graphs for semi-supervised label
//! propagation.
//!
//! The pipeline:
//!
//! 1. [`graph`]: exact kNN neighborhoods, Gaussian edge weights with an
//!    automatically chosen width, stored as a symmetric CSR [`Graph`].
//! 2. [`diffusivity`]: per-edge diffusivities `q_ij` from the current label
//!    function, turned into anisotropic weights `wD_ij` (plain, smooth or
//!    local-match).
//! 3. [`laplacian`]: matrix-free isotropic and anisotropic Laplacians and the
//!    regularizer energy.
//! 4. [`diffusion`]: one-hot initialization, isotropic warm start, explicit
//!    Euler steps (linear or nonlinear), and argmax decoding.
//! 5. [`baselines`]: the Gaussian-random-field harmonic solution.
//! 6. [`data`] and [`eval`]: datasets, splits, grid search and benchmarks.
//!
//! Hot loops run through [`Execution`]; with the `parallel` feature (on by
//! default) they use rayon, and results are bitwise identical either way.
//!
//! ```
//! use ctxdiff::{data, diffusion, graph};
//!
//! let ds = data::two_moons(200, 0.05, 1).unwrap();
//! let g = graph::knn_graph(&ds.source.distances(), 8).unwrap();
//! let state = diffusion::init_labels(&[(0, 0), (100, 1)], 200, 2).unwrap();
//! let cfg = diffusion::DiffusionConfig { k: 8, steps: 30, ..Default::default() };
//! let out = diffusion::run_diffusion(&cfg, &g, &state).unwrap();
//! let pred = diffusion::decode_labels(out.f.view());
//! assert_eq!(pred.len(), 200);
//! ```

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cli;
pub mod data;
pub mod diffusion;
pub mod diffusivity;
mod error;
pub mod eval;
pub mod exec;
pub mod graph;
pub mod io;
pub mod laplacian;

pub use error::{Error, Result};
pub use exec::Execution;
pub use graph::Graph;

/// Smallest value produced by the Gaussian kernels, so that weights and
/// diffusivities stay strictly positive when `exp` would underflow. The
/// product of two floored values is still a normal float.
pub const POSITIVE_FLOOR: f64 = 1e-150;
