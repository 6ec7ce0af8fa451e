//! Rank-consistent ordinal regression.
//!
//! An ordinal label `y` in `r_1 < ... < r_K` is extended into `K-1` binary
//! labels `1{y > r_k}`. A network predicts each of them; the CORAL head
//! shares one output weight vector across all tasks and gives each task its
//! own bias, so ordered biases imply ordered task probabilities for every
//! input. The predicted rank is `1 + sum_k 1{p_k > 0.5}`.
//!
//! Modules:
//!
//! - [`ordinal`]: label extension, decoding, consistency predicates.
//! - [`model`]: MLP body with CORAL, OR (independent task weights) and CE
//!   (softmax) heads.
//! - [`loss`]: losses, analytic gradients and a finite-difference oracle.
//! - [`optim`]: Adam, the training loop, and the bias-only solver.
//! - [`metrics`]: MAE/RMSE, cost matrices, bound checks and audits.
//! - [`data`]: CSV loading, splitting, standardization, synthetic data.
//! - [`format`]: the model file format.
//! - [`par`]: data-parallel helpers (rayon behind the `parallel` feature).

pub mod data;
pub mod error;
pub mod format;
pub mod loss;
pub mod math;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod ordinal;
pub mod par;

pub use error::{CoralError, Result};
pub use model::{Architecture, HeadKind, OrdinalModel};
pub use ordinal::{BinaryDecisions, ExtendedTarget, RankIndex, RankSpec};
