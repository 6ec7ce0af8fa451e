//! Optimization: adaptive moment estimation, the training loop with
//! validation-based model selection, and the bias-only subproblem solver.

mod adam;
mod bias;
mod train;

pub use adam::{Adam, AdamConfig};
pub use bias::{
    optimize_biases_only, random_bias_instance, verify_ordered_biases, BiasInstance, BiasOptions,
    BiasSolution, OrderingReport,
};
pub use train::{evaluate_mae_rmse, train, EpochRecord, TrainConfig, TrainOutcome};
