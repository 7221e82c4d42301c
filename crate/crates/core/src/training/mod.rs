//! Window construction, batching, the optimization loop and ablation
//! variants.

mod batch;
mod trainer;
mod variants;
mod windows;
#[cfg(test)]
mod tests;

pub use batch::{examples, group, groups_loss, plan_batches, sequential_batches, BatchMode, Example, Group};
pub use trainer::{
    format_loss_log, mean_loss, parse_loss_log, train, EpochRecord, NoObserver, StopOn, TrainConfig,
    TrainObserver, TrainOutcome,
};
pub use variants::{variant_config, Variant};
pub use windows::{make_windows, TrainingWindow};
