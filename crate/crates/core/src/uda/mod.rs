//! Student-teacher self-training: EMA teacher, pseudo-labels with flip
//! aggregation, the loss stack, and the optimization loop.

mod adamw;
mod ema;
mod losses;
mod pseudo;
mod trainer;

pub use adamw::AdamW;
pub use ema::ema_update;
pub use losses::{loss_fd, loss_masked_target, loss_source};
pub use pseudo::generate_pseudo_label;
pub use trainer::{train, train_step, StepMetrics, TrainEvent, TrainRun, TrainState};
