//! Losses, the SGD update, the mini-batch training loop for all three
//! estimators (with discriminator/generator alternation for GAN-CBD) and a
//! finite-difference gradient harness.

mod config;
mod grad_check;
mod loss;
mod metrics;
mod sgd;
pub mod steps;
mod train;

pub use config::TrainConfig;
pub use grad_check::{grad_check, grad_check_linear, micro_spec, rel_err, GradCheckOptions, GradCheckReport, TensorCheck};
pub use loss::{gan_losses, rec_loss, sq_error, GanLosses, RecLoss, RecLossOptions};
pub use metrics::{moving_average, EpochRecord, Metrics, StepRecord};
pub use sgd::{global_norm, sgd_step, Sgd};
pub use train::{train, train_with, TrainOutcome};
