//! Losses, unrolled batching and training loops for every surrogate family.

pub mod config;
pub mod eig_penalty;
pub mod loss;
pub mod model;
pub mod train;
pub mod unroll;

pub use config::{EarlyStopConfig, Family, LossConfig, TrainConfig, UnrollConfig};
pub use eig_penalty::{eig_penalty, eig_penalty_gradient};
pub use loss::{loss_kae_onestep, loss_unrolled, window_loss, window_loss_and_grads, LossParts, LossSpace, Window};
pub use model::LatentModel;
pub use train::{initial_model, log_to_jsonl, sha256_hex, train, EpochLog, GroupSpec, StackSpec, TrainResult};
pub use unroll::{make_unroll_batches, window_starts};
