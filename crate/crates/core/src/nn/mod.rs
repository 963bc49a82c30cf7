//! Stacked-GRU regressor with feed-forward attention pooling, trained with
//! exact reverse-mode gradients.
//!
//! Layout of the default network for a 500-step, 12-channel window:
//! (500,12) → GRU → (500,256) → GRU → (500,256) → dropout → attention →
//! (1,256) → dense ReLU → (1,64) → dense linear → (1).

pub mod attention;
pub mod gru;
mod init;
pub mod io;
pub mod loss;
pub mod model;
pub mod optim;
pub mod train;

pub use attention::{attention_backward, attention_forward, softmax, AttentionCache, AttentionParams};
pub use gru::{gru_cell_step, gru_layer_backward, gru_layer_forward, GruParams, LayerCache, StepCache};
pub use io::{load_model, read_history, save_model, write_history};
pub use loss::{mae_grad, mae_loss};
pub use model::{model_backward, model_forward, Mode, ModelCache, ModelConfig, ModelParams, Pooling};
pub use optim::RmsProp;
pub use train::{evaluate, predict, train_model, EpochRecord, History, Target, TrainConfig};
