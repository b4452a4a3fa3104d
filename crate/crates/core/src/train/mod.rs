//! Toy fine-tuning: a two-layer rectifier MLP whose linear layers carry
//! adapters, softmax cross-entropy, AdamW with a warmup + cosine schedule,
//! and finite-difference gradient checks.

mod checkpoint;
mod data;
mod gradcheck;
mod loss;
mod model;
mod optim;
mod protocol;
mod run;

pub use checkpoint::{save_model_adapters, BIAS_FILE, LAYER_DIRS};
pub use data::Dataset;
pub use gradcheck::{gradcheck, GradcheckReport, KINK_SHIFT, REL_FLOOR};
pub use loss::cross_entropy_with_grad;
pub use model::{model_forward_backward, Activations, Linear, LinearGrads, MlpModel, ModelGrads, Weight};
pub use optim::{cosine_warmup_lr, warmup_steps, AdamW};
pub use protocol::{PretrainedTask, ToyProtocol, EVEN_CLASSES, ODD_CLASSES};
pub use run::{run_finetune, train, FinetuneRun, Strategy, TrainConfig, TrainTrace};
