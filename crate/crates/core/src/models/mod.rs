//! The two classifier architectures, their training loop, the versioned
//! weights container and batch prediction.

mod config;
mod dnn;
mod network;
mod predict;
mod text_cnn;
mod train;
mod weights;

pub use config::{
    dnn_layer_plan, plan_layers, Architecture, ArchitectureConfig, DnnConfig, TextCnnConfig, NEURON_BUDGET_SCALE,
};
pub use dnn::{build_dnn, Dnn};
pub use network::{batch_of, build_model, Model, Network};
pub use predict::{predict, ConfidenceBand, Prediction, Predictor};
pub use text_cnn::{build_text_cnn, TextCnn};
pub use train::{accuracy_on, train, EpochRecord, ModelContext, TrainConfig, TrainHistory};
pub use weights::{load_weights, save_weights, ModelWeights, NamedTensor, TrainingMetadata, WEIGHTS_FORMAT_VERSION};
