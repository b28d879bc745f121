//! Training of fan-in restricted, activation-quantized MLPs.

pub mod checkpoint;
pub mod dataset;
pub mod model;
pub mod optim;
mod train;

pub use dataset::{
    quantize_inputs, read_csv, read_csv_with, synthetic_blobs, synthetic_separable, write_csv,
    Codes, Dataset, InputQuantizer, LabeledTable, Split, Splits,
};
pub use model::{
    argmax, softmax_cross_entropy, Activation, BatchNormParams, DenseLayerParams, ForwardCache,
    ForwardOutput, Gradients, LayerCache, LayerGrads, Mode, TrainedModel,
};
pub use optim::{Adam, AdamState, StepDecay};
pub use train::{evaluate, train, EpochMetrics, TrainConfig, TrainOutcome};
