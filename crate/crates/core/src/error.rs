use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid quantizer: {0}")]
    InvalidQuantizer(String),

    #[error("non-finite value {0} reached a quantizer")]
    NonFinite(f64),

    #[error("code width {got} does not match quantizer bitwidth {expected}")]
    WidthMismatch { expected: u32, got: u32 },

    #[error("fan-in {fanin} exceeds layer input width {in_width}")]
    FaninTooLarge { fanin: usize, in_width: usize },

    #[error("truth table with {x} input bits exceeds device scale")]
    ExceedsDeviceScale { x: u32 },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("model must be frozen for {0}")]
    NotFrozen(&'static str),

    #[error("model is frozen; {0} needs a trainable model")]
    Frozen(&'static str),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("invalid training config: {0}")]
    InvalidConfig(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("netlist error: {0}")]
    Netlist(String),

    #[error(
        "exhaustive check needs 2^{bits} samples, above the bound 2^{bound_bits}; use random mode"
    )]
    ExhaustiveTooLarge { bits: u32, bound_bits: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
