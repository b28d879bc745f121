//! Compiles fan-in restricted, quantized MLPs into truth-table netlists.
//!
//! The pipeline runs `topology` (shape and cost) → `trainer` (quantization
//! aware training) → `netlist` (exhaustive enumeration, pruning, Verilog) →
//! `simulator` (bit-exact checking against the model).

pub mod error;
pub mod netlist;
pub mod quantizer;
pub mod simulator;
pub mod topology;
pub mod trainer;

pub use error::{Error, Result};
pub use netlist::{
    build_netlist, enumerate_neuron, insert_registers, prune_dead, HbbId, HbbInstance, NetLayer,
    Netlist, RegisterPolicy, Source, TruthTable,
};
pub use quantizer::{dequantize, quantize, quantize_ste_backward, QuantCode, QuantizerSpec};
pub use simulator::{
    check_equivalence, emit_testbench, eval_netlist, pipeline_report, CheckMode, EquivalenceReport,
    Mismatch, PipelineReport,
};
pub use topology::{
    generate_mask, generate_masks, lut_cost, model_lut_cost, model_lut_cost_with, parameter_count,
    validate_spec, CostConvention, Knobs, LayerSpec, NetworkSpec, SparsityMask, Violation,
    DEFAULT_FANIN_CAP,
};
pub use trainer::{evaluate, train, Dataset, InputQuantizer, TrainConfig, TrainedModel};
