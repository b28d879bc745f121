//! Fixtures shared by the benchmarks.

use logicforge_core::{InputQuantizer, Knobs, NetworkSpec, TrainedModel};

/// A frozen, randomly initialized model with non-degenerate activation
/// scales.
pub fn frozen_model(
    input_features: usize,
    hidden: &[usize],
    num_classes: usize,
    knobs: Knobs,
    seed: u64,
) -> TrainedModel {
    let spec = NetworkSpec::mlp(input_features, hidden, num_classes, knobs, seed);
    let iq = InputQuantizer::new(spec.input_bits, vec![(0.0, 1.0); input_features])
        .expect("valid input quantizer");
    let mut m = TrainedModel::init(&spec, iq, seed).expect("valid spec");
    for l in &mut m.layers {
        l.act_quant.scale = 0.4;
    }
    m.freeze();
    m
}
