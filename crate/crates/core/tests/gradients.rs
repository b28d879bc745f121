//! Finite-difference check of backpropagation on the clamp-surrogate network.
//!
//! The loss oracle below is a direct, unoptimized re-statement of the
//! surrogate forward pass: masked dot products, batch-statistics BN, clamp to
//! the quantizer range, mean softmax cross-entropy.

use logicforge_core::trainer::{Activation, Codes, InputQuantizer, Mode, TrainedModel};
use logicforge_core::{Knobs, NetworkSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;
const REL: f64 = 1e-4;
const ABS: f64 = 1e-7;
/// Probes with any pre-activation this close to a clamp edge are skipped.
const EDGE: f64 = 1e-4;

fn range(bits: u32, signed: bool, scale: f64) -> (f64, f64) {
    if signed {
        let half = (1i64 << (bits - 1)) as f64;
        (-half * scale, (half - 1.0) * scale)
    } else {
        (0.0, ((1i64 << bits) - 1) as f64 * scale)
    }
}

/// Returns the loss and the smallest distance from any pre-activation to a
/// clamp edge.
fn oracle(m: &TrainedModel, codes: &[Vec<u32>], labels: &[usize]) -> (f64, f64) {
    let top = ((1u32 << m.spec.input_bits) - 1) as f64;
    let mut acts: Vec<Vec<f64>> = codes
        .iter()
        .map(|r| r.iter().map(|&c| c as f64 / top).collect())
        .collect();
    let mut edge = f64::INFINITY;
    for (layer, mask) in m.layers.iter().zip(&m.masks) {
        let width = mask.neurons.len();
        let fanin = mask.fanin;
        let mut next = vec![vec![0.0; width]; acts.len()];
        for j in 0..width {
            let z: Vec<f64> = acts
                .iter()
                .map(|row| {
                    (0..fanin)
                        .map(|k| layer.weights[j * fanin + k] * row[mask.neurons[j][k]])
                        .sum()
                })
                .collect();
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let (lo, hi) = range(
                layer.act_quant.bitwidth,
                layer.act_quant.signed,
                layer.act_quant.scale,
            );
            for (s, zs) in z.iter().enumerate() {
                let y =
                    layer.bn.gain[j] * (zs - mean) / (var + layer.bn.eps).sqrt() + layer.bn.bias[j];
                edge = edge.min((y - lo).abs()).min((y - hi).abs());
                next[s][j] = y.clamp(lo, hi);
            }
        }
        acts = next;
    }
    let loss = acts
        .iter()
        .zip(labels)
        .map(|(row, &l)| {
            let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
            lse - row[l]
        })
        .sum::<f64>()
        / labels.len() as f64;
    (loss, edge)
}

#[derive(Clone, Copy, Debug)]
enum Param {
    Weight(usize, usize),
    Gain(usize, usize),
    Bias(usize, usize),
    Scale(usize),
}

fn slot(m: &mut TrainedModel, p: Param) -> &mut f64 {
    match p {
        Param::Weight(l, i) => &mut m.layers[l].weights[i],
        Param::Gain(l, i) => &mut m.layers[l].bn.gain[i],
        Param::Bias(l, i) => &mut m.layers[l].bn.bias[i],
        Param::Scale(l) => &mut m.layers[l].act_quant.scale,
    }
}

fn all_params(m: &TrainedModel) -> Vec<Param> {
    let mut v = Vec::new();
    for (l, layer) in m.layers.iter().enumerate() {
        v.extend((0..layer.weights.len()).map(|i| Param::Weight(l, i)));
        v.extend((0..layer.bn.gain.len()).map(|i| Param::Gain(l, i)));
        v.extend((0..layer.bn.bias.len()).map(|i| Param::Bias(l, i)));
        v.push(Param::Scale(l));
    }
    v
}

fn random_point(seed: u64) -> (TrainedModel, Vec<Vec<u32>>, Vec<usize>) {
    // 3 layers, 8 neurons in total.
    let spec = NetworkSpec::mlp(
        4,
        &[3, 2],
        3,
        Knobs {
            beta_i: Some(2),
            ..Knobs::uniform(3, 2)
        },
        seed,
    );
    let iq = InputQuantizer::new(2, vec![(0.0, 1.0); 4]).unwrap();
    let mut m = TrainedModel::init(&spec, iq, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfd);
    for layer in &mut m.layers {
        layer
            .weights
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-1.0..1.0));
        layer
            .bn
            .gain
            .iter_mut()
            .for_each(|g| *g = rng.random_range(0.5..1.5));
        layer
            .bn
            .bias
            .iter_mut()
            .for_each(|b| *b = rng.random_range(-0.3..0.3));
        layer.act_quant.scale = rng.random_range(0.15..0.45);
    }
    let batch = 6;
    let codes = (0..batch)
        .map(|_| (0..4).map(|_| rng.random_range(0..4)).collect())
        .collect();
    let labels = (0..batch).map(|_| rng.random_range(0..3)).collect();
    (m, codes, labels)
}

#[test]
fn surrogate_gradients_match_finite_differences() {
    let mut points = 0;
    let mut compared = 0;
    let mut nonzero_scale = 0;
    let mut seed = 0;
    while points < 120 {
        seed += 1;
        assert!(seed < 2000, "too many probes rejected near clamp edges");
        let (m, codes, labels) = random_point(seed);
        let (base, edge) = oracle(&m, &codes, &labels);
        if edge < EDGE {
            continue;
        }
        let flat = Codes::new(codes.len(), 4, codes.concat()).unwrap();
        let out = m
            .forward(&flat, Mode::Train(Activation::Surrogate))
            .unwrap();
        let grads = m.backward(&out, &labels).unwrap();
        assert!(
            (grads.loss - base).abs() <= 1e-12 * base.abs().max(1.0),
            "loss {} vs oracle {base}",
            grads.loss
        );

        for p in all_params(&m) {
            let analytic = match p {
                Param::Weight(l, i) => grads.layers[l].weights[i],
                Param::Gain(l, i) => grads.layers[l].gain[i],
                Param::Bias(l, i) => grads.layers[l].bias[i],
                Param::Scale(l) => grads.layers[l].scale,
            };
            let mut plus = m.clone();
            *slot(&mut plus, p) += H;
            let mut minus = m.clone();
            *slot(&mut minus, p) -= H;
            let fd =
                (oracle(&plus, &codes, &labels).0 - oracle(&minus, &codes, &labels).0) / (2.0 * H);
            let tol = REL * analytic.abs().max(fd.abs()) + ABS;
            assert!(
                (analytic - fd).abs() <= tol,
                "seed {seed} {p:?}: analytic {analytic} vs fd {fd}"
            );
            if matches!(p, Param::Scale(_)) && analytic != 0.0 {
                nonzero_scale += 1;
            }
            compared += 1;
        }
        points += 1;
    }
    assert!(compared >= 100 * 40);
    assert!(nonzero_scale > 0, "no probe exercised a clipped activation");
}
