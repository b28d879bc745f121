//! Fan-in restricted topologies and the analytical 6:1 LUT cost model.

use std::fmt;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_FANIN_CAP: u32 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub in_width: usize,
    pub out_width: usize,
    pub fanin: usize,
    pub in_bits: u32,
    pub out_bits: u32,
}

impl LayerSpec {
    /// Total input bits of one neuron.
    pub fn fanin_bits(&self) -> u32 {
        self.fanin as u32 * self.in_bits
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkSpec {
    pub input_features: usize,
    pub input_bits: u32,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
    pub seed: u64,
}

/// Bitwidth and fan-in knobs for an MLP. The `*_i` overrides apply to the
/// first layer's inputs, the `*_o` overrides to the output layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Knobs {
    pub beta: u32,
    pub gamma: usize,
    pub beta_i: Option<u32>,
    pub beta_o: Option<u32>,
    pub gamma_i: Option<usize>,
    pub gamma_o: Option<usize>,
}

impl Knobs {
    pub fn uniform(beta: u32, gamma: usize) -> Self {
        Self {
            beta,
            gamma,
            beta_i: None,
            beta_o: None,
            gamma_i: None,
            gamma_o: None,
        }
    }
}

impl NetworkSpec {
    /// Builds hidden layers of the given widths followed by a
    /// `num_classes`-wide output layer.
    pub fn mlp(
        input_features: usize,
        hidden: &[usize],
        num_classes: usize,
        knobs: Knobs,
        seed: u64,
    ) -> Self {
        let input_bits = knobs.beta_i.unwrap_or(knobs.beta);
        let widths: Vec<usize> = hidden.iter().copied().chain([num_classes]).collect();
        let last = widths.len() - 1;
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev_width = input_features;
        let mut prev_bits = input_bits;
        for (k, &w) in widths.iter().enumerate() {
            let fanin = if k == last {
                knobs.gamma_o.or(if k == 0 { knobs.gamma_i } else { None })
            } else if k == 0 {
                knobs.gamma_i
            } else {
                None
            }
            .unwrap_or(knobs.gamma);
            let out_bits = if k == last {
                knobs.beta_o.unwrap_or(knobs.beta)
            } else {
                knobs.beta
            };
            layers.push(LayerSpec {
                in_width: prev_width,
                out_width: w,
                fanin,
                in_bits: prev_bits,
                out_bits,
            });
            prev_width = w;
            prev_bits = out_bits;
        }
        Self {
            input_features,
            input_bits,
            layers,
            num_classes,
            seed,
        }
    }

    pub fn output_bits(&self) -> u32 {
        self.layers.last().map_or(0, |l| l.out_bits)
    }

    pub fn neuron_count(&self) -> usize {
        self.layers.iter().map(|l| l.out_width).sum()
    }

    /// Adjacency and range checks only; no fan-in cap.
    pub fn check(&self) -> Result<()> {
        let v = validate_spec(self, u32::MAX);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(
                v.iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("; "),
            ))
        }
    }

    pub fn check_with_cap(&self, fanin_cap: u32) -> Result<()> {
        let v = validate_spec(self, fanin_cap);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(
                v.iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("; "),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub layer: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.layer {
            Some(l) => write!(f, "layer {l}: {}", self.message),
            None => write!(f, "network: {}", self.message),
        }
    }
}

pub fn validate_spec(spec: &NetworkSpec, fanin_cap: u32) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut net = |message: String| {
        out.push(Violation {
            layer: None,
            message,
        })
    };
    if spec.layers.is_empty() {
        net("no layers".into());
    }
    if spec.input_features == 0 {
        net("input_features must be at least 1".into());
    }
    if spec.input_bits == 0 || spec.input_bits > crate::quantizer::MAX_BITWIDTH {
        net(format!("input_bits {} outside 1..=8", spec.input_bits));
    }
    if spec.num_classes == 0 {
        net("num_classes must be at least 1".into());
    }
    if let Some(last) = spec.layers.last() {
        if last.out_width != spec.num_classes {
            net(format!(
                "output layer width {} differs from num_classes {}",
                last.out_width, spec.num_classes
            ));
        }
    }

    let mut layer = |k: usize, message: String| {
        out.push(Violation {
            layer: Some(k),
            message,
        })
    };
    for (k, l) in spec.layers.iter().enumerate() {
        let (prev_width, prev_bits) = if k == 0 {
            (spec.input_features, spec.input_bits)
        } else {
            (spec.layers[k - 1].out_width, spec.layers[k - 1].out_bits)
        };
        if l.in_width != prev_width {
            layer(
                k,
                format!(
                    "in_width {} does not match previous width {prev_width}",
                    l.in_width
                ),
            );
        }
        if l.in_bits != prev_bits {
            layer(
                k,
                format!(
                    "in_bits {} does not match previous bitwidth {prev_bits}",
                    l.in_bits
                ),
            );
        }
        if l.out_width == 0 {
            layer(k, "out_width must be at least 1".into());
        }
        if l.fanin == 0 || l.fanin > l.in_width {
            layer(k, format!("fanin {} outside 1..={}", l.fanin, l.in_width));
        }
        if l.out_bits == 0 || l.out_bits > crate::quantizer::MAX_BITWIDTH {
            layer(k, format!("out_bits {} outside 1..=8", l.out_bits));
        }
        if l.in_bits == 0 {
            layer(k, "in_bits must be at least 1".into());
        }
        let x = l.fanin as u64 * l.in_bits as u64;
        if x > fanin_cap as u64 {
            layer(
                k,
                format!(
                    "fan-in X = {} x {} = {x} exceeds cap {fanin_cap}",
                    l.fanin, l.in_bits
                ),
            );
        }
    }
    out
}

/// Per-neuron input index sets of one layer, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SparsityMask {
    pub in_width: usize,
    pub fanin: usize,
    pub neurons: Vec<Vec<usize>>,
}

impl SparsityMask {
    pub fn out_width(&self) -> usize {
        self.neurons.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (n, idx) in self.neurons.iter().enumerate() {
            if idx.len() != self.fanin {
                return Err(Error::InvalidSpec(format!(
                    "neuron {n} has {} inputs, expected {}",
                    idx.len(),
                    self.fanin
                )));
            }
            if idx.iter().any(|&i| i >= self.in_width) {
                return Err(Error::InvalidSpec(format!(
                    "neuron {n} references an input out of range"
                )));
            }
            if idx.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidSpec(format!(
                    "neuron {n} inputs are not distinct and sorted"
                )));
            }
        }
        Ok(())
    }
}

/// Per-neuron generator: ChaCha8 keyed by the little-endian `seed` in the
/// first 8 key bytes (remaining bytes zero), stream `(layer << 32) | neuron`.
fn neuron_rng(seed: u64, layer_index: usize, neuron_index: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(((layer_index as u64) << 32) | (neuron_index as u64 & 0xffff_ffff));
    rng
}

/// Uniform draw from `[0, n)` by rejection on 32-bit outputs.
fn below(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let n = n as u64;
    let limit = (1u64 << 32) / n * n;
    loop {
        let v = rng.next_u32() as u64;
        if v < limit {
            return (v % n) as usize;
        }
    }
}

/// Fixed random sparsity: for each neuron, a partial Fisher-Yates shuffle of
/// `0..in_width` picks `fanin` distinct inputs, which are then sorted.
pub fn generate_mask(
    seed: u64,
    layer_index: usize,
    in_width: usize,
    out_width: usize,
    fanin: usize,
) -> Result<SparsityMask> {
    if fanin > in_width || fanin == 0 {
        return Err(Error::FaninTooLarge { fanin, in_width });
    }
    let neurons = (0..out_width)
        .map(|n| {
            let mut rng = neuron_rng(seed, layer_index, n);
            let mut pool: Vec<usize> = (0..in_width).collect();
            for i in 0..fanin {
                let j = i + below(&mut rng, in_width - i);
                pool.swap(i, j);
            }
            let mut picked = pool[..fanin].to_vec();
            picked.sort_unstable();
            picked
        })
        .collect();
    Ok(SparsityMask {
        in_width,
        fanin,
        neurons,
    })
}

pub fn generate_masks(spec: &NetworkSpec) -> Result<Vec<SparsityMask>> {
    spec.layers
        .iter()
        .enumerate()
        .map(|(k, l)| generate_mask(spec.seed, k, l.in_width, l.out_width, l.fanin))
        .collect()
}

/// Number of 6:1 LUTs for an `x`-input, `y`-output truth table:
/// `(y / 3) * (2^(x-4) - (-1)^x)`, floored to one LUT per output bit for
/// `x <= 4`. Exact integer arithmetic.
pub fn lut_cost(x: u32, y: u32) -> Result<u64> {
    if x == 0 || y == 0 {
        return Err(Error::InvalidSpec(format!(
            "lut_cost needs X >= 1 and Y >= 1, got ({x}, {y})"
        )));
    }
    if x <= 4 {
        return Ok(y as u64);
    }
    let pow = 1u128
        .checked_shl(x - 4)
        .filter(|_| x - 4 < 127)
        .ok_or(Error::ExceedsDeviceScale { x })?;
    let term = if x.is_multiple_of(2) {
        pow - 1
    } else {
        pow + 1
    };
    let total = term
        .checked_mul(y as u128)
        .map(|v| v / 3)
        .ok_or(Error::ExceedsDeviceScale { x })?;
    u64::try_from(total).map_err(|_| Error::ExceedsDeviceScale { x })
}

/// How a layer's X and Y are derived for costing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostConvention {
    /// X = fanin * in_bits, Y = out_bits. This is the cost of the truth
    /// tables the netlist actually contains.
    #[default]
    Wired,
    /// X = fanin * out_bits, Y = out_bits: every layer is costed with its own
    /// activation bitwidth on both sides.
    LayerOwnBits,
}

pub fn layer_lut_cost(layer: &LayerSpec, convention: CostConvention) -> Result<u64> {
    let (x, y) = match convention {
        CostConvention::Wired => (layer.fanin_bits(), layer.out_bits),
        CostConvention::LayerOwnBits => (layer.fanin as u32 * layer.out_bits, layer.out_bits),
    };
    lut_cost(x, y)?
        .checked_mul(layer.out_width as u64)
        .ok_or(Error::ExceedsDeviceScale { x })
}

pub fn model_lut_cost(spec: &NetworkSpec) -> Result<u64> {
    model_lut_cost_with(spec, CostConvention::Wired)
}

pub fn model_lut_cost_with(spec: &NetworkSpec, convention: CostConvention) -> Result<u64> {
    spec.layers.iter().try_fold(0u64, |acc, l| {
        let c = layer_lut_cost(l, convention)?;
        acc.checked_add(c)
            .ok_or(Error::ExceedsDeviceScale { x: l.fanin_bits() })
    })
}

/// Trainable parameter count: masked weights, BN gain and bias per neuron,
/// and one activation scale per layer.
pub fn parameter_count(spec: &NetworkSpec) -> usize {
    spec.layers
        .iter()
        .map(|l| l.out_width * (l.fanin + 2) + 1)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lut_cost_reference_points() {
        assert_eq!(lut_cost(12, 2).unwrap(), 170);
        assert_eq!(lut_cost(6, 1).unwrap(), 1);
        assert_eq!(lut_cost(7, 1).unwrap(), 3);
        assert_eq!(lut_cost(14, 2).unwrap(), 682);
    }

    #[test]
    fn lut_cost_floor_below_five_inputs() {
        for x in 1..=4 {
            assert_eq!(lut_cost(x, 3).unwrap(), 3);
        }
    }

    #[test]
    fn lut_cost_overflow_is_flagged() {
        assert!(lut_cost(60, 1).is_ok());
        assert!(matches!(
            lut_cost(80, 1),
            Err(Error::ExceedsDeviceScale { x: 80 })
        ));
        assert!(matches!(
            lut_cost(200, 1),
            Err(Error::ExceedsDeviceScale { .. })
        ));
        assert!(lut_cost(0, 1).is_err());
        assert!(lut_cost(5, 0).is_err());
    }

    #[test]
    fn wide_neuron_is_about_a_hundred_million_luts() {
        let c = lut_cost(32, 1).unwrap();
        assert!((80_000_000..120_000_000).contains(&c));
    }

    fn wide_reference() -> NetworkSpec {
        NetworkSpec::mlp(32, &[32, 32, 32], 32, Knobs::uniform(2, 6), 0)
    }

    #[test]
    fn wide_reference_total() {
        let spec = wide_reference();
        assert_eq!(spec.neuron_count(), 128);
        assert_eq!(model_lut_cost(&spec).unwrap(), 21_760);
    }

    #[test]
    fn single_neuron_cost() {
        let spec = NetworkSpec::mlp(6, &[], 1, Knobs::uniform(1, 6), 0);
        assert_eq!(model_lut_cost(&spec).unwrap(), 1);
    }

    #[test]
    fn model_cost_matches_per_neuron_enumeration() {
        let spec = NetworkSpec::mlp(16, &[64, 32, 32, 32], 5, Knobs::uniform(3, 4), 1);
        let mut brute = 0u64;
        for l in &spec.layers {
            for _ in 0..l.out_width {
                brute += lut_cost(l.fanin as u32 * l.in_bits, l.out_bits).unwrap();
            }
        }
        assert_eq!(model_lut_cost(&spec).unwrap(), brute);
    }

    /// Published "Model LUT" figures. JSC-S and JSC-M reproduce under the
    /// wired convention with input and output bitwidths equal to the hidden
    /// one. All six rows reproduce under `LayerOwnBits` when the first layer
    /// carries beta_i / gamma_i, the last layer carries gamma_o, and the
    /// output bitwidth override is left out of the cost (NID rows use one
    /// output neuron).
    #[test]
    fn published_model_lut_column() {
        let jsc_s = NetworkSpec::mlp(16, &[64, 32, 32, 32], 5, Knobs::uniform(2, 3), 0);
        let jsc_m = NetworkSpec::mlp(16, &[64, 32, 32, 32], 5, Knobs::uniform(3, 4), 0);
        assert_eq!(model_lut_cost(&jsc_s).unwrap(), 330);
        assert_eq!(model_lut_cost(&jsc_m).unwrap(), 42_075);

        let own = |widths: &[(usize, usize, u32)]| -> u64 {
            let mut prev = 16;
            let layers: Vec<LayerSpec> = widths
                .iter()
                .map(|&(w, fanin, bits)| {
                    let l = LayerSpec {
                        in_width: prev.max(fanin),
                        out_width: w,
                        fanin,
                        in_bits: bits,
                        out_bits: bits,
                    };
                    prev = w;
                    l
                })
                .collect();
            layers
                .iter()
                .map(|l| layer_lut_cost(l, CostConvention::LayerOwnBits).unwrap())
                .sum()
        };
        assert_eq!(
            own(&[(64, 3, 2), (32, 3, 2), (32, 3, 2), (32, 3, 2), (5, 3, 2)]),
            330
        );
        assert_eq!(
            own(&[(64, 4, 3), (32, 4, 3), (32, 4, 3), (32, 4, 3), (5, 4, 3)]),
            42_075
        );
        assert_eq!(
            own(&[
                (32, 4, 4),
                (64, 4, 3),
                (192, 4, 3),
                (192, 4, 3),
                (16, 4, 3),
                (5, 5, 3)
            ]),
            303_285
        );
        assert_eq!(own(&[(593, 7, 2), (100, 7, 2), (1, 7, 2)]), 473_308);
        assert_eq!(
            own(&[
                (593, 7, 2),
                (256, 7, 2),
                (128, 7, 2),
                (128, 7, 2),
                (1, 7, 2)
            ]),
            754_292
        );
        assert_eq!(
            own(&[
                (593, 7, 2),
                (100, 5, 3),
                (100, 5, 3),
                (100, 5, 3),
                (1, 5, 3)
            ]),
            1_021_175
        );
    }

    #[test]
    fn validate_accepts_jsc_s() {
        let spec = NetworkSpec::mlp(16, &[64, 32, 32, 32], 5, Knobs::uniform(2, 3), 0);
        assert!(validate_spec(&spec, 15).is_empty());
    }

    #[test]
    fn validate_flags_wide_fanin() {
        let mut spec = NetworkSpec::mlp(16, &[64, 32, 32, 32], 5, Knobs::uniform(3, 4), 0);
        spec.layers[2].fanin = 7;
        let v = validate_spec(&spec, 15);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].layer, Some(2));
        assert!(v[0].message.contains("21"));
    }

    #[test]
    fn validate_flags_adjacency() {
        let mut spec = NetworkSpec::mlp(16, &[64, 32], 5, Knobs::uniform(2, 3), 0);
        spec.layers[1].in_width = 60;
        let v = validate_spec(&spec, 15);
        assert!(v
            .iter()
            .any(|v| v.layer == Some(1) && v.message.contains("in_width")));
    }

    #[test]
    fn overrides_land_on_boundary_layers() {
        let knobs = Knobs {
            beta_i: Some(4),
            beta_o: Some(7),
            gamma_o: Some(5),
            ..Knobs::uniform(3, 4)
        };
        let spec = NetworkSpec::mlp(16, &[32, 64], 5, knobs, 0);
        assert_eq!(spec.input_bits, 4);
        assert_eq!(spec.layers[0].in_bits, 4);
        assert_eq!(spec.layers[0].out_bits, 3);
        assert_eq!(spec.layers[2].fanin, 5);
        assert_eq!(spec.layers[2].out_bits, 7);
        assert!(spec.check().is_ok());
    }

    #[test]
    fn dense_mask() {
        let m = generate_mask(3, 1, 5, 4, 5).unwrap();
        for n in &m.neurons {
            assert_eq!(n, &vec![0, 1, 2, 3, 4]);
        }
        let m = generate_mask(3, 1, 1, 7, 1).unwrap();
        assert!(m.neurons.iter().all(|n| n == &vec![0]));
    }

    #[test]
    fn mask_rejects_oversized_fanin() {
        assert!(matches!(
            generate_mask(0, 0, 3, 2, 4),
            Err(Error::FaninTooLarge {
                fanin: 4,
                in_width: 3
            })
        ));
    }

    #[test]
    fn mask_golden() {
        let a = generate_mask(7, 0, 16, 4, 3).unwrap();
        let b = generate_mask(7, 0, 16, 4, 3).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert_eq!(
            a.neurons,
            vec![
                vec![2, 3, 5],
                vec![0, 5, 14],
                vec![0, 5, 11],
                vec![2, 12, 14]
            ]
        );
    }

    #[test]
    fn mask_streams_differ_by_layer_and_seed() {
        let a = generate_mask(7, 0, 64, 32, 3).unwrap();
        let b = generate_mask(7, 1, 64, 32, 3).unwrap();
        let c = generate_mask(8, 0, 64, 32, 3).unwrap();
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn mask_selection_is_roughly_uniform() {
        let m = generate_mask(11, 0, 10, 20_000, 3).unwrap();
        let mut counts = [0usize; 10];
        for n in &m.neurons {
            for &i in n {
                counts[i] += 1;
            }
        }
        // expected 6000 each
        assert!(
            counts.iter().all(|&c| (5600..6400).contains(&c)),
            "{counts:?}"
        );
    }

    proptest! {
        #[test]
        fn cost_is_integral_and_linear_in_y(x in 5u32..40, y in 1u32..9, k in 1u32..5) {
            let pow = 1u128 << (x - 4);
            let term = if x % 2 == 0 { pow - 1 } else { pow + 1 };
            prop_assert_eq!(term % 3, 0);
            prop_assert_eq!(lut_cost(x, k * y).unwrap(), k as u64 * lut_cost(x, y).unwrap());
        }

        #[test]
        fn cost_strictly_increasing_from_six(x in 6u32..50, y in 1u32..9) {
            prop_assert!(lut_cost(x + 1, y).unwrap() > lut_cost(x, y).unwrap());
            prop_assert!(lut_cost(x, y).unwrap() >= 1);
            prop_assert_eq!(lut_cost(5, y).unwrap(), lut_cost(6, y).unwrap());
        }

        #[test]
        fn masks_valid_and_deterministic(seed: u64, layer in 0usize..8, in_width in 1usize..40, out in 1usize..20, f in 1usize..40) {
            let fanin = f.min(in_width);
            let a = generate_mask(seed, layer, in_width, out, fanin).unwrap();
            a.validate().unwrap();
            prop_assert_eq!(a, generate_mask(seed, layer, in_width, out, fanin).unwrap());
        }
    }
}
