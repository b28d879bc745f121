//! Sparse quantized MLP parameters with forward and backward passes.
//!
//! Each neuron computes a dot product over its masked inputs, applies batch
//! normalization and quantizes the result with its layer's activation
//! quantizer. Eval-mode inference and truth-table enumeration share
//! [`DenseLayerParams::eval_neuron`], so a neuron's table and its eval output
//! agree bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{Codes, InputQuantizer};
use crate::error::{Error, Result};
use crate::quantizer::QuantizerSpec;
use crate::topology::{generate_masks, NetworkSpec, SparsityMask};

pub const SCALE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNormParams {
    pub fn identity(width: usize) -> Self {
        Self {
            gain: vec![1.0; width],
            bias: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    #[inline]
    pub fn eval(&self, neuron: usize, z: f64) -> f64 {
        self.gain[neuron] * (z - self.running_mean[neuron])
            / (self.running_var[neuron] + self.eps).sqrt()
            + self.bias[neuron]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayerParams {
    /// `out_width x fanin`, row-major; one weight per masked connection.
    pub weights: Vec<f64>,
    pub bn: BatchNormParams,
    pub act_quant: QuantizerSpec,
}

impl DenseLayerParams {
    pub fn fanin(&self) -> usize {
        self.weights.len() / self.bn.gain.len()
    }

    pub fn neuron_weights(&self, neuron: usize) -> &[f64] {
        let f = self.fanin();
        &self.weights[neuron * f..(neuron + 1) * f]
    }

    /// Frozen evaluation of one neuron on its gathered real-valued inputs.
    /// Returns the output code.
    #[inline]
    pub fn eval_neuron(&self, neuron: usize, inputs: &[f64]) -> Result<u32> {
        let mut z = 0.0;
        for (w, x) in self.neuron_weights(neuron).iter().zip(inputs) {
            z += w * x;
        }
        let y = self.bn.eval(neuron, z);
        Ok(self.act_quant.quantize(y)?.value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: NetworkSpec,
    pub masks: Vec<SparsityMask>,
    pub layers: Vec<DenseLayerParams>,
    pub input_quant: InputQuantizer,
    pub frozen: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// Round-and-clamp quantization (what the hardware computes).
    Quantized,
    /// Clamp only; a piecewise-linear stand-in used to check gradients.
    Surrogate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train(Activation),
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    /// Real-valued layer input, `batch x in_width`.
    pub input: Vec<f64>,
    /// Normalized pre-activation, `batch x out_width`.
    pub zhat: Vec<f64>,
    pub batch_mean: Vec<f64>,
    /// Biased batch variance.
    pub batch_var: Vec<f64>,
    pub inv_std: Vec<f64>,
    /// BN output fed to the quantizer, `batch x out_width`.
    pub pre_quant: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub batch: usize,
    pub activation: Activation,
    pub layers: Vec<LayerCache>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `batch x num_classes` real scores.
    pub scores: Vec<f64>,
    /// Output-layer codes; present in eval mode and quantized train mode.
    pub codes: Option<Codes>,
    pub cache: Option<ForwardCache>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub layers: Vec<LayerGrads>,
}

impl TrainedModel {
    /// Fresh, unfrozen model: masks from the spec seed, weights uniform in
    /// `+-sqrt(1 / fanin)` from `init_seed`, identity batch norm, unit scales.
    pub fn init(spec: &NetworkSpec, input_quant: InputQuantizer, init_seed: u64) -> Result<Self> {
        spec.check()?;
        if input_quant.bits != spec.input_bits || input_quant.ranges.len() != spec.input_features {
            return Err(Error::Shape(format!(
                "input quantizer ({} features, {} bits) does not match spec ({} features, {} bits)",
                input_quant.ranges.len(),
                input_quant.bits,
                spec.input_features,
                spec.input_bits
            )));
        }
        let masks = generate_masks(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let layers = spec
            .layers
            .iter()
            .map(|l| {
                let bound = (1.0 / l.fanin as f64).sqrt();
                let weights = (0..l.out_width * l.fanin)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                Ok(DenseLayerParams {
                    weights,
                    bn: BatchNormParams::identity(l.out_width),
                    act_quant: QuantizerSpec::signed(l.out_bits, 1.0)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec: spec.clone(),
            masks,
            layers,
            input_quant,
            frozen: false,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    /// Quantizer whose codes feed layer `layer`.
    pub fn input_quantizer_of(&self, layer: usize) -> QuantizerSpec {
        if layer == 0 {
            self.input_quant.spec()
        } else {
            self.layers[layer - 1].act_quant
        }
    }

    pub fn output_quantizer(&self) -> QuantizerSpec {
        self.layers.last().expect("at least one layer").act_quant
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.check()?;
        if self.masks.len() != self.spec.layers.len() || self.layers.len() != self.spec.layers.len()
        {
            return Err(Error::Shape(
                "layer count differs between spec, masks and parameters".into(),
            ));
        }
        for (k, ((l, m), p)) in self
            .spec
            .layers
            .iter()
            .zip(&self.masks)
            .zip(&self.layers)
            .enumerate()
        {
            m.validate()?;
            if m.in_width != l.in_width || m.fanin != l.fanin || m.out_width() != l.out_width {
                return Err(Error::Shape(format!("layer {k}: mask does not match spec")));
            }
            if p.weights.len() != l.out_width * l.fanin {
                return Err(Error::Shape(format!(
                    "layer {k}: expected {} weights",
                    l.out_width * l.fanin
                )));
            }
            let bn = &p.bn;
            if [&bn.gain, &bn.bias, &bn.running_mean, &bn.running_var]
                .iter()
                .any(|v| v.len() != l.out_width)
            {
                return Err(Error::Shape(format!(
                    "layer {k}: batch-norm width mismatch"
                )));
            }
            if bn
                .running_var
                .iter()
                .any(|v| (v + bn.eps).is_nan() || v + bn.eps <= 0.0)
            {
                return Err(Error::Shape(format!(
                    "layer {k}: running_var + eps must be positive"
                )));
            }
            p.act_quant.validate()?;
            if p.act_quant.bitwidth != l.out_bits {
                return Err(Error::Shape(format!(
                    "layer {k}: quantizer bitwidth differs from out_bits"
                )));
            }
        }
        Ok(())
    }

    fn check_input(&self, codes: &Codes) -> Result<()> {
        if codes.cols != self.spec.input_features {
            return Err(Error::Shape(format!(
                "{} input columns, model expects {}",
                codes.cols, self.spec.input_features
            )));
        }
        let levels = 1u32 << self.spec.input_bits;
        if let Some(c) = codes.data.iter().find(|&&c| c >= levels) {
            return Err(Error::Shape(format!(
                "input code {c} exceeds {} bits",
                self.spec.input_bits
            )));
        }
        Ok(())
    }

    pub fn forward(&self, codes: &Codes, mode: Mode) -> Result<ForwardOutput> {
        self.check_input(codes)?;
        match mode {
            Mode::Eval => self.forward_eval(codes),
            Mode::Train(act) => {
                if self.frozen {
                    return Err(Error::Frozen("train-mode forward"));
                }
                self.forward_train(codes, act)
            }
        }
    }

    /// Eval-mode output codes of layer `layer` given the full code vector of
    /// its input (the network input for layer 0).
    pub fn eval_layer_codes(&self, layer: usize, input: &[u32]) -> Result<Vec<u32>> {
        let mask = &self.masks[layer];
        if input.len() != mask.in_width {
            return Err(Error::Shape(format!(
                "layer {layer} expects {} inputs, got {}",
                mask.in_width,
                input.len()
            )));
        }
        let q = self.input_quantizer_of(layer);
        let values: Vec<f64> = input.iter().map(|&c| q.value_of(c)).collect();
        let params = &self.layers[layer];
        let mut gathered = Vec::with_capacity(mask.fanin);
        mask.neurons
            .iter()
            .enumerate()
            .map(|(n, idx)| {
                gathered.clear();
                gathered.extend(idx.iter().map(|&i| values[i]));
                params.eval_neuron(n, &gathered)
            })
            .collect()
    }

    /// Output codes of one sample in eval mode.
    pub fn eval_codes(&self, input: &[u32]) -> Result<Vec<u32>> {
        let mut codes = self.eval_layer_codes(0, input)?;
        for k in 1..self.layers.len() {
            codes = self.eval_layer_codes(k, &codes)?;
        }
        Ok(codes)
    }

    fn forward_eval(&self, codes: &Codes) -> Result<ForwardOutput> {
        let out_q = self.output_quantizer();
        let c = self.num_classes();
        let mut out = Vec::with_capacity(codes.rows * c);
        for r in 0..codes.rows {
            out.extend(self.eval_codes(codes.row(r))?);
        }
        let scores = out.iter().map(|&v| out_q.value_of(v)).collect();
        Ok(ForwardOutput {
            scores,
            codes: Some(Codes::new(codes.rows, c, out)?),
            cache: None,
        })
    }

    fn forward_train(&self, codes: &Codes, act: Activation) -> Result<ForwardOutput> {
        let n = codes.rows;
        let q0 = self.input_quant.spec();
        let mut values: Vec<f64> = codes.data.iter().map(|&c| q0.value_of(c)).collect();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (layer, mask) in self.layers.iter().zip(&self.masks) {
            let (cache, out) = layer_forward_train(layer, mask, values, n, act)?;
            caches.push(cache);
            values = out;
        }
        let out_codes = match act {
            Activation::Quantized => {
                let q = self.output_quantizer();
                let last = caches.last().expect("at least one layer");
                let data = last
                    .pre_quant
                    .iter()
                    .map(|&y| q.quantize(y).map(|c| c.value))
                    .collect::<Result<Vec<_>>>()?;
                Some(Codes::new(n, self.num_classes(), data)?)
            }
            Activation::Surrogate => None,
        };
        Ok(ForwardOutput {
            scores: values,
            codes: out_codes,
            cache: Some(ForwardCache {
                batch: n,
                activation: act,
                layers: caches,
            }),
        })
    }

    /// Softmax cross-entropy on the scores of a train-mode forward, followed
    /// by backpropagation with clipped straight-through quantizer gradients.
    pub fn backward(&self, out: &ForwardOutput, labels: &[usize]) -> Result<Gradients> {
        let cache = out
            .cache
            .as_ref()
            .ok_or(Error::Shape("backward needs a train-mode forward".into()))?;
        let n = cache.batch;
        let c = self.num_classes();
        if labels.len() != n {
            return Err(Error::Shape(format!(
                "{} labels for a batch of {n}",
                labels.len()
            )));
        }
        let (loss, mut upstream) = softmax_cross_entropy(&out.scores, labels, c)?;

        let mut grads: Vec<LayerGrads> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let (g, d_input) = layer_backward(
                &self.layers[k],
                &self.masks[k],
                &cache.layers[k],
                &upstream,
                n,
                k > 0,
            );
            grads.push(g);
            upstream = d_input;
        }
        grads.reverse();
        Ok(Gradients {
            loss,
            layers: grads,
        })
    }

    /// Sets each layer's scale to `2 * std(pre-activation) / 2^bits` measured
    /// on `codes` (floored at [`SCALE_FLOOR`]), layer by layer.
    pub fn init_scales(&mut self, codes: &Codes) -> Result<()> {
        if self.frozen {
            return Err(Error::Frozen("scale initialization"));
        }
        self.check_input(codes)?;
        let n = codes.rows;
        let q0 = self.input_quant.spec();
        let mut values: Vec<f64> = codes.data.iter().map(|&c| q0.value_of(c)).collect();
        for k in 0..self.layers.len() {
            let (cache, _) = layer_forward_train(
                &self.layers[k],
                &self.masks[k],
                values.clone(),
                n,
                Activation::Quantized,
            )?;
            let y = &cache.pre_quant;
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / y.len() as f64;
            let layer = &mut self.layers[k];
            let scale = (2.0 * var.sqrt() / layer.act_quant.levels() as f64).max(SCALE_FLOOR);
            layer.act_quant.scale = scale;
            let (_, out) =
                layer_forward_train(layer, &self.masks[k], values, n, Activation::Quantized)?;
            values = out;
        }
        Ok(())
    }

    /// Momentum update of running batch-norm statistics from a train-mode
    /// cache. Running variance uses the unbiased batch estimate.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        let n = cache.batch as f64;
        let correction = if cache.batch > 1 { n / (n - 1.0) } else { 1.0 };
        for (layer, lc) in self.layers.iter_mut().zip(&cache.layers) {
            let bn = &mut layer.bn;
            let m = bn.momentum;
            for j in 0..bn.gain.len() {
                bn.running_mean[j] = (1.0 - m) * bn.running_mean[j] + m * lc.batch_mean[j];
                bn.running_var[j] =
                    (1.0 - m) * bn.running_var[j] + m * lc.batch_var[j] * correction;
            }
        }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }
}

fn layer_forward_train(
    layer: &DenseLayerParams,
    mask: &SparsityMask,
    input: Vec<f64>,
    n: usize,
    act: Activation,
) -> Result<(LayerCache, Vec<f64>)> {
    let in_w = mask.in_width;
    let out_w = mask.out_width();
    let mut z = vec![0.0; n * out_w];
    for s in 0..n {
        let row = &input[s * in_w..(s + 1) * in_w];
        for (j, idx) in mask.neurons.iter().enumerate() {
            let mut acc = 0.0;
            for (w, &i) in layer.neuron_weights(j).iter().zip(idx) {
                acc += w * row[i];
            }
            z[s * out_w + j] = acc;
        }
    }
    let bn = &layer.bn;
    let mut mean = vec![0.0; out_w];
    let mut var = vec![0.0; out_w];
    for s in 0..n {
        for j in 0..out_w {
            mean[j] += z[s * out_w + j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    for s in 0..n {
        for j in 0..out_w {
            let d = z[s * out_w + j] - mean[j];
            var[j] += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= n as f64);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + bn.eps).sqrt()).collect();

    let q = layer.act_quant;
    let mut zhat = z;
    let mut pre = vec![0.0; n * out_w];
    let mut out = vec![0.0; n * out_w];
    for s in 0..n {
        for j in 0..out_w {
            let i = s * out_w + j;
            zhat[i] = (zhat[i] - mean[j]) * inv_std[j];
            let y = bn.gain[j] * zhat[i] + bn.bias[j];
            pre[i] = y;
            out[i] = match act {
                Activation::Quantized => q.value_of(q.quantize(y)?.value),
                Activation::Surrogate => {
                    if !y.is_finite() {
                        return Err(Error::NonFinite(y));
                    }
                    q.surrogate(y)
                }
            };
        }
    }
    Ok((
        LayerCache {
            input,
            zhat,
            batch_mean: mean,
            batch_var: var,
            inv_std,
            pre_quant: pre,
        },
        out,
    ))
}

fn layer_backward(
    layer: &DenseLayerParams,
    mask: &SparsityMask,
    cache: &LayerCache,
    upstream: &[f64],
    n: usize,
    need_input_grad: bool,
) -> (LayerGrads, Vec<f64>) {
    let out_w = mask.out_width();
    let in_w = mask.in_width;
    let fanin = mask.fanin;
    let q = layer.act_quant;

    let mut dy = vec![0.0; n * out_w];
    let mut d_scale = 0.0;
    for i in 0..n * out_w {
        let (gx, gs) = q.ste_backward(upstream[i], cache.pre_quant[i]);
        dy[i] = gx;
        d_scale += gs;
    }

    let mut d_gain = vec![0.0; out_w];
    let mut d_bias = vec![0.0; out_w];
    let mut sum_dzhat = vec![0.0; out_w];
    let mut sum_dzhat_zhat = vec![0.0; out_w];
    for s in 0..n {
        for j in 0..out_w {
            let i = s * out_w + j;
            d_gain[j] += dy[i] * cache.zhat[i];
            d_bias[j] += dy[i];
            let dzhat = dy[i] * layer.bn.gain[j];
            sum_dzhat[j] += dzhat;
            sum_dzhat_zhat[j] += dzhat * cache.zhat[i];
        }
    }

    let nf = n as f64;
    let mut d_w = vec![0.0; out_w * fanin];
    let mut d_in = if need_input_grad {
        vec![0.0; n * in_w]
    } else {
        Vec::new()
    };
    for s in 0..n {
        let row = &cache.input[s * in_w..(s + 1) * in_w];
        for (j, idx) in mask.neurons.iter().enumerate() {
            let i = s * out_w + j;
            let dzhat = dy[i] * layer.bn.gain[j];
            let dz = cache.inv_std[j] / nf
                * (nf * dzhat - sum_dzhat[j] - cache.zhat[i] * sum_dzhat_zhat[j]);
            let w = layer.neuron_weights(j);
            for (k, &src) in idx.iter().enumerate() {
                d_w[j * fanin + k] += dz * row[src];
                if need_input_grad {
                    d_in[s * in_w + src] += dz * w[k];
                }
            }
        }
    }
    (
        LayerGrads {
            weights: d_w,
            gain: d_gain,
            bias: d_bias,
            scale: d_scale,
        },
        d_in,
    )
}

/// Mean softmax cross-entropy and its gradient with respect to the scores.
pub fn softmax_cross_entropy(
    scores: &[f64],
    labels: &[usize],
    classes: usize,
) -> Result<(f64, Vec<f64>)> {
    let n = labels.len();
    if scores.len() != n * classes {
        return Err(Error::Shape(format!(
            "{} scores for {n} samples of {classes} classes",
            scores.len()
        )));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; scores.len()];
    for s in 0..n {
        let row = &scores[s * classes..(s + 1) * classes];
        let label = labels[s];
        if label >= classes {
            return Err(Error::Shape(format!(
                "label {label} outside [0, {classes})"
            )));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[label];
        for (c, &v) in row.iter().enumerate() {
            let p = (v - log_z).exp();
            grad[s * classes + c] = (p - f64::from(c == label)) / n as f64;
        }
    }
    Ok((loss / n as f64, grad))
}

/// Index of the largest score, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
