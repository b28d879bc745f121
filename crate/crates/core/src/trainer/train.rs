//! The training loop and top-1 evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::{Codes, Dataset, InputQuantizer};
use super::model::{argmax, Activation, Mode, TrainedModel, SCALE_FLOOR};
use super::optim::{Adam, AdamState, StepDecay};
use crate::error::{Error, Result};
use crate::topology::NetworkSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub adam: Adam,
    pub lr_decay: f64,
    pub lr_step_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 1024,
            lr: 0.1,
            adam: Adam::default(),
            lr_decay: 0.1,
            lr_step_epochs: 300,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "lr_decay {} outside (0, 1]",
                self.lr_decay
            )));
        }
        if self.lr_step_epochs == 0 {
            return Err(Error::InvalidConfig(
                "lr_step_epochs must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn schedule(&self) -> StepDecay {
        StepDecay {
            initial: self.lr,
            factor: self.lr_decay,
            step_epochs: self.lr_step_epochs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    /// NaN when no validation set is supplied.
    pub val_acc: f64,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str = "epoch,lr,train_loss,train_acc,val_acc";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{:e},{:.6},{:.6},{:.6}",
            self.epoch, self.lr, self.train_loss, self.train_acc, self.val_acc
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub metrics: Vec<EpochMetrics>,
}

struct OptState {
    weights: AdamState,
    gain: AdamState,
    bias: AdamState,
    scale: AdamState,
}

/// Trains from scratch and returns a frozen model. Single-threaded, so equal
/// inputs give bit-identical results.
pub fn train(
    spec: &NetworkSpec,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    spec.check()?;
    if train_set.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    train_set.check_labels(spec.num_classes)?;
    if spec.num_classes < 2 {
        return Err(Error::InvalidSpec(
            "training needs at least two classes".into(),
        ));
    }

    let iq = InputQuantizer::new(spec.input_bits, train_set.feature_ranges.clone())?;
    let codes = iq.encode(train_set)?;
    let val = match val_set {
        Some(v) if !v.is_empty() => Some((iq.encode(v)?, v.labels.as_slice())),
        _ => None,
    };
    let mut model = TrainedModel::init(spec, iq, cfg.seed)?;

    let n = train_set.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // stream 0 initializes weights
    rng.set_stream(1);
    let mut opt: Vec<OptState> = model
        .layers
        .iter()
        .map(|l| OptState {
            weights: AdamState::new(l.weights.len()),
            gain: AdamState::new(l.bn.gain.len()),
            bias: AdamState::new(l.bn.bias.len()),
            scale: AdamState::new(1),
        })
        .collect();
    let schedule = cfg.schedule();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut scales_ready = false;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = schedule.lr(epoch);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = codes.select(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| train_set.labels[i]).collect();
            if !scales_ready {
                model.init_scales(&batch)?;
                scales_ready = true;
            }
            let out = model
                .forward(&batch, Mode::Train(Activation::Quantized))
                .map_err(|e| match e {
                    Error::NonFinite(loss) => Error::Diverged {
                        epoch,
                        batch: b,
                        loss,
                    },
                    e => e,
                })?;
            let grads = model.backward(&out, &labels)?;
            if !grads.loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: grads.loss,
                });
            }
            loss_sum += grads.loss * chunk.len() as f64;
            let c = model.num_classes();
            correct += (0..chunk.len())
                .filter(|&s| argmax(&out.scores[s * c..(s + 1) * c]) == labels[s])
                .count();

            model.update_running_stats(out.cache.as_ref().expect("train-mode cache"));
            for ((layer, g), st) in model.layers.iter_mut().zip(&grads.layers).zip(&mut opt) {
                cfg.adam
                    .update(&mut st.weights, &mut layer.weights, &g.weights, lr);
                cfg.adam
                    .update(&mut st.gain, &mut layer.bn.gain, &g.gain, lr);
                cfg.adam
                    .update(&mut st.bias, &mut layer.bn.bias, &g.bias, lr);
                let mut s = [layer.act_quant.scale];
                cfg.adam.update(&mut st.scale, &mut s, &[g.scale], lr);
                layer.act_quant.scale = s[0].max(SCALE_FLOOR);
            }
        }
        let val_acc = match &val {
            Some((vc, vl)) => accuracy_of(&model, vc, vl)?,
            None => f64::NAN,
        };
        let m = EpochMetrics {
            epoch,
            lr,
            train_loss: loss_sum / n as f64,
            train_acc: correct as f64 / n as f64,
            val_acc,
        };
        on_epoch(&m);
        metrics.push(m);
    }
    model.freeze();
    Ok(TrainOutcome { model, metrics })
}

fn accuracy_of(model: &TrainedModel, codes: &Codes, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Ok(f64::NAN);
    }
    let out = model.forward(codes, Mode::Eval)?;
    let c = model.num_classes();
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(s, &l)| argmax(&out.scores[s * c..(s + 1) * c]) == l)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Top-1 accuracy of a frozen model; ties go to the lowest class index.
pub fn evaluate(model: &TrainedModel, ds: &Dataset) -> Result<f64> {
    if !model.frozen {
        return Err(Error::NotFrozen("evaluate"));
    }
    let codes = model.input_quant.encode(ds)?;
    accuracy_of(model, &codes, &ds.labels)
}
