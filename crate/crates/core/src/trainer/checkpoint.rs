//! Single-file model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      b"LFCK"
//! version    u32 (= 1)
//! spec       input_features u32, input_bits u32, num_classes u32, seed u64,
//!            layer_count u32, then per layer:
//!            in_width u32, out_width u32, fanin u32, in_bits u32, out_bits u32
//! masks      per layer, per neuron: fanin x u32 input indices
//! inputs     bits u32, per feature: min f64, max f64
//! params     per layer: weights f64 x (out_width * fanin),
//!            gain, bias, running_mean, running_var: f64 x out_width each,
//!            eps f64, momentum f64, scale f64, signed u8
//! frozen     u8
//! checksum   SHA-256 of every preceding byte (32 bytes)
//! ```
//!
//! Reals are IEEE-754 doubles, so a save/load round trip is bit-exact.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::dataset::InputQuantizer;
use super::model::{BatchNormParams, DenseLayerParams, TrainedModel};
use crate::error::{Error, Result};
use crate::quantizer::QuantizerSpec;
use crate::topology::{LayerSpec, NetworkSpec, SparsityMask};

const MAGIC: &[u8; 4] = b"LFCK";
const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("dimension fits in u32"));
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        v.iter().for_each(|&x| self.f64(x));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn encode(model: &TrainedModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    let s = &model.spec;
    w.usize(s.input_features);
    w.u32(s.input_bits);
    w.usize(s.num_classes);
    w.u64(s.seed);
    w.usize(s.layers.len());
    for l in &s.layers {
        w.usize(l.in_width);
        w.usize(l.out_width);
        w.usize(l.fanin);
        w.u32(l.in_bits);
        w.u32(l.out_bits);
    }
    for m in &model.masks {
        for n in &m.neurons {
            n.iter().for_each(|&i| w.usize(i));
        }
    }
    w.u32(model.input_quant.bits);
    for &(lo, hi) in &model.input_quant.ranges {
        w.f64(lo);
        w.f64(hi);
    }
    for p in &model.layers {
        w.f64s(&p.weights);
        w.f64s(&p.bn.gain);
        w.f64s(&p.bn.bias);
        w.f64s(&p.bn.running_mean);
        w.f64s(&p.bn.running_var);
        w.f64(p.bn.eps);
        w.f64(p.bn.momentum);
        w.f64(p.act_quant.scale);
        w.u8(u8::from(p.act_quant.signed));
    }
    w.u8(u8::from(model.frozen));
    let digest = Sha256::digest(&w.0);
    w.0.extend_from_slice(&digest);
    w.0
}

pub fn decode(bytes: &[u8]) -> Result<TrainedModel> {
    if bytes.len() < MAGIC.len() + 4 + 32 || &bytes[..4] != MAGIC {
        return Err(Error::Checkpoint("not a logicforge checkpoint".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let input_features = r.usize()?;
    let input_bits = r.u32()?;
    let num_classes = r.usize()?;
    let seed = r.u64()?;
    let n_layers = r.usize()?;
    let layers = (0..n_layers)
        .map(|_| {
            Ok(LayerSpec {
                in_width: r.usize()?,
                out_width: r.usize()?,
                fanin: r.usize()?,
                in_bits: r.u32()?,
                out_bits: r.u32()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let spec = NetworkSpec {
        input_features,
        input_bits,
        layers,
        num_classes,
        seed,
    };
    spec.check()?;
    let masks = spec
        .layers
        .iter()
        .map(|l| {
            let neurons = (0..l.out_width)
                .map(|_| (0..l.fanin).map(|_| r.usize()).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            Ok(SparsityMask {
                in_width: l.in_width,
                fanin: l.fanin,
                neurons,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let bits = r.u32()?;
    let ranges = (0..input_features)
        .map(|_| Ok((r.f64()?, r.f64()?)))
        .collect::<Result<Vec<_>>>()?;
    let input_quant = InputQuantizer::new(bits, ranges)?;
    let params = spec
        .layers
        .iter()
        .map(|l| {
            let weights = r.f64s(l.out_width * l.fanin)?;
            let gain = r.f64s(l.out_width)?;
            let bias = r.f64s(l.out_width)?;
            let running_mean = r.f64s(l.out_width)?;
            let running_var = r.f64s(l.out_width)?;
            let eps = r.f64()?;
            let momentum = r.f64()?;
            let scale = r.f64()?;
            let signed = r.u8()? != 0;
            Ok(DenseLayerParams {
                weights,
                bn: BatchNormParams {
                    gain,
                    bias,
                    running_mean,
                    running_var,
                    eps,
                    momentum,
                },
                act_quant: QuantizerSpec::new(l.out_bits, scale, signed)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let frozen = r.u8()? != 0;
    if r.pos != body.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            body.len() - r.pos
        )));
    }
    let model = TrainedModel {
        spec,
        masks,
        layers: params,
        input_quant,
        frozen,
    };
    model.validate()?;
    Ok(model)
}

pub fn save(model: &TrainedModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<TrainedModel> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Knobs;

    fn model() -> TrainedModel {
        let spec = NetworkSpec::mlp(5, &[6, 4], 3, Knobs::uniform(2, 3), 17);
        let iq =
            InputQuantizer::new(2, (0..5).map(|i| (i as f64, i as f64 + 0.5)).collect()).unwrap();
        let mut m = TrainedModel::init(&spec, iq, 3).unwrap();
        m.layers[1].act_quant.scale = 0.123456789;
        m.layers[0].bn.running_var[2] = 1.0 / 3.0;
        m.freeze();
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let bytes = encode(&m);
        let back = decode(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = encode(&model());
        bytes[40] ^= 1;
        assert!(matches!(decode(&bytes), Err(Error::Checkpoint(_))));
        assert!(decode(b"nope").is_err());
        let bytes = encode(&model());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    }
}
