//! Uniform activation quantizers with a learned scale.
//!
//! A quantizer with bitwidth `b` has exactly `2^b` levels. Signed quantizers
//! cover the integer levels `[-2^(b-1), 2^(b-1) - 1]`, unsigned ones cover
//! `[0, 2^b - 1]`. Codes are stored in offset form (`level - int_min`) so that
//! every code is a nonnegative `b`-bit pattern usable as a truth-table address
//! or data word.
//!
//! Rounding is half-away-from-zero everywhere (`f64::round`).

use crate::error::{Error, Result};

pub const MAX_BITWIDTH: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerSpec {
    pub bitwidth: u32,
    pub scale: f64,
    pub signed: bool,
}

/// A `width`-bit code in offset encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QuantCode {
    pub value: u32,
    pub width: u32,
}

impl QuantCode {
    pub fn new(value: u32, width: u32) -> Result<Self> {
        if width == 0 || width > 32 || (width < 32 && value >> width != 0) {
            return Err(Error::InvalidQuantizer(format!(
                "code {value} does not fit in {width} bits"
            )));
        }
        Ok(Self { value, width })
    }
}

impl QuantizerSpec {
    pub fn new(bitwidth: u32, scale: f64, signed: bool) -> Result<Self> {
        let spec = Self {
            bitwidth,
            scale,
            signed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn signed(bitwidth: u32, scale: f64) -> Result<Self> {
        Self::new(bitwidth, scale, true)
    }

    pub fn unsigned(bitwidth: u32, scale: f64) -> Result<Self> {
        Self::new(bitwidth, scale, false)
    }

    /// Unsigned quantizer mapping `[0, 1]` onto all `2^bits` codes.
    pub fn unit_interval(bits: u32) -> Result<Self> {
        if bits == 0 || bits > MAX_BITWIDTH {
            return Err(Error::InvalidQuantizer(format!("bitwidth {bits}")));
        }
        Self::unsigned(bits, 1.0 / ((1u32 << bits) - 1) as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bitwidth == 0 || self.bitwidth > MAX_BITWIDTH {
            return Err(Error::InvalidQuantizer(format!(
                "bitwidth {} outside 1..={MAX_BITWIDTH}",
                self.bitwidth
            )));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidQuantizer(format!(
                "scale {} must be positive and finite",
                self.scale
            )));
        }
        Ok(())
    }

    pub fn levels(&self) -> u32 {
        1 << self.bitwidth
    }

    pub fn int_min(&self) -> i64 {
        if self.signed {
            -(1i64 << (self.bitwidth - 1))
        } else {
            0
        }
    }

    pub fn int_max(&self) -> i64 {
        if self.signed {
            (1i64 << (self.bitwidth - 1)) - 1
        } else {
            (1i64 << self.bitwidth) - 1
        }
    }

    /// Integer level of `x` before offsetting.
    pub fn level(&self, x: f64) -> Result<i64> {
        if !x.is_finite() {
            return Err(Error::NonFinite(x));
        }
        let r = (x / self.scale).round();
        Ok((r.max(self.int_min() as f64).min(self.int_max() as f64)) as i64)
    }

    pub fn quantize(&self, x: f64) -> Result<QuantCode> {
        let level = self.level(x)?;
        Ok(QuantCode {
            value: (level - self.int_min()) as u32,
            width: self.bitwidth,
        })
    }

    /// Real value of a raw code. The caller guarantees `code < 2^bitwidth`.
    #[inline]
    pub fn value_of(&self, code: u32) -> f64 {
        (code as i64 + self.int_min()) as f64 * self.scale
    }

    pub fn dequantize(&self, code: QuantCode) -> Result<f64> {
        if code.width != self.bitwidth {
            return Err(Error::WidthMismatch {
                expected: self.bitwidth,
                got: code.width,
            });
        }
        if code.value >= self.levels() {
            return Err(Error::InvalidQuantizer(format!(
                "code {} out of range for {} bits",
                code.value, self.bitwidth
            )));
        }
        Ok(self.value_of(code.value))
    }

    /// Differentiable stand-in for `dequantize(quantize(x))`: a clamp to the
    /// representable range without rounding.
    pub fn surrogate(&self, x: f64) -> f64 {
        x.max(self.int_min() as f64 * self.scale)
            .min(self.int_max() as f64 * self.scale)
    }

    /// Clipped straight-through gradient. Returns `(grad_x, grad_scale)`.
    ///
    /// Inside `[int_min, int_max]` (measured on `x / scale`) the gradient
    /// passes to `x` unchanged and the scale receives nothing. Outside, the
    /// output is pinned to `boundary * scale`, so `x` receives nothing and
    /// the scale receives `upstream * boundary`.
    pub fn ste_backward(&self, upstream: f64, x: f64) -> (f64, f64) {
        let t = x / self.scale;
        let lo = self.int_min() as f64;
        let hi = self.int_max() as f64;
        if t < lo {
            (0.0, upstream * lo)
        } else if t > hi {
            (0.0, upstream * hi)
        } else {
            (upstream, 0.0)
        }
    }
}

pub fn quantize(x: f64, spec: &QuantizerSpec) -> Result<QuantCode> {
    spec.validate()?;
    spec.quantize(x)
}

pub fn dequantize(code: QuantCode, spec: &QuantizerSpec) -> Result<f64> {
    spec.validate()?;
    spec.dequantize(code)
}

pub fn quantize_ste_backward(
    upstream_grad: f64,
    x: f64,
    spec: &QuantizerSpec,
) -> Result<(f64, f64)> {
    spec.validate()?;
    if !upstream_grad.is_finite() {
        return Err(Error::NonFinite(upstream_grad));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite(x));
    }
    Ok(spec.ste_backward(upstream_grad, x))
}
