use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::nn::Params;

/// Width of the exchange quantizer. `B32` means no quantization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuantBits {
    B8,
    B16,
    B32,
}

impl QuantBits {
    pub fn bits(self) -> u32 {
        match self {
            QuantBits::B8 => 8,
            QuantBits::B16 => 16,
            QuantBits::B32 => 32,
        }
    }

    pub fn bytes_per_param(self) -> usize {
        self.bits() as usize / 8
    }
}

impl fmt::Display for QuantBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bits())
    }
}

impl FromStr for QuantBits {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim() {
            "8" => Ok(QuantBits::B8),
            "16" => Ok(QuantBits::B16),
            "32" => Ok(QuantBits::B32),
            other => Err(Error::Argument(format!("quantization bits must be 8, 16 or 32, got '{other}'"))),
        }
    }
}

/// Symmetric uniform quantization of one tensor. The grid has `2^bits`
/// points spanning `[-m, m]` with `m = max|x|`, i.e. `2^bits - 1` equal steps,
/// so each entry moves by at most `m / (2^bits - 1)`. Values are returned
/// dequantized. An all-zero tensor is returned unchanged.
pub fn quantize(values: &[f64], bits: QuantBits) -> Vec<f64> {
    let mut out = values.to_vec();
    quantize_in_place(&mut out, bits);
    out
}

fn quantize_in_place(values: &mut [f64], bits: QuantBits) {
    if bits == QuantBits::B32 {
        return;
    }
    let m = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m == 0.0 || !m.is_finite() {
        return;
    }
    let steps = ((1u64 << bits.bits()) - 1) as f64;
    let step = 2.0 * m / steps;
    for v in values.iter_mut() {
        let q = ((*v + m) / step).round().clamp(0.0, steps);
        *v = -m + q * step;
    }
}

/// Quantizes every weight matrix and every bias vector as its own tensor.
pub fn quantize_params(p: &Params, bits: QuantBits) -> Params {
    let mut out = p.clone();
    if bits != QuantBits::B32 {
        for layer in out.layers_mut() {
            quantize_in_place(&mut layer.weights, bits);
            quantize_in_place(&mut layer.bias, bits);
        }
    }
    out
}
