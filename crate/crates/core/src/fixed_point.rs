//! Fixed-point quantization of real-valued updates and their embedding into the scalar field.
//!
//! A real `v` becomes `round(v · 2^f)` (ties to even), clamped to `(-2^b, 2^b)`. Negative
//! integers embed as field complements `q - |v|`, so a negative value can never pass a
//! range proof of membership in `[0, 2^{n_r})`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantConfig {
    /// Fractional bits `f`.
    pub frac_bits: u32,
    /// Magnitude bound `b`: every quantized value satisfies `|v| < 2^b`.
    pub value_bits: u32,
    /// Bit width `n_r` of the norm and inner-product range statements.
    pub norm_bits: u32,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self {
            frac_bits: 16,
            value_bits: 24,
            norm_bits: 64,
        }
    }
}

/// `ceil(log2(n))`, with `ceil_log2(0) = ceil_log2(1) = 0`.
pub fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

impl QuantConfig {
    /// Checks that inner products and squared norms over layers of up to
    /// `max_layer_len` entries fit the range statements.
    pub fn validate(&self, max_layer_len: usize) -> Result<()> {
        if self.value_bits == 0 || self.value_bits > 62 {
            return Err(Error::InvalidConfig(format!(
                "value_bits = {} must lie in [1, 62]",
                self.value_bits
            )));
        }
        if self.norm_bits > 64 {
            return Err(Error::InvalidConfig(format!(
                "norm_bits = {} exceeds 64",
                self.norm_bits
            )));
        }
        let needed = 2 * self.value_bits + ceil_log2(max_layer_len);
        if needed > self.norm_bits {
            return Err(Error::InvalidConfig(format!(
                "2·{} + ceil(log2({})) = {} exceeds norm_bits = {}",
                self.value_bits, max_layer_len, needed, self.norm_bits
            )));
        }
        Ok(())
    }

    /// Largest representable magnitude, `2^b - 1`.
    pub fn max_magnitude(&self) -> i64 {
        (1i64 << self.value_bits) - 1
    }

    pub fn scale(&self) -> f64 {
        (self.frac_bits as f64).exp2()
    }
}

/// A quantized update, one integer vector per layer.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedUpdate {
    pub layers: Vec<Vec<i64>>,
}

impl QuantizedUpdate {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            layers: shape.iter().map(|&n| vec![0; n]).collect(),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn flat(&self) -> impl Iterator<Item = i64> + '_ {
        self.layers.iter().flatten().copied()
    }

    /// `Σ x_i²` over every parameter.
    pub fn sum_squares(&self) -> u128 {
        self.flat().map(|v| (v as i128 * v as i128) as u128).sum()
    }

    /// Per-layer integer inner products with `other`.
    pub fn layer_dots(&self, other: &QuantizedUpdate) -> Vec<i128> {
        self.layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| x as i128 * y as i128).sum())
            .collect()
    }
}

/// Result of quantizing one update.
#[derive(Clone, Debug, PartialEq)]
pub struct Quantization {
    pub update: QuantizedUpdate,
    /// Number of values that were clamped (or were not finite).
    pub clamped: usize,
}

/// Quantizes one real value; returns the value and whether it was clamped.
pub fn quantize_value(v: f64, cfg: &QuantConfig) -> (i64, bool) {
    let max = cfg.max_magnitude();
    if v.is_nan() {
        return (0, true);
    }
    let scaled = (v * cfg.scale()).round_ties_even();
    if scaled > max as f64 {
        (max, true)
    } else if scaled < -(max as f64) {
        (-max, true)
    } else {
        (scaled as i64, false)
    }
}

pub fn quantize(update: &[Vec<f64>], cfg: &QuantConfig) -> Quantization {
    let mut clamped = 0;
    let layers = update
        .iter()
        .map(|layer| {
            layer
                .iter()
                .map(|&v| {
                    let (q, c) = quantize_value(v, cfg);
                    clamped += c as usize;
                    q
                })
                .collect()
        })
        .collect();
    Quantization {
        update: QuantizedUpdate { layers },
        clamped,
    }
}

pub fn dequantize_value(v: i64, cfg: &QuantConfig) -> f64 {
    v as f64 / cfg.scale()
}

pub fn dequantize(q: &QuantizedUpdate, cfg: &QuantConfig) -> Vec<Vec<f64>> {
    q.layers
        .iter()
        .map(|l| l.iter().map(|&v| dequantize_value(v, cfg)).collect())
        .collect()
}

/// Signed integer to field element; negatives become `q - |v|`.
pub fn embed_signed(v: i128) -> Scalar {
    let mag = Scalar::from(v.unsigned_abs());
    if v < 0 {
        -mag
    } else {
        mag
    }
}

/// Embeds a quantized value, enforcing `|v| < 2^b`.
pub fn embed(v: i64, cfg: &QuantConfig) -> Result<Scalar> {
    if v.unsigned_abs() > cfg.max_magnitude() as u64 {
        return Err(Error::MagnitudeOverflow {
            value: v as i128,
            bits: cfg.value_bits,
        });
    }
    Ok(embed_signed(v as i128))
}

fn low_u128(s: &Scalar) -> Option<u128> {
    let bytes = s.to_bytes();
    if bytes[16..].iter().any(|&b| b != 0) {
        return None;
    }
    Some(u128::from_le_bytes(bytes[..16].try_into().unwrap()))
}

/// Inverse of [`embed_signed`] for values with `|v| < 2^bits` (`bits ≤ 126`).
pub fn unembed_bounded(s: &Scalar, bits: u32) -> Result<i128> {
    assert!(bits <= 126);
    let bound = 1u128 << bits;
    if let Some(v) = low_u128(s).filter(|&v| v < bound) {
        return Ok(v as i128);
    }
    if let Some(v) = low_u128(&-s).filter(|&v| v < bound) {
        return Ok(-(v as i128));
    }
    Err(Error::MagnitudeOverflow {
        value: i128::MAX,
        bits,
    })
}

pub fn unembed(s: &Scalar, cfg: &QuantConfig) -> Result<i64> {
    unembed_bounded(s, cfg.value_bits).map(|v| v as i64)
}

/// The nonnegative integer value of `s` if it is below `2^bits`.
pub fn scalar_to_u64_bounded(s: &Scalar, bits: u32) -> Option<u64> {
    let v = low_u128(s)?;
    if bits < 128 && v >> bits != 0 {
        return None;
    }
    u64::try_from(v).ok()
}

/// `floor((t_m · 2^f)^2)`, computed exactly from the binary value of `t_m`.
pub fn norm_threshold(t_m: f64, cfg: &QuantConfig) -> Result<u64> {
    if !(t_m.is_finite() && t_m > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "norm threshold must be positive, got {t_m}"
        )));
    }
    // t_m = mantissa · 2^exp exactly
    let bits = t_m.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mantissa, exp) = if raw_exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), raw_exp - 1075)
    };
    let square = (mantissa as u128) * (mantissa as u128);
    let shift = 2 * (exp + cfg.frac_bits as i64);
    let value = if shift >= 0 {
        let shift = shift as u32;
        if shift >= square.leading_zeros() {
            u128::MAX
        } else {
            square << shift
        }
    } else if -shift >= 128 {
        0
    } else {
        square >> (-shift) as u32
    };
    if cfg.norm_bits < 128 && value >> cfg.norm_bits != 0 {
        return Err(Error::ThresholdTooLarge {
            threshold: value,
            bits: cfg.norm_bits,
        });
    }
    Ok(value as u64)
}
