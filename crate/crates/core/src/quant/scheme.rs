//! Arithmetic of the int8 scheme: symmetric per-tensor weights, asymmetric
//! per-tensor activations and a 31-bit fixed-point requantization multiplier.
//! All rounding is half away from zero.

use super::{QuantError, Result};

/// Rounds half away from zero.
pub fn round_half_away(x: f64) -> f64 {
    x.round()
}

/// Symmetric per-tensor quantization: `s = max|w| / 127`, `q = clamp(round(w / s), -127, 127)`.
/// An all-zero tensor gets scale 1.
pub fn quantize_symmetric(w: &[f64]) -> (f32, Vec<i8>) {
    let max_abs = w.iter().fold(0f64, |m, v| m.max(v.abs()));
    if max_abs == 0.0 {
        return (1.0, vec![0; w.len()]);
    }
    let scale = (max_abs / 127.0) as f32;
    let s = scale as f64;
    let q = w
        .iter()
        .map(|&v| round_half_away(v / s).clamp(-127.0, 127.0) as i8)
        .collect();
    (scale, q)
}

/// Scale and zero point of an asymmetric int8 activation site covering
/// `[min, max]` widened to include 0.
pub fn activation_params(min: f64, max: f64) -> (f32, i32) {
    let lo = min.min(0.0);
    let hi = max.max(0.0);
    if hi - lo <= 0.0 || !(hi - lo).is_finite() {
        return (1.0, -128);
    }
    let scale = ((hi - lo) / 255.0) as f32;
    let zp = round_half_away(-128.0 - lo / scale as f64).clamp(-128.0, 127.0) as i32;
    (scale, zp)
}

pub fn quantize_activation(x: f64, scale: f32, zero_point: i32) -> i8 {
    (round_half_away(x / scale as f64) + zero_point as f64).clamp(-128.0, 127.0) as i8
}

/// Fixed-point form of a real multiplier in `(0, 1)`: `m · 2^-(31 + shift)`
/// with `m` in `[2^30, 2^31)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Requant {
    pub multiplier: i32,
    pub shift: u8,
}

/// Largest right shift the runtime accepts; keeps the product within i64.
pub const MAX_SHIFT: u8 = 31;

impl Requant {
    pub fn from_real(real: f64) -> Result<Self> {
        if !(real > 0.0 && real < 1.0) {
            return Err(QuantError::RequantRange(real));
        }
        // real = frac * 2^exp, frac in [0.5, 1)
        let mut exp = real.log2().floor() as i32 + 1;
        let mut frac = real / 2f64.powi(exp);
        if frac >= 1.0 {
            frac /= 2.0;
            exp += 1;
        } else if frac < 0.5 {
            frac *= 2.0;
            exp -= 1;
        }
        let mut m = round_half_away(frac * (1u64 << 31) as f64) as i64;
        if m == 1 << 31 {
            m = 1 << 30;
            exp += 1;
        }
        let shift = -exp;
        if !(0..=MAX_SHIFT as i32).contains(&shift) {
            return Err(QuantError::RequantRange(real));
        }
        Ok(Self {
            multiplier: m as i32,
            shift: shift as u8,
        })
    }

    pub fn to_real(self) -> f64 {
        self.multiplier as f64 / 2f64.powi(31 + self.shift as i32)
    }

    /// `round_half_away(acc · m / 2^(31 + shift))` in integer arithmetic.
    #[inline]
    pub fn apply(self, acc: i32) -> i32 {
        let total = 31 + self.shift as u32;
        let prod = acc as i64 * self.multiplier as i64;
        let half = 1i64 << (total - 1);
        let r = if prod >= 0 {
            (prod + half) >> total
        } else {
            -((-prod + half) >> total)
        };
        r as i32
    }
}

/// 32-bit bias in units of `input_scale · weight_scale`.
pub fn quantize_bias(b: f64, input_scale: f32, weight_scale: f32) -> i32 {
    let s = input_scale as f64 * weight_scale as f64;
    round_half_away(b / s).clamp(i32::MIN as f64, i32::MAX as f64) as i32
}
