//! `exp` built from IEEE add/mul/div only, so softmax confidences are
//! bit-identical on every platform regardless of the system libm.

// ln 2 split so that k * LN2_HI is exact for |k| < 2^11
const LN2_HI: f64 = f64::from_bits(0x3fe6_2e42_fee0_0000);
const LN2_LO: f64 = f64::from_bits(0x3dea_39ef_3579_3c76);
const INV_LN2: f64 = std::f64::consts::LOG2_E;

/// `e^x` for `x <= 0`; returns 0 below the subnormal range.
pub fn exp_nonpositive(x: f64) -> f64 {
    debug_assert!(x <= 0.0 || x.is_nan());
    if x.is_nan() {
        return f64::NAN;
    }
    if x < -708.0 {
        return 0.0;
    }
    // x = n·ln2 + r, |r| <= ln2/2
    let n = (x * INV_LN2).round();
    let r = (x - n * LN2_HI) - n * LN2_LO;
    // Taylor series to degree 13; the truncation error is below 1 ulp for |r| <= 0.35.
    let mut p = 1.0;
    let mut term = 1.0;
    for k in 1..=13 {
        term = term * r / k as f64;
        p += term;
    }
    let bits = ((1023 + n as i64) as u64) << 52;
    p * f64::from_bits(bits)
}
