//! `TBND` model bundle.
//!
//! Little-endian layout:
//!
//! ```text
//! "TBND" | u16 format=1 | u32 bundle version | u8 C | C x (u8 len, utf-8)
//! 12 x f32 channel stats (means, then deviations) | u8 layer count
//! per layer: u8 type {1 conv, 2 dense} | u16 in | u16 out | u16 kernel
//!            f32 weight scale | f32 input scale | i32 input zero point
//!            i32 requant multiplier | u8 requant shift
//!            i8 weights | i32 biases
//! u32 CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! The final layer carries multiplier 0 and shift 0: its i32 accumulators are
//! dequantized directly with `input_scale * weight_scale`.

use super::scheme::{Requant, MAX_SHIFT};
use super::{QuantError, Result};
use crate::codec::{put_f32, put_i32, put_short_str, put_u16, put_u32, DecodeError, Reader};
use crate::signal::{ChannelStats, CHANNELS, WINDOW_LEN};
use crate::ClassMap;

pub const MAGIC: &[u8; 4] = b"TBND";
pub const FORMAT_VERSION: u16 = 1;
/// Deployable size ceiling (15 KiB).
pub const SIZE_LIMIT: usize = 15 * 1024;
/// Pool width the runtime applies after every conv layer.
pub const POOL: usize = 2;

const LAYER_HEADER: usize = 1 + 2 * 3 + 4 * 4 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum LayerKind {
    Conv = 1,
    Dense = 2,
}

/// One quantized layer with its quantization parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantLayer {
    pub kind: LayerKind,
    pub in_dim: u16,
    pub out_dim: u16,
    /// Taps for conv layers; 1 for dense layers.
    pub kernel: u16,
    pub weight_scale: f32,
    pub input_scale: f32,
    pub input_zero_point: i32,
    pub requant_multiplier: i32,
    pub requant_shift: u8,
    /// Conv `[out][tap][in]`, dense `[out][in]`.
    pub weights: Vec<i8>,
    pub bias: Vec<i32>,
}

impl QuantLayer {
    pub fn weight_count(&self) -> usize {
        self.out_dim as usize * self.kernel as usize * self.in_dim as usize
    }

    /// `None` for the final (logit) layer.
    pub fn requant(&self) -> Option<Requant> {
        (self.requant_multiplier != 0).then_some(Requant {
            multiplier: self.requant_multiplier,
            shift: self.requant_shift,
        })
    }

    pub fn bias_scale(&self) -> f64 {
        self.input_scale as f64 * self.weight_scale as f64
    }

    /// Serialized size of this layer.
    pub fn encoded_len(&self) -> usize {
        LAYER_HEADER + self.weights.len() + 4 * self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub version: u32,
    pub classes: ClassMap,
    pub stats: ChannelStats,
    pub layers: Vec<QuantLayer>,
}

impl ModelBundle {
    /// Bytes of the layer table (descriptors, weights, biases).
    pub fn layer_table_len(&self) -> usize {
        self.layers.iter().map(QuantLayer::encoded_len).sum()
    }

    pub fn header_len(&self) -> usize {
        4 + 2 + 4 + 1 + self.classes.names().iter().map(|n| 1 + n.len()).sum::<usize>() + 4 * 2 * CHANNELS + 1
    }

    pub fn encoded_len(&self) -> usize {
        self.header_len() + self.layer_table_len() + 4
    }

    /// Checks that the layers form the conv* -> dense+ stack the runtime
    /// executes on a 60 x 6 window.
    pub fn validate(&self) -> Result<()> {
        let malformed = |m: String| Err(QuantError::Malformed(m));
        if self.classes.len() < 2 || self.classes.len() > u8::MAX as usize {
            return malformed(format!("class count {}", self.classes.len()));
        }
        if self.classes.names().iter().any(|n| n.len() > u8::MAX as usize) {
            return malformed("class name longer than 255 bytes".into());
        }
        if !self.stats.is_valid() {
            return malformed("invalid channel statistics".into());
        }
        if self.layers.is_empty() || self.layers.len() > u8::MAX as usize {
            return malformed(format!("layer count {}", self.layers.len()));
        }
        let mut len = WINDOW_LEN;
        let mut width = CHANNELS;
        let mut seen_dense = false;
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.weight_count() || l.bias.len() != l.out_dim as usize {
                return malformed(format!("layer {i}: tensor sizes do not match dims"));
            }
            if !(l.weight_scale > 0.0 && l.weight_scale.is_finite() && l.input_scale > 0.0 && l.input_scale.is_finite())
            {
                return malformed(format!("layer {i}: non-positive scale"));
            }
            if !(-128..=127).contains(&l.input_zero_point) {
                return malformed(format!("layer {i}: zero point out of range"));
            }
            if l.weights.contains(&i8::MIN) {
                return malformed(format!("layer {i}: weight -128 outside symmetric range"));
            }
            match (i == last, l.requant_multiplier) {
                (true, 0) if l.requant_shift == 0 => {}
                (false, m) if m >= 1 << 30 && l.requant_shift <= MAX_SHIFT => {}
                _ => return malformed(format!("layer {i}: invalid requantization")),
            }
            match l.kind {
                LayerKind::Conv => {
                    let k = l.kernel as usize;
                    if seen_dense || l.in_dim as usize != width || k == 0 || k > len || (len + 1 - k) < POOL {
                        return malformed(format!("layer {i}: conv does not fit its input"));
                    }
                    len = (len + 1 - k) / POOL;
                    width = l.out_dim as usize;
                }
                LayerKind::Dense => {
                    let expected = if seen_dense { width } else { len * width };
                    if l.kernel != 1 || l.in_dim as usize != expected {
                        return malformed(format!("layer {i}: dense expects {expected} inputs"));
                    }
                    seen_dense = true;
                    width = l.out_dim as usize;
                    len = 1;
                }
            }
        }
        if !seen_dense || width != self.classes.len() {
            return malformed("final layer must be dense with one output per class".into());
        }
        Ok(())
    }

    /// Byte-deterministic encoding.
    pub fn serialize(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        put_u16(&mut out, FORMAT_VERSION);
        put_u32(&mut out, self.version);
        out.push(self.classes.len() as u8);
        for name in self.classes.names() {
            put_short_str(&mut out, name);
        }
        for v in self.stats.mean.iter().chain(&self.stats.std) {
            put_f32(&mut out, *v);
        }
        out.push(self.layers.len() as u8);
        for l in &self.layers {
            out.push(l.kind as u8);
            put_u16(&mut out, l.in_dim);
            put_u16(&mut out, l.out_dim);
            put_u16(&mut out, l.kernel);
            put_f32(&mut out, l.weight_scale);
            put_f32(&mut out, l.input_scale);
            put_i32(&mut out, l.input_zero_point);
            put_i32(&mut out, l.requant_multiplier);
            out.push(l.requant_shift);
            out.extend(l.weights.iter().map(|&w| w as u8));
            for &b in &l.bias {
                put_i32(&mut out, b);
            }
        }
        let crc = crc32fast::hash(&out);
        put_u32(&mut out, crc);
        debug_assert_eq!(out.len(), self.encoded_len());
        Ok(out)
    }

    /// Parses and validates a bundle. The checksum is verified before any
    /// field is interpreted.
    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        const MIN_LEN: usize = 4 + 2 + 4 + 1 + 48 + 1 + 4;
        if bytes.len() < MIN_LEN {
            return Err(QuantError::Truncated {
                len: bytes.len(),
                min: MIN_LEN,
            });
        }
        let (body, footer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(footer.try_into().expect("4-byte footer"));
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(QuantError::CrcMismatch { stored, actual });
        }
        let mut r = Reader::new(body);
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(QuantError::BadMagic([magic[0], magic[1], magic[2], magic[3]]));
        }
        let format = r.u16()?;
        if format != FORMAT_VERSION {
            return Err(QuantError::UnsupportedVersion(format));
        }
        let version = r.u32()?;
        let n_classes = r.u8()? as usize;
        let mut names = Vec::with_capacity(n_classes);
        for _ in 0..n_classes {
            names.push(r.short_str()?);
        }
        let classes = ClassMap::new(names);
        if classes.len() != n_classes {
            return Err(QuantError::Malformed("duplicate class names".into()));
        }
        let mut stats = ChannelStats::identity();
        for c in 0..CHANNELS {
            stats.mean[c] = r.f32()?;
        }
        for c in 0..CHANNELS {
            stats.std[c] = r.f32()?;
        }
        let n_layers = r.u8()? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let kind = match r.u8()? {
                1 => LayerKind::Conv,
                2 => LayerKind::Dense,
                t => return Err(QuantError::Malformed(format!("layer {i}: unknown type code {t}"))),
            };
            let in_dim = r.u16()?;
            let out_dim = r.u16()?;
            let kernel = r.u16()?;
            let weight_scale = r.f32()?;
            let input_scale = r.f32()?;
            let input_zero_point = r.i32()?;
            let requant_multiplier = r.i32()?;
            let requant_shift = r.u8()?;
            let n_w = out_dim as usize * kernel as usize * in_dim as usize;
            let weights = r.take(n_w)?.iter().map(|&b| b as i8).collect();
            let mut bias = Vec::with_capacity(out_dim as usize);
            for _ in 0..out_dim {
                bias.push(r.i32()?);
            }
            layers.push(QuantLayer {
                kind,
                in_dim,
                out_dim,
                kernel,
                weight_scale,
                input_scale,
                input_zero_point,
                requant_multiplier,
                requant_shift,
                weights,
                bias,
            });
        }
        if r.remaining() != 0 {
            return Err(QuantError::Malformed(format!("{} trailing bytes", r.remaining())));
        }
        let bundle = Self {
            version,
            classes,
            stats,
            layers,
        };
        bundle.validate()?;
        Ok(bundle)
    }
}

impl From<DecodeError> for QuantError {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::Truncated { offset, needed } => QuantError::Malformed(format!(
                "layer table ends early at offset {offset} ({needed} bytes missing)"
            )),
            DecodeError::BadUtf8(at) => QuantError::Malformed(format!("invalid utf-8 at offset {at}")),
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::nn::init_model;
    use crate::quant::{package, PackageConfig};
    use crate::signal::Window;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn class_names(c: usize) -> Vec<String> {
        (0..c).map(|i| format!("activity_{i:02}")).collect()
    }

    /// A structurally valid bundle with random contents.
    pub(crate) fn random_bundle(classes: usize, seed: u64) -> ModelBundle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = [
            (LayerKind::Conv, 6u16, 8u16, 5u16),
            (LayerKind::Conv, 8, 16, 5),
            (LayerKind::Dense, 192, 32, 1),
            (LayerKind::Dense, 32, classes as u16, 1),
        ];
        let layers = shapes
            .iter()
            .enumerate()
            .map(|(i, &(kind, in_dim, out_dim, kernel))| {
                let n = in_dim as usize * out_dim as usize * kernel as usize;
                let last = i == shapes.len() - 1;
                QuantLayer {
                    kind,
                    in_dim,
                    out_dim,
                    kernel,
                    weight_scale: rng.random_range(1e-4f32..1.0),
                    input_scale: rng.random_range(1e-4f32..1.0),
                    input_zero_point: rng.random_range(-128..=127),
                    requant_multiplier: if last { 0 } else { rng.random_range(1 << 30..i32::MAX) },
                    requant_shift: if last { 0 } else { rng.random_range(0..=MAX_SHIFT) },
                    weights: (0..n).map(|_| rng.random_range(-127i8..=127)).collect(),
                    bias: (0..out_dim).map(|_| rng.random()).collect(),
                }
            })
            .collect();
        let mut stats = ChannelStats::identity();
        for c in 0..CHANNELS {
            stats.mean[c] = rng.random_range(-10f32..10.0);
            stats.std[c] = rng.random_range(0.01f32..10.0);
        }
        ModelBundle {
            version: rng.random(),
            classes: ClassMap::new(class_names(classes)),
            stats,
            layers,
        }
    }

    #[test]
    fn round_trip_and_determinism() {
        let b = random_bundle(5, 1);
        let bytes = b.serialize().unwrap();
        assert_eq!(bytes, b.serialize().unwrap());
        assert_eq!(bytes.len(), b.encoded_len());
        assert_eq!(ModelBundle::deserialize(&bytes).unwrap(), b);
    }

    #[test]
    fn header_layout() {
        let b = random_bundle(2, 2);
        let bytes = b.serialize().unwrap();
        assert_eq!(&bytes[..4], b"TBND");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), b.version);
        assert_eq!(bytes[10], 2);
        assert_eq!(bytes[11] as usize, "activity_00".len());
        let n = bytes.len();
        assert_eq!(
            u32::from_le_bytes(bytes[n - 4..].try_into().unwrap()),
            crc32fast::hash(&bytes[..n - 4])
        );
        // first layer descriptor directly after the header
        let h = b.header_len();
        assert_eq!(bytes[h], 1);
        assert_eq!(u16::from_le_bytes([bytes[h + 1], bytes[h + 2]]), 6);
    }

    #[test]
    fn eighteen_class_bundle_fits_size_limit() {
        let b = random_bundle(18, 3);
        let n = b.serialize().unwrap().len();
        // 7600 i8 weights + 74 i32 biases + 4 descriptors + header + footer
        let names: usize = class_names(18).iter().map(|s| 1 + s.len()).sum();
        assert_eq!(n, 7600 + 74 * 4 + 4 * 24 + (4 + 2 + 4 + 1 + names + 48 + 1) + 4);
        assert!(n < SIZE_LIMIT, "{n}");
    }

    #[test]
    fn packaged_eighteen_class_model_fits() {
        let classes = ClassMap::new(class_names(18));
        let m = init_model(classes, 11).unwrap();
        let w = Window::from_flat(&vec![0.5; 360], None, "1").unwrap();
        let b = package(
            &m,
            &ChannelStats::identity(),
            std::slice::from_ref(&w),
            &PackageConfig::default(),
        )
        .unwrap();
        assert!(b.serialize().unwrap().len() < SIZE_LIMIT);
    }

    #[test]
    fn typed_errors() {
        let b = random_bundle(3, 4);
        let bytes = b.serialize().unwrap();
        assert!(matches!(
            ModelBundle::deserialize(&bytes[..10]),
            Err(QuantError::Truncated { .. })
        ));
        assert!(matches!(
            ModelBundle::deserialize(&bytes[..bytes.len() - 1]),
            Err(QuantError::CrcMismatch { .. })
        ));
        let reseal = |mut body: Vec<u8>| {
            let n = body.len() - 4;
            body.truncate(n);
            let crc = crc32fast::hash(&body);
            body.extend_from_slice(&crc.to_le_bytes());
            body
        };
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            ModelBundle::deserialize(&reseal(bad)),
            Err(QuantError::BadMagic(_))
        ));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            ModelBundle::deserialize(&reseal(bad)),
            Err(QuantError::UnsupportedVersion(2))
        ));
        // a dropped byte in the middle, resealed: the layer table no longer parses
        let mut bad = bytes.clone();
        bad.remove(b.header_len() + 40);
        assert!(matches!(
            ModelBundle::deserialize(&reseal(bad)),
            Err(QuantError::Malformed(_))
        ));
    }

    #[test]
    fn rejects_bad_topology() {
        let mut b = random_bundle(3, 5);
        b.layers[2].in_dim = 191;
        assert!(matches!(b.serialize(), Err(QuantError::Malformed(_))));
        let mut b = random_bundle(3, 5);
        b.layers[3].requant_multiplier = 1 << 30;
        assert!(b.serialize().is_err());
        let mut b = random_bundle(3, 5);
        b.layers[0].weights[0] = -128;
        assert!(b.serialize().is_err());
    }

    proptest! {
        #[test]
        fn single_byte_corruption_is_detected(seed in 0u64..1_000_000, pos_frac in 0f64..1.0, xor in 1u8..=255) {
            let b = random_bundle(2 + (seed % 17) as usize, seed);
            let mut bytes = b.serialize().unwrap();
            prop_assert_eq!(&ModelBundle::deserialize(&bytes).unwrap(), &b);
            let pos = ((bytes.len() as f64) * pos_frac) as usize;
            bytes[pos] ^= xor;
            let is_crc_mismatch = matches!(ModelBundle::deserialize(&bytes), Err(QuantError::CrcMismatch { .. }));
            prop_assert!(is_crc_mismatch);
        }
    }
}
