use std::sync::Arc;
use std::time::Instant;

use super::exp::exp_nonpositive;
use super::{Result, RuntimeError};
use crate::quant::{quantize_activation, LayerKind, ModelBundle, Requant, POOL};
use crate::signal::{ChannelStats, WindowRows, CHANNELS, WINDOW_LEN};

/// Default arena size (64 KiB).
pub const DEFAULT_ARENA_BYTES: usize = 64 * 1024;
/// SRAM of the target microcontroller.
pub const MAX_ARENA_BYTES: usize = 320 * 1024;

const INPUT_LEN: usize = WINDOW_LEN * CHANNELS;

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub class_id: usize,
    pub class_name: Arc<str>,
    /// Softmax probability of the predicted class.
    pub confidence: f32,
    pub latency_us: f64,
    pub model_version: u32,
}

/// Byte accounting of the arena for the loaded model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArenaReport {
    /// Resident layer table: descriptors, weights and biases.
    pub model_bytes: usize,
    /// Activation and logit buffers used during one inference.
    pub scratch_bytes: usize,
    pub high_water: usize,
    pub capacity: usize,
}

/// Execution plan of one layer; offsets point into the arena.
#[derive(Debug, Clone)]
struct LayerPlan {
    kind: LayerKind,
    in_dim: usize,
    out_dim: usize,
    kernel: usize,
    /// Time steps entering a conv layer (1 for dense).
    in_len: usize,
    /// Time steps leaving a conv layer after pooling (1 for dense).
    out_len: usize,
    weights: usize,
    bias: usize,
    input_zp: i32,
    output_zp: i32,
    requant: Option<Requant>,
    acc_bound: i64,
}

#[derive(Debug)]
struct Loaded {
    version: u32,
    class_names: Vec<Arc<str>>,
    stats: ChannelStats,
    input_scale: f32,
    input_zp: i32,
    logit_scale: f64,
    layers: Vec<LayerPlan>,
    model_bytes: usize,
    buf_a: usize,
    buf_b: usize,
    macs: u64,
}

impl Loaded {
    fn scratch_bytes(&self) -> usize {
        self.buf_a + self.buf_b + 4 * self.class_names.len()
    }
}

/// One device's inference engine. All model storage and per-inference
/// scratch live in a single arena allocated up front; `infer` does not touch
/// the heap.
#[derive(Debug)]
pub struct Engine {
    arena: Vec<u8>,
    high_water: usize,
    loaded: Option<Loaded>,
}

impl Default for Engine {
    fn default() -> Self {
        Self::new(DEFAULT_ARENA_BYTES).expect("default capacity is within budget")
    }
}

impl Engine {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity > MAX_ARENA_BYTES {
            return Err(RuntimeError::BadCapacity(capacity));
        }
        Ok(Self {
            arena: vec![0; capacity],
            high_water: 0,
            loaded: None,
        })
    }

    pub fn capacity(&self) -> usize {
        self.arena.len()
    }

    pub fn is_loaded(&self) -> bool {
        self.loaded.is_some()
    }

    pub fn model_version(&self) -> Option<u32> {
        self.loaded.as_ref().map(|l| l.version)
    }

    pub fn class_names(&self) -> Option<impl Iterator<Item = &str>> {
        self.loaded.as_ref().map(|l| l.class_names.iter().map(|n| &**n))
    }

    /// Multiply-accumulates executed per inference.
    pub fn macs(&self) -> Option<u64> {
        self.loaded.as_ref().map(|l| l.macs)
    }

    /// Verifies, plans and copies a bundle into the arena, replacing any
    /// resident model. On error the engine and arena are left untouched.
    pub fn load(&mut self, bytes: &[u8]) -> Result<()> {
        let bundle = ModelBundle::deserialize(bytes)?;
        let header = bundle.header_len();
        let table = &bytes[header..bytes.len() - 4];
        let loaded = plan(&bundle)?;
        debug_assert_eq!(loaded.model_bytes, table.len());
        let needed = loaded.model_bytes + loaded.scratch_bytes();
        if needed > self.arena.len() {
            return Err(RuntimeError::ArenaOverflow {
                needed,
                capacity: self.arena.len(),
            });
        }
        self.arena[..table.len()].copy_from_slice(table);
        self.high_water = self.high_water.max(needed);
        self.loaded = Some(loaded);
        Ok(())
    }

    pub fn unload(&mut self) {
        self.loaded = None;
    }

    pub fn arena_report(&self) -> Result<ArenaReport> {
        let l = self.loaded.as_ref().ok_or(RuntimeError::NoModel)?;
        Ok(ArenaReport {
            model_bytes: l.model_bytes,
            scratch_bytes: l.scratch_bytes(),
            high_water: self.high_water,
            capacity: self.arena.len(),
        })
    }

    /// Classifies one raw (unnormalized) window.
    pub fn infer(&mut self, window: &WindowRows) -> Result<InferenceResult> {
        self.infer_flat(window.as_flattened())
    }

    /// Same as [`Engine::infer`] on a time-major slice of 360 values.
    pub fn infer_flat(&mut self, window: &[f32]) -> Result<InferenceResult> {
        let start = Instant::now();
        let l = self.loaded.as_ref().ok_or(RuntimeError::NoModel)?;
        if window.len() != INPUT_LEN {
            return Err(RuntimeError::BadInput {
                expected: INPUT_LEN,
                got: window.len(),
            });
        }
        let (model, scratch) = self.arena.split_at_mut(l.model_bytes);
        let (a, rest) = scratch.split_at_mut(l.buf_a);
        let (b, rest) = rest.split_at_mut(l.buf_b);
        let logits = &mut rest[..4 * l.class_names.len()];

        for (i, (&x, q)) in window.iter().zip(a.iter_mut()).enumerate() {
            let z = l.stats.normalize_value(i % CHANNELS, x);
            *q = quantize_activation(z as f64, l.input_scale, l.input_zp) as u8;
        }
        let (mut src, mut dst) = (a, b);
        let last = l.layers.len() - 1;
        for (i, p) in l.layers.iter().enumerate() {
            if i == last {
                dense_logits(model, p, src, logits);
            } else {
                match p.kind {
                    LayerKind::Conv => conv_relu_pool(model, p, src, dst),
                    LayerKind::Dense => dense_relu(model, p, src, dst),
                }
                std::mem::swap(&mut src, &mut dst);
            }
        }

        let acc = |j: usize| i32::from_le_bytes(logits[4 * j..4 * j + 4].try_into().expect("4 bytes"));
        let classes = l.class_names.len();
        let mut top = 0;
        for j in 1..classes {
            if acc(j) > acc(top) {
                top = j;
            }
        }
        let best = acc(top) as f64 * l.logit_scale;
        let mut denom = 0.0;
        for j in 0..classes {
            denom += exp_nonpositive(acc(j) as f64 * l.logit_scale - best);
        }
        let confidence = (1.0 / denom) as f32;
        let latency_us = (start.elapsed().as_nanos().max(1) as f64) / 1000.0;
        Ok(InferenceResult {
            class_id: top,
            class_name: Arc::clone(&l.class_names[top]),
            confidence,
            latency_us,
            model_version: l.version,
        })
    }

    /// The i32 logit accumulators of the most recent inference.
    pub fn last_logits(&self) -> Result<Vec<i32>> {
        let l = self.loaded.as_ref().ok_or(RuntimeError::NoModel)?;
        let at = l.model_bytes + l.buf_a + l.buf_b;
        Ok(self.arena[at..at + 4 * l.class_names.len()]
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    /// Dequantization factor of the logit accumulators.
    pub fn logit_scale(&self) -> Option<f64> {
        self.loaded.as_ref().map(|l| l.logit_scale)
    }
}

fn plan(bundle: &ModelBundle) -> Result<Loaded> {
    let mut layers = Vec::with_capacity(bundle.layers.len());
    let mut offset = 0;
    let mut len = WINDOW_LEN;
    // activation sizes alternate between the two buffers, input first
    let mut buf = [INPUT_LEN, 0];
    let mut macs = 0u64;
    for (i, q) in bundle.layers.iter().enumerate() {
        let descriptor = q.encoded_len() - q.weights.len() - 4 * q.bias.len();
        let weights = offset + descriptor;
        let bias = weights + q.weights.len();
        offset = bias + 4 * q.bias.len();
        let (in_dim, out_dim, kernel) = (q.in_dim as usize, q.out_dim as usize, q.kernel as usize);
        let (in_len, out_len) = match q.kind {
            LayerKind::Conv => (len, (len + 1 - kernel) / POOL),
            LayerKind::Dense => (1, 1),
        };
        len = out_len;
        macs += (out_len * POOL.pow((q.kind == LayerKind::Conv) as u32) * out_dim * kernel * in_dim) as u64;
        let fan_in = kernel * in_dim;
        let acc_bound = (0..out_dim)
            .map(|o| {
                let w: i64 = q.weights[o * fan_in..(o + 1) * fan_in]
                    .iter()
                    .map(|&w| (w as i64).abs())
                    .sum();
                (q.bias[o] as i64).abs() + 255 * w
            })
            .max()
            .unwrap_or(0);
        if acc_bound > i32::MAX as i64 {
            return Err(RuntimeError::AccumulatorRange {
                layer: i,
                bound: acc_bound,
            });
        }
        let next = bundle.layers.get(i + 1);
        if next.is_some() {
            let slot = &mut buf[(i + 1) % 2];
            *slot = (*slot).max(out_len * out_dim);
        }
        layers.push(LayerPlan {
            kind: q.kind,
            in_dim,
            out_dim,
            kernel,
            in_len,
            out_len,
            weights,
            bias,
            input_zp: q.input_zero_point,
            output_zp: next.map_or(0, |n| n.input_zero_point),
            requant: q.requant(),
            acc_bound,
        });
    }
    let first = &bundle.layers[0];
    let head = bundle.layers.last().expect("validated non-empty");
    Ok(Loaded {
        version: bundle.version,
        class_names: bundle.classes.names().iter().map(|n| Arc::from(n.as_str())).collect(),
        stats: bundle.stats,
        input_scale: first.input_scale,
        input_zp: first.input_zero_point,
        logit_scale: head.bias_scale(),
        layers,
        model_bytes: offset,
        buf_a: buf[0],
        buf_b: buf[1],
        macs,
    })
}

#[inline]
fn bias_at(model: &[u8], p: &LayerPlan, o: usize) -> i32 {
    let at = p.bias + 4 * o;
    i32::from_le_bytes(model[at..at + 4].try_into().expect("4 bytes"))
}

#[inline]
fn dot(weights: &[u8], input: &[u8], zp: i32) -> i32 {
    weights
        .iter()
        .zip(input)
        .map(|(&w, &x)| w as i8 as i32 * (x as i8 as i32 - zp))
        .sum()
}

#[inline]
fn requantize(p: &LayerPlan, acc: i32) -> u8 {
    debug_assert!((acc as i64).abs() <= p.acc_bound);
    let r = p.requant.expect("hidden layers carry a multiplier");
    // ReLU: the output site starts at real zero, i.e. at the zero point.
    let v = r.apply(acc).saturating_add(p.output_zp);
    v.clamp(p.output_zp.max(-128), 127) as i8 as u8
}

/// Valid conv, ReLU and max-pool fused: requantization is monotone, so the
/// pooled maximum can be taken over raw accumulators.
fn conv_relu_pool(model: &[u8], p: &LayerPlan, src: &[u8], dst: &mut [u8]) {
    let span = p.kernel * p.in_dim;
    debug_assert!(src.len() >= p.in_len * p.in_dim);
    for t in 0..p.out_len {
        for o in 0..p.out_dim {
            let w = &model[p.weights + o * span..p.weights + (o + 1) * span];
            let bias = bias_at(model, p, o);
            let mut best = i32::MIN;
            for j in 0..POOL {
                let at = (t * POOL + j) * p.in_dim;
                best = best.max(bias + dot(w, &src[at..at + span], p.input_zp));
            }
            dst[t * p.out_dim + o] = requantize(p, best);
        }
    }
}

fn dense_relu(model: &[u8], p: &LayerPlan, src: &[u8], dst: &mut [u8]) {
    for o in 0..p.out_dim {
        let w = &model[p.weights + o * p.in_dim..p.weights + (o + 1) * p.in_dim];
        let acc = bias_at(model, p, o) + dot(w, &src[..p.in_dim], p.input_zp);
        dst[o] = requantize(p, acc);
    }
}

fn dense_logits(model: &[u8], p: &LayerPlan, src: &[u8], out: &mut [u8]) {
    for o in 0..p.out_dim {
        let w = &model[p.weights + o * p.in_dim..p.weights + (o + 1) * p.in_dim];
        let acc = bias_at(model, p, o) + dot(w, &src[..p.in_dim], p.input_zp);
        debug_assert!((acc as i64).abs() <= p.acc_bound);
        out[4 * o..4 * o + 4].copy_from_slice(&acc.to_le_bytes());
    }
}
