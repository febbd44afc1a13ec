use num_traits::Float;

use super::{Architecture, CnnModel, LayerId, NnError, Params, Result, Tensor};
use crate::signal::Window;

/// Scalar type the forward pass can run in.
pub trait Real: Float + std::ops::AddAssign + Default + Send + Sync + 'static {}
impl Real for f32 {}
impl Real for f64 {}

/// Valid 1D convolution over a time-major `[len][cin]` input.
pub(crate) fn conv1d<T: Real>(x: &[T], len: usize, cin: usize, t: &Tensor<T>, k: usize, out: &mut Vec<T>) {
    let cout = t.bias.len();
    let out_len = len + 1 - k;
    out.clear();
    out.resize(out_len * cout, T::zero());
    for p in 0..out_len {
        let patch = &x[p * cin..(p + k) * cin];
        for o in 0..cout {
            let w = &t.weights[o * k * cin..(o + 1) * k * cin];
            let mut acc = t.bias[o];
            for (wi, xi) in w.iter().zip(patch) {
                acc += *wi * *xi;
            }
            out[p * cout + o] = acc;
        }
    }
}

pub(crate) fn relu<T: Real>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

/// Non-overlapping max pooling along time. Records the winning input index
/// (first on ties) for the backward pass.
pub(crate) fn max_pool<T: Real>(
    x: &[T],
    len: usize,
    ch: usize,
    pool: usize,
    out: &mut Vec<T>,
    argmax: Option<&mut Vec<usize>>,
) {
    let out_len = len / pool;
    out.clear();
    out.resize(out_len * ch, T::zero());
    let mut idx = Vec::new();
    let track = argmax.is_some();
    if track {
        idx.resize(out_len * ch, 0);
    }
    for p in 0..out_len {
        for c in 0..ch {
            let mut best = p * pool * ch + c;
            for j in 1..pool {
                let i = (p * pool + j) * ch + c;
                if x[i] > x[best] {
                    best = i;
                }
            }
            out[p * ch + c] = x[best];
            if track {
                idx[p * ch + c] = best;
            }
        }
    }
    if let Some(a) = argmax {
        *a = idx;
    }
}

pub(crate) fn dense<T: Real>(x: &[T], t: &Tensor<T>, out: &mut Vec<T>) {
    let n_in = x.len();
    out.clear();
    out.extend(t.bias.iter().enumerate().map(|(o, &b)| {
        let mut acc = b;
        for (w, xi) in t.weights[o * n_in..(o + 1) * n_in].iter().zip(x) {
            acc += *w * *xi;
        }
        acc
    }));
}

pub(crate) fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum = exps.iter().copied().fold(T::zero(), |a, b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

/// Intermediate activations kept for backpropagation.
#[derive(Debug, Default, Clone)]
pub(crate) struct Trace {
    pub x: Vec<f64>,
    pub z1: Vec<f64>,
    pub p1: Vec<f64>,
    pub arg1: Vec<usize>,
    pub z2: Vec<f64>,
    pub p2: Vec<f64>,
    pub arg2: Vec<usize>,
    pub z3: Vec<f64>,
    pub a3: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Activations at every quantization site, in network order.
#[derive(Debug, Default, Clone)]
pub struct Sites<T> {
    pub input: Vec<T>,
    pub pool1: Vec<T>,
    pub pool2: Vec<T>,
    pub dense1: Vec<T>,
    pub logits: Vec<T>,
}

fn check_input(arch: &Architecture, x: &[f32]) -> Result<()> {
    if x.len() != arch.input_size() {
        return Err(NnError::BadInput {
            expected: arch.input_size(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Forward pass returning every intermediate site.
pub fn forward_sites<T: Real>(arch: &Architecture, params: &Params<T>, x: &[f32]) -> Result<Sites<T>> {
    check_input(arch, x)?;
    let input: Vec<T> = x.iter().map(|&v| T::from(v).unwrap()).collect();
    let mut buf = Vec::new();
    let mut pool1 = Vec::new();
    conv1d(
        &input,
        arch.input_len,
        arch.in_channels,
        params.layer(LayerId::Conv1),
        arch.conv1_kernel,
        &mut buf,
    );
    relu(&mut buf);
    max_pool(&buf, arch.conv1_len(), arch.conv1_filters, arch.pool, &mut pool1, None);
    let mut pool2 = Vec::new();
    conv1d(
        &pool1,
        arch.pool1_len(),
        arch.conv1_filters,
        params.layer(LayerId::Conv2),
        arch.conv2_kernel,
        &mut buf,
    );
    relu(&mut buf);
    max_pool(&buf, arch.conv2_len(), arch.conv2_filters, arch.pool, &mut pool2, None);
    let mut dense1 = Vec::new();
    dense(&pool2, params.layer(LayerId::Dense1), &mut dense1);
    relu(&mut dense1);
    let mut logits = Vec::new();
    dense(&dense1, params.layer(LayerId::Head), &mut logits);
    Ok(Sites {
        input,
        pool1,
        pool2,
        dense1,
        logits,
    })
}

/// Class probabilities computed in scalar type `T`.
pub fn forward_with<T: Real>(arch: &Architecture, params: &Params<T>, x: &[f32]) -> Result<Vec<T>> {
    Ok(softmax(&forward_sites(arch, params, x)?.logits))
}

pub(crate) fn forward_trace(model: &CnnModel, x: &[f32], trace: &mut Trace) -> Result<()> {
    let arch = &model.arch;
    let params = &model.params;
    check_input(arch, x)?;
    trace.x.clear();
    trace.x.extend(x.iter().map(|&v| v as f64));
    conv1d(
        &trace.x,
        arch.input_len,
        arch.in_channels,
        params.layer(LayerId::Conv1),
        arch.conv1_kernel,
        &mut trace.z1,
    );
    let mut a1 = trace.z1.clone();
    relu(&mut a1);
    max_pool(
        &a1,
        arch.conv1_len(),
        arch.conv1_filters,
        arch.pool,
        &mut trace.p1,
        Some(&mut trace.arg1),
    );
    conv1d(
        &trace.p1,
        arch.pool1_len(),
        arch.conv1_filters,
        params.layer(LayerId::Conv2),
        arch.conv2_kernel,
        &mut trace.z2,
    );
    let mut a2 = trace.z2.clone();
    relu(&mut a2);
    max_pool(
        &a2,
        arch.conv2_len(),
        arch.conv2_filters,
        arch.pool,
        &mut trace.p2,
        Some(&mut trace.arg2),
    );
    dense(&trace.p2, params.layer(LayerId::Dense1), &mut trace.z3);
    trace.a3.clone_from(&trace.z3);
    relu(&mut trace.a3);
    dense(&trace.a3, params.layer(LayerId::Head), &mut trace.logits);
    trace.probs = softmax(&trace.logits);
    Ok(())
}

impl CnnModel {
    /// Class probabilities for a flat time-major input (double precision).
    pub fn forward_flat(&self, x: &[f32]) -> Result<Vec<f64>> {
        forward_with(&self.arch, &self.params, x)
    }

    /// Class probabilities for a (normalized) window.
    pub fn forward(&self, w: &Window) -> Result<Vec<f64>> {
        self.forward_flat(w.as_flat())
    }

    pub fn predict(&self, w: &Window) -> Result<usize> {
        Ok(argmax(&self.forward(w)?))
    }

    /// Single-precision copy of the parameters for the reference inference path.
    pub fn to_f32(&self) -> Params<f32> {
        self.params.map(|v| v as f32)
    }
}

pub(crate) fn argmax<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
