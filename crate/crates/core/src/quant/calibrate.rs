//! Post-training calibration: activation ranges from float forward passes,
//! then per-tensor int8 weights, i32 biases and requantization multipliers.

use super::bundle::{LayerKind, QuantLayer, POOL};
use super::scheme::{activation_params, quantize_bias, quantize_symmetric, Requant};
use super::{QuantError, Result};
use crate::nn::{forward_sites, CnnModel, LayerId, NnError};
use crate::signal::Window;

/// Observed `[min, max]` of one activation site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationRange {
    pub min: f64,
    pub max: f64,
}

impl ActivationRange {
    fn empty() -> Self {
        Self {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    fn observe(&mut self, values: &[f32]) {
        for &v in values {
            self.min = self.min.min(v as f64);
            self.max = self.max.max(v as f64);
        }
    }
}

/// Ranges at the inputs of Conv1, Conv2, Dense1 and Head, observed with the
/// single-precision reference forward pass.
pub fn observe_ranges(model: &CnnModel, windows: &[&Window]) -> Result<[ActivationRange; 4]> {
    if windows.is_empty() {
        return Err(QuantError::EmptyCalibration);
    }
    let params = model.to_f32();
    let mut ranges = [ActivationRange::empty(); 4];
    for w in windows {
        let s = forward_sites(&model.arch, &params, w.as_flat())?;
        ranges[0].observe(&s.input);
        ranges[1].observe(&s.pool1);
        ranges[2].observe(&s.pool2);
        ranges[3].observe(&s.dense1);
    }
    Ok(ranges)
}

fn dim(v: usize, what: &str) -> Result<u16> {
    u16::try_from(v).map_err(|_| QuantError::Malformed(format!("{what} = {v} does not fit in u16")))
}

/// Quantizes every layer of `model` using activation ranges observed on
/// `windows` (already normalized).
///
/// A layer whose rescale factor `in_scale * w_scale / out_scale` would reach
/// 1 gets its output scale widened to make the factor 1/2; the wider range
/// only costs resolution.
pub fn calibrate_and_quantize(model: &CnnModel, windows: &[&Window]) -> Result<Vec<QuantLayer>> {
    let arch = &model.arch;
    if arch.pool != POOL {
        return Err(NnError::BadArchitecture(format!("bundles require pool width {POOL}")).into());
    }
    let ranges = observe_ranges(model, windows)?;
    let mut site: Vec<(f32, i32)> = ranges.iter().map(|r| activation_params(r.min, r.max)).collect();

    let shapes = [
        (LayerKind::Conv, arch.in_channels, arch.conv1_filters, arch.conv1_kernel),
        (
            LayerKind::Conv,
            arch.conv1_filters,
            arch.conv2_filters,
            arch.conv2_kernel,
        ),
        (LayerKind::Dense, arch.flatten_len(), arch.dense_units, 1),
        (LayerKind::Dense, arch.dense_units, model.num_classes(), 1),
    ];
    let mut layers = Vec::with_capacity(4);
    for (i, id) in LayerId::ALL.into_iter().enumerate() {
        let (kind, in_dim, out_dim, kernel) = shapes[i];
        let tensor = model.params.layer(id);
        let (weight_scale, weights) = quantize_symmetric(&tensor.weights);
        let (input_scale, input_zero_point) = site[i];
        let requant = if i + 1 < site.len() {
            let prod = input_scale as f64 * weight_scale as f64;
            if prod / site[i + 1].0 as f64 >= 1.0 {
                site[i + 1].0 = (prod * 2.0) as f32;
            }
            Some(Requant::from_real(prod / site[i + 1].0 as f64)?)
        } else {
            None
        };
        let bias = tensor
            .bias
            .iter()
            .map(|&b| quantize_bias(b, input_scale, weight_scale))
            .collect();
        layers.push(QuantLayer {
            kind,
            in_dim: dim(in_dim, "input width")?,
            out_dim: dim(out_dim, "output width")?,
            kernel: dim(kernel, "kernel")?,
            weight_scale,
            input_scale,
            input_zero_point,
            requant_multiplier: requant.map_or(0, |r| r.multiplier),
            requant_shift: requant.map_or(0, |r| r.shift),
            weights,
            bias,
        });
    }
    Ok(layers)
}
