//! Unstructured magnitude pruning of the hidden dense layer.

use super::{QuantError, Result};
use crate::nn::{CnnModel, LayerId};

/// Zeroes the `floor(sparsity * n)` smallest-magnitude Dense1 weights; ties
/// go to the lower index. Biases and every other layer are left alone.
pub fn prune_magnitude(model: &CnnModel, sparsity: f64) -> Result<CnnModel> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(QuantError::BadSparsity(sparsity));
    }
    let mut out = model.clone();
    let w = &mut out.params.layer_mut(LayerId::Dense1).weights;
    let k = (sparsity * w.len() as f64).floor() as usize;
    if k == 0 {
        return Ok(out);
    }
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.select_nth_unstable_by(k - 1, |&a, &b| w[a].abs().total_cmp(&w[b].abs()).then(a.cmp(&b)));
    for &i in &order[..k] {
        w[i] = 0.0;
    }
    Ok(out)
}

pub fn zero_count(values: &[f64]) -> usize {
    values.iter().filter(|v| **v == 0.0).count()
}
