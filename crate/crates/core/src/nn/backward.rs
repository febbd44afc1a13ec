use super::forward::{forward_trace, Trace};
use super::{CnnModel, Gradients, LayerId, NnError, Params, Result, Tensor};

/// Probability clamp used by the cross-entropy loss.
const PROB_CLAMP: f64 = 1e-7;

/// One training example: a flat time-major input and its class id.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub input: &'a [f32],
    pub class: usize,
}

/// Mean softmax cross-entropy over `batch` and its gradient with respect to
/// every parameter. Frozen layers get a zero gradient and backpropagation
/// stops below the lowest trainable layer.
pub fn loss_and_grads(model: &CnnModel, batch: &[Example<'_>]) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut grads = Params::zeros(&model.arch, model.num_classes());
    let loss = accumulate(model, batch, &mut grads, 1.0 / batch.len() as f64, &mut Vec::new())?;
    Ok((loss / batch.len() as f64, grads))
}

/// Adds `scale * dL_i/dθ` for every example into `grads` and returns the
/// summed (unscaled) loss. Predicted class ids are pushed onto `predictions`.
pub(crate) fn accumulate(
    model: &CnnModel,
    batch: &[Example<'_>],
    grads: &mut Gradients,
    scale: f64,
    predictions: &mut Vec<usize>,
) -> Result<f64> {
    let classes = model.num_classes();
    let lowest = LayerId::ALL.iter().position(|&l| model.is_trainable(l));
    let mut trace = Trace::default();
    let mut scratch = Scratch::default();
    let mut total = 0.0;
    for ex in batch {
        if ex.class >= classes {
            return Err(NnError::BadClassId { id: ex.class, classes });
        }
        forward_trace(model, ex.input, &mut trace)?;
        let p = trace.probs[ex.class].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        total -= p.ln();
        predictions.push(super::forward::argmax(&trace.probs));
        if let Some(lowest) = lowest {
            backprop(model, &trace, ex.class, scale, lowest, grads, &mut scratch);
        }
    }
    Ok(total)
}

#[derive(Default)]
struct Scratch {
    d_logits: Vec<f64>,
    d_a3: Vec<f64>,
    d_p2: Vec<f64>,
    d_z2: Vec<f64>,
    d_p1: Vec<f64>,
    d_z1: Vec<f64>,
}

fn dense_backward(input: &[f64], d_out: &[f64], t: &Tensor, grad: Option<&mut Tensor>, d_in: Option<&mut Vec<f64>>) {
    let n_in = input.len();
    if let Some(g) = grad {
        for (o, &d) in d_out.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            g.bias[o] += d;
            for (gw, &x) in g.weights[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                *gw += d * x;
            }
        }
    }
    if let Some(dx) = d_in {
        dx.clear();
        dx.resize(n_in, 0.0);
        for (o, &d) in d_out.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            for (dxi, &w) in dx.iter_mut().zip(&t.weights[o * n_in..(o + 1) * n_in]) {
                *dxi += d * w;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    cin: usize,
    k: usize,
    d_out: &[f64],
    out_len: usize,
    t: &Tensor,
    grad: Option<&mut Tensor>,
    d_in: Option<&mut Vec<f64>>,
) {
    let cout = t.bias.len();
    if let Some(g) = grad {
        for p in 0..out_len {
            let patch = &input[p * cin..(p + k) * cin];
            for o in 0..cout {
                let d = d_out[p * cout + o];
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                for (gw, &x) in g.weights[o * k * cin..(o + 1) * k * cin].iter_mut().zip(patch) {
                    *gw += d * x;
                }
            }
        }
    }
    if let Some(dx) = d_in {
        dx.clear();
        dx.resize(input.len(), 0.0);
        for p in 0..out_len {
            for o in 0..cout {
                let d = d_out[p * cout + o];
                if d == 0.0 {
                    continue;
                }
                let w = &t.weights[o * k * cin..(o + 1) * k * cin];
                for (dxi, &wi) in dx[p * cin..(p + k) * cin].iter_mut().zip(w) {
                    *dxi += d * wi;
                }
            }
        }
    }
}

/// Routes pooled gradients back to the winning positions, then applies the
/// ReLU mask of the pre-activation `z`.
fn unpool_relu(d_pooled: &[f64], argmax: &[usize], z: &[f64], d_z: &mut Vec<f64>) {
    d_z.clear();
    d_z.resize(z.len(), 0.0);
    for (&d, &i) in d_pooled.iter().zip(argmax) {
        if z[i] > 0.0 {
            d_z[i] += d;
        }
    }
}

fn trainable_grad<'g>(model: &CnnModel, grads: &'g mut Gradients, layer: LayerId) -> Option<&'g mut Tensor> {
    model.is_trainable(layer).then(|| grads.layer_mut(layer))
}

fn backprop(
    model: &CnnModel,
    tr: &Trace,
    class: usize,
    scale: f64,
    lowest: usize,
    grads: &mut Gradients,
    s: &mut Scratch,
) {
    let arch = &model.arch;
    let p = &model.params;
    let needs_input_grad = |layer: LayerId| layer.index() > lowest;
    macro_rules! grad {
        ($layer:expr) => {
            trainable_grad(model, grads, $layer)
        };
    }

    s.d_logits.clear();
    s.d_logits.extend(tr.probs.iter().enumerate().map(|(i, &pi)| {
        let y = if i == class { 1.0 } else { 0.0 };
        (pi - y) * scale
    }));

    // Head
    dense_backward(
        &tr.a3,
        &s.d_logits,
        p.layer(LayerId::Head),
        grad!(LayerId::Head),
        needs_input_grad(LayerId::Head).then_some(&mut s.d_a3),
    );
    if !needs_input_grad(LayerId::Head) {
        return;
    }
    for (d, &z) in s.d_a3.iter_mut().zip(&tr.z3) {
        if z <= 0.0 {
            *d = 0.0;
        }
    }

    // Dense1
    dense_backward(
        &tr.p2,
        &s.d_a3,
        p.layer(LayerId::Dense1),
        grad!(LayerId::Dense1),
        needs_input_grad(LayerId::Dense1).then_some(&mut s.d_p2),
    );
    if !needs_input_grad(LayerId::Dense1) {
        return;
    }
    unpool_relu(&s.d_p2, &tr.arg2, &tr.z2, &mut s.d_z2);

    // Conv2
    conv_backward(
        &tr.p1,
        arch.conv1_filters,
        arch.conv2_kernel,
        &s.d_z2,
        arch.conv2_len(),
        p.layer(LayerId::Conv2),
        grad!(LayerId::Conv2),
        needs_input_grad(LayerId::Conv2).then_some(&mut s.d_p1),
    );
    if !needs_input_grad(LayerId::Conv2) {
        return;
    }
    unpool_relu(&s.d_p1, &tr.arg1, &tr.z1, &mut s.d_z1);

    // Conv1
    conv_backward(
        &tr.x,
        arch.in_channels,
        arch.conv1_kernel,
        &s.d_z1,
        arch.conv1_len(),
        p.layer(LayerId::Conv1),
        grad!(LayerId::Conv1),
        None,
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_model, Architecture, CnnModel};
    use crate::ClassMap;

    fn classes(n: usize) -> ClassMap {
        ClassMap::new((0..n).map(|i| format!("c{i}")))
    }

    fn inputs(n: usize, size: usize, seed: u64) -> Vec<Vec<f32>> {
        (0..n)
            .map(|k| {
                (0..size)
                    .map(|i| {
                        let h = (i as u64)
                            .wrapping_mul(6364136223846793005)
                            .wrapping_add((k as u64).wrapping_mul(1442695040888963407))
                            .wrapping_add(seed)
                            .rotate_left(17);
                        ((h >> 40) % 2001) as f32 / 1000.0 - 1.0
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn zero_model_loss_is_ln_c() {
        for c in [2usize, 7, 18] {
            let mut m = init_model(classes(c), 0).unwrap();
            for v in m.params.iter_mut() {
                *v = 0.0;
            }
            let xs = inputs(3, 360, 1);
            let batch: Vec<Example> = xs
                .iter()
                .enumerate()
                .map(|(i, x)| Example { input: x, class: i % c })
                .collect();
            let (loss, _) = loss_and_grads(&m, &batch).unwrap();
            assert!((loss - (c as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn confident_correct_prediction_has_tiny_loss() {
        let mut m = init_model(classes(3), 0).unwrap();
        for v in m.params.iter_mut() {
            *v = 0.0;
        }
        m.params.layer_mut(LayerId::Head).bias[1] = 60.0;
        let x = vec![0.0f32; 360];
        let (loss, _) = loss_and_grads(&m, &[Example { input: &x, class: 1 }]).unwrap();
        assert!(loss <= 1e-6);
    }

    #[test]
    fn bad_class_id() {
        let m = init_model(classes(3), 0).unwrap();
        let x = vec![0.0f32; 360];
        assert!(matches!(
            loss_and_grads(&m, &[Example { input: &x, class: 3 }]),
            Err(NnError::BadClassId { id: 3, classes: 3 })
        ));
        assert!(matches!(loss_and_grads(&m, &[]), Err(NnError::EmptyDataset)));
    }

    #[test]
    fn frozen_layers_get_zero_gradient() {
        let mut m = init_model(classes(4), 5).unwrap();
        m.freeze_all_except(&[LayerId::Head]);
        let xs = inputs(4, 360, 3);
        let batch: Vec<Example> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| Example { input: x, class: i % 4 })
            .collect();
        let (_, g) = loss_and_grads(&m, &batch).unwrap();
        for id in [LayerId::Conv1, LayerId::Conv2, LayerId::Dense1] {
            assert!(g.layer(id).weights.iter().chain(&g.layer(id).bias).all(|v| *v == 0.0));
        }
        assert!(g.layer(LayerId::Head).weights.iter().any(|v| *v != 0.0));
    }

    /// Central differences on a sample of coordinates of the full-size model.
    #[test]
    fn default_architecture_spot_check() {
        let m = init_model(classes(5), 21).unwrap();
        let xs = inputs(4, 360, 8);
        let batch: Vec<Example> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| Example { input: x, class: i % 5 })
            .collect();
        let (_, g) = loss_and_grads(&m, &batch).unwrap();
        let loss = |model: &CnnModel| loss_and_grads(model, &batch).unwrap().0;
        let n = m.param_count();
        let h = 1e-5;
        let mut checked = 0;
        for i in (0..n).step_by(31) {
            let mut plus = m.clone();
            plus.params.set(i, m.params.get(i).unwrap() + h);
            let mut minus = m.clone();
            minus.params.set(i, m.params.get(i).unwrap() - h);
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let an = g.get(i).unwrap();
            let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
            assert!(err < 1e-4, "param {i}: fd {fd} analytic {an}");
            checked += 1;
        }
        assert!(checked > 200);
        let _ = Architecture::default();
    }
}
