//! Independent double-precision forward pass for checking analytic
//! gradients with central finite differences on random small models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tinyfit_core::nn::{loss_and_grads, Architecture, CnnModel, Example, LayerId, Params};
use tinyfit_core::ClassMap;

pub const MODELS: usize = 50;
pub const H: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;
/// Minimum distance of any ReLU input from 0 and of any pool winner from the
/// runner-up; below it a step of `H` could cross a kink.
const KINK_MARGIN: f64 = 1e-3;

struct Eval {
    loss: f64,
    margin: f64,
}

fn conv_relu(x: &[f64], len: usize, cin: usize, w: &[f64], b: &[f64], k: usize, margin: &mut f64) -> (Vec<f64>, usize) {
    let cout = b.len();
    let out_len = len - k + 1;
    let mut y = vec![0.0; out_len * cout];
    for t in 0..out_len {
        for o in 0..cout {
            let mut s = b[o];
            for tap in 0..k {
                for c in 0..cin {
                    s += w[(o * k + tap) * cin + c] * x[(t + tap) * cin + c];
                }
            }
            *margin = margin.min(s.abs());
            y[t * cout + o] = s.max(0.0);
        }
    }
    (y, out_len)
}

fn pool(x: &[f64], len: usize, ch: usize, p: usize, margin: &mut f64) -> (Vec<f64>, usize) {
    let out_len = len / p;
    let mut y = vec![0.0; out_len * ch];
    for t in 0..out_len {
        for c in 0..ch {
            let mut vals: Vec<f64> = (0..p).map(|j| x[(t * p + j) * ch + c]).collect();
            vals.sort_by(|a, b| b.total_cmp(a));
            if vals[0] > 0.0 {
                *margin = margin.min(vals[0] - vals[1]);
            }
            y[t * ch + c] = vals[0];
        }
    }
    (y, out_len)
}

fn dense(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    (0..b.len())
        .map(|o| b[o] + x.iter().enumerate().map(|(i, v)| w[o * x.len() + i] * v).sum::<f64>())
        .collect()
}

/// Mean cross-entropy written from the layer definitions, sharing nothing
/// with the library's forward pass.
fn reference_loss(a: &Architecture, p: &Params, batch: &[(Vec<f32>, usize)]) -> Eval {
    let mut margin = f64::INFINITY;
    let mut loss = 0.0;
    let t = |id: LayerId| p.layer(id);
    for (input, class) in batch {
        let x: Vec<f64> = input.iter().map(|&v| v as f64).collect();
        let (z1, l1) = conv_relu(
            &x,
            a.input_len,
            a.in_channels,
            &t(LayerId::Conv1).weights,
            &t(LayerId::Conv1).bias,
            a.conv1_kernel,
            &mut margin,
        );
        let (p1, l1) = pool(&z1, l1, a.conv1_filters, a.pool, &mut margin);
        let (z2, l2) = conv_relu(
            &p1,
            l1,
            a.conv1_filters,
            &t(LayerId::Conv2).weights,
            &t(LayerId::Conv2).bias,
            a.conv2_kernel,
            &mut margin,
        );
        let (p2, _) = pool(&z2, l2, a.conv2_filters, a.pool, &mut margin);
        let h = dense(&p2, &t(LayerId::Dense1).weights, &t(LayerId::Dense1).bias);
        for v in &h {
            margin = margin.min(v.abs());
        }
        let h: Vec<f64> = h.into_iter().map(|v| v.max(0.0)).collect();
        let logits = dense(&h, &t(LayerId::Head).weights, &t(LayerId::Head).bias);
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
        let log_p = logits[*class] - lse;
        // stay clear of the loss's probability clamp
        let pr = log_p.exp();
        margin = margin.min(pr - 1e-6).min(1.0 - 1e-6 - pr);
        loss -= log_p;
    }
    Eval {
        loss: loss / batch.len() as f64,
        margin,
    }
}

fn random_case(rng: &mut ChaCha8Rng) -> (CnnModel, Vec<(Vec<f32>, usize)>) {
    let arch = Architecture {
        input_len: rng.random_range(10..=16),
        in_channels: rng.random_range(1..=3),
        conv1_filters: rng.random_range(1..=3),
        conv1_kernel: rng.random_range(2..=3),
        conv2_filters: rng.random_range(1..=3),
        conv2_kernel: rng.random_range(2..=3),
        pool: 2,
        dense_units: rng.random_range(2..=4),
    };
    let classes = rng.random_range(2..=4);
    let mut model = CnnModel::new(arch, ClassMap::new((0..classes).map(|i| format!("c{i}"))), rng.random()).unwrap();
    for id in LayerId::ALL {
        for b in model.params.layer_mut(id).bias.iter_mut() {
            *b = rng.random_range(-0.3..0.3);
        }
    }
    let batch = (0..rng.random_range(1..=3))
        .map(|_| {
            let x = (0..arch.input_size()).map(|_| rng.random_range(-1.5f32..1.5)).collect();
            (x, rng.random_range(0..classes))
        })
        .collect();
    (model, batch)
}

#[derive(Debug, Clone, Copy)]
pub struct Summary {
    pub models: usize,
    pub params: usize,
    pub worst_relative_error: f64,
}

/// Checks `models` random models; the first parameter outside tolerance is
/// reported as an error.
pub fn check(models: usize, seed: u64) -> Result<Summary, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked_models = 0;
    let mut checked_params = 0;
    let mut worst: f64 = 0.0;
    let mut attempts = 0;
    while checked_models < models {
        attempts += 1;
        if attempts > 20 * models {
            return Err("too many rejected draws".into());
        }
        let (model, batch) = random_case(&mut rng);
        let base = reference_loss(&model.arch, &model.params, &batch);
        if base.margin < KINK_MARGIN {
            continue;
        }
        let examples: Vec<Example> = batch.iter().map(|(x, c)| Example { input: x, class: *c }).collect();
        let (loss, grads) = loss_and_grads(&model, &examples).map_err(|e| e.to_string())?;
        if (loss - base.loss).abs() > 1e-10 * base.loss.max(1.0) {
            return Err(format!("loss {loss} differs from reference {}", base.loss));
        }

        let mut params = model.params.clone();
        let mut numeric = Vec::with_capacity(params.len());
        let mut smooth = true;
        for i in 0..params.len() {
            let orig = params.get(i).unwrap();
            params.set(i, orig + H);
            let up = reference_loss(&model.arch, &params, &batch);
            params.set(i, orig - H);
            let down = reference_loss(&model.arch, &params, &batch);
            params.set(i, orig);
            smooth &= up.margin > 0.0 && down.margin > 0.0;
            numeric.push((up.loss - down.loss) / (2.0 * H));
        }
        if !smooth {
            continue;
        }
        for (i, n) in numeric.iter().enumerate() {
            let a = grads.get(i).unwrap();
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            worst = worst.max(rel);
            if rel >= TOLERANCE {
                return Err(format!(
                    "model {checked_models} param {i}: analytic {a} numeric {n} rel {rel}"
                ));
            }
        }
        checked_models += 1;
        checked_params += numeric.len();
    }
    Ok(Summary {
        models: checked_models,
        params: checked_params,
        worst_relative_error: worst,
    })
}
