use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::backward::accumulate;
use super::{evaluate, Adam, CnnModel, Example, Gradients, NnError, Params, Result};
use crate::signal::Window;

/// Examples per parallel gradient shard. Fixed so the reduction order, and
/// therefore the result, does not depend on the thread count.
const SHARD: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub shuffle: bool,
    /// Fraction of the data held out to pick the best epoch.
    pub validation_fraction: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 30,
            seed: 7,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            shuffle: true,
            validation_fraction: None,
        }
    }
}

impl TrainConfig {
    /// Settings used for last-layer fine-tuning.
    pub fn fine_tune() -> Self {
        Self {
            epochs: 50,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::BadConfig("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(NnError::BadConfig("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(NnError::BadConfig("epochs must be >= 1".into()));
        }
        if let Some(f) = self.validation_fraction {
            if !(0.0..1.0).contains(&f) {
                return Err(NnError::BadConfig("validation_fraction must be in [0, 1)".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    /// Accuracy of the predictions made during the epoch's forward passes.
    pub accuracy: f64,
    pub validation_accuracy: Option<f64>,
}

pub(crate) fn label_ids(model: &CnnModel, windows: &[Window]) -> Result<Vec<usize>> {
    windows
        .iter()
        .map(|w| {
            let label = w.label().ok_or_else(|| NnError::BadLabel(String::new()))?;
            model
                .classes
                .id(label)
                .ok_or_else(|| NnError::BadLabel(label.to_owned()))
        })
        .collect()
}

/// One optimizer step over `batch`; returns the summed loss and predictions.
fn step(model: &mut CnnModel, opt: &mut Adam, batch: &[Example<'_>]) -> Result<(f64, Vec<usize>)> {
    let scale = 1.0 / batch.len() as f64;
    let frozen: &CnnModel = model;
    let shards: Vec<Result<(f64, Gradients, Vec<usize>)>> = batch
        .par_chunks(SHARD)
        .map(|chunk| {
            let mut g = Params::zeros(&frozen.arch, frozen.num_classes());
            let mut preds = Vec::with_capacity(chunk.len());
            let loss = accumulate(frozen, chunk, &mut g, scale, &mut preds)?;
            Ok((loss, g, preds))
        })
        .collect();
    let mut total = Params::zeros(&model.arch, model.num_classes());
    let mut loss = 0.0;
    let mut predictions = Vec::with_capacity(batch.len());
    for shard in shards {
        let (l, g, p) = shard?;
        loss += l;
        total.add_assign(&g);
        predictions.extend(p);
    }
    opt.apply(model, &total);
    Ok((loss, predictions))
}

/// Mini-batch adaptive-moment training on normalized, labeled windows.
///
/// Returns the best-validation model when a validation fraction is set,
/// otherwise the final one.
pub fn train(model: &CnnModel, windows: &[Window], config: &TrainConfig) -> Result<(CnnModel, Vec<EpochStats>)> {
    config.validate()?;
    if windows.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let labels = label_ids(model, windows)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut validation: Vec<Window> = Vec::new();
    if let Some(f) = config.validation_fraction.filter(|f| *f > 0.0) {
        order.shuffle(&mut rng);
        let n_val = ((windows.len() as f64) * f).round() as usize;
        let n_val = n_val.min(windows.len().saturating_sub(1));
        validation = order.drain(..n_val).map(|i| windows[i].clone()).collect();
        order.sort_unstable();
    }
    if order.is_empty() {
        return Err(NnError::EmptyDataset);
    }

    let mut model = model.clone();
    let mut opt = Adam::new(&model, config.learning_rate, config.beta1, config.beta2, config.epsilon);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, CnnModel)> = None;

    for epoch in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Example> = chunk
                .iter()
                .map(|&i| Example {
                    input: windows[i].as_flat(),
                    class: labels[i],
                })
                .collect();
            let (l, preds) = step(&mut model, &mut opt, &batch)?;
            loss += l;
            correct += preds.iter().zip(chunk).filter(|(p, &i)| **p == labels[i]).count();
        }
        let validation_accuracy = if validation.is_empty() {
            None
        } else {
            Some(evaluate(&model, &validation)?.accuracy)
        };
        if let Some(acc) = validation_accuracy {
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, model.clone()));
            }
        }
        history.push(EpochStats {
            epoch: epoch + 1,
            loss: loss / order.len() as f64,
            accuracy: correct as f64 / order.len() as f64,
            validation_accuracy,
        });
    }
    let out = match best {
        Some((_, m)) => m,
        None => model,
    };
    Ok((out, history))
}
