use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::init_tensor;
use super::{train, CnnModel, LayerId, NnError, Result, TrainConfig};
use crate::signal::Window;
use crate::ClassMap;

/// Labeled examples per class used for fine-tuning.
pub const EXAMPLES_PER_CLASS: usize = 15;

#[derive(Debug, Clone)]
pub struct Personalized {
    pub model: CnnModel,
    /// Indices into the user's windows that formed the fine-tune set.
    pub selected: Vec<usize>,
}

/// Draws `per_class` window indices for every class of `classes`, seeded and
/// without replacement. The result is sorted.
pub fn sample_per_class(windows: &[Window], classes: &ClassMap, per_class: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected = Vec::with_capacity(classes.len() * per_class);
    for (_, name) in classes.iter() {
        let pool: Vec<usize> = windows
            .iter()
            .enumerate()
            .filter(|(_, w)| w.label() == Some(name))
            .map(|(i, _)| i)
            .collect();
        if pool.len() < per_class {
            return Err(NnError::InsufficientExamples {
                class: name.to_owned(),
                have: pool.len(),
                need: per_class,
            });
        }
        selected.extend(sample(&mut rng, pool.len(), per_class).into_iter().map(|i| pool[i]));
    }
    selected.sort_unstable();
    Ok(selected)
}

/// Fine-tunes only the head of `pretrained` on `windows`. When `target`
/// differs from the pretrained class map the head is re-initialized with
/// `target.len()` outputs first. All other layers stay bit-identical.
pub fn fine_tune_head(
    pretrained: &CnnModel,
    windows: &[Window],
    target: &ClassMap,
    config: &TrainConfig,
) -> Result<CnnModel> {
    if target.len() < 2 {
        return Err(NnError::BadClassCount(target.len()));
    }
    let mut model = pretrained.clone();
    if *target != pretrained.classes {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        model.params.layers[LayerId::Head.index()] = init_tensor(&mut rng, model.arch.dense_units, target.len());
        model.classes = target.clone();
    }
    model.freeze_all_except(&[LayerId::Head]);
    let (mut tuned, _) = train(&model, windows, config)?;
    tuned.trainable = pretrained.trainable;
    Ok(tuned)
}

/// Samples `examples_per_class` windows per target class and fine-tunes the
/// head on them.
pub fn personalize(
    pretrained: &CnnModel,
    user_windows: &[Window],
    target: &ClassMap,
    examples_per_class: usize,
    config: &TrainConfig,
) -> Result<Personalized> {
    let selected = sample_per_class(user_windows, target, examples_per_class, config.seed)?;
    let finetune: Vec<Window> = selected.iter().map(|&i| user_windows[i].clone()).collect();
    let model = fine_tune_head(pretrained, &finetune, target, config)?;
    Ok(Personalized { model, selected })
}
