//! The evaluation protocol: generalized training and test on pooled users,
//! then per-user evaluation of the generalized and the personalized model.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tinyfit_core::nn::{evaluate, init_model, personalize, train, Checkpoint, CnnModel, EpochStats};
use tinyfit_core::quant::{package, ModelBundle, SIZE_LIMIT};
use tinyfit_core::signal::{denormalize, fit_channel_stats, normalize, slice_dataset, windows_chain, ChannelStats};
use tinyfit_core::{ClassMap, Engine, Window};

use crate::config::Config;
use crate::error::{CliError, Result};

/// Splits windows into train and test by recording. A recording is a maximal
/// run of consecutive windows that chain (see [`windows_chain`]); a seeded
/// `test_fraction` of the recordings (at least one, never all) goes to test.
/// Returns sorted `(train, test)` indices.
pub fn split_by_recording(windows: &[Window], test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (i, w) in windows.iter().enumerate() {
        let continues = i > 0 && windows_chain(&windows[i - 1], w);
        match runs.last_mut() {
            Some(run) if continues => run.1 = i + 1,
            _ => runs.push((i, i + 1)),
        }
    }
    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((runs.len() as f64 * test_fraction).round() as usize).clamp(1, runs.len().saturating_sub(1).max(1));
    let test_runs: BTreeSet<usize> = order[..n_test.min(runs.len())].iter().copied().collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (r, &(a, b)) in runs.iter().enumerate() {
        let dst = if test_runs.contains(&r) { &mut test } else { &mut train };
        dst.extend(a..b);
    }
    (train, test)
}

/// Generalized-pool windows split for training, already normalized with
/// statistics fitted on the training part.
pub struct GeneralizedData {
    pub stats: ChannelStats,
    pub train: Vec<Window>,
    pub test: Vec<Window>,
    pub generalized_subjects: Vec<String>,
    pub personalized_subjects: Vec<String>,
}

pub fn generalized_data(windows: &[Window], config: &Config) -> Result<GeneralizedData> {
    let split = slice_dataset(windows.to_vec(), config.slice_seed)?;
    let (tr, te) = split_by_recording(&split.generalized, config.test_fraction, config.train.seed);
    let raw_train: Vec<Window> = tr.iter().map(|&i| split.generalized[i].clone()).collect();
    let stats = fit_channel_stats(&raw_train)?;
    let train = raw_train.iter().map(|w| normalize(w, &stats)).collect();
    let test = te.iter().map(|&i| normalize(&split.generalized[i], &stats)).collect();
    Ok(GeneralizedData {
        stats,
        train,
        test,
        generalized_subjects: split.generalized_subjects().into_iter().map(str::to_owned).collect(),
        personalized_subjects: split.personalized.into_keys().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedReport {
    pub dataset: Option<String>,
    pub slice_seed: u64,
    pub train_seed: u64,
    pub classes: Vec<String>,
    pub generalized_subjects: Vec<String>,
    pub personalized_subjects: Vec<String>,
    pub train_windows: usize,
    pub test_windows: usize,
    pub history: Vec<EpochStats>,
    /// Generalized-setting (GS) accuracy on held-out recordings.
    pub gs_accuracy: f64,
}

/// Trains the generalized model. Classes are the given map, which must cover
/// every label.
pub fn train_generalized(
    classes: &ClassMap,
    windows: &[Window],
    config: &Config,
    dataset: Option<&str>,
) -> Result<(Checkpoint, GeneralizedReport)> {
    let data = generalized_data(windows, config)?;
    let model = init_model(classes.clone(), config.train.seed)?;
    let (model, history) = train(&model, &data.train, &config.train)?;
    let gs = evaluate(&model, &data.test)?.accuracy;
    let report = GeneralizedReport {
        dataset: dataset.map(str::to_owned),
        slice_seed: config.slice_seed,
        train_seed: config.train.seed,
        classes: classes.names().to_vec(),
        generalized_subjects: data.generalized_subjects,
        personalized_subjects: data.personalized_subjects,
        train_windows: data.train.len(),
        test_windows: data.test.len(),
        history,
        gs_accuracy: gs,
    };
    Ok((
        Checkpoint {
            model,
            stats: data.stats,
        },
        report,
    ))
}

/// One personalized user's results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserResult {
    pub subject_id: String,
    pub windows: usize,
    /// Classes kept for this user, in model order.
    pub classes: Vec<String>,
    /// Classes dropped for having fewer than the required examples, with
    /// the number of windows they had.
    pub excluded: BTreeMap<String, usize>,
    /// Generalized model on all of the user's (kept) windows.
    pub ps_gm: f64,
    pub finetune_windows: usize,
    pub heldout_windows: usize,
    /// Personalized model on the windows not used for fine-tuning.
    pub ps_pm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonalizedReport {
    pub dataset: Option<String>,
    pub slice_seed: u64,
    pub finetune_seed: u64,
    pub examples_per_class: usize,
    pub users: Vec<UserResult>,
    /// Users with fewer than two usable classes.
    pub skipped_users: Vec<String>,
    pub ps_gm: f64,
    pub ps_pm: f64,
    /// GS accuracy of the generalized model, when known.
    pub gs: Option<f64>,
    /// (GS − PS-GM) / GS.
    pub gs_to_ps_gm_drop: Option<f64>,
    /// (PS-PM − PS-GM) / PS-GM.
    pub personalization_gain: f64,
}

/// (a − b) / a.
pub fn relative_drop(a: f64, b: f64) -> f64 {
    (a - b) / a
}

/// (b − a) / a.
pub fn relative_gain(a: f64, b: f64) -> f64 {
    (b - a) / a
}

fn evaluate_user(
    gm: &CnnModel,
    stats: &ChannelStats,
    subject: &str,
    raw: &[Window],
    config: &Config,
) -> Result<Option<UserResult>> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for w in raw {
        let label = w.label().unwrap_or_default();
        if gm.classes.id(label).is_none() {
            return Err(CliError::Evaluation(format!(
                "subject {subject}: label {label:?} is not a model class"
            )));
        }
        *counts.entry(label).or_default() += 1;
    }
    let need = config.examples_per_class;
    let kept: Vec<&str> = gm
        .classes
        .names()
        .iter()
        .map(String::as_str)
        .filter(|c| counts.get(c).is_some_and(|&n| n >= need))
        .collect();
    let excluded: BTreeMap<String, usize> = counts
        .iter()
        .filter(|(_, &n)| n < need)
        .map(|(c, &n)| ((*c).to_owned(), n))
        .collect();
    if kept.len() < 2 {
        return Ok(None);
    }
    let windows: Vec<Window> = raw
        .iter()
        .filter(|w| kept.contains(&w.label().unwrap_or_default()))
        .map(|w| normalize(w, stats))
        .collect();
    let target = ClassMap::new(kept.iter().copied());
    let ps_gm = evaluate(gm, &windows)?.accuracy;
    let p = personalize(gm, &windows, &target, need, &config.fine_tune)?;
    let selected: BTreeSet<usize> = p.selected.iter().copied().collect();
    let heldout_idx: Vec<usize> = (0..windows.len()).filter(|i| !selected.contains(i)).collect();
    if heldout_idx.iter().any(|i| selected.contains(i)) || heldout_idx.len() + selected.len() != windows.len() {
        return Err(CliError::Evaluation(format!(
            "subject {subject}: fine-tune and evaluation windows overlap"
        )));
    }
    if heldout_idx.is_empty() {
        return Err(CliError::Evaluation(format!(
            "subject {subject}: no windows left after the fine-tune sample"
        )));
    }
    let heldout: Vec<Window> = heldout_idx.iter().map(|&i| windows[i].clone()).collect();
    let ps_pm = evaluate(&p.model, &heldout)?.accuracy;
    Ok(Some(UserResult {
        subject_id: subject.to_owned(),
        windows: windows.len(),
        classes: target.names().to_vec(),
        excluded,
        ps_gm,
        finetune_windows: selected.len(),
        heldout_windows: heldout.len(),
        ps_pm,
    }))
}

/// Evaluates the generalized model and a per-user personalized model on each
/// personalized subject. Users run in parallel; results are in subject order.
pub fn eval_personalized(
    checkpoint: &Checkpoint,
    windows: &[Window],
    config: &Config,
    gs: Option<f64>,
    dataset: Option<&str>,
) -> Result<PersonalizedReport> {
    let split = slice_dataset(windows.to_vec(), config.slice_seed)?;
    let users: Vec<(String, Vec<Window>)> = split.personalized.into_iter().collect();
    let results: Vec<Result<Option<UserResult>>> = users
        .par_iter()
        .map(|(s, ws)| evaluate_user(&checkpoint.model, &checkpoint.stats, s, ws, config))
        .collect();
    let mut evaluated = Vec::new();
    let mut skipped_users = Vec::new();
    for ((subject, _), r) in users.iter().zip(results) {
        match r? {
            Some(u) => evaluated.push(u),
            None => skipped_users.push(subject.clone()),
        }
    }
    if evaluated.is_empty() {
        return Err(CliError::Evaluation(
            "no personalized user has two classes with enough examples".into(),
        ));
    }
    let n = evaluated.len() as f64;
    let ps_gm = evaluated.iter().map(|u| u.ps_gm).sum::<f64>() / n;
    let ps_pm = evaluated.iter().map(|u| u.ps_pm).sum::<f64>() / n;
    Ok(PersonalizedReport {
        dataset: dataset.map(str::to_owned),
        slice_seed: config.slice_seed,
        finetune_seed: config.fine_tune.seed,
        examples_per_class: config.examples_per_class,
        users: evaluated,
        skipped_users,
        ps_gm,
        ps_pm,
        gs,
        gs_to_ps_gm_drop: gs.map(|g| relative_drop(g, ps_gm)),
        personalization_gain: relative_gain(ps_gm, ps_pm),
    })
}

/// Integer-runtime agreement with the float model on held-out windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub windows: usize,
    /// Share of windows where both predict the same class.
    pub agreement: f64,
    pub float_accuracy: f64,
    pub int_accuracy: f64,
    /// float_accuracy − int_accuracy.
    pub accuracy_drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackageReport {
    pub classes: usize,
    pub version: u32,
    pub bundle_bytes: usize,
    pub size_limit: usize,
    pub sparsity: f64,
    pub arena_capacity: usize,
    pub arena_model_bytes: usize,
    pub arena_scratch_bytes: usize,
    pub arena_high_water: usize,
    /// Multiply-accumulates per inference.
    pub macs: u64,
    pub latency_runs: usize,
    /// Mean wall time of one inference on this host.
    pub mean_latency_ms: f64,
    pub fidelity: Option<Fidelity>,
}

/// Compares the float model and the integer engine on normalized windows.
pub fn fidelity(model: &CnnModel, stats: &ChannelStats, engine: &mut Engine, windows: &[Window]) -> Result<Fidelity> {
    if windows.is_empty() {
        return Err(CliError::Evaluation("no windows to measure fidelity on".into()));
    }
    let (mut agree, mut float_ok, mut int_ok) = (0usize, 0usize, 0usize);
    for w in windows {
        let label = w.label().and_then(|l| model.classes.id(l));
        let f = model.predict(w)?;
        let q = engine.infer(denormalize(w, stats).rows())?.class_id;
        agree += usize::from(f == q);
        float_ok += usize::from(Some(f) == label);
        int_ok += usize::from(Some(q) == label);
    }
    let n = windows.len() as f64;
    Ok(Fidelity {
        windows: windows.len(),
        agreement: agree as f64 / n,
        float_accuracy: float_ok as f64 / n,
        int_accuracy: int_ok as f64 / n,
        accuracy_drop: (float_ok as f64 - int_ok as f64) / n,
    })
}

/// Mean single-inference wall time in milliseconds, cycling through `windows`.
pub fn mean_latency_ms(engine: &mut Engine, windows: &[Window], runs: usize) -> Result<f64> {
    if windows.is_empty() || runs == 0 {
        return Err(CliError::Evaluation(
            "latency needs at least one window and one run".into(),
        ));
    }
    let start = Instant::now();
    for i in 0..runs {
        std::hint::black_box(engine.infer(windows[i % windows.len()].rows())?);
    }
    Ok(start.elapsed().as_secs_f64() * 1e3 / runs as f64)
}

/// Packages `checkpoint` calibrated on `calibration` (normalized windows) and
/// measures it. Fails with [`CliError::SizeGate`] when the bundle is not
/// below the size limit.
pub fn package_model(
    checkpoint: &Checkpoint,
    calibration: &[Window],
    heldout: &[Window],
    config: &Config,
) -> Result<(Vec<u8>, PackageReport)> {
    let bundle: ModelBundle = package(&checkpoint.model, &checkpoint.stats, calibration, &config.package)?;
    let bytes = bundle.serialize()?;
    if bytes.len() >= SIZE_LIMIT {
        return Err(CliError::SizeGate {
            size: bytes.len(),
            limit: SIZE_LIMIT,
        });
    }
    let mut engine = Engine::default();
    engine.load(&bytes)?;
    let fid = if heldout.is_empty() {
        None
    } else {
        Some(fidelity(&checkpoint.model, &checkpoint.stats, &mut engine, heldout)?)
    };
    let raw: Vec<Window> = calibration
        .iter()
        .take(64)
        .map(|w| denormalize(w, &checkpoint.stats))
        .collect();
    let latency = mean_latency_ms(&mut engine, &raw, config.latency_runs)?;
    let arena = engine.arena_report()?;
    let report = PackageReport {
        classes: bundle.classes.len(),
        version: bundle.version,
        bundle_bytes: bytes.len(),
        size_limit: SIZE_LIMIT,
        sparsity: config.package.sparsity,
        arena_capacity: arena.capacity,
        arena_model_bytes: arena.model_bytes,
        arena_scratch_bytes: arena.scratch_bytes,
        arena_high_water: arena.high_water,
        macs: engine.macs().unwrap_or(0),
        latency_runs: config.latency_runs,
        mean_latency_ms: latency,
        fidelity: fid,
    };
    Ok((bytes, report))
}
