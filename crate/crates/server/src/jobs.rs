//! Fine-tune worker: personalize the pretrained checkpoint on a device's
//! windows, compress it, and publish the bundle as the next version.

use std::panic::AssertUnwindSafe;

use tinyfit_core::nn::{evaluate, personalize, Checkpoint};
use tinyfit_core::quant::{package, SIZE_LIMIT};
use tinyfit_core::signal::normalize;
use tinyfit_core::{PackageConfig, Window};

use crate::store::{JobInput, JobMetrics};
use crate::AppState;

/// Runs a queued job to completion on the blocking pool.
pub(crate) fn spawn(state: AppState, input: JobInput) {
    tokio::task::spawn_blocking(move || {
        let job_id = input.job_id.clone();
        if let Err(e) = run(&state, input) {
            tracing::error!(job = %job_id, error = ?e.body, "job bookkeeping failed");
        }
    });
}

fn run(state: &AppState, input: JobInput) -> Result<(), crate::ApiError> {
    let store = &state.store;
    store.job_started(&input.job_id)?;
    tracing::info!(job = %input.job_id, device = %input.device_id, "fine-tune started");
    let built = std::panic::catch_unwind(AssertUnwindSafe(|| build(state, &input)))
        .unwrap_or_else(|_| Err("fine-tune worker panicked".to_owned()));
    match built {
        Ok((bytes, metrics)) => match store.publish(&input.job_id, input.version, bytes, metrics) {
            Ok(()) => {
                tracing::info!(job = %input.job_id, version = input.version, "bundle published");
                Ok(())
            }
            Err(e) => store.job_failed(&input.job_id, e.body.message),
        },
        Err(reason) => {
            tracing::warn!(job = %input.job_id, %reason, "fine-tune failed");
            store.job_failed(&input.job_id, reason)
        }
    }
}

fn build(state: &AppState, input: &JobInput) -> Result<(Vec<u8>, JobMetrics), String> {
    let config = &state.config;
    let path = config
        .checkpoint
        .as_ref()
        .ok_or("no pretrained checkpoint is configured")?;
    let Checkpoint {
        model: pretrained,
        stats,
    } = Checkpoint::load(path).map_err(|e| format!("loading checkpoint {}: {e}", path.display()))?;

    let windows: Vec<Window> = input.windows.iter().map(|w| normalize(w, &stats)).collect();
    let mut train = config.fine_tune.clone();
    train.validation_fraction = None;
    let result = personalize(&pretrained, &windows, &input.classes, input.examples_per_class, &train)
        .map_err(|e| format!("fine-tuning: {e}"))?;

    let finetune: Vec<Window> = result.selected.iter().map(|&i| windows[i].clone()).collect();
    let holdout: Vec<Window> = windows
        .iter()
        .enumerate()
        .filter(|(i, _)| result.selected.binary_search(i).is_err())
        .map(|(_, w)| w.clone())
        .collect();
    let finetune_accuracy = evaluate(&result.model, &finetune).map_err(|e| e.to_string())?.accuracy;
    let holdout_accuracy = if holdout.is_empty() {
        None
    } else {
        Some(evaluate(&result.model, &holdout).map_err(|e| e.to_string())?.accuracy)
    };

    let package_config = PackageConfig {
        sparsity: config.sparsity,
        calibration_windows: config.calibration_windows,
        seed: train.seed,
        version: input.version,
    };
    let bundle = package(&result.model, &stats, &windows, &package_config).map_err(|e| format!("packaging: {e}"))?;
    let bytes = bundle.serialize().map_err(|e| format!("packaging: {e}"))?;
    if bytes.len() >= SIZE_LIMIT {
        return Err(format!("bundle is {} bytes; the limit is {SIZE_LIMIT}", bytes.len()));
    }
    let metrics = JobMetrics {
        finetune_examples: finetune.len(),
        finetune_accuracy,
        holdout_accuracy,
        bundle_bytes: bytes.len(),
        sparsity: config.sparsity,
    };
    Ok((bytes, metrics))
}
