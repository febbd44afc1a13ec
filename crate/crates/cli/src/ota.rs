//! Scripted over-the-air loop: a live server, one simulated device, uploads
//! through record mode, a personalization job, and the device picking up the
//! new bundle.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tinyfit_core::nn::TrainConfig;
use tinyfit_core::signal::synthetic::BAND_CLASSES;
use tinyfit_device::{
    record_mode, Device, DeviceConfig, EventLog, HttpApi, LogEntry, RealClock, RecordingApi, RunSummary, SourceConfig,
    SyntheticSource, Traffic, VirtualClock,
};
use tinyfit_server::{BackgroundServer, HistoryResponse, JobStatus, JobView, ServerConfig};

use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub struct OtaOptions {
    /// Generalized checkpoint the server fine-tunes from.
    pub checkpoint: PathBuf,
    pub data_dir: PathBuf,
    /// Bundle the device runs before the first deployment.
    pub initial_bundle: Option<PathBuf>,
    pub classes: Vec<String>,
    /// Seconds recorded per class; 24 s at 20 Hz gives 15 windows.
    pub seconds_per_class: f64,
    pub time_scale: f64,
    pub poll_interval_s: f64,
    pub seed: u64,
    /// Synthetic wearer index.
    pub subject: usize,
    pub fine_tune: TrainConfig,
    pub timeout: Duration,
}

impl OtaOptions {
    pub fn new(checkpoint: impl Into<PathBuf>, data_dir: impl Into<PathBuf>) -> Self {
        Self {
            checkpoint: checkpoint.into(),
            data_dir: data_dir.into(),
            initial_bundle: None,
            classes: BAND_CLASSES.iter().map(|s| s.to_string()).collect(),
            seconds_per_class: 24.0,
            time_scale: 20.0,
            poll_interval_s: 2.0,
            seed: 99,
            subject: 3,
            fine_tune: TrainConfig::fine_tune(),
            timeout: Duration::from_secs(300),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtaReport {
    pub elapsed_s: f64,
    pub windows_uploaded: usize,
    pub job_id: String,
    pub finetune_examples: usize,
    pub bundle_bytes: usize,
    pub initial_version: u32,
    pub deployed_version: u32,
    /// Events carrying the deployed version that reached the server's history.
    pub delivered_new_version_events: usize,
    pub requests_after_deploy: usize,
    /// Requests carrying raw samples sent after the job succeeded.
    pub raw_uploads_after_deploy: usize,
    pub device_inferences: u64,
    pub device_swaps: u64,
}

/// Minimal client for the user-facing endpoints (what the dashboard calls).
struct UserClient {
    base: String,
    agent: ureq::Agent,
}

impl UserClient {
    fn new(base: String) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Self { base, agent }
    }

    fn decode<T: DeserializeOwned>(
        what: &str,
        r: std::result::Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<T> {
        let mut r = r.map_err(|e| CliError::Server(format!("{what}: {e}")))?;
        let status = r.status().as_u16();
        let text = r
            .body_mut()
            .read_to_string()
            .map_err(|e| CliError::Server(format!("{what}: {e}")))?;
        if status >= 400 {
            return Err(CliError::Server(format!("{what}: HTTP {status}: {text}")));
        }
        serde_json::from_str(&text).map_err(|e| CliError::Server(format!("{what}: {e}: {text}")))
    }

    fn post<T: DeserializeOwned>(&self, path: &str, token: Option<&str>, body: Value) -> Result<T> {
        let mut req = self.agent.post(format!("{}{path}", self.base));
        if let Some(t) = token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        Self::decode(path, req.send_json(body))
    }

    fn get<T: DeserializeOwned>(&self, path: &str, token: Option<&str>) -> Result<T> {
        let mut req = self.agent.get(format!("{}{path}", self.base));
        if let Some(t) = token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        Self::decode(path, req.call())
    }
}

fn check_deadline(start: Instant, timeout: Duration, what: &str) -> Result<()> {
    if start.elapsed() > timeout {
        return Err(CliError::Server(format!("timed out waiting for {what}")));
    }
    Ok(())
}

/// Runs the loop and reports what happened.
pub fn run_scripted(options: &OtaOptions) -> Result<OtaReport> {
    let start = Instant::now();
    let server = BackgroundServer::spawn(ServerConfig {
        bind: "127.0.0.1:0".parse().expect("literal address"),
        data_dir: options.data_dir.clone(),
        checkpoint: Some(options.checkpoint.clone()),
        fine_tune: options.fine_tune.clone(),
        fsync: false,
        ..ServerConfig::default()
    })
    .map_err(|e| CliError::Server(e.to_string()))?;
    let base = server.base_url();
    let user_api = UserClient::new(base.clone());

    let user: Value = user_api.post("/api/users", None, json!({ "name": "wearer" }))?;
    let reg: Value = user_api.post("/api/devices", None, json!({ "name": "band" }))?;
    let id = reg["device_id"].as_str().unwrap_or_default().to_owned();
    let token = reg["token"].as_str().unwrap_or_default().to_owned();
    let _: Value = user_api.post(
        &format!("/api/devices/{id}/link"),
        Some(&token),
        json!({ "user_id": user["user_id"] }),
    )?;

    let traffic: Arc<Mutex<Vec<Traffic>>> = Arc::default();
    let mut windows_uploaded = 0;
    {
        let mut api = RecordingApi::with_log(HttpApi::new(&base, &id, &token), Arc::clone(&traffic));
        let mut clock = VirtualClock::new(0);
        for class in &options.classes {
            let mut source =
                SyntheticSource::new(options.seed, options.subject, Some(class), options.seconds_per_class)?;
            windows_uploaded +=
                record_mode(&mut api, &mut clock, &mut source, class, options.seconds_per_class)?.window_count;
        }
    }

    let mut config = DeviceConfig::new(
        id.clone(),
        token.clone(),
        SourceConfig::Synthetic {
            seed: options.seed,
            subject: options.subject,
            class: None,
            segment_seconds: 30.0,
        },
    );
    config.server = base.clone();
    config.poll_interval_s = options.poll_interval_s;
    config.time_scale = options.time_scale;
    config.initial_bundle = options.initial_bundle.clone();
    let (log, entries) = EventLog::memory();
    let api = RecordingApi::with_log(HttpApi::new(&base, &id, &token), Arc::clone(&traffic));
    let source = Box::new(SyntheticSource::new(options.seed, options.subject, None, 30.0)?);
    let mut device = Device::start(config, api, RealClock::new(options.time_scale), source, log)?;
    let initial_version = device.version();
    let stop = device.stop_handle();
    let runner = std::thread::Builder::new()
        .name("tinyfit-device".into())
        .spawn(move || device.run())
        .map_err(|e| CliError::Server(e.to_string()))?;

    let outcome = (|| -> Result<(JobView, usize, usize)> {
        let job: JobView = user_api.post(&format!("/api/devices/{id}/personalize"), Some(&token), json!({}))?;
        let job = loop {
            let view: JobView = user_api.get(&format!("/api/jobs/{}", job.job_id), None)?;
            if view.status.is_terminal() {
                break view;
            }
            check_deadline(start, options.timeout, "the personalization job")?;
            std::thread::sleep(Duration::from_millis(50));
        };
        if job.status != JobStatus::Succeeded {
            return Err(CliError::Server(format!(
                "job failed: {}",
                job.failure_reason.unwrap_or_default()
            )));
        }
        let deploy_mark = traffic.lock().expect("traffic log").len();
        let version = job.bundle_version.unwrap_or_default();
        let delivered = loop {
            let history: HistoryResponse = user_api.get(&format!("/api/devices/{id}/history"), Some(&token))?;
            let n = history.events.iter().filter(|e| e.model_version == version).count();
            if n > 0 {
                break n;
            }
            check_deadline(start, options.timeout, "an event from the deployed model")?;
            std::thread::sleep(Duration::from_millis(50));
        };
        Ok((job, deploy_mark, delivered))
    })();
    stop.stop();
    let summary: RunSummary = runner
        .join()
        .map_err(|_| CliError::Server("device thread panicked".into()))??;
    let (job, deploy_mark, delivered) = outcome?;
    drop(server);

    let traffic = traffic.lock().expect("traffic log");
    let after = &traffic[deploy_mark.min(traffic.len())..];
    let swapped = entries
        .lock()
        .expect("event log")
        .iter()
        .any(|e| matches!(e, LogEntry::ModelSwapped { to, .. } if Some(*to) == job.bundle_version));
    if !swapped {
        return Err(CliError::Server("device never logged the swap".into()));
    }
    let metrics = job.metrics.clone().unwrap_or_default();
    Ok(OtaReport {
        elapsed_s: start.elapsed().as_secs_f64(),
        windows_uploaded,
        job_id: job.job_id,
        finetune_examples: metrics.finetune_examples,
        bundle_bytes: metrics.bundle_bytes,
        initial_version,
        deployed_version: job.bundle_version.unwrap_or_default(),
        delivered_new_version_events: delivered,
        requests_after_deploy: after.len(),
        raw_uploads_after_deploy: after.iter().filter(|t| t.carries_raw_samples()).count(),
        device_inferences: summary.inferences,
        device_swaps: summary.swaps,
    })
}
