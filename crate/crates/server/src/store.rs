//! Authoritative state plus its write-ahead log. Every mutation is appended
//! to the log (and optionally fsynced) before it is applied in memory, and
//! replaying the log through the same `apply` rebuilds the state at startup.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::http::StatusCode;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tinyfit_core::signal::{make_windows, resample, ImuSample, Recording, TARGET_RATE_HZ, WINDOW_LEN};
use tinyfit_core::{ClassMap, InferenceEvent, RecordingReceipt, Window};

use crate::error::ApiError;

const LOG_FILE: &str = "tinyfit.wal.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("log {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("log line {line} is corrupt: {message}")]
    Corrupt { line: usize, message: String },
    #[error("log line {line} violates an invariant: {message}")]
    Invariant { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Succeeded | JobStatus::Failed)
    }
}

/// A published bundle: its version and bytes.
pub type Firmware = (u32, Arc<[u8]>);

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JobMetrics {
    pub finetune_examples: usize,
    /// Accuracy of the personalized model on its own fine-tune set.
    pub finetune_accuracy: f64,
    /// Accuracy on the device's windows outside the fine-tune set, if any.
    pub holdout_accuracy: Option<f64>,
    pub bundle_bytes: usize,
    pub sparsity: f64,
}

/// Log records. The serialized form is the on-disk format.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Record {
    UserCreated {
        user_id: String,
        name: String,
    },
    DeviceRegistered {
        device_id: String,
        name: String,
        token: String,
        idempotency_key: Option<String>,
    },
    DeviceLinked {
        device_id: String,
        user_id: String,
    },
    ClassAdded {
        device_id: String,
        class_name: String,
    },
    RecordingStored {
        device_id: String,
        recording_id: String,
        class_name: String,
        rate_hz: f64,
        samples: Vec<[f64; 7]>,
        idempotency_key: Option<String>,
    },
    JobQueued {
        job_id: String,
        device_id: String,
        examples_per_class: usize,
    },
    JobStarted {
        job_id: String,
    },
    JobSucceeded {
        job_id: String,
        metrics: JobMetrics,
        version: u32,
        bundle: String,
    },
    JobFailed {
        job_id: String,
        reason: String,
    },
    InferencesRecorded {
        device_id: String,
        events: Vec<InferenceEvent>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserView {
    pub user_id: String,
    pub name: String,
    pub devices: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub name: String,
    pub windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceView {
    pub device_id: String,
    pub name: String,
    pub owner: Option<String>,
    pub linked: bool,
    pub bundle_version: u32,
    pub classes: Vec<ClassSummary>,
    pub active_job: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobView {
    pub job_id: String,
    pub device_id: String,
    pub status: JobStatus,
    pub examples_per_class: usize,
    pub metrics: Option<JobMetrics>,
    pub bundle_version: Option<u32>,
    pub failure_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryResponse {
    pub device_id: String,
    pub events: Vec<InferenceEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRegistration {
    pub device_id: String,
    pub token: String,
    pub name: String,
}

/// Everything a fine-tune worker needs, copied out under the lock.
#[derive(Debug, Clone)]
pub struct JobInput {
    pub job_id: String,
    pub device_id: String,
    pub classes: ClassMap,
    pub windows: Vec<Window>,
    pub examples_per_class: usize,
    /// Version the bundle will be published as. Stable while the job is
    /// active because only a job can advance it.
    pub version: u32,
}

#[derive(Debug, Clone)]
struct Bundle {
    version: u32,
    bytes: Arc<[u8]>,
}

#[derive(Debug)]
struct Device {
    name: String,
    token: String,
    owner: Option<String>,
    classes: Vec<String>,
    windows: Vec<Window>,
    upload_keys: HashMap<String, RecordingReceipt>,
    bundle: Option<Bundle>,
    active_job: Option<String>,
    history: Vec<InferenceEvent>,
}

impl Device {
    fn window_count(&self, class: &str) -> usize {
        self.windows.iter().filter(|w| w.label() == Some(class)).count()
    }

    fn version(&self) -> u32 {
        self.bundle.as_ref().map_or(0, |b| b.version)
    }

    fn view(&self, id: &str) -> DeviceView {
        DeviceView {
            device_id: id.to_owned(),
            name: self.name.clone(),
            owner: self.owner.clone(),
            linked: self.owner.is_some(),
            bundle_version: self.version(),
            classes: self
                .classes
                .iter()
                .map(|c| ClassSummary {
                    name: c.clone(),
                    windows: self.window_count(c),
                })
                .collect(),
            active_job: self.active_job.clone(),
        }
    }
}

#[derive(Debug, Default)]
struct State {
    users: BTreeMap<String, UserView>,
    devices: BTreeMap<String, Device>,
    device_keys: HashMap<String, String>,
    jobs: BTreeMap<String, JobView>,
    recordings: u64,
}

/// Windows of an upload, computed identically at request time and replay.
pub(crate) fn upload_windows(
    device: &str,
    class: &str,
    rate_hz: f64,
    samples: &[[f64; 7]],
) -> Result<Vec<Window>, ApiError> {
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(ApiError::bad_request(format!(
            "rate_hz must be positive, got {rate_hz}"
        )));
    }
    let mut parsed = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let values = [s[1], s[2], s[3], s[4], s[5], s[6]];
        let sample = ImuSample::new(s[0], values)
            .ok_or_else(|| ApiError::bad_request(format!("sample {i} has a non-finite value")))?;
        parsed.push(sample);
    }
    let too_short = |have: usize| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "too_short",
            format!("recording yields {have} samples at {TARGET_RATE_HZ} Hz; at least {WINDOW_LEN} are needed"),
            json!({ "min_needed": WINDOW_LEN, "rate_hz": TARGET_RATE_HZ, "have": have }),
        )
    };
    if parsed.len() < 2 {
        return Err(too_short(parsed.len()));
    }
    let rec = Recording {
        subject_id: device.to_owned(),
        class_label: class.to_owned(),
        rate_hz,
        samples: parsed,
    };
    let resampled = resample(&rec, TARGET_RATE_HZ).map_err(|e| ApiError::bad_request(e.to_string()))?;
    if resampled.samples.len() < WINDOW_LEN {
        return Err(too_short(resampled.samples.len()));
    }
    make_windows(&resampled).map_err(|e| ApiError::bad_request(e.to_string()))
}

impl State {
    fn device_mut(&mut self, id: &str) -> Result<&mut Device, String> {
        self.devices.get_mut(id).ok_or_else(|| format!("unknown device {id}"))
    }

    fn job_mut(&mut self, id: &str) -> Result<&mut JobView, String> {
        self.jobs.get_mut(id).ok_or_else(|| format!("unknown job {id}"))
    }

    fn transition(&mut self, id: &str, from: &[JobStatus], to: JobStatus) -> Result<&mut JobView, String> {
        let job = self.job_mut(id)?;
        if !from.contains(&job.status) {
            return Err(format!("job {id}: illegal transition {:?} -> {to:?}", job.status));
        }
        job.status = to;
        Ok(job)
    }

    fn finish_job(&mut self, job_id: &str) -> Result<(), String> {
        let device_id = self.jobs[job_id].device_id.clone();
        let device = self.device_mut(&device_id)?;
        if device.active_job.as_deref() == Some(job_id) {
            device.active_job = None;
        }
        Ok(())
    }

    /// Applies one record. Errors mean the record contradicts the state.
    fn apply(&mut self, record: Record) -> Result<(), String> {
        match record {
            Record::UserCreated { user_id, name } => {
                if self.users.contains_key(&user_id) {
                    return Err(format!("duplicate user {user_id}"));
                }
                self.users.insert(
                    user_id.clone(),
                    UserView {
                        user_id,
                        name,
                        devices: Vec::new(),
                    },
                );
            }
            Record::DeviceRegistered {
                device_id,
                name,
                token,
                idempotency_key,
            } => {
                if self.devices.contains_key(&device_id) {
                    return Err(format!("duplicate device {device_id}"));
                }
                if let Some(key) = idempotency_key {
                    self.device_keys.insert(key, device_id.clone());
                }
                self.devices.insert(
                    device_id,
                    Device {
                        name,
                        token,
                        owner: None,
                        classes: Vec::new(),
                        windows: Vec::new(),
                        upload_keys: HashMap::new(),
                        bundle: None,
                        active_job: None,
                        history: Vec::new(),
                    },
                );
            }
            Record::DeviceLinked { device_id, user_id } => {
                let user = self
                    .users
                    .get_mut(&user_id)
                    .ok_or_else(|| format!("unknown user {user_id}"))?;
                if !user.devices.contains(&device_id) {
                    user.devices.push(device_id.clone());
                }
                self.device_mut(&device_id)?.owner = Some(user_id);
            }
            Record::ClassAdded { device_id, class_name } => {
                let d = self.device_mut(&device_id)?;
                if !d.classes.contains(&class_name) {
                    d.classes.push(class_name);
                }
            }
            Record::RecordingStored {
                device_id,
                recording_id,
                class_name,
                rate_hz,
                samples,
                idempotency_key,
            } => {
                let windows = upload_windows(&device_id, &class_name, rate_hz, &samples).map_err(|e| e.body.message)?;
                let d = self.device_mut(&device_id)?;
                if !d.classes.contains(&class_name) {
                    d.classes.push(class_name.clone());
                }
                let receipt = RecordingReceipt {
                    recording_id,
                    class_name,
                    window_count: windows.len(),
                };
                if let Some(key) = idempotency_key {
                    d.upload_keys.insert(key, receipt);
                }
                d.windows.extend(windows);
                self.recordings += 1;
            }
            Record::JobQueued {
                job_id,
                device_id,
                examples_per_class,
            } => {
                let d = self.device_mut(&device_id)?;
                if let Some(active) = &d.active_job {
                    return Err(format!("device {device_id} already runs job {active}"));
                }
                d.active_job = Some(job_id.clone());
                self.jobs.insert(
                    job_id.clone(),
                    JobView {
                        job_id,
                        device_id,
                        status: JobStatus::Queued,
                        examples_per_class,
                        metrics: None,
                        bundle_version: None,
                        failure_reason: None,
                    },
                );
            }
            Record::JobStarted { job_id } => {
                self.transition(&job_id, &[JobStatus::Queued], JobStatus::Running)?;
            }
            Record::JobSucceeded {
                job_id,
                metrics,
                version,
                bundle,
            } => {
                let bytes = B64.decode(bundle).map_err(|e| format!("bundle encoding: {e}"))?;
                let job = self.transition(&job_id, &[JobStatus::Running], JobStatus::Succeeded)?;
                job.metrics = Some(metrics);
                job.bundle_version = Some(version);
                let device_id = job.device_id.clone();
                let d = self.device_mut(&device_id)?;
                if version <= d.version() {
                    return Err(format!("version {version} does not advance {}", d.version()));
                }
                d.bundle = Some(Bundle {
                    version,
                    bytes: bytes.into(),
                });
                self.finish_job(&job_id)?;
            }
            Record::JobFailed { job_id, reason } => {
                let job = self.transition(&job_id, &[JobStatus::Queued, JobStatus::Running], JobStatus::Failed)?;
                job.failure_reason = Some(reason);
                self.finish_job(&job_id)?;
            }
            Record::InferencesRecorded { device_id, events } => {
                self.device_mut(&device_id)?.history.extend(events);
            }
        }
        Ok(())
    }
}

struct Wal {
    file: File,
    path: PathBuf,
    fsync: bool,
}

impl Wal {
    fn io(&self, source: std::io::Error) -> StoreError {
        StoreError::Io {
            path: self.path.clone(),
            source,
        }
    }

    fn append(&mut self, record: &Record) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(record).expect("records serialize");
        line.push(b'\n');
        self.file.write_all(&line).map_err(|e| self.io(e))?;
        if self.fsync {
            self.file.sync_data().map_err(|e| self.io(e))?;
        }
        Ok(())
    }
}

struct Inner {
    state: State,
    wal: Wal,
}

impl Inner {
    fn commit(&mut self, record: Record) -> Result<(), ApiError> {
        self.wal.append(&record)?;
        self.state
            .apply(record)
            .map_err(|m| ApiError::internal(format!("state invariant violated: {m}")))
    }

    fn authorize(&self, device_id: &str, token: Option<&str>) -> Result<&Device, ApiError> {
        let d = self
            .state
            .devices
            .get(device_id)
            .ok_or_else(|| ApiError::not_found("device", device_id))?;
        match token {
            Some(t) if t == d.token => Ok(d),
            _ => Err(ApiError::unauthorized()),
        }
    }

    fn authorize_linked(&self, device_id: &str, token: Option<&str>) -> Result<&Device, ApiError> {
        let d = self.authorize(device_id, token)?;
        if d.owner.is_none() {
            return Err(ApiError::not_linked(device_id));
        }
        Ok(d)
    }
}

pub struct Store {
    inner: Mutex<Inner>,
}

fn new_token() -> String {
    let bytes: [u8; 16] = rand::rng().random();
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Store {
    /// Opens the log under `dir`, replays it, and fails any job that was
    /// still in flight when the previous process stopped.
    pub fn open(dir: &Path, fsync: bool) -> Result<Self, StoreError> {
        let path = dir.join(LOG_FILE);
        let io = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(io)?;

        let mut state = State::default();
        let mut reader = BufReader::new(&file);
        let mut valid_len = 0u64;
        let mut line_no = 0;
        let mut buf = String::new();
        let mut torn_tail = false;
        loop {
            buf.clear();
            let n = reader.read_line(&mut buf).map_err(io)?;
            if n == 0 {
                break;
            }
            line_no += 1;
            let complete = buf.ends_with('\n');
            match serde_json::from_str::<Record>(buf.trim_end()) {
                Ok(record) if complete => {
                    state
                        .apply(record)
                        .map_err(|message| StoreError::Invariant { line: line_no, message })?;
                    valid_len += n as u64;
                }
                // An unterminated last line is a write cut short by a crash.
                _ if !complete => {
                    torn_tail = true;
                    break;
                }
                Ok(_) => unreachable!(),
                Err(e) => {
                    return Err(StoreError::Corrupt {
                        line: line_no,
                        message: e.to_string(),
                    })
                }
            }
        }
        drop(reader);
        if torn_tail {
            tracing::warn!(line = line_no, "discarding torn final log line");
            file.set_len(valid_len).map_err(io)?;
            file.seek(SeekFrom::End(0)).map_err(io)?;
        }

        let mut inner = Inner {
            state,
            wal: Wal { file, path, fsync },
        };
        let stale: Vec<String> = inner
            .state
            .jobs
            .values()
            .filter(|j| !j.status.is_terminal())
            .map(|j| j.job_id.clone())
            .collect();
        for job_id in stale {
            inner
                .commit(Record::JobFailed {
                    job_id,
                    reason: "interrupted by server restart".into(),
                })
                .map_err(|e| StoreError::Invariant {
                    line: line_no,
                    message: e.body.message,
                })?;
        }
        Ok(Self {
            inner: Mutex::new(inner),
        })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn create_user(&self, name: String) -> Result<UserView, ApiError> {
        let mut inner = self.lock();
        let user_id = format!("u{}", inner.state.users.len() + 1);
        inner.commit(Record::UserCreated {
            user_id: user_id.clone(),
            name,
        })?;
        Ok(inner.state.users[&user_id].clone())
    }

    pub fn user(&self, user_id: &str) -> Result<UserView, ApiError> {
        let inner = self.lock();
        inner
            .state
            .users
            .get(user_id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("user", user_id))
    }

    /// Returns the registration and whether it was newly created.
    pub fn register_device(
        &self,
        name: String,
        idempotency_key: Option<String>,
    ) -> Result<(DeviceRegistration, bool), ApiError> {
        let mut inner = self.lock();
        if let Some(existing) = idempotency_key.as_ref().and_then(|k| inner.state.device_keys.get(k)) {
            let d = &inner.state.devices[existing];
            return Ok((
                DeviceRegistration {
                    device_id: existing.clone(),
                    token: d.token.clone(),
                    name: d.name.clone(),
                },
                false,
            ));
        }
        let device_id = format!("d{}", inner.state.devices.len() + 1);
        let token = new_token();
        inner.commit(Record::DeviceRegistered {
            device_id: device_id.clone(),
            name: name.clone(),
            token: token.clone(),
            idempotency_key,
        })?;
        Ok((DeviceRegistration { device_id, token, name }, true))
    }

    pub fn device(&self, device_id: &str, token: Option<&str>) -> Result<DeviceView, ApiError> {
        let inner = self.lock();
        Ok(inner.authorize(device_id, token)?.view(device_id))
    }

    pub fn link(&self, device_id: &str, token: Option<&str>, user_id: &str) -> Result<DeviceView, ApiError> {
        let mut inner = self.lock();
        let owner = inner.authorize(device_id, token)?.owner.clone();
        if !inner.state.users.contains_key(user_id) {
            return Err(ApiError::not_found("user", user_id));
        }
        match owner.as_deref() {
            Some(o) if o == user_id => {}
            Some(o) => {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "already_linked",
                    format!("device {device_id:?} is linked to another user"),
                    json!({ "device_id": device_id, "owner": o }),
                ))
            }
            None => inner.commit(Record::DeviceLinked {
                device_id: device_id.to_owned(),
                user_id: user_id.to_owned(),
            })?,
        }
        Ok(inner.state.devices[device_id].view(device_id))
    }

    pub fn add_classes(
        &self,
        device_id: &str,
        token: Option<&str>,
        names: Vec<String>,
    ) -> Result<DeviceView, ApiError> {
        let mut inner = self.lock();
        let existing = inner.authorize_linked(device_id, token)?.classes.clone();
        for name in names {
            if name.trim().is_empty() || name.len() > u8::MAX as usize {
                return Err(ApiError::bad_request("class names must be 1-255 bytes"));
            }
            if !existing.contains(&name) {
                inner.commit(Record::ClassAdded {
                    device_id: device_id.to_owned(),
                    class_name: name,
                })?;
            }
        }
        Ok(inner.state.devices[device_id].view(device_id))
    }

    pub fn upload(
        &self,
        device_id: &str,
        token: Option<&str>,
        class_name: String,
        rate_hz: f64,
        samples: Vec<[f64; 7]>,
        idempotency_key: Option<String>,
    ) -> Result<RecordingReceipt, ApiError> {
        if class_name.trim().is_empty() || class_name.len() > u8::MAX as usize {
            return Err(ApiError::bad_request("class_name must be 1-255 bytes"));
        }
        let mut inner = self.lock();
        let d = inner.authorize_linked(device_id, token)?;
        if let Some(receipt) = idempotency_key.as_ref().and_then(|k| d.upload_keys.get(k)) {
            return Ok(receipt.clone());
        }
        let windows = upload_windows(device_id, &class_name, rate_hz, &samples)?;
        let recording_id = format!("r{}", inner.state.recordings + 1);
        inner.commit(Record::RecordingStored {
            device_id: device_id.to_owned(),
            recording_id: recording_id.clone(),
            class_name: class_name.clone(),
            rate_hz,
            samples,
            idempotency_key,
        })?;
        Ok(RecordingReceipt {
            recording_id,
            class_name,
            window_count: windows.len(),
        })
    }

    /// Checks the preconditions and queues a job, returning its inputs.
    pub fn queue_job(
        &self,
        device_id: &str,
        token: Option<&str>,
        examples_per_class: usize,
    ) -> Result<JobInput, ApiError> {
        let mut inner = self.lock();
        let d = inner.authorize_linked(device_id, token)?;
        if let Some(active) = &d.active_job {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "job_already_active",
                format!("job {active} is still running for this device"),
                json!({ "job_id": active }),
            ));
        }
        if d.classes.len() < 2 {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "too_few_classes",
                "personalization needs at least two classes",
                json!({ "classes": d.classes.len() }),
            ));
        }
        for class in &d.classes {
            let have = d.window_count(class);
            if have < examples_per_class {
                return Err(ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "insufficient_examples",
                    format!("class {class:?} has {have} windows; {examples_per_class} are required"),
                    json!({ "class": class, "have": have, "need": examples_per_class }),
                ));
            }
        }
        let input = JobInput {
            job_id: format!("j{}", inner.state.jobs.len() + 1),
            device_id: device_id.to_owned(),
            classes: ClassMap::new(&d.classes),
            windows: d.windows.clone(),
            examples_per_class,
            version: d.version() + 1,
        };
        inner.commit(Record::JobQueued {
            job_id: input.job_id.clone(),
            device_id: device_id.to_owned(),
            examples_per_class,
        })?;
        Ok(input)
    }

    pub fn job_started(&self, job_id: &str) -> Result<(), ApiError> {
        self.lock().commit(Record::JobStarted {
            job_id: job_id.to_owned(),
        })
    }

    /// Publishes `bytes` as the device's next version and completes the job
    /// in one log record, so pollers never observe one without the other.
    pub fn publish(&self, job_id: &str, version: u32, bytes: Vec<u8>, metrics: JobMetrics) -> Result<(), ApiError> {
        let mut inner = self.lock();
        let device_id = inner
            .state
            .jobs
            .get(job_id)
            .ok_or_else(|| ApiError::not_found("job", job_id))?
            .device_id
            .clone();
        let current = inner.state.devices[&device_id].version();
        if version != current + 1 {
            return Err(ApiError::internal(format!(
                "bundle version {version} does not follow {current}"
            )));
        }
        inner.commit(Record::JobSucceeded {
            job_id: job_id.to_owned(),
            metrics,
            version,
            bundle: B64.encode(bytes),
        })
    }

    pub fn job_failed(&self, job_id: &str, reason: String) -> Result<(), ApiError> {
        self.lock().commit(Record::JobFailed {
            job_id: job_id.to_owned(),
            reason,
        })
    }

    pub fn job(&self, job_id: &str) -> Result<JobView, ApiError> {
        self.lock()
            .state
            .jobs
            .get(job_id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("job", job_id))
    }

    /// The published bundle if it is newer than `have_version`.
    pub fn firmware(
        &self,
        device_id: &str,
        token: Option<&str>,
        have_version: u32,
    ) -> Result<Option<Firmware>, ApiError> {
        let inner = self.lock();
        let d = inner.authorize_linked(device_id, token)?;
        Ok(d.bundle
            .as_ref()
            .filter(|b| b.version > have_version)
            .map(|b| (b.version, Arc::clone(&b.bytes))))
    }

    pub fn record_inferences(
        &self,
        device_id: &str,
        token: Option<&str>,
        events: Vec<InferenceEvent>,
    ) -> Result<usize, ApiError> {
        if let Some(bad) = events.iter().position(|e| !e.is_valid()) {
            return Err(ApiError::bad_request(format!(
                "event {bad} is invalid (empty class or confidence outside [0, 1])"
            )));
        }
        let mut inner = self.lock();
        inner.authorize_linked(device_id, token)?;
        let n = events.len();
        if n > 0 {
            inner.commit(Record::InferencesRecorded {
                device_id: device_id.to_owned(),
                events,
            })?;
        }
        Ok(n)
    }

    /// Events with `from <= timestamp_ms <= to`, sorted by timestamp; events
    /// with equal timestamps keep arrival order.
    pub fn history(
        &self,
        device_id: &str,
        token: Option<&str>,
        from: Option<u64>,
        to: Option<u64>,
    ) -> Result<Vec<InferenceEvent>, ApiError> {
        let inner = self.lock();
        let d = inner.authorize_linked(device_id, token)?;
        let mut events: Vec<InferenceEvent> = d
            .history
            .iter()
            .filter(|e| from.is_none_or(|f| e.timestamp_ms >= f) && to.is_none_or(|t| e.timestamp_ms <= t))
            .cloned()
            .collect();
        events.sort_by_key(|e| e.timestamp_ms);
        Ok(events)
    }
}
