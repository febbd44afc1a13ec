use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use tinyfit_core::signal::{WindowRows, CHANNELS, TARGET_RATE_HZ, WINDOW_LEN, WINDOW_STRIDE};
use tinyfit_core::{Engine, InferenceEvent, ModelBundle};
use tracing::{debug, info, warn};

use crate::api::{DeviceApi, TransportError};
use crate::clock::Clock;
use crate::config::DeviceConfig;
use crate::error::{DeviceError, Result};
use crate::log::{EventLog, LogEntry};
use crate::source::SampleSource;

/// Undelivered events kept before the oldest are dropped.
pub const DEFAULT_EVENT_CAPACITY: usize = 10_000;

const SAMPLE_PERIOD_MS: f64 = 1e3 / TARGET_RATE_HZ;
const MAX_BATCH: usize = 500;
const FIRST_BACKOFF_MS: u64 = 1_000;
const MAX_BACKOFF_MS: u64 = 60_000;

/// Counters of one run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub samples: u64,
    pub windows: u64,
    pub inferences: u64,
    /// Windows that arrived while no model was loaded.
    pub skipped_windows: u64,
    pub events_sent: u64,
    pub events_dropped: u64,
    pub swaps: u64,
    pub rejected_bundles: u64,
    pub model_version: u32,
}

/// Stops a running device after its current sample.
#[derive(Debug, Clone, Default)]
pub struct StopHandle(Arc<AtomicBool>);

impl StopHandle {
    pub fn stop(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_stopped(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

/// The simulated wristband.
pub struct Device<A, C> {
    config: DeviceConfig,
    api: A,
    clock: C,
    source: Box<dyn SampleSource>,
    engine: Engine,
    log: EventLog,
    stop: StopHandle,
    ring: WindowRows,
    head: usize,
    window: WindowRows,
    start_ms: u64,
    pending: VecDeque<InferenceEvent>,
    next_poll_ms: u64,
    next_flush_ms: u64,
    backoff_ms: u64,
    summary: RunSummary,
}

impl<A: DeviceApi, C: Clock> Device<A, C> {
    /// Checks the server is reachable and accepts the device, loads the
    /// initial bundle if configured, and polls once for a newer one.
    pub fn start(
        config: DeviceConfig,
        mut api: A,
        clock: C,
        source: Box<dyn SampleSource>,
        log: EventLog,
    ) -> Result<Self> {
        config.validate()?;
        api.health().map_err(|e| DeviceError::Unreachable {
            url: config.server.clone(),
            reason: e.to_string(),
        })?;
        api.check_device().map_err(|e| match e {
            TransportError::Connection(reason) => DeviceError::Unreachable {
                url: config.server.clone(),
                reason,
            },
            other => DeviceError::Rejected(other),
        })?;
        let mut engine = Engine::new(config.arena_bytes)?;
        if let Some(path) = &config.initial_bundle {
            let bytes = std::fs::read(path).map_err(|source| DeviceError::Read {
                path: path.clone(),
                source,
            })?;
            engine.load(&bytes)?;
        }
        let start_ms = clock.now_ms();
        let mut device = Self {
            api,
            clock,
            source,
            engine,
            log,
            stop: StopHandle::default(),
            ring: [[0.0; CHANNELS]; WINDOW_LEN],
            head: 0,
            window: [[0.0; CHANNELS]; WINDOW_LEN],
            start_ms,
            pending: VecDeque::new(),
            next_poll_ms: start_ms,
            next_flush_ms: start_ms,
            backoff_ms: FIRST_BACKOFF_MS,
            summary: RunSummary::default(),
            config,
        };
        device.summary.model_version = device.version();
        device.poll()?;
        device.log.write(LogEntry::Started {
            timestamp_ms: start_ms,
            device_id: device.config.device_id.clone(),
            model_version: device.version(),
        })?;
        info!(device = %device.config.device_id, version = device.version(), "device started");
        Ok(device)
    }

    pub fn stop_handle(&self) -> StopHandle {
        self.stop.clone()
    }

    pub fn summary(&self) -> &RunSummary {
        &self.summary
    }

    /// Version of the running model, 0 when none is loaded.
    pub fn version(&self) -> u32 {
        self.engine.model_version().unwrap_or(0)
    }

    pub fn pending_events(&self) -> usize {
        self.pending.len()
    }

    /// Streams until the source ends, `max_samples` is reached or the device
    /// is stopped, then makes one last attempt to deliver pending events.
    pub fn run(&mut self) -> Result<RunSummary> {
        let limit = self.config.max_samples.unwrap_or(u64::MAX);
        while !self.stop.is_stopped() && self.summary.samples < limit {
            if !self.step()? {
                break;
            }
        }
        self.flush(true)?;
        self.log.write(LogEntry::Stopped {
            timestamp_ms: self.clock.now_ms(),
            samples: self.summary.samples,
            windows: self.summary.windows,
        })?;
        self.log.flush()?;
        Ok(self.summary.clone())
    }

    /// Consumes one sample. Returns false when the source has ended.
    pub fn step(&mut self) -> Result<bool> {
        let Some(sample) = self.source.next_sample() else {
            return Ok(false);
        };
        let due = self.start_ms + (self.summary.samples as f64 * SAMPLE_PERIOD_MS).round() as u64;
        self.clock.wait_until(due);
        self.ring[self.head] = sample;
        self.head = (self.head + 1) % WINDOW_LEN;
        self.summary.samples += 1;

        let n = self.summary.samples as usize;
        if n >= WINDOW_LEN && (n - WINDOW_LEN).is_multiple_of(WINDOW_STRIDE) {
            self.summary.windows += 1;
            self.infer()?;
        }
        self.flush(false)?;
        if self.clock.now_ms() >= self.next_poll_ms {
            self.poll()?;
        }
        Ok(true)
    }

    fn infer(&mut self) -> Result<()> {
        // Oldest sample first: the ring head is the next slot to overwrite.
        let (newer, older) = self.ring.split_at(self.head);
        self.window[..older.len()].copy_from_slice(older);
        self.window[older.len()..].copy_from_slice(newer);
        if !self.engine.is_loaded() {
            self.summary.skipped_windows += 1;
            return Ok(());
        }
        let r = self.engine.infer(&self.window)?;
        let event = InferenceEvent {
            timestamp_ms: self.clock.now_ms(),
            class_name: r.class_name.to_string(),
            confidence: r.confidence,
            model_version: r.model_version,
        };
        self.summary.inferences += 1;
        self.log.write(LogEntry::Inference(event.clone()))?;
        if self.pending.len() == self.config.event_capacity {
            self.pending.pop_front();
            self.summary.events_dropped += 1;
            self.log.write(LogEntry::EventsDropped {
                timestamp_ms: event.timestamp_ms,
                count: 1,
            })?;
        }
        self.pending.push_back(event);
        Ok(())
    }

    /// Sends pending events in order. Transient failures keep them buffered
    /// and back off; events the server refuses outright are discarded.
    fn flush(&mut self, force: bool) -> Result<()> {
        let now = self.clock.now_ms();
        if self.pending.is_empty() || (!force && now < self.next_flush_ms) {
            return Ok(());
        }
        while !self.pending.is_empty() {
            let n = self.pending.len().min(MAX_BATCH);
            let batch = &self.pending.make_contiguous()[..n];
            match self.api.post_events(batch) {
                Ok(()) => {
                    self.pending.drain(..n);
                    self.summary.events_sent += n as u64;
                    self.backoff_ms = FIRST_BACKOFF_MS;
                    self.next_flush_ms = now;
                }
                Err(e) if e.is_transient() => {
                    debug!(error = %e, pending = self.pending.len(), "event upload failed");
                    self.log.write(LogEntry::UploadFailed {
                        timestamp_ms: now,
                        pending: self.pending.len(),
                        reason: e.to_string(),
                    })?;
                    self.next_flush_ms = now + self.backoff_ms;
                    self.backoff_ms = (self.backoff_ms * 2).min(MAX_BACKOFF_MS);
                    return Ok(());
                }
                Err(e) => {
                    warn!(error = %e, count = n, "server refused events");
                    self.pending.drain(..n);
                    self.summary.events_dropped += n as u64;
                    self.log.write(LogEntry::EventsDropped {
                        timestamp_ms: now,
                        count: n,
                    })?;
                }
            }
        }
        Ok(())
    }

    /// Asks for a newer bundle and swaps it in if it verifies. A bundle that
    /// fails verification leaves the running model untouched.
    fn poll(&mut self) -> Result<()> {
        let now = self.clock.now_ms();
        self.next_poll_ms = now + self.config.poll_interval_ms();
        let have = self.version();
        let (version, bytes) = match self.api.poll_firmware(have) {
            Ok(Some(update)) => update,
            Ok(None) => return Ok(()),
            Err(e) => {
                debug!(error = %e, "firmware poll failed");
                self.log.write(LogEntry::PollFailed {
                    timestamp_ms: now,
                    reason: e.to_string(),
                })?;
                return Ok(());
            }
        };
        if version <= have {
            return Ok(());
        }
        let verdict = match ModelBundle::deserialize(&bytes) {
            Err(e) => Err(e.to_string()),
            Ok(b) if b.version != version => Err(format!(
                "bundle says version {} but was offered as {version}",
                b.version
            )),
            Ok(_) => self.engine.load(&bytes).map_err(|e| e.to_string()),
        };
        match verdict {
            Ok(()) => {
                info!(from = have, to = version, "model swapped");
                self.summary.swaps += 1;
                self.summary.model_version = version;
                self.log.write(LogEntry::ModelSwapped {
                    timestamp_ms: now,
                    from: have,
                    to: version,
                })?;
            }
            Err(reason) => {
                warn!(version, %reason, "bundle rejected");
                self.summary.rejected_bundles += 1;
                self.log.write(LogEntry::BundleRejected {
                    timestamp_ms: now,
                    version,
                    reason,
                })?;
            }
        }
        Ok(())
    }
}

impl Device<crate::api::HttpApi, crate::clock::RealClock> {
    /// Device talking HTTP to `config.server` on a wall clock sped up by
    /// `config.time_scale`, logging to `config.event_log`.
    pub fn connect(config: DeviceConfig) -> Result<Self> {
        config.validate()?;
        let api = crate::api::HttpApi::new(&config.server, &config.device_id, &config.token);
        let clock = crate::clock::RealClock::new(config.time_scale);
        let source = crate::source::open_source(&config.source)?;
        let log = match &config.event_log {
            Some(path) => EventLog::create(path)?,
            None => EventLog::discard(),
        };
        Self::start(config, api, clock, source, log)
    }
}
