use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use tinyfit_core::{InferenceEvent, RecordingReceipt};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransportError {
    /// Connection refused, reset or timed out.
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("HTTP {status} {code}: {message}")]
    Status { status: u16, code: String, message: String },
    #[error("unexpected response: {0}")]
    Decode(String),
}

impl TransportError {
    /// Worth retrying later: the server was unreachable or failed internally.
    pub fn is_transient(&self) -> bool {
        match self {
            TransportError::Connection(_) => true,
            TransportError::Status { status, .. } => *status >= 500,
            TransportError::Decode(_) => false,
        }
    }
}

/// Everything the device says to the server.
pub trait DeviceApi: Send {
    fn health(&mut self) -> Result<(), TransportError>;
    /// Confirms the device id and token are accepted.
    fn check_device(&mut self) -> Result<(), TransportError>;
    /// `Some((version, bundle bytes))` when a version newer than `have` is published.
    fn poll_firmware(&mut self, have: u32) -> Result<Option<(u32, Vec<u8>)>, TransportError>;
    fn post_events(&mut self, events: &[InferenceEvent]) -> Result<(), TransportError>;
    /// Uploads raw samples as `[t, ax, ay, az, gx, gy, gz]` rows.
    fn upload_recording(
        &mut self,
        class_name: &str,
        rate_hz: f64,
        samples: &[[f64; 7]],
        idempotency_key: &str,
    ) -> Result<RecordingReceipt, TransportError>;
}

impl<A: DeviceApi + ?Sized> DeviceApi for Box<A> {
    fn health(&mut self) -> Result<(), TransportError> {
        (**self).health()
    }
    fn check_device(&mut self) -> Result<(), TransportError> {
        (**self).check_device()
    }
    fn poll_firmware(&mut self, have: u32) -> Result<Option<(u32, Vec<u8>)>, TransportError> {
        (**self).poll_firmware(have)
    }
    fn post_events(&mut self, events: &[InferenceEvent]) -> Result<(), TransportError> {
        (**self).post_events(events)
    }
    fn upload_recording(
        &mut self,
        class_name: &str,
        rate_hz: f64,
        samples: &[[f64; 7]],
        idempotency_key: &str,
    ) -> Result<RecordingReceipt, TransportError> {
        (**self).upload_recording(class_name, rate_hz, samples, idempotency_key)
    }
}

/// Client of the server's HTTP API.
pub struct HttpApi {
    base: String,
    device_id: String,
    token: String,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct ErrorBody {
    code: String,
    message: String,
}

type Response = ureq::http::Response<ureq::Body>;

impl HttpApi {
    pub fn new(base: impl Into<String>, device_id: impl Into<String>, token: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Self {
            base: base.into().trim_end_matches('/').to_owned(),
            device_id: device_id.into(),
            token: token.into(),
            agent,
        }
    }

    fn device_url(&self, rest: &str) -> String {
        format!("{}/api/devices/{}{rest}", self.base, self.device_id)
    }

    fn auth(&self) -> String {
        format!("Bearer {}", self.token)
    }

    fn check(result: Result<Response, ureq::Error>) -> Result<Response, TransportError> {
        let mut r = result.map_err(|e| TransportError::Connection(e.to_string()))?;
        let status = r.status().as_u16();
        if status < 400 {
            return Ok(r);
        }
        let text = r.body_mut().read_to_string().unwrap_or_default();
        let (code, message) = match serde_json::from_str::<ErrorBody>(&text) {
            Ok(b) => (b.code, b.message),
            Err(_) => (String::new(), text),
        };
        Err(TransportError::Status { status, code, message })
    }

    fn json<T: serde::de::DeserializeOwned>(mut r: Response) -> Result<T, TransportError> {
        r.body_mut()
            .read_json()
            .map_err(|e| TransportError::Decode(e.to_string()))
    }
}

impl DeviceApi for HttpApi {
    fn health(&mut self) -> Result<(), TransportError> {
        Self::check(self.agent.get(format!("{}/api/health", self.base)).call()).map(drop)
    }

    fn check_device(&mut self) -> Result<(), TransportError> {
        let r = self
            .agent
            .get(self.device_url(""))
            .header("Authorization", self.auth())
            .call();
        Self::check(r).map(drop)
    }

    fn poll_firmware(&mut self, have: u32) -> Result<Option<(u32, Vec<u8>)>, TransportError> {
        let r = self
            .agent
            .get(self.device_url(&format!("/firmware?have_version={have}")))
            .header("Authorization", self.auth())
            .call();
        let mut r = Self::check(r)?;
        if r.status().as_u16() == 204 {
            return Ok(None);
        }
        let version = r
            .headers()
            .get("x-bundle-version")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| TransportError::Decode("missing X-Bundle-Version header".into()))?;
        let bytes = r
            .body_mut()
            .read_to_vec()
            .map_err(|e| TransportError::Connection(e.to_string()))?;
        Ok(Some((version, bytes)))
    }

    fn post_events(&mut self, events: &[InferenceEvent]) -> Result<(), TransportError> {
        let r = self
            .agent
            .post(self.device_url("/inferences"))
            .header("Authorization", self.auth())
            .send_json(json!({ "events": events }));
        Self::check(r).map(drop)
    }

    fn upload_recording(
        &mut self,
        class_name: &str,
        rate_hz: f64,
        samples: &[[f64; 7]],
        idempotency_key: &str,
    ) -> Result<RecordingReceipt, TransportError> {
        let r = self
            .agent
            .post(self.device_url("/recordings"))
            .header("Authorization", self.auth())
            .header("Idempotency-Key", idempotency_key)
            .send_json(json!({ "class_name": class_name, "rate_hz": rate_hz, "samples": samples }));
        Self::json(Self::check(r)?)
    }
}

/// One request the device made, as seen by [`RecordingApi`].
#[derive(Debug, Clone, PartialEq)]
pub enum Traffic {
    Health,
    CheckDevice,
    FirmwarePoll { have: u32 },
    Events { count: usize },
    Upload { class_name: String, samples: usize },
}

impl Traffic {
    /// True for requests that carry raw sensor samples.
    pub fn carries_raw_samples(&self) -> bool {
        matches!(self, Traffic::Upload { .. })
    }
}

/// Passes every call through to `inner` and keeps a shared log of what was
/// sent, whether or not it succeeded.
pub struct RecordingApi<A> {
    inner: A,
    log: Arc<Mutex<Vec<Traffic>>>,
}

impl<A: DeviceApi> RecordingApi<A> {
    pub fn new(inner: A) -> Self {
        Self::with_log(inner, Arc::default())
    }

    /// Appends to an existing log, so several clients can share one record.
    pub fn with_log(inner: A, log: Arc<Mutex<Vec<Traffic>>>) -> Self {
        Self { inner, log }
    }

    /// Handle to the log that stays valid after the api moves into a device.
    pub fn traffic(&self) -> Arc<Mutex<Vec<Traffic>>> {
        Arc::clone(&self.log)
    }

    fn push(&self, t: Traffic) {
        self.log.lock().expect("traffic log poisoned").push(t);
    }
}

impl<A: DeviceApi> DeviceApi for RecordingApi<A> {
    fn health(&mut self) -> Result<(), TransportError> {
        self.push(Traffic::Health);
        self.inner.health()
    }

    fn check_device(&mut self) -> Result<(), TransportError> {
        self.push(Traffic::CheckDevice);
        self.inner.check_device()
    }

    fn poll_firmware(&mut self, have: u32) -> Result<Option<(u32, Vec<u8>)>, TransportError> {
        self.push(Traffic::FirmwarePoll { have });
        self.inner.poll_firmware(have)
    }

    fn post_events(&mut self, events: &[InferenceEvent]) -> Result<(), TransportError> {
        self.push(Traffic::Events { count: events.len() });
        self.inner.post_events(events)
    }

    fn upload_recording(
        &mut self,
        class_name: &str,
        rate_hz: f64,
        samples: &[[f64; 7]],
        idempotency_key: &str,
    ) -> Result<RecordingReceipt, TransportError> {
        self.push(Traffic::Upload {
            class_name: class_name.to_owned(),
            samples: samples.len(),
        });
        self.inner
            .upload_recording(class_name, rate_hz, samples, idempotency_key)
    }
}
