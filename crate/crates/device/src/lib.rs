//! Software stand-in for the wristband.
//!
//! The device runs one synchronous loop over a paced sample stream: a
//! 60-sample ring feeds a window to the integer runtime every 30 samples,
//! predictions are reported to the server, and the server is polled for newer
//! bundles which are verified before being swapped in between two samples.

mod api;
mod clock;
mod config;
mod device;
mod error;
mod log;
mod record;
mod source;

pub use api::{DeviceApi, HttpApi, RecordingApi, Traffic, TransportError};
pub use clock::{Clock, RealClock, VirtualClock};
pub use config::{DeviceConfig, SourceConfig};
pub use device::{Device, RunSummary, StopHandle, DEFAULT_EVENT_CAPACITY};
pub use error::{DeviceError, Result};
pub use log::{EventLog, LogEntry};
pub use record::{record_mode, MIN_RECORD_SECONDS};
pub use source::{open_source, CsvSource, SampleSource, SyntheticSource, TwinSource};
