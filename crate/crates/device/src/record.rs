use tinyfit_core::signal::TARGET_RATE_HZ;
use tinyfit_core::RecordingReceipt;
use tracing::warn;

use crate::api::DeviceApi;
use crate::clock::Clock;
use crate::error::{DeviceError, Result};
use crate::source::SampleSource;

/// Shortest capture that still yields one window.
pub const MIN_RECORD_SECONDS: f64 = 3.0;

const ATTEMPTS: u32 = 6;
const FIRST_BACKOFF_MS: u64 = 500;

/// Captures `seconds` of the stream and uploads it labeled `class_name`.
/// Transient upload failures are retried with exponential backoff under one
/// idempotency key, so the server stores the recording at most once.
pub fn record_mode<A: DeviceApi + ?Sized, C: Clock + ?Sized>(
    api: &mut A,
    clock: &mut C,
    source: &mut dyn SampleSource,
    class_name: &str,
    seconds: f64,
) -> Result<RecordingReceipt> {
    if !(seconds.is_finite() && seconds >= MIN_RECORD_SECONDS) {
        return Err(DeviceError::TooShort {
            seconds,
            min: MIN_RECORD_SECONDS,
        });
    }
    let needed = (seconds * TARGET_RATE_HZ).round() as usize;
    let start = clock.now_ms();
    let mut samples = Vec::with_capacity(needed);
    for i in 0..needed {
        let t = i as f64 / TARGET_RATE_HZ;
        clock.wait_until(start + (t * 1e3).round() as u64);
        let Some(v) = source.next_sample() else {
            return Err(DeviceError::SourceExhausted { got: i, needed });
        };
        samples.push([
            t,
            v[0] as f64,
            v[1] as f64,
            v[2] as f64,
            v[3] as f64,
            v[4] as f64,
            v[5] as f64,
        ]);
    }

    let key = format!("rec-{start}-{class_name}-{needed}");
    let mut backoff = FIRST_BACKOFF_MS;
    let mut attempt = 1;
    loop {
        match api.upload_recording(class_name, TARGET_RATE_HZ, &samples, &key) {
            Ok(receipt) => return Ok(receipt),
            Err(e) if e.is_transient() && attempt < ATTEMPTS => {
                warn!(error = %e, attempt, "recording upload failed, retrying");
                let now = clock.now_ms();
                clock.wait_until(now + backoff);
                backoff *= 2;
                attempt += 1;
            }
            Err(e) => return Err(e.into()),
        }
    }
}
