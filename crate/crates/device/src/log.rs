use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use tinyfit_core::InferenceEvent;

/// One line of the device event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEntry {
    Started {
        timestamp_ms: u64,
        device_id: String,
        model_version: u32,
    },
    Inference(InferenceEvent),
    ModelSwapped {
        timestamp_ms: u64,
        from: u32,
        to: u32,
    },
    BundleRejected {
        timestamp_ms: u64,
        version: u32,
        reason: String,
    },
    PollFailed {
        timestamp_ms: u64,
        reason: String,
    },
    UploadFailed {
        timestamp_ms: u64,
        pending: usize,
        reason: String,
    },
    EventsDropped {
        timestamp_ms: u64,
        count: usize,
    },
    Stopped {
        timestamp_ms: u64,
        samples: u64,
        windows: u64,
    },
}

enum Sink {
    Discard,
    File(BufWriter<File>),
    Memory(Arc<Mutex<Vec<LogEntry>>>),
}

/// JSON-lines event log.
pub struct EventLog {
    sink: Sink,
}

impl EventLog {
    pub fn discard() -> Self {
        Self { sink: Sink::Discard }
    }

    pub fn create(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self {
            sink: Sink::File(BufWriter::new(File::create(path)?)),
        })
    }

    /// Keeps entries in memory; the handle observes them as they are written.
    pub fn memory() -> (Self, Arc<Mutex<Vec<LogEntry>>>) {
        let entries = Arc::default();
        (
            Self {
                sink: Sink::Memory(Arc::clone(&entries)),
            },
            entries,
        )
    }

    pub fn write(&mut self, entry: LogEntry) -> std::io::Result<()> {
        match &mut self.sink {
            Sink::Discard => Ok(()),
            Sink::File(w) => {
                serde_json::to_writer(&mut *w, &entry)?;
                w.write_all(b"\n")
            }
            Sink::Memory(m) => {
                m.lock().expect("event log poisoned").push(entry);
                Ok(())
            }
        }
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        match &mut self.sink {
            Sink::File(w) => w.flush(),
            _ => Ok(()),
        }
    }
}
