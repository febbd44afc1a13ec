use serde::{Deserialize, Serialize};

/// One on-device prediction as reported to the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceEvent {
    /// Wall-clock (or virtual) time in milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
    pub class_name: String,
    pub confidence: f32,
    pub model_version: u32,
}

impl InferenceEvent {
    pub fn is_valid(&self) -> bool {
        !self.class_name.is_empty() && self.confidence.is_finite() && (0.0..=1.0).contains(&self.confidence)
    }
}

/// Server acknowledgement of one uploaded recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingReceipt {
    pub recording_id: String,
    pub class_name: String,
    pub window_count: usize,
}
