use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

/// Device time in milliseconds since the Unix epoch.
pub trait Clock: Send {
    fn now_ms(&self) -> u64;
    /// Blocks until device time reaches `ms`. Returns at once if it already has.
    fn wait_until(&mut self, ms: u64);
}

/// Wall clock running `scale` times faster than real time.
#[derive(Debug, Clone)]
pub struct RealClock {
    origin_ms: u64,
    start: Instant,
    scale: f64,
}

impl RealClock {
    pub fn new(scale: f64) -> Self {
        let origin_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Self {
            origin_ms,
            start: Instant::now(),
            scale,
        }
    }
}

impl Clock for RealClock {
    fn now_ms(&self) -> u64 {
        self.origin_ms + (self.start.elapsed().as_secs_f64() * 1e3 * self.scale) as u64
    }

    fn wait_until(&mut self, ms: u64) {
        let now = self.now_ms();
        if ms > now {
            std::thread::sleep(Duration::from_secs_f64((ms - now) as f64 / 1e3 / self.scale));
        }
    }
}

/// Clock that jumps forward instead of sleeping. Clones share the same time.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock {
    now: Arc<AtomicU64>,
}

impl VirtualClock {
    pub fn new(start_ms: u64) -> Self {
        Self {
            now: Arc::new(AtomicU64::new(start_ms)),
        }
    }

    pub fn advance(&self, ms: u64) {
        self.now.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }

    fn wait_until(&mut self, ms: u64) {
        self.now.fetch_max(ms, Ordering::SeqCst);
    }
}
