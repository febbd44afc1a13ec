mod common;

use std::sync::{Arc, Mutex};

use common::{bundle, raw_windows, FakeApi};
use tinyfit_core::signal::window_count;
use tinyfit_core::InferenceEvent;
use tinyfit_device::{
    record_mode, Clock, Device, DeviceConfig, DeviceError, EventLog, HttpApi, LogEntry, RecordingApi, SourceConfig,
    SyntheticSource, Traffic, TwinSource, VirtualClock,
};

const START_MS: u64 = 1_700_000_000_000;

fn config(dir: &std::path::Path, initial: Option<u32>) -> DeviceConfig {
    let mut c = DeviceConfig::new(
        "d1",
        "token",
        SourceConfig::Synthetic {
            seed: 5,
            subject: 0,
            class: None,
            segment_seconds: 30.0,
        },
    );
    c.poll_interval_s = 10.0;
    if let Some(v) = initial {
        let path = dir.join(format!("v{v}.tbnd"));
        std::fs::write(&path, bundle(v)).unwrap();
        c.initial_bundle = Some(path);
    }
    c
}

type Entries = Arc<Mutex<Vec<LogEntry>>>;

fn start(config: DeviceConfig, api: FakeApi) -> (Device<FakeApi, VirtualClock>, Entries) {
    let (log, entries) = EventLog::memory();
    let source = Box::new(SyntheticSource::new(5, 0, None, 30.0).unwrap());
    let device = Device::start(config, api, VirtualClock::new(START_MS), source, log).unwrap();
    (device, entries)
}

fn inferences(entries: &Entries) -> Vec<InferenceEvent> {
    entries
        .lock()
        .unwrap()
        .iter()
        .filter_map(|e| match e {
            LogEntry::Inference(ev) => Some(ev.clone()),
            _ => None,
        })
        .collect()
}

#[test]
fn one_hundred_fifty_samples_give_four_events() {
    let dir = tempfile::tempdir().unwrap();
    let api = FakeApi::default();
    let mut cfg = config(dir.path(), Some(1));
    cfg.max_samples = Some(150);
    let (mut device, entries) = start(cfg, api.clone());
    let summary = device.run().unwrap();
    assert_eq!(summary.samples, 150);
    assert_eq!(summary.windows, window_count(150) as u64);
    assert_eq!(summary.inferences, 4);
    assert_eq!(inferences(&entries).len(), 4);
    let sent = api.with(|s| s.events.clone());
    assert_eq!(sent, inferences(&entries));
    assert!(sent.iter().all(|e| e.model_version == 1 && e.is_valid()));
    // windows complete at samples 60, 90, 120, 150
    let ts: Vec<u64> = sent.iter().map(|e| e.timestamp_ms - START_MS).collect();
    assert_eq!(ts, vec![2950, 4450, 5950, 7450]);
}

#[test]
fn replayed_twin_windows_infer_once_each() {
    // One recording: its windows chain, so the replayed stream is the recording.
    let windows: Vec<_> = raw_windows()
        .into_iter()
        .filter(|w| w.subject_id == "1" && w.label() == Some("jogging"))
        .collect();
    assert_eq!(windows.len(), 7);
    let mut engine = tinyfit_core::Engine::default();
    engine.load(&bundle(1)).unwrap();
    let expected: Vec<String> = windows
        .iter()
        .map(|w| engine.infer(w.rows()).unwrap().class_name.to_string())
        .collect();

    let dir = tempfile::tempdir().unwrap();
    let (log, entries) = EventLog::memory();
    let source = Box::new(TwinSource::from_windows(&windows));
    let mut device = Device::start(
        config(dir.path(), Some(1)),
        FakeApi::default(),
        VirtualClock::new(0),
        source,
        log,
    )
    .unwrap();
    device.run().unwrap();
    let got: Vec<String> = inferences(&entries).into_iter().map(|e| e.class_name).collect();
    assert_eq!(got, expected);
}

#[test]
fn back_to_back_recordings_stream_continuously() {
    // Two unrelated recordings replay as one stream, so windows straddle the seam.
    let windows: Vec<_> = raw_windows().into_iter().filter(|w| w.subject_id == "1").collect();
    let dir = tempfile::tempdir().unwrap();
    let (log, entries) = EventLog::memory();
    let source = Box::new(TwinSource::from_windows(&windows));
    let mut device = Device::start(
        config(dir.path(), Some(1)),
        FakeApi::default(),
        VirtualClock::new(0),
        source,
        log,
    )
    .unwrap();
    let summary = device.run().unwrap();
    // 7 recordings of 240 samples
    assert_eq!(summary.samples, 7 * 240);
    assert_eq!(inferences(&entries).len(), window_count(7 * 240));
}

#[test]
fn version_bump_mid_run_is_gapless() {
    let dir = tempfile::tempdir().unwrap();
    let api = FakeApi::default();
    let (mut device, entries) = start(config(dir.path(), Some(1)), api.clone());
    for i in 0..1200 {
        if i == 437 {
            api.with(|s| s.published = Some((2, bundle(2))));
        }
        assert!(device.step().unwrap());
    }
    let events = inferences(&entries);
    assert_eq!(events.len(), window_count(1200));
    for pair in events.windows(2) {
        assert_eq!(pair[1].timestamp_ms - pair[0].timestamp_ms, 1500);
        assert!(pair[1].model_version >= pair[0].model_version);
    }
    assert_eq!(events[0].model_version, 1);
    assert_eq!(events.last().unwrap().model_version, 2);
    assert_eq!(device.summary().swaps, 1);
    let swaps: Vec<_> = entries
        .lock()
        .unwrap()
        .iter()
        .filter(|e| matches!(e, LogEntry::ModelSwapped { from: 1, to: 2, .. }))
        .cloned()
        .collect();
    assert_eq!(swaps.len(), 1);
}

#[test]
fn first_bundle_arrives_over_the_air() {
    let dir = tempfile::tempdir().unwrap();
    let api = FakeApi::default();
    let (mut device, entries) = start(config(dir.path(), None), api.clone());
    assert_eq!(device.version(), 0);
    for _ in 0..300 {
        device.step().unwrap();
    }
    assert_eq!(device.summary().skipped_windows, 9);
    api.with(|s| s.published = Some((1, bundle(1))));
    for _ in 0..300 {
        device.step().unwrap();
    }
    assert_eq!(device.version(), 1);
    let events = inferences(&entries);
    assert!(!events.is_empty());
    assert_eq!(
        events.len() as u64 + device.summary().skipped_windows,
        window_count(600) as u64
    );
}

#[test]
fn corrupted_bundle_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let api = FakeApi::default();
    let (mut device, entries) = start(config(dir.path(), Some(1)), api.clone());
    let mut bad = bundle(2);
    bad[40] ^= 0x10;
    api.with(|s| s.published = Some((2, bad)));
    for _ in 0..600 {
        device.step().unwrap();
    }
    assert_eq!(device.version(), 1);
    assert!(device.summary().rejected_bundles >= 1);
    assert!(inferences(&entries).iter().all(|e| e.model_version == 1));
    let reason = entries.lock().unwrap().iter().find_map(|e| match e {
        LogEntry::BundleRejected { version: 2, reason, .. } => Some(reason.clone()),
        _ => None,
    });
    assert!(reason.unwrap().contains("checksum mismatch"));

    // A bundle whose header disagrees with the offered version is refused too.
    api.with(|s| s.published = Some((3, bundle(2))));
    for _ in 0..300 {
        device.step().unwrap();
    }
    assert_eq!(device.version(), 1);
}

#[test]
fn only_events_and_polls_leave_the_device() {
    let dir = tempfile::tempdir().unwrap();
    let fake = FakeApi::default();
    let api = RecordingApi::new(fake.clone());
    let traffic = api.traffic();
    let (log, _) = EventLog::memory();
    let source = Box::new(SyntheticSource::new(5, 0, None, 30.0).unwrap());
    let mut device = Device::start(config(dir.path(), None), api, VirtualClock::new(0), source, log).unwrap();
    fake.with(|s| s.published = Some((1, bundle(1))));
    for _ in 0..20 * 600 {
        device.step().unwrap();
    }
    let traffic = traffic.lock().unwrap();
    assert!(!traffic.iter().any(Traffic::carries_raw_samples));
    assert!(traffic.iter().all(|t| matches!(
        t,
        Traffic::Health | Traffic::CheckDevice | Traffic::FirmwarePoll { .. } | Traffic::Events { .. }
    )));
    // ten minutes of wear at a 10 s poll interval
    let polls = traffic
        .iter()
        .filter(|t| matches!(t, Traffic::FirmwarePoll { .. }))
        .count();
    assert!((60..=62).contains(&polls), "{polls}");
}

#[test]
fn outage_buffers_then_delivers_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let api = FakeApi::default();
    let (mut device, entries) = start(config(dir.path(), Some(1)), api.clone());
    for _ in 0..200 {
        device.step().unwrap();
    }
    api.with(|s| s.down = true);
    for _ in 0..2000 {
        device.step().unwrap();
    }
    assert!(device.pending_events() > 50);
    api.with(|s| s.down = false);
    for _ in 0..2000 {
        device.step().unwrap();
    }
    assert_eq!(device.pending_events(), 0);
    let sent = api.with(|s| s.events.clone());
    assert_eq!(sent, inferences(&entries));
    assert_eq!(device.summary().events_dropped, 0);
    assert!(entries
        .lock()
        .unwrap()
        .iter()
        .any(|e| matches!(e, LogEntry::UploadFailed { .. })));
}

#[test]
fn full_buffer_drops_oldest() {
    let dir = tempfile::tempdir().unwrap();
    let api = FakeApi::default();
    let mut cfg = config(dir.path(), Some(1));
    cfg.event_capacity = 5;
    let (mut device, entries) = start(cfg, api.clone());
    api.with(|s| s.down = true);
    for _ in 0..60 + 30 * 9 {
        device.step().unwrap();
    }
    assert_eq!(device.pending_events(), 5);
    assert_eq!(device.summary().events_dropped, 5);
    api.with(|s| s.down = false);
    device.run_until_flushed();
    // Whatever was delivered is the newest run of events, in order.
    let all = inferences(&entries);
    let sent = api.with(|s| s.events.clone());
    assert_eq!(sent, all[all.len() - sent.len()..].to_vec());
    assert_eq!(sent.len() as u64 + device.summary().events_dropped, all.len() as u64);
}

trait FlushExt {
    fn run_until_flushed(&mut self);
}

impl FlushExt for Device<FakeApi, VirtualClock> {
    fn run_until_flushed(&mut self) {
        let limit = self.summary().samples + 20 * 120;
        while self.pending_events() > 0 && self.summary().samples < limit {
            self.step().unwrap();
        }
        // The next window's event is appended after the backlog.
        assert_eq!(self.pending_events(), 0);
    }
}

#[test]
fn event_log_is_reproducible() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let api = FakeApi::default();
        let (mut device, entries) = start(config(dir.path(), Some(1)), api.clone());
        for i in 0..3000 {
            if i == 1000 {
                api.with(|s| s.published = Some((2, bundle(2))));
            }
            device.step().unwrap();
        }
        let e = entries.lock().unwrap().clone();
        e
    };
    assert_eq!(run(), run());
}

#[test]
fn down_server_fails_startup() {
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let mut cfg = config(std::path::Path::new("."), None);
    cfg.server = format!("http://127.0.0.1:{port}");
    match Device::connect(cfg) {
        Err(DeviceError::Unreachable { url, .. }) => assert!(url.ends_with(&port.to_string())),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("connected to a closed port"),
    }
    let api = FakeApi::default();
    api.with(|s| s.down = true);
    let (log, _) = EventLog::memory();
    let source = Box::new(SyntheticSource::new(0, 0, None, 30.0).unwrap());
    let r = Device::start(
        config(std::path::Path::new("."), None),
        api,
        VirtualClock::new(0),
        source,
        log,
    );
    assert!(matches!(r, Err(DeviceError::Unreachable { .. })));
}

#[test]
fn record_mode_retries_under_one_key() {
    let api = FakeApi::default();
    api.with(|s| s.failing_uploads = 2);
    let mut clock = VirtualClock::new(0);
    let mut source = SyntheticSource::new(1, 0, Some("cycling"), 30.0).unwrap();
    let receipt = record_mode(&mut api.clone(), &mut clock, &mut source, "cycling", 30.0).unwrap();
    assert_eq!(receipt.window_count, 19);
    api.with(|s| {
        assert_eq!(s.uploads, vec![("cycling".to_owned(), 600)]);
        assert_eq!(s.upload_keys.len(), 3);
        assert!(s.upload_keys.iter().all(|k| *k == s.upload_keys[0]));
    });
    // 30 s of capture plus 0.5 s and 1 s of backoff
    assert_eq!(clock.now_ms(), 29_950 + 1_500);

    let err = record_mode(&mut api.clone(), &mut clock, &mut source, "cycling", 2.9).unwrap_err();
    assert!(matches!(err, DeviceError::TooShort { .. }));
    api.with(|s| s.failing_uploads = 100);
    assert!(matches!(
        record_mode(&mut api.clone(), &mut clock, &mut source, "cycling", 3.0),
        Err(DeviceError::Transport(_))
    ));
}

#[test]
fn record_mode_against_the_server() {
    let dir = tempfile::tempdir().unwrap();
    let server = tinyfit_server::BackgroundServer::spawn(tinyfit_server::ServerConfig {
        bind: "127.0.0.1:0".parse().unwrap(),
        data_dir: dir.path().to_owned(),
        fsync: false,
        ..Default::default()
    })
    .unwrap();
    let agent = ureq_agent();
    let base = server.base_url();
    let user: serde_json::Value = post(
        &agent,
        &format!("{base}/api/users"),
        None,
        serde_json::json!({ "name": "ada" }),
    );
    let reg: serde_json::Value = post(&agent, &format!("{base}/api/devices"), None, serde_json::json!({}));
    let id = reg["device_id"].as_str().unwrap();
    let token = reg["token"].as_str().unwrap();

    let mut http = HttpApi::new(&base, id, "wrong-token");
    let (log, _) = EventLog::memory();
    let mut cfg = config(dir.path(), None);
    cfg.device_id = id.into();
    let source = Box::new(SyntheticSource::new(0, 0, None, 30.0).unwrap());
    let r = Device::start(
        cfg,
        HttpApi::new(&base, id, "wrong-token"),
        VirtualClock::new(0),
        source,
        log,
    );
    assert!(matches!(r, Err(DeviceError::Rejected(_))));

    let mut clock = VirtualClock::new(0);
    let mut source = SyntheticSource::new(1, 0, Some("walking"), 30.0).unwrap();
    let err = record_mode(&mut http, &mut clock, &mut source, "walking", 30.0).unwrap_err();
    assert!(
        matches!(err, DeviceError::Transport(ref e) if !e.is_transient()),
        "{err}"
    );

    let _: serde_json::Value = post(
        &agent,
        &format!("{base}/api/devices/{id}/link"),
        Some(token),
        serde_json::json!({ "user_id": user["user_id"] }),
    );
    let mut http = HttpApi::new(&base, id, token);
    let receipt = record_mode(&mut http, &mut clock, &mut source, "walking", 30.0).unwrap();
    assert_eq!(receipt.window_count, 19);
    assert_eq!(receipt.class_name, "walking");
}

fn ureq_agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

fn post(agent: &ureq::Agent, url: &str, token: Option<&str>, body: serde_json::Value) -> serde_json::Value {
    let mut req = agent.post(url);
    if let Some(t) = token {
        req = req.header("Authorization", format!("Bearer {t}"));
    }
    req.send_json(body).unwrap().body_mut().read_json().unwrap()
}
