#![allow(dead_code)]

use std::path::Path;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use tinyfit_core::nn::{init_model, Checkpoint};
use tinyfit_core::signal::ChannelStats;
use tinyfit_core::ClassMap;
use tinyfit_server::{BackgroundServer, JobView, ServerConfig};

pub struct Client {
    pub base: String,
    agent: ureq::Agent,
}

pub struct Reply {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json<T: DeserializeOwned>(&self) -> T {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn code(&self) -> String {
        self.json::<Value>()["code"].as_str().unwrap_or_default().to_owned()
    }
}

fn reply(mut r: ureq::http::Response<ureq::Body>) -> Reply {
    let headers = r
        .headers()
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_str().unwrap_or_default().to_owned()))
        .collect();
    Reply {
        status: r.status().as_u16(),
        headers,
        body: r.body_mut().read_to_vec().unwrap(),
    }
}

impl Client {
    pub fn new(base: String) -> Self {
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Self { base, agent }
    }

    pub fn get(&self, path: &str, token: Option<&str>) -> Reply {
        let mut req = self.agent.get(format!("{}{path}", self.base));
        if let Some(t) = token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        reply(req.call().unwrap())
    }

    pub fn post(&self, path: &str, token: Option<&str>, body: &Value) -> Reply {
        self.post_with(path, token, None, body)
    }

    pub fn post_with(&self, path: &str, token: Option<&str>, key: Option<&str>, body: &Value) -> Reply {
        let mut req = self.agent.post(format!("{}{path}", self.base));
        if let Some(t) = token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        if let Some(k) = key {
            req = req.header("Idempotency-Key", k);
        }
        reply(req.send_json(body).unwrap())
    }

    pub fn wait_for_job(&self, job_id: &str) -> JobView {
        let deadline = Instant::now() + Duration::from_secs(120);
        loop {
            let job: JobView = self.get(&format!("/api/jobs/{job_id}"), None).json();
            if job.status.is_terminal() {
                return job;
            }
            assert!(Instant::now() < deadline, "job {job_id} did not finish");
            std::thread::sleep(Duration::from_millis(20));
        }
    }
}

pub fn config(dir: &Path, checkpoint: Option<&Path>) -> ServerConfig {
    ServerConfig {
        bind: "127.0.0.1:0".parse().unwrap(),
        data_dir: dir.to_owned(),
        checkpoint: checkpoint.map(Path::to_owned),
        fsync: false,
        ..ServerConfig::default()
    }
}

pub fn start(config: ServerConfig) -> (BackgroundServer, Client) {
    let server = BackgroundServer::spawn(config).unwrap();
    let client = Client::new(server.base_url());
    (server, client)
}

/// A randomly initialized generalized checkpoint over `classes`.
pub fn write_checkpoint(path: &Path, classes: &[&str]) {
    let model = init_model(ClassMap::new(classes.iter().copied()), 7).unwrap();
    Checkpoint {
        model,
        stats: ChannelStats::identity(),
    }
    .save(path)
    .unwrap();
}

/// `n` samples at `rate_hz` of a class-specific sinusoid.
pub fn samples(n: usize, rate_hz: f64, class: usize) -> Vec<[f64; 7]> {
    (0..n)
        .map(|i| {
            let t = i as f64 / rate_hz;
            let f = 0.5 + class as f64 * 0.6;
            let mut row = [t, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
            for (c, v) in row[1..].iter_mut().enumerate() {
                *v = (std::f64::consts::TAU * f * t + c as f64).sin() * (1.0 + 0.2 * c as f64) + class as f64 * 0.3;
            }
            row
        })
        .collect()
}

pub fn upload_body(class: &str, rate_hz: f64, samples: &[[f64; 7]]) -> Value {
    json!({ "class_name": class, "rate_hz": rate_hz, "samples": samples })
}

/// A registered, linked device. Returns `(device_id, token)`.
pub fn linked_device(client: &Client) -> (String, String) {
    let user: Value = client.post("/api/users", None, &json!({ "name": "ada" })).json();
    let reg: Value = client.post("/api/devices", None, &json!({ "name": "band" })).json();
    let (id, token) = (
        reg["device_id"].as_str().unwrap().to_owned(),
        reg["token"].as_str().unwrap().to_owned(),
    );
    let r = client.post(
        &format!("/api/devices/{id}/link"),
        Some(&token),
        &json!({ "user_id": user["user_id"] }),
    );
    assert_eq!(r.status, 200);
    (id, token)
}
