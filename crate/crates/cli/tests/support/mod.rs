//! Drives the `vqlens serve-study` binary over HTTP.

#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};
use vqlens::study::{write_jsonl, ExampleEntry, EXAMPLE_MANIFEST, STIMULUS_MANIFEST};
use vqlens::{StimulusEntry, StudyCondition};

const PNG_STUB: &[u8] = b"\x89PNG\r\n\x1a\n";

/// `classes` classes of `images_per_class` images, each under all six
/// conditions, plus one example per class.
pub fn write_stimuli(dir: &Path, classes: usize, images_per_class: usize) {
    std::fs::create_dir_all(dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut stimuli = Vec::new();
    let mut examples = Vec::new();
    for c in 0..classes {
        let class = format!("class{c:02}");
        for i in 0..images_per_class {
            for condition in StudyCondition::all() {
                let file = format!("{:016x}.png", rng.random::<u64>());
                std::fs::write(dir.join(&file), PNG_STUB).unwrap();
                stimuli.push(StimulusEntry {
                    file,
                    image_id: format!("{class}/{i}.png"),
                    condition,
                    true_class: class.clone(),
                });
            }
        }
        let file = format!("ex-{:016x}.png", rng.random::<u64>());
        std::fs::write(dir.join(&file), PNG_STUB).unwrap();
        examples.push(ExampleEntry { class, file });
    }
    write_jsonl(&dir.join(STIMULUS_MANIFEST), &stimuli).unwrap();
    write_jsonl(&dir.join(EXAMPLE_MANIFEST), &examples).unwrap();
}

pub struct ServerProcess {
    child: Child,
    pub base: String,
}

impl ServerProcess {
    /// Starts the service on an ephemeral port, configured through the
    /// environment, and waits for its `listening on` line.
    pub fn spawn(stimuli: &Path, logs: &Path, static_dir: Option<&Path>) -> Self {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_vqlens"));
        cmd.arg("serve-study")
            .env("VQLENS_LISTEN", "127.0.0.1:0")
            .env("VQLENS_STIMULI", stimuli)
            .env("VQLENS_LOG_DIR", logs)
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        if let Some(dir) = static_dir {
            cmd.env("VQLENS_STATIC_DIR", dir);
        }
        let mut child = cmd.spawn().expect("server starts");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let base = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_owned();
        Self { child, base }
    }

    /// SIGKILL: no graceful shutdown, no flush.
    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }
}

impl Drop for ServerProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct StudyClient {
    http: Client,
    pub base: String,
}

impl StudyClient {
    pub fn new(base: &str) -> Self {
        Self {
            http: Client::new(),
            base: base.to_owned(),
        }
    }

    pub fn create_session(&self) -> Value {
        let r = self.http.post(format!("{}/api/session", self.base)).send().unwrap();
        assert_eq!(r.status(), StatusCode::CREATED);
        r.json().unwrap()
    }

    pub fn trial(&self, session: &str) -> (StatusCode, Value) {
        let r = self.http.get(format!("{}/api/session/{session}/trial", self.base)).send().unwrap();
        (r.status(), r.json().unwrap())
    }

    pub fn answer(&self, session: &str, trial_id: u64, class: &str) -> (StatusCode, Value) {
        let r = self
            .http
            .post(format!("{}/api/session/{session}/answer", self.base))
            .json(&json!({ "trial_id": trial_id, "class": class }))
            .send()
            .unwrap();
        (r.status(), r.json().unwrap())
    }

    pub fn results(&self) -> Value {
        self.http.get(format!("{}/api/results", self.base)).send().unwrap().json().unwrap()
    }

    pub fn get(&self, path: &str) -> (StatusCode, Vec<u8>) {
        let r = self.http.get(format!("{}{path}", self.base)).send().unwrap();
        (r.status(), r.bytes().unwrap().to_vec())
    }

    /// Answers up to `limit` trials of `session` uniformly at random.
    /// Returns the number of acknowledged answers and whether it finished.
    pub fn random_answers(&self, session: &str, classes: &[String], limit: usize, rng: &mut impl Rng) -> (usize, bool) {
        let mut acked = 0;
        while acked < limit {
            let (status, view) = self.trial(session);
            assert_eq!(status, StatusCode::OK);
            if view["status"] == "complete" {
                return (acked, true);
            }
            let trial_id = view["trial_id"].as_u64().unwrap();
            let class = &classes[rng.random_range(0..classes.len())];
            let (status, ack) = self.answer(session, trial_id, class);
            assert_eq!(status, StatusCode::OK, "{ack}");
            acked += 1;
        }
        let (_, view) = self.trial(session);
        (acked, view["status"] == "complete")
    }
}
