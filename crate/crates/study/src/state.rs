//! Sessions, trial delivery and the durable answer log.
//!
//! Two append-only JSON-lines files live in the log directory:
//! `sessions.jsonl` (token and shuffle seed per session) and `answers.jsonl`
//! (one [`TrialRecord`] per acknowledged answer). Every append is synced to
//! disk before the caller sees success, and reopening a directory rebuilds
//! all session state by replaying both files.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vqlens::study::{read_jsonl, ExampleEntry, StimulusEntry, EXAMPLE_MANIFEST, STIMULUS_MANIFEST};

use crate::records::{aggregate_results, StudyResults, TrialRecord};
use crate::StudyError;

pub const SESSION_LOG: &str = "sessions.jsonl";
pub const ANSWER_LOG: &str = "answers.jsonl";

#[derive(Debug, Clone)]
pub struct StudyConfig {
    /// Directory with the exported stimuli and their manifests.
    pub stimulus_dir: PathBuf,
    /// Directory holding the session and answer logs.
    pub log_dir: PathBuf,
    /// Seed for session tokens and shuffles; `None` draws from the OS.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SessionRecord {
    session_id: String,
    seed: u64,
}

#[derive(Debug)]
struct Session {
    /// Stimulus indices in presentation order.
    trials: Vec<usize>,
    /// Number of answered trials; the outstanding trial id is `answered + 1`.
    answered: usize,
}

/// What a client needs to render a trial. Identical field set for every
/// condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrialView {
    Trial {
        trial_id: u64,
        stimulus: String,
        classes: Vec<String>,
        answered: usize,
        total: usize,
    },
    Complete {
        answered: usize,
        total: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleView {
    pub class: String,
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub classes: Vec<String>,
    pub examples: Vec<ExampleView>,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerAck {
    pub trial_id: u64,
    pub recorded: usize,
}

struct Mutable {
    rng: ChaCha8Rng,
    sessions: HashMap<String, Session>,
    records: Vec<TrialRecord>,
    session_log: File,
    answer_log: File,
}

pub struct Study {
    stimulus_dir: PathBuf,
    stimuli: Vec<StimulusEntry>,
    /// image id -> stimulus indices, one per condition.
    images: BTreeMap<String, Vec<usize>>,
    classes: Vec<String>,
    examples: Vec<ExampleEntry>,
    /// Files that may be served under `/media`.
    media: HashMap<String, PathBuf>,
    state: Mutex<Mutable>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn io_err(path: &Path, e: std::io::Error) -> StudyError {
    StudyError::Storage(format!("{}: {e}", path.display()))
}

/// Opens an append-only log, dropping a torn final line left by a crash.
fn open_log(path: &Path) -> Result<File, StudyError> {
    let mut f = OpenOptions::new()
        .read(true)
        .append(true)
        .create(true)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes).map_err(|e| io_err(path, e))?;
    if !bytes.is_empty() && bytes.last() != Some(&b'\n') {
        let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        f.set_len(keep as u64).map_err(|e| io_err(path, e))?;
        f.seek(SeekFrom::End(0)).map_err(|e| io_err(path, e))?;
    }
    Ok(f)
}

fn append_line<T: Serialize>(f: &mut File, value: &T) -> Result<(), StudyError> {
    let mut line = serde_json::to_vec(value).map_err(|e| StudyError::Storage(e.to_string()))?;
    line.push(b'\n');
    f.write_all(&line).map_err(|e| StudyError::Storage(e.to_string()))?;
    f.sync_data().map_err(|e| StudyError::Storage(e.to_string()))
}

/// Reads every record of an answer log.
pub fn read_answer_log(path: &Path) -> Result<Vec<TrialRecord>, StudyError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| io_err(path, e))?;
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    complete
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| StudyError::Storage(format!("{}: {e}", path.display()))))
        .collect()
}

/// Recomputes results from the log file alone.
pub fn replay(log_dir: &Path) -> Result<StudyResults, StudyError> {
    Ok(aggregate_results(&read_answer_log(&log_dir.join(ANSWER_LOG))?))
}

impl Study {
    pub fn open(cfg: &StudyConfig) -> Result<Self, StudyError> {
        let manifest = cfg.stimulus_dir.join(STIMULUS_MANIFEST);
        if !manifest.exists() {
            return Err(StudyError::MissingInput(format!("{} not found", manifest.display())));
        }
        let stimuli: Vec<StimulusEntry> =
            read_jsonl(&manifest).map_err(|e| StudyError::Storage(e.to_string()))?;
        let example_path = cfg.stimulus_dir.join(EXAMPLE_MANIFEST);
        let examples: Vec<ExampleEntry> = if example_path.exists() {
            read_jsonl(&example_path).map_err(|e| StudyError::Storage(e.to_string()))?
        } else {
            Vec::new()
        };

        let mut images: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut media = HashMap::new();
        for (i, s) in stimuli.iter().enumerate() {
            images.entry(s.image_id.clone()).or_default().push(i);
            media.insert(s.file.clone(), cfg.stimulus_dir.join(&s.file));
        }
        for e in &examples {
            media.insert(e.file.clone(), cfg.stimulus_dir.join(&e.file));
        }
        if media.keys().any(|f| f.contains('/') || f.contains('\\') || f.starts_with('.')) {
            return Err(StudyError::Storage("manifest file names must be plain names".into()));
        }
        let mut classes: Vec<String> = stimuli
            .iter()
            .map(|s| s.true_class.clone())
            .chain(examples.iter().map(|e| e.class.clone()))
            .collect();
        classes.sort();
        classes.dedup();

        std::fs::create_dir_all(&cfg.log_dir).map_err(|e| io_err(&cfg.log_dir, e))?;
        let session_path = cfg.log_dir.join(SESSION_LOG);
        let answer_path = cfg.log_dir.join(ANSWER_LOG);
        let session_log = open_log(&session_path)?;
        let answer_log = open_log(&answer_path)?;

        let seed = cfg.seed.unwrap_or_else(|| rand::rng().random());
        let mut study = Study {
            stimulus_dir: cfg.stimulus_dir.clone(),
            stimuli,
            images,
            classes,
            examples,
            media,
            state: Mutex::new(Mutable {
                rng: ChaCha8Rng::seed_from_u64(seed),
                sessions: HashMap::new(),
                records: Vec::new(),
                session_log,
                answer_log,
            }),
        };
        study.restore(&session_path, &answer_path)?;
        Ok(study)
    }

    fn restore(&mut self, session_path: &Path, answer_path: &Path) -> Result<(), StudyError> {
        let sessions: Vec<SessionRecord> = if session_path.metadata().map(|m| m.len() > 0).unwrap_or(false) {
            read_jsonl(session_path).map_err(|e| StudyError::Storage(e.to_string()))?
        } else {
            Vec::new()
        };
        let records = read_answer_log(answer_path)?;
        let mut restored = HashMap::new();
        for s in sessions {
            restored.insert(
                s.session_id.clone(),
                Session {
                    trials: self.plan(s.seed),
                    answered: 0,
                },
            );
        }
        for r in &records {
            let s = restored
                .get_mut(&r.session_id)
                .ok_or_else(|| StudyError::Storage(format!("answer for unknown session {}", r.session_id)))?;
            s.answered = s.answered.max(r.trial_id as usize);
        }
        let st = self.state.get_mut().expect("not shared yet");
        st.sessions = restored;
        st.records = records;
        Ok(())
    }

    /// One randomly chosen condition per image, images in shuffled order.
    fn plan(&self, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trials: Vec<usize> = self
            .images
            .values()
            .map(|ids| ids[rng.random_range(0..ids.len())])
            .collect();
        trials.shuffle(&mut rng);
        trials
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn examples(&self) -> Vec<ExampleView> {
        self.examples
            .iter()
            .map(|e| ExampleView {
                class: e.class.clone(),
                image: format!("/media/{}", e.file),
            })
            .collect()
    }

    pub fn stimulus_dir(&self) -> &Path {
        &self.stimulus_dir
    }

    /// Path of a servable media file, if `name` is one.
    pub fn media_path(&self, name: &str) -> Option<&Path> {
        self.media.get(name).map(PathBuf::as_path)
    }

    pub fn create_session(&self) -> Result<SessionView, StudyError> {
        if self.stimuli.is_empty() {
            return Err(StudyError::Unavailable("no stimuli loaded".into()));
        }
        let mut st = self.state.lock().expect("study state poisoned");
        let (token, seed) = loop {
            let token = format!("{:032x}", st.rng.random::<u128>());
            if !st.sessions.contains_key(&token) {
                break (token, st.rng.random::<u64>());
            }
        };
        append_line(
            &mut st.session_log,
            &SessionRecord {
                session_id: token.clone(),
                seed,
            },
        )?;
        let trials = self.plan(seed);
        let total = trials.len();
        st.sessions.insert(token.clone(), Session { trials, answered: 0 });
        Ok(SessionView {
            session_id: token,
            classes: self.classes.clone(),
            examples: self.examples(),
            total,
        })
    }

    pub fn next_trial(&self, session_id: &str) -> Result<TrialView, StudyError> {
        let st = self.state.lock().expect("study state poisoned");
        let s = st.sessions.get(session_id).ok_or(StudyError::UnknownSession)?;
        let total = s.trials.len();
        Ok(match s.trials.get(s.answered) {
            Some(&idx) => TrialView::Trial {
                trial_id: s.answered as u64 + 1,
                stimulus: format!("/media/{}", self.stimuli[idx].file),
                classes: self.classes.clone(),
                answered: s.answered,
                total,
            },
            None => TrialView::Complete { answered: s.answered, total },
        })
    }

    pub fn submit_answer(&self, session_id: &str, trial_id: u64, class: &str) -> Result<AnswerAck, StudyError> {
        let mut st = self.state.lock().expect("study state poisoned");
        let s = st.sessions.get(session_id).ok_or(StudyError::UnknownSession)?;
        if self.classes.binary_search_by(|c| c.as_str().cmp(class)).is_err() {
            return Err(StudyError::InvalidClass(class.to_owned()));
        }
        let outstanding = s.answered as u64 + 1;
        if trial_id != outstanding || s.answered >= s.trials.len() {
            return Err(StudyError::Conflict(format!(
                "trial {trial_id} is not outstanding (next is {outstanding})"
            )));
        }
        let stim = &self.stimuli[s.trials[s.answered]];
        let record = TrialRecord {
            session_id: session_id.to_owned(),
            trial_id,
            image_id: stim.image_id.clone(),
            condition: stim.condition,
            true_class: stim.true_class.clone(),
            answered_class: class.to_owned(),
            timestamp: now(),
        };
        append_line(&mut st.answer_log, &record)?;
        st.records.push(record);
        st.sessions.get_mut(session_id).expect("checked above").answered += 1;
        Ok(AnswerAck {
            trial_id,
            recorded: st.records.len(),
        })
    }

    /// Snapshot of all acknowledged records.
    pub fn records(&self) -> Vec<TrialRecord> {
        self.state.lock().expect("study state poisoned").records.clone()
    }

    pub fn results(&self) -> StudyResults {
        aggregate_results(&self.records())
    }
}
