mod support;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reqwest::StatusCode;
use support::{write_stimuli, ServerProcess, StudyClient};

fn classes_of(session: &serde_json::Value) -> Vec<String> {
    session["classes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c.as_str().unwrap().to_owned())
        .collect()
}

#[test]
fn binary_serves_api_media_and_static_files() {
    let dir = tempfile::tempdir().unwrap();
    let (stimuli, logs, web) = (dir.path().join("stimuli"), dir.path().join("logs"), dir.path().join("web"));
    write_stimuli(&stimuli, 3, 2);
    std::fs::create_dir_all(&web).unwrap();
    std::fs::write(web.join("index.html"), "<!doctype html><title>study</title>").unwrap();
    let server = ServerProcess::spawn(&stimuli, &logs, Some(&web));
    let client = StudyClient::new(&server.base);

    let (status, page) = client.get("/");
    assert_eq!(status, StatusCode::OK);
    assert!(String::from_utf8(page).unwrap().contains("<title>study</title>"));

    let session = client.create_session();
    let id = session["session_id"].as_str().unwrap().to_owned();
    assert_eq!(classes_of(&session), ["class00", "class01", "class02"]);
    assert_eq!(session["total"], 6);
    let example = session["examples"][0]["image"].as_str().unwrap().to_owned();
    assert_eq!(client.get(&example).0, StatusCode::OK);

    assert_eq!(client.trial("not-a-session").0, StatusCode::UNAUTHORIZED);
    let (_, first) = client.trial(&id);
    assert_eq!(first["trial_id"], 1);
    assert_eq!(client.get(first["stimulus"].as_str().unwrap()).0, StatusCode::OK);
    assert_eq!(client.answer(&id, 1, "class99").0, StatusCode::BAD_REQUEST);
    assert_eq!(client.answer(&id, 2, "class00").0, StatusCode::CONFLICT);
    for trial in 1..=6 {
        let (status, ack) = client.answer(&id, trial, "class01");
        assert_eq!(status, StatusCode::OK, "{ack}");
    }
    let (_, done) = client.trial(&id);
    assert_eq!(done["status"], "complete");
    assert_eq!(client.answer(&id, 6, "class01").0, StatusCode::CONFLICT);
    assert_eq!(client.results()["total_trials"], 6);
    assert_eq!(client.get("/media/missing.png").0, StatusCode::NOT_FOUND);
}

#[test]
fn sigkill_and_restart_keeps_acknowledged_answers() {
    let dir = tempfile::tempdir().unwrap();
    let (stimuli, logs) = (dir.path().join("stimuli"), dir.path().join("logs"));
    write_stimuli(&stimuli, 4, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let server = ServerProcess::spawn(&stimuli, &logs, None);
    let client = StudyClient::new(&server.base);
    let a = client.create_session();
    let classes = classes_of(&a);
    let a = a["session_id"].as_str().unwrap().to_owned();
    let (done_a, finished) = client.random_answers(&a, &classes, usize::MAX, &mut rng);
    assert!(finished);
    let b = client.create_session()["session_id"].as_str().unwrap().to_owned();
    let (done_b, _) = client.random_answers(&b, &classes, 5, &mut rng);
    let before = client.results();
    server.kill();

    let server = ServerProcess::spawn(&stimuli, &logs, None);
    let client = StudyClient::new(&server.base);
    let after = client.results();
    assert_eq!(after, before);
    assert_eq!(after["total_trials"], (done_a + done_b) as u64);
    let (_, next) = client.trial(&b);
    assert_eq!(next["trial_id"], (done_b + 1) as u64);
    assert_eq!(client.trial(&a).1["status"], "complete");
    let (more, finished) = client.random_answers(&b, &classes, usize::MAX, &mut rng);
    assert!(finished);
    assert_eq!(done_b + more, 12);

    let served = client.results();
    let replayed = serde_json::to_value(vqlens_study::replay(&logs).unwrap()).unwrap();
    assert_eq!(served, replayed);
}
