use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use vqlens::study::{read_jsonl, ExampleEntry, STIMULUS_MANIFEST};
use vqlens::synth::scene_source;
use vqlens::{GrayImage, StimulusEntry, StudyCondition};

fn vqlens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vqlens"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = vqlens(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// `count` 64x64 scenes under `root/scene`.
fn scenes(root: &Path, count: usize, seed: u64) -> PathBuf {
    scene_source(count, 64, 64, seed).write_folders(root).unwrap();
    root.to_path_buf()
}

/// Two classes of five scenes each, named after the directories.
fn two_class_dataset(root: &Path) -> PathBuf {
    for (class, seed) in [("coast", 1), ("forest", 2)] {
        let dir = root.join(class);
        fs::create_dir_all(&dir).unwrap();
        for (i, img) in vqlens::synth::scene_corpus(5, 64, 64, seed).iter().enumerate() {
            img.save_png(dir.join(format!("img{i}.png"))).unwrap();
        }
    }
    root.to_path_buf()
}

#[test]
fn build_codebook_writes_header_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let data = scenes(&dir.path().join("data"), 12, 5);
    let art = dir.path().join("art");
    let args = ["build-codebook", "--dataset", s(&data), "--artifacts", s(&art), "--k", "32", "--seed", "9"];
    ok(&args);
    let first = fs::read(art.join("codebook-32.bin")).unwrap();
    assert!(first.starts_with(b"BOWG-CB v1 32 512\n"));
    let manifest: Value = serde_json::from_slice(&fs::read(art.join("codebook-32.bin.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["descriptor_count"], 12 * 64);
    assert!(manifest["objective"].as_f64().unwrap() > 0.0);
    assert_eq!(manifest["config"]["k"], "32");
    let first_manifest = fs::read(art.join("codebook-32.bin.manifest.json")).unwrap();

    ok(&args);
    assert_eq!(fs::read(art.join("codebook-32.bin")).unwrap(), first);
    assert_eq!(fs::read(art.join("codebook-32.bin.manifest.json")).unwrap(), first_manifest);

    ok(&["build-codebook", "--dataset", s(&data), "--artifacts", s(&art), "--k", "32", "--seed", "10"]);
    assert_ne!(fs::read(art.join("codebook-32.bin")).unwrap(), first);
}

#[test]
fn too_few_descriptors_for_k_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // 15 images x 64 windows = 960 descriptors
    let data = scenes(&dir.path().join("data"), 15, 1);
    let out = vqlens(&["build-codebook", "--dataset", s(&data), "--artifacts", s(dir.path()), "--k", "2048"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("need at least 2048 descriptors, got 960"), "{err}");
}

#[test]
fn exit_codes_for_missing_and_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    let data = scenes(&dir.path().join("data"), 2, 1);
    let missing = dir.path().join("nope");
    let code = |args: &[&str]| vqlens(args).status.code();

    assert_eq!(code(&["build-codebook", "--dataset", s(&missing), "--k", "4"]), Some(2));
    assert_eq!(code(&["build-codebook", "--config", s(&missing)]), Some(2));
    assert_eq!(code(&["build-codebook", "--k", "4"]), Some(3));
    assert_eq!(code(&["build-codebook", "--dataset", s(&data), "--stride", "100"]), Some(3));
    assert_eq!(code(&["build-codebook", "--dataset", s(&data), "--set", "colour=red"]), Some(3));
    assert_eq!(code(&["no-such-command"]), Some(3));
    assert_eq!(code(&["--help"]), Some(0));

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "k = 4\npatch_size = 48\n").unwrap();
    assert_eq!(code(&["build-codebook", "--config", s(&cfg), "--dataset", s(&data)]), Some(3));

    let img = data.join("scene").join("0000.png");
    let sweep = |values: &str| {
        code(&[
            "sweep", "--dataset", s(&data), "--axis", "stride", "--values", values, "--input", s(&img), "--out",
            s(&dir.path().join("sw")),
        ])
    };
    assert_eq!(sweep("4,128"), Some(3));
    assert_eq!(
        code(&["reconstruct", "--input", s(&img), "--artifacts", s(&missing), "--out", s(&dir.path().join("r.png"))]),
        Some(2)
    );
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = scenes(&dir.path().join("data"), 6, 2);
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        format!("# small run\ndataset = {}\nk = 16\nseed = 3\nstride = 16\n", data.display()),
    )
    .unwrap();
    let art = dir.path().join("art");
    ok(&["build-codebook", "--config", s(&cfg), "--artifacts", s(&art), "--k", "8"]);
    let manifest: Value = serde_json::from_slice(&fs::read(art.join("codebook-8.bin.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["k"], "8");
    assert_eq!(manifest["config"]["seed"], "3");
    assert_eq!(manifest["descriptor_count"], 6 * 16);
    let text = manifest["config_text"].as_str().unwrap();
    assert!(text.contains("stride = 16\n") && text.contains("k = 8\n"), "{text}");
}

#[test]
fn patch_sweep_writes_one_png_per_value_at_input_size() {
    let dir = tempfile::tempdir().unwrap();
    let data = scenes(&dir.path().join("data"), 6, 3);
    let input = dir.path().join("probe.png");
    GrayImage::from_fn(80, 72, |x, y| ((x * 7 + y * 3) % 23) as f32 / 23.0).unwrap().save_png(&input).unwrap();
    let out = dir.path().join("sweep");
    ok(&[
        "sweep", "--dataset", s(&data), "--axis", "patch", "--values", "16,32,64,128", "--input", s(&input), "--out",
        s(&out), "--set", "max_pairs=2000",
    ]);
    for v in [16, 32, 64, 128] {
        let img = GrayImage::load(out.join(format!("patch-{v}.png"))).unwrap();
        assert_eq!((img.width(), img.height()), (80, 72));
    }
    let table = fs::read_to_string(out.join("metrics.tsv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "axis\tvalue\tmse\thigh_freq_energy");
    assert_eq!(lines.len(), 5);
    for (line, v) in lines[1..].iter().zip([16, 32, 64, 128]) {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols[..2], ["patch", &v.to_string()[..]]);
        assert!(cols[2].parse::<f64>().unwrap() >= 0.0);
    }
}

#[test]
fn experiment_records_and_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tex");
    ok(&["gen-corpus", "--kind", "textures", "--count", "12", "--size", "48", "--out", s(&data)]);
    let run = |out: &Path, extra: &[&str]| {
        let mut args = vec![
            "run-experiment", "--dataset", s(&data), "--splits", "2", "--k", "16", "--patch-size", "16", "--stride",
            "8", "--set", "train_per_class=6", "--set", "cv_folds=3", "--set", "fit_inverter=false", "--out", s(out),
        ];
        args.extend_from_slice(extra);
        ok(&args)
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&a, &[]);
    run(&b, &[]);
    let records = fs::read_to_string(a.join("results.ndjson")).unwrap();
    assert_eq!(records, fs::read_to_string(b.join("results.ndjson")).unwrap());
    let lines: Vec<Value> = records.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["split"], 0);
    assert_eq!(lines[1]["split"], 1);
    assert_eq!(lines[2]["summary"], true);
    let table = fs::read_to_string(a.join("results.txt")).unwrap();
    assert!(table.contains("over 2 splits"), "{table}");

    let shuffled = dir.path().join("shuffled");
    run(&shuffled, &["--shuffle-labels"]);
    let first: Value = serde_json::from_str(
        fs::read_to_string(shuffled.join("results.ndjson")).unwrap().lines().next().unwrap(),
    )
    .unwrap();
    assert_eq!(first["shuffled_labels"], true);
}

fn export_fixture(root: &Path) -> (PathBuf, PathBuf) {
    let data = two_class_dataset(&root.join("data"));
    let art = root.join("art");
    // 10 images x 256 windows at stride 4 leaves room for k = 2048
    let train = scenes(&root.join("train"), 10, 8);
    for k in [32, 128, 512, 2048] {
        ok(&[
            "build-codebook", "--dataset", s(&train), "--artifacts", s(&art), "--k", &k.to_string(), "--stride", "4",
            "--set", "kmeans_restarts=1", "--set", "kmeans_max_iterations=5",
        ]);
    }
    ok(&["train-inverter", "--dataset", s(&train), "--artifacts", s(&art), "--set", "max_pairs=3000"]);
    (data, art)
}

#[test]
fn export_study_contract() {
    let dir = tempfile::tempdir().unwrap();
    let (data, art) = export_fixture(dir.path());
    let out = dir.path().join("stimuli");
    let export = |out: &Path| {
        vqlens(&["export-study", "--dataset", s(&data), "--artifacts", s(&art), "--images", "10", "--out", s(out)])
    };
    assert!(export(&out).status.success());

    let pngs = fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            let name = e.as_ref().unwrap().file_name().into_string().unwrap();
            name.ends_with(".png") && !name.starts_with("ex-")
        })
        .count();
    assert_eq!(pngs, 60);
    let rows: Vec<StimulusEntry> = read_jsonl(&out.join(STIMULUS_MANIFEST)).unwrap();
    assert_eq!(rows.len(), 60);

    let mut per_image: BTreeMap<&str, Vec<StudyCondition>> = BTreeMap::new();
    for r in &rows {
        let class_dir = r.image_id.split('/').next().unwrap();
        assert_eq!(r.true_class, class_dir);
        assert!(data.join(&r.image_id).is_file());
        assert!(!r.file.contains(&r.true_class) && !r.file.contains(&r.condition.to_string()));
        per_image.entry(&r.image_id).or_default().push(r.condition);
        if r.condition == StudyCondition::Original {
            let source = GrayImage::load(data.join(&r.image_id)).unwrap();
            assert_eq!(fs::read(out.join(&r.file)).unwrap(), source.encode_png().unwrap());
        }
    }
    assert_eq!(per_image.len(), 10);
    for conditions in per_image.values_mut() {
        conditions.sort();
        let mut all = StudyCondition::all();
        all.sort();
        assert_eq!(*conditions, all);
    }
    let examples: Vec<ExampleEntry> = read_jsonl(&out.join("examples.jsonl")).unwrap();
    let classes: Vec<&str> = examples.iter().map(|e| e.class.as_str()).collect();
    assert_eq!(classes, ["coast", "forest"]);
    assert!(examples.iter().all(|e| out.join(&e.file).is_file()));

    let again = dir.path().join("again");
    assert!(export(&again).status.success());
    for name in ["manifest.jsonl", "examples.jsonl", "vqlens-manifest.json"] {
        assert_eq!(fs::read(out.join(name)).unwrap(), fs::read(again.join(name)).unwrap(), "{name}");
    }
    for r in &rows {
        assert_eq!(fs::read(out.join(&r.file)).unwrap(), fs::read(again.join(&r.file)).unwrap());
    }

    fs::remove_file(art.join("codebook-512.bin")).unwrap();
    assert_eq!(export(&dir.path().join("broken")).status.code(), Some(2));
}

#[test]
fn reconstruct_reports_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let data = scenes(&dir.path().join("data"), 6, 4);
    let art = dir.path().join("art");
    ok(&["train-inverter", "--dataset", s(&data), "--artifacts", s(&art), "--patch-size", "32"]);
    ok(&["build-codebook", "--dataset", s(&data), "--artifacts", s(&art), "--patch-size", "32", "--k", "16"]);
    let input = data.join("scene").join("0001.png");
    let out = dir.path().join("rec.png");
    let text = ok(&[
        "reconstruct", "--input", s(&input), "--artifacts", s(&art), "--patch-size", "32", "--codebook",
        s(&art.join("codebook-16.bin")), "--out", s(&out),
    ]);
    assert!(text.starts_with("mse "), "{text}");
    assert_eq!(GrayImage::load(&out).unwrap().width(), 64);
    // inverter trained for 32px patches cannot serve the default 64px grid
    let code = vqlens(&["reconstruct", "--input", s(&input), "--artifacts", s(&art), "--out", s(&out)]).status.code();
    assert_eq!(code, Some(3));
}
