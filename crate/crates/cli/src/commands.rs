//! Subcommand bodies. Every command is a pure function of its config and
//! inputs, so reruns produce byte-identical files.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use vqlens::experiment::{run_experiment_with, sample_descriptor_pool, train_inverter_on};
use vqlens::study::{write_jsonl, ExampleEntry, EXAMPLE_MANIFEST, STIMULUS_MANIFEST, STUDY_CODEBOOK_SIZES};
use vqlens::synth::{scene_source, texture_corpus, TextureSpec};
use vqlens::{
    high_freq_energy, kmeans_fit_report, reconstruct, Codebook, ExperimentReport, FolderDataset, GrayImage, GridSpec,
    ImageSource, Inverter, KMeansConfig, PipelineConfig, SplitResult, StimulusEntry, StudyCondition,
};

use crate::config::RunConfig;
use crate::error::CliError;

/// Run manifest written into directory outputs.
pub const DIR_MANIFEST: &str = "vqlens-manifest.json";
pub const INVERTER_FILE: &str = "inverter.bin";

pub fn codebook_file(k: usize) -> String {
    format!("codebook-{k}.bin")
}

/// `<artifact>.manifest.json` beside a single-file artifact.
pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn write_manifest(path: &Path, command: &str, cfg: &RunConfig, extra: Value) -> Result<(), CliError> {
    let mut doc = json!({
        "command": command,
        "config": cfg.to_json(),
        "config_text": cfg.to_kv(),
    });
    if let (Value::Object(doc), Value::Object(extra)) = (&mut doc, extra) {
        doc.extend(extra);
    }
    let mut text = serde_json::to_string_pretty(&doc).expect("manifest serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn require(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing(format!("{what} {} not found", path.display())))
    }
}

fn validated(cfg: &RunConfig) -> Result<PipelineConfig, CliError> {
    let p = cfg.resolved_pipeline();
    p.validate()?;
    Ok(p)
}

fn open_dataset(cfg: &RunConfig) -> Result<FolderDataset, CliError> {
    let root = cfg.dataset_path()?;
    require(root, "dataset")?;
    Ok(FolderDataset::open(root)?)
}

#[derive(Debug, Clone)]
pub struct CodebookSummary {
    pub path: PathBuf,
    pub k: usize,
    pub descriptors: usize,
    pub objective: f64,
}

pub fn build_codebook(cfg: &RunConfig, out: Option<&Path>) -> Result<CodebookSummary, CliError> {
    let p = validated(cfg)?;
    let ds = open_dataset(cfg)?;
    let ids: Vec<usize> = (0..ds.len()).collect();
    let pool = sample_descriptor_pool(&ds, &ids, p.grid, &p.hog, p.max_pool, cfg.seed)?;
    let report = kmeans_fit_report(&pool, &p.kmeans)?;
    let path = out.map_or_else(|| cfg.artifacts.join(codebook_file(p.kmeans.k)), Path::to_path_buf);
    ensure_parent(&path)?;
    report.codebook.save(&path)?;
    write_manifest(
        &manifest_path(&path),
        "build-codebook",
        cfg,
        json!({
            "seed": cfg.seed,
            "k": p.kmeans.k,
            "descriptor_count": report.descriptor_count,
            "objective": report.objective,
            "objective_history": report.history,
        }),
    )?;
    Ok(CodebookSummary {
        path,
        k: p.kmeans.k,
        descriptors: report.descriptor_count,
        objective: report.objective,
    })
}

#[derive(Debug, Clone)]
pub struct InverterSummary {
    pub path: PathBuf,
    pub lambda: f64,
    pub relative_residual: f64,
    pub train_pairs: usize,
    pub holdout_pairs: usize,
}

pub fn train_inverter(cfg: &RunConfig, out: Option<&Path>) -> Result<InverterSummary, CliError> {
    let p = validated(cfg)?;
    let ds = open_dataset(cfg)?;
    let ids: Vec<usize> = (0..ds.len()).collect();
    let (inv, sel) = train_inverter_on(&ds, &ids, p.grid, &p.hog, &p.inverter, cfg.seed)?;
    let path = out.map_or_else(|| cfg.artifacts.join(INVERTER_FILE), Path::to_path_buf);
    ensure_parent(&path)?;
    inv.save(&path)?;
    write_manifest(
        &manifest_path(&path),
        "train-inverter",
        cfg,
        json!({
            "seed": cfg.seed,
            "lambda": sel.lambda,
            "holdout_mse": sel.holdout_mse,
            "relative_residual": sel.relative_residual,
            "train_pairs": sel.train_pairs,
            "holdout_pairs": sel.holdout_pairs,
        }),
    )?;
    Ok(InverterSummary {
        path,
        lambda: sel.lambda,
        relative_residual: sel.relative_residual,
        train_pairs: sel.train_pairs,
        holdout_pairs: sel.holdout_pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageMetrics {
    pub mse: f64,
    pub high_freq_energy: f64,
}

fn load_input(path: &Path) -> Result<GrayImage, CliError> {
    require(path, "input image")?;
    Ok(GrayImage::load(path)?)
}

pub fn reconstruct_image(
    cfg: &RunConfig,
    input: &Path,
    inverter: Option<&Path>,
    codebook: Option<&Path>,
    out: &Path,
) -> Result<ImageMetrics, CliError> {
    let p = validated(cfg)?;
    let inv_path = inverter.map_or_else(|| cfg.artifacts.join(INVERTER_FILE), Path::to_path_buf);
    require(&inv_path, "inverter")?;
    let inv = Inverter::load(&inv_path)?;
    let cb = match codebook {
        Some(path) => {
            require(path, "codebook")?;
            Some(Codebook::load(path)?)
        }
        None => None,
    };
    let img = load_input(input)?;
    let rec = reconstruct(&img, p.grid, &p.hog, &inv, cb.as_ref())?;
    ensure_parent(out)?;
    rec.save_png(out)?;
    Ok(ImageMetrics {
        mse: rec.mse(&img)?,
        high_freq_energy: high_freq_energy(&rec)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Patch,
    Stride,
    Codebook,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Patch => "patch",
            SweepAxis::Stride => "stride",
            SweepAxis::Codebook => "codebook",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "patch" => Ok(SweepAxis::Patch),
            "stride" => Ok(SweepAxis::Stride),
            "codebook" => Ok(SweepAxis::Codebook),
            _ => Err(format!("unknown sweep axis '{s}' (patch, stride or codebook)")),
        }
    }
}

/// One line of the sweep metrics table, averaged over the inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// The swept value, or `none` for the unquantized baseline row.
    pub value: String,
    pub mse: f64,
    pub high_freq_energy: f64,
}

pub const SWEEP_TABLE: &str = "metrics.tsv";

fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

fn collect_images(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_images(&path, out)?;
        } else if is_image_file(&path) {
            out.push(path);
        }
    }
    Ok(())
}

/// Expands directories (recursively) into their image files, sorted.
fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for input in inputs {
        require(input, "input")?;
        if input.is_dir() {
            collect_images(input, &mut out)?;
        } else {
            out.push(input.clone());
        }
    }
    if out.is_empty() {
        return Err(CliError::Missing("no input images".into()));
    }
    Ok(out)
}

fn check_sweep_values(p: &PipelineConfig, axis: SweepAxis, values: &[usize]) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    for &v in values {
        match axis {
            SweepAxis::Patch => {
                GridSpec::new(v, p.grid.stride)?;
                if v % p.hog.cells_per_side != 0 {
                    return Err(CliError::Config(format!(
                        "patch size {v} is not divisible by {} cells",
                        p.hog.cells_per_side
                    )));
                }
            }
            SweepAxis::Stride => {
                GridSpec::new(p.grid.patch_size, v)?;
            }
            SweepAxis::Codebook => {
                if v == 0 {
                    return Err(CliError::Config("codebook size must be positive".into()));
                }
            }
        }
    }
    Ok(())
}

/// Reconstructs every input once per swept value.
///
/// Inverters and codebooks are trained on the configured dataset; all
/// parameters other than the swept one keep their configured values. The
/// codebook axis adds an unquantized `none` row.
pub fn sweep(
    cfg: &RunConfig,
    axis: SweepAxis,
    values: &[usize],
    inputs: &[PathBuf],
    out: &Path,
) -> Result<Vec<SweepRow>, CliError> {
    let p = validated(cfg)?;
    check_sweep_values(&p, axis, values)?;
    let files = expand_inputs(inputs)?;
    let images = files.iter().map(|f| load_input(f)).collect::<Result<Vec<_>, _>>()?;
    let ds = open_dataset(cfg)?;
    let ids: Vec<usize> = (0..ds.len()).collect();
    fs::create_dir_all(out)?;

    let single = files.len() == 1;
    let stems: Vec<String> = files
        .iter()
        .map(|f| f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    let mut rows = Vec::new();
    let mut render = |label: String, grid: GridSpec, inv: &Inverter, cb: Option<&Codebook>| -> Result<(), CliError> {
        let (mut mse, mut hfe) = (0.0, 0.0);
        for (img, stem) in images.iter().zip(&stems) {
            let rec = reconstruct(img, grid, &p.hog, inv, cb)?;
            mse += rec.mse(img)?;
            hfe += high_freq_energy(&rec)?;
            let name = if single {
                format!("{axis}-{label}.png")
            } else {
                format!("{stem}-{axis}-{label}.png")
            };
            rec.save_png(out.join(name))?;
        }
        let n = images.len() as f64;
        rows.push(SweepRow {
            value: label,
            mse: mse / n,
            high_freq_energy: hfe / n,
        });
        Ok(())
    };

    match axis {
        SweepAxis::Patch => {
            for &v in values {
                let grid = GridSpec::new(v, p.grid.stride)?;
                let (inv, _) = train_inverter_on(&ds, &ids, grid, &p.hog, &p.inverter, cfg.seed)?;
                render(v.to_string(), grid, &inv, None)?;
            }
        }
        SweepAxis::Stride => {
            let (inv, _) = train_inverter_on(&ds, &ids, p.grid, &p.hog, &p.inverter, cfg.seed)?;
            for &v in values {
                render(v.to_string(), GridSpec::new(p.grid.patch_size, v)?, &inv, None)?;
            }
        }
        SweepAxis::Codebook => {
            let (inv, _) = train_inverter_on(&ds, &ids, p.grid, &p.hog, &p.inverter, cfg.seed)?;
            let pool = sample_descriptor_pool(&ds, &ids, p.grid, &p.hog, p.max_pool, cfg.seed)?;
            render("none".into(), p.grid, &inv, None)?;
            for &k in values {
                let km = KMeansConfig { k, ..p.kmeans };
                let cb = kmeans_fit_report(&pool, &km)?.codebook;
                render(k.to_string(), p.grid, &inv, Some(&cb))?;
            }
        }
    }

    let mut table = String::from("axis\tvalue\tmse\thigh_freq_energy\n");
    for r in &rows {
        table.push_str(&format!("{axis}\t{}\t{}\t{}\n", r.value, r.mse, r.high_freq_energy));
    }
    fs::write(out.join(SWEEP_TABLE), table)?;
    let inputs: Vec<String> = files.iter().map(|f| f.display().to_string()).collect();
    write_manifest(
        &out.join(DIR_MANIFEST),
        "sweep",
        cfg,
        json!({ "axis": axis.to_string(), "values": values, "inputs": inputs }),
    )?;
    Ok(rows)
}

pub const RESULTS_RECORDS: &str = "results.ndjson";
pub const RESULTS_TABLE: &str = "results.txt";

pub fn run_experiment(
    cfg: &RunConfig,
    out: &Path,
    on_split: impl FnMut(&SplitResult),
) -> Result<ExperimentReport, CliError> {
    let p = validated(cfg)?;
    let ds = open_dataset(cfg)?;
    let report = run_experiment_with(&ds, &p, on_split)?;
    fs::create_dir_all(out)?;
    fs::write(out.join(RESULTS_RECORDS), report.to_ndjson())?;
    fs::write(out.join(RESULTS_TABLE), report.table())?;
    write_manifest(
        &out.join(DIR_MANIFEST),
        "run-experiment",
        cfg,
        json!({ "mean": report.mean, "std": report.std, "chance": report.chance }),
    )?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct ExportSummary {
    pub images: usize,
    pub stimuli: Vec<StimulusEntry>,
    pub examples: Vec<ExampleEntry>,
}

fn opaque_name(rng: &mut ChaCha8Rng, used: &mut HashSet<String>, prefix: &str) -> String {
    loop {
        let name = format!("{prefix}{:016x}.png", rng.random::<u64>());
        if used.insert(name.clone()) {
            return name;
        }
    }
}

/// Renders `export_images` dataset images under every study condition.
///
/// Images are drawn class by class in turn so every class is represented.
/// Needs `inverter.bin` and `codebook-<k>.bin` for each study codebook size
/// in the artifact directory. File names are random hex so nothing about
/// the condition or class leaks to subjects.
pub fn export_study(cfg: &RunConfig, out: &Path) -> Result<ExportSummary, CliError> {
    let p = validated(cfg)?;
    let inv_path = cfg.artifacts.join(INVERTER_FILE);
    require(&inv_path, "inverter")?;
    let mut codebooks = Vec::new();
    for k in STUDY_CODEBOOK_SIZES {
        let path = cfg.artifacts.join(codebook_file(k));
        require(&path, "codebook")?;
        codebooks.push((k, Codebook::load(&path)?));
    }
    let inv = Inverter::load(&inv_path)?;
    let ds = open_dataset(cfg)?;
    if cfg.export_images == 0 {
        return Err(CliError::Config("export_images must be at least 1".into()));
    }
    if cfg.export_images > ds.len() {
        return Err(CliError::Config(format!(
            "export_images = {} but the dataset holds {} images",
            cfg.export_images,
            ds.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for id in 0..ds.len() {
        by_class.entry(ds.label(id)).or_default().push(id);
    }
    for ids in by_class.values_mut() {
        ids.shuffle(&mut rng);
    }
    let mut selected = Vec::with_capacity(cfg.export_images);
    let mut depth = 0;
    while selected.len() < cfg.export_images {
        for ids in by_class.values() {
            if let Some(&id) = ids.get(depth) {
                if selected.len() < cfg.export_images {
                    selected.push(id);
                }
            }
        }
        depth += 1;
    }
    let chosen: HashSet<usize> = selected.iter().copied().collect();

    fs::create_dir_all(out)?;
    let mut used = HashSet::new();
    let mut examples = Vec::new();
    for (class, ids) in &by_class {
        let id = ids.iter().copied().find(|i| !chosen.contains(i)).unwrap_or(ids[0]);
        let file = opaque_name(&mut rng, &mut used, "ex-");
        fs::write(out.join(&file), ds.load(id)?.encode_png()?)?;
        examples.push(ExampleEntry {
            class: (*class).to_owned(),
            file,
        });
    }

    let mut stimuli = Vec::with_capacity(selected.len() * 6);
    for &id in &selected {
        let img = ds.load(id)?;
        for condition in StudyCondition::all() {
            let bytes = match condition {
                StudyCondition::Original => img.encode_png()?,
                StudyCondition::InvertedNoQuant => reconstruct(&img, p.grid, &p.hog, &inv, None)?.encode_png()?,
                StudyCondition::InvertedQuant(k) => {
                    let cb = codebooks.iter().find(|(ck, _)| *ck == k).map(|(_, cb)| cb);
                    reconstruct(&img, p.grid, &p.hog, &inv, cb)?.encode_png()?
                }
            };
            let file = opaque_name(&mut rng, &mut used, "");
            fs::write(out.join(&file), bytes)?;
            stimuli.push(StimulusEntry {
                file,
                image_id: ds.image_id(id),
                condition,
                true_class: ds.label(id).to_owned(),
            });
        }
    }
    write_jsonl(&out.join(STIMULUS_MANIFEST), &stimuli)?;
    write_jsonl(&out.join(EXAMPLE_MANIFEST), &examples)?;
    write_manifest(
        &out.join(DIR_MANIFEST),
        "export-study",
        cfg,
        json!({ "images": selected.len(), "stimuli": stimuli.len() }),
    )?;
    Ok(ExportSummary {
        images: selected.len(),
        stimuli,
        examples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusKind {
    Textures,
    Scenes,
}

impl FromStr for CorpusKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "textures" => Ok(CorpusKind::Textures),
            "scenes" => Ok(CorpusKind::Scenes),
            _ => Err(format!("unknown corpus kind '{s}' (textures or scenes)")),
        }
    }
}

/// Writes a generated class-folder corpus and returns its image count.
pub fn gen_corpus(kind: CorpusKind, count: usize, size: usize, seed: u64, out: &Path) -> Result<usize, CliError> {
    if count == 0 || size < 8 {
        return Err(CliError::Config("need count >= 1 and size >= 8".into()));
    }
    let corpus = match kind {
        CorpusKind::Textures => texture_corpus(
            &TextureSpec {
                per_class: count,
                size,
                ..TextureSpec::default()
            },
            seed,
        ),
        CorpusKind::Scenes => scene_source(count, size, size, seed),
    };
    corpus.write_folders(out)?;
    Ok(corpus.len())
}
