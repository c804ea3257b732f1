//! The split-based classification experiment: sample a training set per
//! class, fit codebook, inverter and classifier on training images only, then
//! score the held-out remainder.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::{evaluate, per_class_accuracy, train_with_cv, ClassifierModel, CostSelection, FeatureMatrix, SvmParams};
use crate::codebook::{bow_histogram, kmeans_fit_report, Codebook, KMeansConfig};
use crate::corpus::ImageSource;
use crate::descriptors::DescriptorSet;
use crate::error::{Error, Result};
use crate::grid::{extract_patch, GridSpec};
use crate::hog::HogConfig;
use crate::image::GrayImage;
use crate::inversion::{dense_descriptors, select_and_fit, Inverter, InverterConfig, LambdaSelection, RidgeSystem};
use crate::kernel_map::{kernel_map, l1_normalize, KernelMapConfig};
use crate::nearest::nearest_batch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub train_per_class: usize,
    pub splits: usize,
    pub cv_folds: usize,
    pub cost_grid: Vec<f64>,
    pub seed: u64,
    /// Permute training labels before fitting the classifier (chance control).
    pub shuffle_labels: bool,
    pub svm: SvmParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train_per_class: 100,
            splits: 25,
            cv_folds: 10,
            cost_grid: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            seed: 0,
            shuffle_labels: false,
            svm: SvmParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.splits == 0 {
            return Err(Error::Config("splits must be at least 1".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::Config("cv_folds must be at least 2".into()));
        }
        if self.train_per_class < self.cv_folds {
            return Err(Error::Config(format!(
                "train_per_class ({}) must be >= cv_folds ({})",
                self.train_per_class, self.cv_folds
            )));
        }
        if self.cost_grid.is_empty() || self.cost_grid.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::Config("cost grid must hold positive finite values".into()));
        }
        Ok(())
    }
}

/// Everything the pipeline needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub grid: GridSpec,
    pub hog: HogConfig,
    pub kmeans: KMeansConfig,
    pub inverter: InverterConfig,
    pub kernel_map: KernelMapConfig,
    pub experiment: ExperimentConfig,
    /// Upper bound on descriptors handed to k-means.
    pub max_pool: usize,
    /// Fit an inverter per split as well (not needed for classification).
    pub fit_inverter: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            hog: HogConfig::default(),
            kmeans: KMeansConfig::default(),
            inverter: InverterConfig::default(),
            kernel_map: KernelMapConfig::default(),
            experiment: ExperimentConfig::default(),
            max_pool: 200_000,
            fit_inverter: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.hog.validate()?;
        if !self.grid.patch_size.is_multiple_of(self.hog.cells_per_side) {
            return Err(Error::Config(format!(
                "patch size {} is not divisible by {} cells",
                self.grid.patch_size, self.hog.cells_per_side
            )));
        }
        if self.kmeans.k == 0 || self.kmeans.restarts == 0 {
            return Err(Error::Config("k and restarts must be at least 1".into()));
        }
        if self.max_pool < self.kmeans.k {
            return Err(Error::Config(format!(
                "descriptor pool bound {} is below k = {}",
                self.max_pool, self.kmeans.k
            )));
        }
        if !(0.0..1.0).contains(&self.inverter.holdout_fraction) {
            return Err(Error::Config("holdout fraction must lie in [0, 1)".into()));
        }
        if self.inverter.lambdas.is_empty() || self.inverter.lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::Config("lambda grid must hold non-negative values".into()));
        }
        self.kernel_map.validate()?;
        self.experiment.validate()
    }
}

/// Uniform sample of at most `capacity` items from a stream.
#[derive(Debug, Clone)]
pub struct Reservoir<T> {
    capacity: usize,
    seen: u64,
    items: Vec<T>,
}

impl<T> Reservoir<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            seen: 0,
            items: Vec::new(),
        }
    }

    pub fn offer(&mut self, item: T, rng: &mut impl Rng) {
        self.seen += 1;
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else if self.capacity > 0 {
            let j = rng.random_range(0..self.seen);
            if (j as usize) < self.capacity {
                self.items[j as usize] = item;
            }
        }
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn into_items(self) -> Vec<T> {
        self.items
    }
}

/// Seed of split `split` under experiment seed `seed`.
pub fn split_seed(seed: u64, split: usize) -> u64 {
    seed ^ (split as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Draws `train_per_class` training ids per class; the rest become test ids.
/// Both lists come back sorted.
pub fn sample_split(source: &dyn ImageSource, train_per_class: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for i in 0..source.len() {
        by_class.entry(source.label(i)).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Err(Error::Dataset(format!("need at least two classes, found {}", by_class.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (class, ids) in by_class.iter_mut() {
        if ids.len() <= train_per_class {
            return Err(Error::Dataset(format!(
                "class '{class}' has {} images; need more than {train_per_class}",
                ids.len()
            )));
        }
        ids.shuffle(&mut rng);
        train.extend_from_slice(&ids[..train_per_class]);
        test.extend_from_slice(&ids[train_per_class..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Histogram → L1 → kernel map for a set of dense descriptors.
pub fn encode_descriptors(descs: &DescriptorSet, cb: &Codebook, km: &KernelMapConfig) -> Result<Vec<f64>> {
    let idx: Vec<usize> = nearest_batch(descs.as_flat(), cb.as_flat(), cb.dim())
        .into_iter()
        .map(|a| a.0)
        .collect();
    kernel_map(&l1_normalize(&bow_histogram(&idx, cb.k())?), km)
}

/// The classifier input for one image.
pub fn encode_image(img: &GrayImage, cb: &Codebook, cfg: &PipelineConfig) -> Result<Vec<f64>> {
    let (_, descs) = dense_descriptors(img, cfg.grid, &cfg.hog)?;
    if descs.is_empty() {
        return Err(Error::Argument(format!(
            "{}x{} image yields no descriptors",
            img.width(),
            img.height()
        )));
    }
    encode_descriptors(&descs, cb, &cfg.kernel_map)
}

/// Models fitted on one split's training images.
#[derive(Debug, Clone)]
pub struct SplitModel {
    pub codebook: Codebook,
    pub kmeans_objective: f64,
    pub descriptor_pool: usize,
    pub inverter: Option<(Inverter, LambdaSelection)>,
    pub classifier: ClassifierModel,
    pub cost: CostSelection,
}

/// Fits codebook, inverter and classifier. Only the images in `train` are
/// ever loaded.
pub fn fit_split(source: &dyn ImageSource, train: &[usize], cfg: &PipelineConfig, seed: u64) -> Result<SplitModel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = cfg.hog.dim();
    let p = cfg.grid.patch_size;

    // Pass 1: sample the k-means pool and the inverter training pairs.
    let mut pool: Reservoir<Vec<f32>> = Reservoir::new(cfg.max_pool);
    let pair_cap = if cfg.fit_inverter { cfg.inverter.max_pairs } else { 0 };
    let mut pairs: Reservoir<(usize, usize)> = Reservoir::new(pair_cap);
    for (pos, &id) in train.iter().enumerate() {
        let (_, descs) = dense_descriptors(&source.load(id)?, cfg.grid, &cfg.hog)?;
        for (w, row) in descs.rows().enumerate() {
            pool.offer(row.to_vec(), &mut rng);
            pairs.offer((pos, w), &mut rng);
        }
    }
    let pool = pool.into_items();
    if pool.len() < cfg.kmeans.k {
        return Err(Error::Size {
            needed: cfg.kmeans.k,
            got: pool.len(),
        });
    }
    let pool = DescriptorSet::from_rows(&pool)?;
    let mut kcfg = cfg.kmeans;
    kcfg.seed = rng.random();
    let km = kmeans_fit_report(&pool, &kcfg)?;
    let codebook = km.codebook;

    let mut keys = pairs.into_items();
    keys.sort_unstable();
    let holdout: Vec<bool> = keys
        .iter()
        .map(|_| rng.random::<f64>() < cfg.inverter.holdout_fraction)
        .collect();

    // Pass 2: features for the classifier, streamed pairs for the inverter.
    let mut train_sys = RidgeSystem::new(dim, p * p);
    let mut hold_sys = RidgeSystem::new(dim, p * p);
    let mut batch = PairBatch::default();
    let mut hold_batch = PairBatch::default();
    let mut features = Vec::with_capacity(train.len());
    let mut next_key = 0;
    for (pos, &id) in train.iter().enumerate() {
        let img = source.load(id)?;
        let (windows, descs) = dense_descriptors(&img, cfg.grid, &cfg.hog)?;
        features.push(encode_descriptors(&descs, &codebook, &cfg.kernel_map)?);
        while next_key < keys.len() && keys[next_key].0 == pos {
            let w = keys[next_key].1;
            let patch = extract_patch(&img, windows[w])?;
            let (b, sys) = if holdout[next_key] {
                (&mut hold_batch, &mut hold_sys)
            } else {
                (&mut batch, &mut train_sys)
            };
            b.inputs.extend_from_slice(descs.row(w));
            b.targets.extend_from_slice(patch.data());
            b.len += 1;
            if b.len == 256 {
                b.flush(sys)?;
            }
            next_key += 1;
        }
    }
    batch.flush(&mut train_sys)?;
    hold_batch.flush(&mut hold_sys)?;

    let inverter = if cfg.fit_inverter && train_sys.count() > 0 {
        Some(select_and_fit(&train_sys, &hold_sys, &cfg.inverter.lambdas, p)?)
    } else {
        None
    };

    let mut labels: Vec<String> = train.iter().map(|&i| source.label(i).to_owned()).collect();
    if cfg.experiment.shuffle_labels {
        labels.shuffle(&mut rng);
    }
    let x = FeatureMatrix::from_rows(&features)?;
    let e = &cfg.experiment;
    let (classifier, cost) = train_with_cv(&x, &labels, &e.cost_grid, e.cv_folds, rng.random(), &e.svm)?;

    Ok(SplitModel {
        codebook,
        kmeans_objective: km.objective,
        descriptor_pool: pool.len(),
        inverter,
        classifier,
        cost,
    })
}

/// Uniform sample of at most `max_pool` dense descriptors from `ids`.
pub fn sample_descriptor_pool(
    source: &dyn ImageSource,
    ids: &[usize],
    grid: GridSpec,
    hog: &HogConfig,
    max_pool: usize,
    seed: u64,
) -> Result<DescriptorSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Reservoir<Vec<f32>> = Reservoir::new(max_pool);
    for &id in ids {
        let (_, descs) = dense_descriptors(&source.load(id)?, grid, hog)?;
        for row in descs.rows() {
            pool.offer(row.to_vec(), &mut rng);
        }
    }
    let rows = pool.into_items();
    if rows.is_empty() {
        return Ok(DescriptorSet::new(hog.dim()));
    }
    DescriptorSet::from_rows(&rows)
}

/// Fits an inverter on at most `cfg.max_pairs` (descriptor, patch) pairs
/// drawn uniformly from the grid windows of `ids`, choosing λ on a held-out
/// fraction of them.
pub fn train_inverter_on(
    source: &dyn ImageSource,
    ids: &[usize],
    grid: GridSpec,
    hog: &HogConfig,
    cfg: &InverterConfig,
    seed: u64,
) -> Result<(Inverter, LambdaSelection)> {
    grid.validate()?;
    hog.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keys: Reservoir<(usize, usize)> = Reservoir::new(cfg.max_pairs);
    for (pos, &id) in ids.iter().enumerate() {
        let img = source.load(id)?;
        for w in 0..grid.window_count(img.width(), img.height()) {
            keys.offer((pos, w), &mut rng);
        }
    }
    let mut keys = keys.into_items();
    if keys.is_empty() {
        return Err(Error::Dataset("no training windows for the inverter".into()));
    }
    keys.sort_unstable();
    let p = grid.patch_size;
    let mut train_sys = RidgeSystem::new(hog.dim(), p * p);
    let mut hold_sys = RidgeSystem::new(hog.dim(), p * p);
    let (mut batch, mut hold_batch) = (PairBatch::default(), PairBatch::default());
    let mut k = 0;
    while k < keys.len() {
        let pos = keys[k].0;
        let img = source.load(ids[pos])?;
        let windows = crate::grid::grid_positions(img.width(), img.height(), grid);
        while k < keys.len() && keys[k].0 == pos {
            let patch = extract_patch(&img, windows[keys[k].1])?;
            let desc = crate::hog::compute_hog(&patch, hog)?;
            let (b, sys) = if rng.random::<f64>() < cfg.holdout_fraction {
                (&mut hold_batch, &mut hold_sys)
            } else {
                (&mut batch, &mut train_sys)
            };
            b.inputs.extend_from_slice(&desc.values);
            b.targets.extend_from_slice(patch.data());
            b.len += 1;
            if b.len == 256 {
                b.flush(sys)?;
            }
            k += 1;
        }
    }
    batch.flush(&mut train_sys)?;
    hold_batch.flush(&mut hold_sys)?;
    if train_sys.count() == 0 {
        return Err(Error::Dataset("every sampled pair landed in the holdout set".into()));
    }
    select_and_fit(&train_sys, &hold_sys, &cfg.lambdas, p)
}

#[derive(Default)]
struct PairBatch {
    inputs: Vec<f32>,
    targets: Vec<f32>,
    len: usize,
}

impl PairBatch {
    fn flush(&mut self, sys: &mut RidgeSystem) -> Result<()> {
        if self.len > 0 {
            sys.add_batch(&self.inputs, &self.targets)?;
        }
        self.inputs.clear();
        self.targets.clear();
        self.len = 0;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub split: usize,
    pub seed: u64,
    pub rate: f64,
    pub per_class: BTreeMap<String, f64>,
    pub cost: f64,
    pub kmeans_objective: f64,
    pub inverter_lambda: Option<f64>,
    pub train_images: usize,
    pub test_images: usize,
    pub shuffled_labels: bool,
}

/// Runs one split end to end.
pub fn run_split(source: &dyn ImageSource, cfg: &PipelineConfig, split: usize) -> Result<SplitResult> {
    let seed = split_seed(cfg.experiment.seed, split);
    let (train, test) = sample_split(source, cfg.experiment.train_per_class, seed)?;
    let model = fit_split(source, &train, cfg, seed)?;
    let mut features = Vec::with_capacity(test.len());
    for &id in &test {
        features.push(encode_image(&source.load(id)?, &model.codebook, cfg)?);
    }
    let labels: Vec<String> = test.iter().map(|&i| source.label(i).to_owned()).collect();
    let x = FeatureMatrix::from_rows(&features)?;
    let rate = evaluate(&model.classifier, &x, &labels)?;
    let predicted = (0..x.len())
        .map(|i| model.classifier.predict(x.row(i)).map(str::to_owned))
        .collect::<Result<Vec<_>>>()?;
    Ok(SplitResult {
        split,
        seed,
        rate,
        per_class: per_class_accuracy(&labels, &predicted),
        cost: model.cost.cost,
        kmeans_objective: model.kmeans_objective,
        inverter_lambda: model.inverter.as_ref().map(|(_, s)| s.lambda),
        train_images: train.len(),
        test_images: test.len(),
        shuffled_labels: cfg.experiment.shuffle_labels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub splits: Vec<SplitResult>,
    pub classes: Vec<String>,
    pub mean: f64,
    /// Sample standard deviation over splits (0 for a single split).
    pub std: f64,
    pub chance: f64,
}

#[derive(Serialize)]
struct SummaryRecord<'a> {
    summary: bool,
    splits: usize,
    mean: f64,
    std: f64,
    chance: f64,
    classes: &'a [String],
}

impl ExperimentReport {
    /// One JSON record per split, then one summary record.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for s in &self.splits {
            out.push_str(&serde_json::to_string(s).expect("plain data serializes"));
            out.push('\n');
        }
        let summary = SummaryRecord {
            summary: true,
            splits: self.splits.len(),
            mean: self.mean,
            std: self.std,
            chance: self.chance,
            classes: &self.classes,
        };
        out.push_str(&serde_json::to_string(&summary).expect("plain data serializes"));
        out.push('\n');
        out
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:>5}  {:>20}  {:>8}  {:>8}\n", "split", "seed", "rate", "cost");
        for s in &self.splits {
            out.push_str(&format!("{:>5}  {:>20}  {:>8.4}  {:>8}\n", s.split, s.seed, s.rate, s.cost));
        }
        out.push_str(&format!(
            "mean {:.4} ± {:.4} over {} splits (chance {:.4})\n",
            self.mean,
            self.std,
            self.splits.len(),
            self.chance
        ));
        out
    }
}

pub fn run_experiment(source: &dyn ImageSource, cfg: &PipelineConfig) -> Result<ExperimentReport> {
    run_experiment_with(source, cfg, |_| {})
}

/// As [`run_experiment`], calling `on_split` after every finished split.
pub fn run_experiment_with(
    source: &dyn ImageSource,
    cfg: &PipelineConfig,
    mut on_split: impl FnMut(&SplitResult),
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let classes = source.classes();
    let mut splits = Vec::with_capacity(cfg.experiment.splits);
    for s in 0..cfg.experiment.splits {
        let r = run_split(source, cfg, s)?;
        on_split(&r);
        splits.push(r);
    }
    let n = splits.len() as f64;
    let mean = splits.iter().map(|s| s.rate).sum::<f64>() / n;
    let std = if splits.len() > 1 {
        (splits.iter().map(|s| (s.rate - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(ExperimentReport {
        chance: 1.0 / classes.len() as f64,
        classes,
        splits,
        mean,
        std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::MemoryCorpus;

    fn toy(per_class: usize) -> MemoryCorpus {
        let mut c = MemoryCorpus::new();
        for class in ["a", "b", "c"] {
            for i in 0..per_class {
                c.push(class, format!("{class}/{i}"), GrayImage::filled(8, 8, 0.5).unwrap());
            }
        }
        c
    }

    #[test]
    fn split_sampling() {
        let c = toy(5);
        let (tr, te) = sample_split(&c, 3, 9).unwrap();
        assert_eq!((tr.len(), te.len()), (9, 6));
        assert!(tr.iter().all(|i| !te.contains(i)));
        assert_eq!(sample_split(&c, 3, 9).unwrap(), (tr, te));
        assert!(matches!(sample_split(&c, 5, 9), Err(Error::Dataset(_))));
    }

    #[test]
    fn reservoir_keeps_everything_below_capacity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut r = Reservoir::new(10);
        for i in 0..7 {
            r.offer(i, &mut rng);
        }
        assert_eq!(r.into_items(), (0..7).collect::<Vec<_>>());
        let mut r = Reservoir::new(3);
        for i in 0..100 {
            r.offer(i, &mut rng);
        }
        assert_eq!(r.seen(), 100);
        assert_eq!(r.into_items().len(), 3);
    }

    #[test]
    fn config_checks() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.experiment.train_per_class = 5;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
