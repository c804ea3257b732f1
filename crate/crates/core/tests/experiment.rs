use std::sync::Mutex;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use vqlens::classify::{cross_validate, train_one_vs_rest, FeatureMatrix, SvmParams};
use vqlens::experiment::{fit_split, run_split, sample_split};
use vqlens::synth::{texture_corpus, TextureSpec};
use vqlens::{
    evaluate, run_experiment, Error, GrayImage, GridSpec, ImageSource, KMeansConfig, MemoryCorpus, PipelineConfig,
    Result,
};

struct Tracking<'a> {
    inner: &'a MemoryCorpus,
    loads: Mutex<Vec<usize>>,
}

impl ImageSource for Tracking<'_> {
    fn len(&self) -> usize {
        self.inner.len()
    }
    fn label(&self, id: usize) -> &str {
        self.inner.label(id)
    }
    fn image_id(&self, id: usize) -> String {
        self.inner.image_id(id)
    }
    fn load(&self, id: usize) -> Result<GrayImage> {
        self.loads.lock().unwrap().push(id);
        self.inner.load(id)
    }
}

fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig {
        grid: GridSpec::new(32, 8).unwrap(),
        kmeans: KMeansConfig::with_k(16, 0),
        ..Default::default()
    };
    cfg.inverter.max_pairs = 400;
    cfg.experiment.train_per_class = 6;
    cfg.experiment.cv_folds = 3;
    cfg.experiment.splits = 2;
    cfg.experiment.seed = 17;
    cfg
}

fn small_corpus() -> MemoryCorpus {
    texture_corpus(
        &TextureSpec {
            per_class: 9,
            size: 48,
            ..Default::default()
        },
        1,
    )
}

#[test]
fn fitting_only_touches_training_images() {
    let corpus = small_corpus();
    let src = Tracking {
        inner: &corpus,
        loads: Mutex::new(Vec::new()),
    };
    let cfg = small_config();
    let (train, test) = sample_split(&src, 6, 5).unwrap();
    let model = fit_split(&src, &train, &cfg, 5).unwrap();
    assert!(model.inverter.is_some());
    let loads = src.loads.lock().unwrap().clone();
    assert!(!loads.is_empty());
    assert!(loads.iter().all(|i| train.contains(i) && !test.contains(i)));

    src.loads.lock().unwrap().clear();
    run_split(&src, &cfg, 0).unwrap();
    let loads = src.loads.lock().unwrap().clone();
    let seed = vqlens::experiment::split_seed(cfg.experiment.seed, 0);
    let (train, _) = sample_split(&src, 6, seed).unwrap();
    let first_test = loads.iter().position(|i| !train.contains(i)).unwrap();
    assert!(loads[first_test..].iter().all(|i| !train.contains(i)));
}

#[test]
fn identical_seeds_reproduce_reports() {
    let corpus = small_corpus();
    let cfg = small_config();
    let a = run_experiment(&corpus, &cfg).unwrap();
    let b = run_experiment(&corpus, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.splits.len(), 2);
    assert_eq!(a.to_ndjson().lines().count(), 3);
    assert!(a.splits.iter().all(|s| (0.0..=1.0).contains(&s.rate)));
}

#[test]
fn insufficient_images_is_a_dataset_error() {
    let corpus = small_corpus();
    let mut cfg = small_config();
    cfg.experiment.train_per_class = 9;
    assert!(matches!(run_experiment(&corpus, &cfg), Err(Error::Dataset(_))));
}

fn gaussian_features(n_per_class: usize, classes: usize, dim: usize, sep: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for c in 0..classes {
        for _ in 0..n_per_class {
            x.push((0..dim).map(|d| noise.sample(&mut rng) + if d == c { sep } else { 0.0 }).collect());
            y.push(format!("class{c}"));
        }
    }
    (x, y)
}

#[test]
fn duplicated_training_set_keeps_predictions() {
    let (x, y) = gaussian_features(15, 3, 5, 6.0, 4);
    let fm = FeatureMatrix::from_rows(&x).unwrap();
    let mut x2 = x.clone();
    x2.extend(x.iter().cloned());
    let mut y2 = y.clone();
    y2.extend(y.iter().cloned());
    let fm2 = FeatureMatrix::from_rows(&x2).unwrap();
    let params = SvmParams::default();
    let a = train_one_vs_rest(&fm, &y, 1.0, &params).unwrap();
    let b = train_one_vs_rest(&fm2, &y2, 1.0, &params).unwrap();
    let (probe, _) = gaussian_features(30, 3, 5, 6.0, 99);
    for p in &probe {
        assert_eq!(a.predict(p).unwrap(), b.predict(p).unwrap());
    }
}

#[test]
fn shuffled_labels_sit_at_chance() {
    let (x, y) = gaussian_features(20, 3, 8, 3.0, 5);
    let fm = FeatureMatrix::from_rows(&x).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let accs: Vec<f64> = (0..20)
        .map(|i| {
            let mut labels = y.clone();
            labels.shuffle(&mut rng);
            cross_validate(&fm, &labels, 1.0, 5, i, &SvmParams::default()).unwrap()
        })
        .collect();
    let mean = accs.iter().sum::<f64>() / 20.0;
    let sd = (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 19.0).sqrt();
    let chance = 1.0 / 3.0;
    assert!((mean - chance).abs() <= 3.0 * sd, "mean {mean}, sd {sd}");
    // and the unshuffled labels are far above it
    assert!(cross_validate(&fm, &y, 1.0, 5, 0, &SvmParams::default()).unwrap() > chance + 3.0 * sd);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn evaluation_ignores_test_order(seed in any::<u64>()) {
        let (x, y) = gaussian_features(8, 3, 4, 1.0, seed);
        let fm = FeatureMatrix::from_rows(&x).unwrap();
        let model = train_one_vs_rest(&fm, &y, 1.0, &SvmParams::default()).unwrap();
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let xs: Vec<Vec<f64>> = order.iter().map(|&i| x[i].clone()).collect();
        let ys: Vec<String> = order.iter().map(|&i| y[i].clone()).collect();
        let a = evaluate(&model, &fm, &y).unwrap();
        let b = evaluate(&model, &FeatureMatrix::from_rows(&xs).unwrap(), &ys).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn classifier_weights_are_finite(seed in any::<u64>(), cost in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = gaussian_features(5, 2, 3, rng.random_range(0.0..4.0), seed);
        let model = train_one_vs_rest(&FeatureMatrix::from_rows(&x).unwrap(), &y, cost, &SvmParams::default()).unwrap();
        prop_assert_eq!(model.class_weights.len(), 2);
        prop_assert!(model.class_weights.iter().flatten().all(|w| w.is_finite()));
    }
}
