//! Flat `key = value` run configuration.
//!
//! Lines starting with `#` are comments. Unknown keys are rejected so a typo
//! cannot silently fall back to a default. The canonical dump produced by
//! [`RunConfig::to_kv`] is written into every artifact manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};
use vqlens::PipelineConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub seed: u64,
    pub dataset: Option<PathBuf>,
    pub artifacts: PathBuf,
    /// Images exported per study condition.
    pub export_images: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            seed: 0,
            dataset: None,
            artifacts: PathBuf::from("artifacts"),
            export_images: 30,
        }
    }
}

pub const KEYS: &[&str] = &[
    "dataset",
    "artifacts",
    "seed",
    "patch_size",
    "stride",
    "cells_per_side",
    "truncation",
    "k",
    "kmeans_max_iterations",
    "kmeans_restarts",
    "kmeans_tolerance",
    "max_pool",
    "lambdas",
    "max_pairs",
    "holdout_fraction",
    "kernel_order",
    "kernel_gamma",
    "kernel_period",
    "train_per_class",
    "splits",
    "cv_folds",
    "cost_grid",
    "shuffle_labels",
    "fit_inverter",
    "export_images",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("cannot parse {key} = {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Defaults overlaid with the contents of `path`.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Missing(format!("config {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", no + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let p = &mut self.pipeline;
        match key {
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "artifacts" => self.artifacts = PathBuf::from(value),
            "seed" => self.seed = parse(key, value)?,
            "patch_size" => p.grid.patch_size = parse(key, value)?,
            "stride" => p.grid.stride = parse(key, value)?,
            "cells_per_side" => p.hog.cells_per_side = parse(key, value)?,
            "truncation" => p.hog.truncation = parse(key, value)?,
            "k" => p.kmeans.k = parse(key, value)?,
            "kmeans_max_iterations" => p.kmeans.max_iterations = parse(key, value)?,
            "kmeans_restarts" => p.kmeans.restarts = parse(key, value)?,
            "kmeans_tolerance" => p.kmeans.tolerance = parse(key, value)?,
            "max_pool" => p.max_pool = parse(key, value)?,
            "lambdas" => p.inverter.lambdas = parse_list(key, value)?,
            "max_pairs" => p.inverter.max_pairs = parse(key, value)?,
            "holdout_fraction" => p.inverter.holdout_fraction = parse(key, value)?,
            "kernel_order" => p.kernel_map.n = parse(key, value)?,
            "kernel_gamma" => p.kernel_map.gamma = parse(key, value)?,
            "kernel_period" => {
                p.kernel_map.period = if value == "auto" { None } else { Some(parse(key, value)?) }
            }
            "train_per_class" => p.experiment.train_per_class = parse(key, value)?,
            "splits" => p.experiment.splits = parse(key, value)?,
            "cv_folds" => p.experiment.cv_folds = parse(key, value)?,
            "cost_grid" => p.experiment.cost_grid = parse_list(key, value)?,
            "shuffle_labels" => p.experiment.shuffle_labels = parse(key, value)?,
            "fit_inverter" => p.fit_inverter = parse(key, value)?,
            "export_images" => self.export_images = parse(key, value)?,
            _ => return Err(CliError::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let p = &self.pipeline;
        Some(match key {
            "dataset" => self.dataset.as_ref().map(|d| d.display().to_string()).unwrap_or_default(),
            "artifacts" => self.artifacts.display().to_string(),
            "seed" => self.seed.to_string(),
            "patch_size" => p.grid.patch_size.to_string(),
            "stride" => p.grid.stride.to_string(),
            "cells_per_side" => p.hog.cells_per_side.to_string(),
            "truncation" => p.hog.truncation.to_string(),
            "k" => p.kmeans.k.to_string(),
            "kmeans_max_iterations" => p.kmeans.max_iterations.to_string(),
            "kmeans_restarts" => p.kmeans.restarts.to_string(),
            "kmeans_tolerance" => p.kmeans.tolerance.to_string(),
            "max_pool" => p.max_pool.to_string(),
            "lambdas" => join(&p.inverter.lambdas),
            "max_pairs" => p.inverter.max_pairs.to_string(),
            "holdout_fraction" => p.inverter.holdout_fraction.to_string(),
            "kernel_order" => p.kernel_map.n.to_string(),
            "kernel_gamma" => p.kernel_map.gamma.to_string(),
            "kernel_period" => p.kernel_map.period.map_or("auto".into(), |l| l.to_string()),
            "train_per_class" => p.experiment.train_per_class.to_string(),
            "splits" => p.experiment.splits.to_string(),
            "cv_folds" => p.experiment.cv_folds.to_string(),
            "cost_grid" => join(&p.experiment.cost_grid),
            "shuffle_labels" => p.experiment.shuffle_labels.to_string(),
            "fit_inverter" => p.fit_inverter.to_string(),
            "export_images" => self.export_images.to_string(),
            _ => return None,
        })
    }

    /// Canonical `key = value` dump; parsing it back yields the same config.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = self.get(key).unwrap_or_default();
            if *key == "dataset" && value.is_empty() {
                continue;
            }
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        for key in KEYS {
            map.insert((*key).into(), Value::String(self.get(key).unwrap_or_default()));
        }
        Value::Object(map)
    }

    /// Copies the seed into every seeded stage.
    pub fn resolved_pipeline(&self) -> PipelineConfig {
        let mut p = self.pipeline.clone();
        p.kmeans.seed = self.seed;
        p.experiment.seed = self.seed;
        p
    }

    pub fn dataset_path(&self) -> Result<&Path, CliError> {
        self.dataset
            .as_deref()
            .ok_or_else(|| CliError::Config("no dataset given (--dataset or dataset = ...)".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_dump_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\nseed = 7\nk=32\nlambdas = 0.5, 2\nkernel_period = 0.5\ndataset = /data/x\n")
            .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.pipeline.kmeans.k, 32);
        assert_eq!(cfg.pipeline.inverter.lambdas, vec![0.5, 2.0]);
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_kv()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn every_key_is_readable_and_writable() {
        let cfg = RunConfig::default();
        for key in KEYS {
            let mut c = cfg.clone();
            let v = c.get(key).unwrap();
            if v.is_empty() {
                continue;
            }
            c.set(key, &v).unwrap();
            assert_eq!(c, cfg, "{key}");
        }
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.apply_text("patchsize = 3"), Err(CliError::Config(_))));
        assert!(matches!(cfg.apply_text("k = many"), Err(CliError::Config(_))));
        assert!(matches!(cfg.apply_text("just text"), Err(CliError::Config(_))));
        assert!(matches!(cfg.apply_override("k"), Err(CliError::Config(_))));
    }

    #[test]
    fn seed_reaches_every_stage() {
        let cfg = RunConfig {
            seed: 11,
            ..RunConfig::default()
        };
        let p = cfg.resolved_pipeline();
        assert_eq!((p.kmeans.seed, p.experiment.seed), (11, 11));
    }
}
