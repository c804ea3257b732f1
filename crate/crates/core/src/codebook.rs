//! k-means codebooks, hard vector quantization and bag-of-words histograms.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::descriptors::DescriptorSet;
use crate::error::{Error, Result};
use crate::formats::{decode_matrix, encode_matrix, read_bytes, write_bytes, MatrixKind};
use crate::nearest::{nearest_batch, nearest_exhaustive};

/// `k` prototypes of dimension `dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    k: usize,
    dim: usize,
    prototypes: Vec<f32>,
}

impl Codebook {
    pub fn new(k: usize, dim: usize, prototypes: Vec<f32>) -> Result<Self> {
        if k == 0 || dim == 0 || prototypes.len() != k * dim {
            return Err(Error::Shape(format!(
                "codebook {k}x{dim} cannot hold {} values",
                prototypes.len()
            )));
        }
        if prototypes.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite prototype value".into()));
        }
        Ok(Self { k, dim, prototypes })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let set = DescriptorSet::from_rows(rows)?;
        Self::new(set.len(), set.dim(), set.as_flat().to_vec())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn prototype(&self, i: usize) -> &[f32] {
        &self.prototypes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn prototypes(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.prototypes.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.prototypes
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_matrix(MatrixKind::Codebook, self.k, self.dim, &self.prototypes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bytes(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (k, dim, values) = decode_matrix(MatrixKind::Codebook, &read_bytes(path)?, path)?;
        Self::new(k, dim, values).map_err(|e| Error::malformed(path, e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iterations: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Stop once the relative objective decrease falls below this.
    pub tolerance: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 512,
            max_iterations: 100,
            restarts: 3,
            seed: 0,
            tolerance: 1e-6,
        }
    }
}

impl KMeansConfig {
    pub fn with_k(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            ..Self::default()
        }
    }
}

/// Outcome of a fit: the winning codebook plus the objective trace of the
/// winning restart (one entry per assignment step).
#[derive(Debug, Clone)]
pub struct KMeansReport {
    pub codebook: Codebook,
    pub objective: f64,
    pub history: Vec<f64>,
    pub restart_objectives: Vec<f64>,
    pub descriptor_count: usize,
}

/// Lloyd's algorithm with k-means++ seeding; keeps the best of `restarts`.
pub fn kmeans_fit(data: &DescriptorSet, cfg: &KMeansConfig) -> Result<Codebook> {
    kmeans_fit_report(data, cfg).map(|r| r.codebook)
}

pub fn kmeans_fit_report(data: &DescriptorSet, cfg: &KMeansConfig) -> Result<KMeansReport> {
    if cfg.k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if cfg.restarts == 0 {
        return Err(Error::Config("restarts must be at least 1".into()));
    }
    if data.len() < cfg.k {
        return Err(Error::Size {
            needed: cfg.k,
            got: data.len(),
        });
    }
    data.check_finite()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<LloydRun> = None;
    let mut restart_objectives = Vec::with_capacity(cfg.restarts);
    for _ in 0..cfg.restarts {
        let run = lloyd(data, cfg, &mut rng);
        restart_objectives.push(run.objective);
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    Ok(KMeansReport {
        codebook: Codebook::new(cfg.k, data.dim(), best.centers)?,
        objective: best.objective,
        history: best.history,
        restart_objectives,
        descriptor_count: data.len(),
    })
}

struct LloydRun {
    centers: Vec<f32>,
    objective: f64,
    history: Vec<f64>,
}

fn lloyd(data: &DescriptorSet, cfg: &KMeansConfig, rng: &mut ChaCha8Rng) -> LloydRun {
    let dim = data.dim();
    let k = cfg.k;
    let points = data.as_flat();
    let mut centers = seed_plus_plus(data, k, rng);
    let mut assign = nearest_batch(points, &centers, dim);
    let mut objective: f64 = assign.iter().map(|a| a.1).sum();
    let mut history = vec![objective];

    for _ in 0..cfg.max_iterations {
        if objective == 0.0 {
            break;
        }
        let next = update_centers(data, &assign, k);
        let next_assign = nearest_batch(points, &next, dim);
        let next_objective: f64 = next_assign.iter().map(|a| a.1).sum();
        // Only rounding can make a Lloyd step go uphill; stop instead.
        if next_objective > objective {
            break;
        }
        let decrease = objective - next_objective;
        centers = next;
        assign = next_assign;
        history.push(next_objective);
        let converged = decrease <= cfg.tolerance * objective;
        objective = next_objective;
        if converged {
            break;
        }
    }
    LloydRun {
        centers,
        objective,
        history,
    }
}

/// Cluster means; empty clusters move to the point farthest from its centroid.
fn update_centers(data: &DescriptorSet, assign: &[(usize, f64)], k: usize) -> Vec<f32> {
    let dim = data.dim();
    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];
    for (row, &(c, _)) in data.rows().zip(assign) {
        counts[c] += 1;
        for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row) {
            *s += *v as f64;
        }
    }
    let mut centers = vec![0.0f32; k * dim];
    let mut dist: Vec<f64> = assign.iter().map(|a| a.1).collect();
    for c in 0..k {
        let dst = &mut centers[c * dim..(c + 1) * dim];
        if counts[c] > 0 {
            let n = counts[c] as f64;
            for (d, s) in dst.iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                *d = (*s / n) as f32;
            }
        } else {
            let far = dist
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc })
                .0;
            dst.copy_from_slice(data.row(far));
            dist[far] = 0.0;
        }
    }
    centers
}

#[inline]
fn fast_sq_dist(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += (x - y) * (x - y);
    }
    acc.iter().sum::<f32>() + tail
}

fn seed_plus_plus(data: &DescriptorSet, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = data.len();
    let dim = data.dim();
    let mut centers = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centers.extend_from_slice(data.row(first));
    let mut min_d: Vec<f64> = data
        .rows()
        .map(|r| fast_sq_dist(r, data.row(first)) as f64)
        .collect();
    min_d[first] = 0.0;
    for _ in 1..k {
        let total: f64 = min_d.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, &d) in min_d.iter().enumerate() {
                if d > 0.0 {
                    chosen = Some(i);
                    if r < d {
                        break;
                    }
                    r -= d;
                }
            }
            chosen.expect("positive total implies a positive weight")
        } else {
            rng.random_range(0..n)
        };
        let c = data.row(pick);
        centers.extend_from_slice(c);
        for (m, r) in min_d.iter_mut().zip(data.rows()) {
            let d = fast_sq_dist(r, c) as f64;
            if d < *m {
                *m = d;
            }
        }
        min_d[pick] = 0.0;
    }
    centers
}

/// Index of the nearest prototype, ties toward the lowest index.
pub fn quantize(x: &[f32], cb: &Codebook) -> Result<usize> {
    if x.len() != cb.dim {
        return Err(Error::Shape(format!(
            "descriptor of length {} vs codebook dimension {}",
            x.len(),
            cb.dim
        )));
    }
    Ok(nearest_exhaustive(x, &cb.prototypes, cb.dim).0)
}

/// Quantizes every descriptor of a set; identical to calling [`quantize`] per row.
pub fn quantize_all(set: &DescriptorSet, cb: &Codebook) -> Result<Vec<usize>> {
    check_dims(set, cb)?;
    Ok(nearest_batch(set.as_flat(), &cb.prototypes, cb.dim)
        .into_iter()
        .map(|a| a.0)
        .collect())
}

fn check_dims(set: &DescriptorSet, cb: &Codebook) -> Result<()> {
    if set.dim() != cb.dim {
        return Err(Error::Shape(format!(
            "descriptors of dimension {} vs codebook dimension {}",
            set.dim(),
            cb.dim
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BowHistogram {
    pub counts: Vec<u32>,
}

impl BowHistogram {
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

pub fn bow_histogram(indices: &[usize], k: usize) -> Result<BowHistogram> {
    let mut counts = vec![0u32; k];
    for &i in indices {
        *counts.get_mut(i).ok_or(Error::Range { index: i, k })? += 1;
    }
    Ok(BowHistogram { counts })
}

/// Mean squared distance from each descriptor to its assigned prototype.
pub fn quantization_distortion(set: &DescriptorSet, cb: &Codebook) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Argument("distortion of an empty descriptor set".into()));
    }
    check_dims(set, cb)?;
    let total: f64 = nearest_batch(set.as_flat(), &cb.prototypes, cb.dim)
        .iter()
        .map(|a| a.1)
        .sum();
    Ok(total / set.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[&[f32]]) -> DescriptorSet {
        DescriptorSet::from_rows(rows).unwrap()
    }

    #[test]
    fn quantize_examples() {
        let cb = Codebook::from_rows(&[[0.0f32, 0.0], [1.0, 1.0]]).unwrap();
        assert_eq!(quantize(&[0.1, 0.1], &cb).unwrap(), 0);
        let cb = Codebook::from_rows(&[[5.0f32, 5.0], [0.0, 1.0], [9.0, 9.0], [0.0, -1.0]]).unwrap();
        assert_eq!(quantize(&[0.0, 0.0], &cb).unwrap(), 1);
        assert!(matches!(quantize(&[0.0], &cb), Err(Error::Shape(_))));
    }

    #[test]
    fn histogram_examples() {
        assert_eq!(bow_histogram(&[0, 0, 1], 3).unwrap().counts, vec![2, 1, 0]);
        assert_eq!(bow_histogram(&[], 4).unwrap().counts, vec![0; 4]);
        assert!(matches!(bow_histogram(&[3], 3), Err(Error::Range { index: 3, k: 3 })));
    }

    #[test]
    fn k1_is_the_mean() {
        let data = set(&[&[0.0, 2.0], &[2.0, 4.0], &[4.0, 0.0]]);
        let cb = kmeans_fit(&data, &KMeansConfig::with_k(1, 1)).unwrap();
        assert_eq!(cb.prototype(0), &[2.0, 2.0]);
        let d = quantization_distortion(&data, &cb).unwrap();
        assert!((d - (4.0 + 4.0 + 8.0) / 3.0).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        let data = set(&[&[0.0], &[1.0]]);
        assert!(matches!(
            kmeans_fit(&data, &KMeansConfig::with_k(3, 0)),
            Err(Error::Size { needed: 3, got: 2 })
        ));
        let bad = set(&[&[0.0], &[f32::NAN]]);
        assert!(matches!(
            kmeans_fit(&bad, &KMeansConfig::with_k(1, 0)),
            Err(Error::Data(_))
        ));
        let cb = Codebook::from_rows(&[[0.0f32]]).unwrap();
        assert!(quantization_distortion(&DescriptorSet::new(1), &cb).is_err());
    }

    #[test]
    fn codebook_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cb.bin");
        let cb = Codebook::from_rows(&[[0.25f32, 1.0], [3.0, -2.0]]).unwrap();
        cb.save(&p).unwrap();
        assert!(std::fs::read(&p).unwrap().starts_with(b"BOWG-CB v1 2 2\n"));
        assert_eq!(Codebook::load(&p).unwrap(), cb);
    }
}
