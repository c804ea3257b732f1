//! Descriptor-to-patch inversion and reconstruction compositing.
//!
//! The inverter is a ridge regression from the bias-augmented descriptor
//! `[x; 1]` to the `patch_size²` patch pixels. Training streams
//! `(descriptor, patch)` pairs into the normal equations, so memory does not
//! grow with the number of pairs. The bias row is never regularized.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::descriptors::DescriptorSet;
use crate::error::{Error, Result};
use crate::formats::{decode_matrix, encode_matrix, read_bytes, write_bytes, MatrixKind};
use crate::grid::{extract_patch, grid_positions, GridSpec, PatchWindow};
use crate::hog::{compute_hog, HogConfig, HogDescriptor};
use crate::image::{GrayImage, GrayPatch};
use crate::linalg::{dgemm, frobenius, sgemm, Layout};
use crate::nearest::nearest_batch;

/// Largest relative normal-equation residual accepted from a solve.
pub const MAX_RELATIVE_RESIDUAL: f64 = 1e-6;

const BATCH: usize = 128;

/// Accumulated normal equations `XᵀX`, `XᵀY` for bias-augmented inputs.
#[derive(Debug, Clone)]
pub struct RidgeSystem {
    dim: usize,
    outputs: usize,
    count: usize,
    gram: Vec<f64>,
    cross: Vec<f64>,
    target_energy: f64,
}

/// Weights `(dim + 1) × outputs`, row-major, plus the relative residual of
/// `(XᵀX + λI′)W − XᵀY` measured after the solve.
#[derive(Debug, Clone)]
pub struct RidgeSolution {
    pub weights: Vec<f64>,
    pub relative_residual: f64,
    pub lambda: f64,
    pub used_pseudo_inverse: bool,
}

impl RidgeSystem {
    pub fn new(dim: usize, outputs: usize) -> Self {
        let d1 = dim + 1;
        Self {
            dim,
            outputs,
            count: 0,
            gram: vec![0.0; d1 * d1],
            cross: vec![0.0; d1 * outputs],
            target_energy: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Adds a batch of row-major inputs (`n × dim`) and targets (`n × outputs`).
    pub fn add_batch(&mut self, inputs: &[f32], targets: &[f32]) -> Result<()> {
        if !inputs.len().is_multiple_of(self.dim) || !targets.len().is_multiple_of(self.outputs) {
            return Err(Error::Shape("ragged ridge batch".into()));
        }
        let n = inputs.len() / self.dim;
        if targets.len() / self.outputs != n {
            return Err(Error::Shape(format!(
                "{n} inputs but {} targets",
                targets.len() / self.outputs
            )));
        }
        let d1 = self.dim + 1;
        let mut x = Vec::with_capacity(n * d1);
        for row in inputs.chunks_exact(self.dim) {
            x.extend(row.iter().map(|&v| v as f64));
            x.push(1.0);
        }
        let y: Vec<f64> = targets.iter().map(|&v| v as f64).collect();
        self.target_energy += y.iter().map(|v| v * v).sum::<f64>();
        let lx = Layout::row_major(n, d1);
        dgemm(1.0, &x, lx.t(), &x, lx, 1.0, &mut self.gram, Layout::row_major(d1, d1));
        dgemm(
            1.0,
            &x,
            lx.t(),
            &y,
            Layout::row_major(n, self.outputs),
            1.0,
            &mut self.cross,
            Layout::row_major(d1, self.outputs),
        );
        self.count += n;
        Ok(())
    }

    pub fn merge(&mut self, other: &RidgeSystem) -> Result<()> {
        if (self.dim, self.outputs) != (other.dim, other.outputs) {
            return Err(Error::Shape("merging ridge systems of different shape".into()));
        }
        for (a, b) in self.gram.iter_mut().zip(&other.gram) {
            *a += b;
        }
        for (a, b) in self.cross.iter_mut().zip(&other.cross) {
            *a += b;
        }
        self.count += other.count;
        self.target_energy += other.target_energy;
        Ok(())
    }

    /// `XᵀX + λ·diag(1, …, 1, 0)`.
    pub fn system_matrix(&self, lambda: f64) -> Vec<f64> {
        let d1 = self.dim + 1;
        let mut a = self.gram.clone();
        for i in 0..self.dim {
            a[i * d1 + i] += lambda;
        }
        a
    }

    pub fn rhs(&self) -> &[f64] {
        &self.cross
    }

    /// `‖(XᵀX + λI′)W − XᵀY‖_F / ‖XᵀY‖_F`.
    pub fn relative_residual(&self, lambda: f64, weights: &[f64]) -> f64 {
        let r = self.residual(&self.system_matrix(lambda), weights);
        let denom = frobenius(&self.cross);
        if denom == 0.0 {
            frobenius(&r)
        } else {
            frobenius(&r) / denom
        }
    }

    fn residual(&self, a: &[f64], weights: &[f64]) -> Vec<f64> {
        let d1 = self.dim + 1;
        let mut r = self.cross.clone();
        dgemm(
            1.0,
            a,
            Layout::row_major(d1, d1),
            weights,
            Layout::row_major(d1, self.outputs),
            -1.0,
            &mut r,
            Layout::row_major(d1, self.outputs),
        );
        r
    }

    /// Mean squared prediction error per output over the accumulated pairs,
    /// evaluated from the sufficient statistics.
    pub fn mean_squared_error(&self, weights: &[f64]) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        let d1 = self.dim + 1;
        let mut gw = vec![0.0; d1 * self.outputs];
        dgemm(
            1.0,
            &self.gram,
            Layout::row_major(d1, d1),
            weights,
            Layout::row_major(d1, self.outputs),
            0.0,
            &mut gw,
            Layout::row_major(d1, self.outputs),
        );
        let quad: f64 = gw.iter().zip(weights).map(|(a, b)| a * b).sum();
        let lin: f64 = self.cross.iter().zip(weights).map(|(a, b)| a * b).sum();
        ((quad - 2.0 * lin + self.target_energy) / (self.count * self.outputs) as f64).max(0.0)
    }

    /// Solves the regularized normal equations by Cholesky factorization.
    ///
    /// If the matrix is not positive definite (only possible with `λ = 0`
    /// and a rank-deficient design) the minimum-norm least-squares solution
    /// is returned via an eigen-decomposition pseudo-inverse.
    pub fn solve(&self, lambda: f64) -> Result<RidgeSolution> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Argument(format!("ridge lambda must be finite and >= 0, got {lambda}")));
        }
        if self.count == 0 {
            return Err(Error::Argument("ridge system has no training pairs".into()));
        }
        let d1 = self.dim + 1;
        let a = self.system_matrix(lambda);
        let am = DMatrix::from_row_slice(d1, d1, &a);
        let mut solved = None;
        if let Some(ch) = am.clone().cholesky() {
            let (w, rel) = self.apply_inverse(lambda, &a, &ch.inverse(), true);
            if rel <= MAX_RELATIVE_RESIDUAL {
                solved = Some((w, rel, false));
            }
        }
        let (weights, rel, used_pseudo_inverse) = match solved {
            Some(s) => s,
            None => {
                let (w, rel) = self.apply_inverse(lambda, &a, &pseudo_inverse(am), false);
                (w, rel, true)
            }
        };
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numerical("ridge solve produced non-finite weights".into()));
        }
        if rel > MAX_RELATIVE_RESIDUAL {
            return Err(Error::Numerical(format!(
                "normal-equation residual {rel:.3e} exceeds {MAX_RELATIVE_RESIDUAL:e}"
            )));
        }
        Ok(RidgeSolution {
            weights,
            relative_residual: rel,
            lambda,
            used_pseudo_inverse,
        })
    }
}

impl RidgeSystem {
    /// `W = A⁻¹ XᵀY`, optionally followed by one step of iterative refinement.
    fn apply_inverse(&self, lambda: f64, a: &[f64], inverse: &DMatrix<f64>, refine: bool) -> (Vec<f64>, f64) {
        let d1 = self.dim + 1;
        // symmetric, so the column-major buffer doubles as row-major
        let inv = inverse.as_slice();
        let li = Layout::row_major(d1, d1);
        let lw = Layout::row_major(d1, self.outputs);
        let mut weights = vec![0.0; d1 * self.outputs];
        dgemm(1.0, inv, li, &self.cross, lw, 0.0, &mut weights, lw);
        let mut rel = self.relative_residual(lambda, &weights);
        if refine && rel > 1e-12 && rel.is_finite() {
            let r = self.residual(a, &weights);
            dgemm(-1.0, inv, li, &r, lw, 1.0, &mut weights, lw);
            rel = self.relative_residual(lambda, &weights);
        }
        if !rel.is_finite() {
            rel = f64::INFINITY;
        }
        (weights, rel)
    }
}

fn pseudo_inverse(a: DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a);
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = max * n as f64 * f64::EPSILON;
    let mut scaled = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let s = if l.abs() > tol { 1.0 / l } else { 0.0 };
        scaled.column_mut(j).scale_mut(s);
    }
    scaled * eig.eigenvectors.transpose()
}

/// Linear map from descriptors back to patch pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Inverter {
    dim: usize,
    patch_size: usize,
    lambda: f64,
    /// `(dim + 1) × patch_size²`, bias row last.
    weights: Vec<f32>,
}

impl Inverter {
    pub fn from_weights(dim: usize, patch_size: usize, lambda: f64, weights: Vec<f32>) -> Result<Self> {
        if weights.len() != (dim + 1) * patch_size * patch_size {
            return Err(Error::Shape(format!(
                "inverter weights need {} values, got {}",
                (dim + 1) * patch_size * patch_size,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numerical("non-finite inverter weight".into()));
        }
        Ok(Self {
            dim,
            patch_size,
            lambda,
            weights,
        })
    }

    fn from_solution(dim: usize, patch_size: usize, sol: &RidgeSolution) -> Result<Self> {
        let weights = sol.weights.iter().map(|&w| w as f32).collect();
        Self::from_weights(dim, patch_size, sol.lambda, weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    /// The bias row: what a zero descriptor inverts to before clamping.
    pub fn bias(&self) -> &[f32] {
        let p = self.patch_size * self.patch_size;
        &self.weights[self.dim * p..]
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::Shape(format!(
                "descriptor of length {len} vs inverter dimension {}",
                self.dim
            )));
        }
        Ok(())
    }

    /// `Wᵀ[x; 1]` without clamping.
    pub fn predict_raw(&self, x: &[f32]) -> Result<Vec<f32>> {
        self.check_dim(x.len())?;
        let p = self.patch_size * self.patch_size;
        let mut out: Vec<f64> = self.bias().iter().map(|&b| b as f64).collect();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.weights[i * p..(i + 1) * p];
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi as f64 * *w as f64;
            }
        }
        Ok(out.into_iter().map(|v| v as f32).collect())
    }

    /// Inverts one descriptor into a patch clamped to `[0, 1]`.
    pub fn invert(&self, x: &[f32]) -> Result<GrayPatch> {
        let mut raw = self.predict_raw(x)?;
        clamp_unit(&mut raw);
        GrayPatch::new(self.patch_size, raw)
    }

    /// Inverts every row of a set; rows go through a matrix product.
    pub fn invert_set(&self, set: &DescriptorSet) -> Result<Vec<GrayPatch>> {
        self.check_dim(set.dim())?;
        let p = self.patch_size * self.patch_size;
        let d1 = self.dim + 1;
        let mut out = Vec::with_capacity(set.len());
        let rows: Vec<&[f32]> = set.rows().collect();
        for chunk in rows.chunks(BATCH) {
            let m = chunk.len();
            let mut x = Vec::with_capacity(m * d1);
            for r in chunk {
                x.extend_from_slice(r);
                x.push(1.0);
            }
            let mut y = vec![0.0f32; m * p];
            sgemm(
                &x,
                Layout::row_major(m, d1),
                &self.weights,
                Layout::row_major(d1, p),
                &mut y,
                Layout::row_major(m, p),
            );
            for mut patch in y.chunks_exact(p).map(|c| c.to_vec()) {
                clamp_unit(&mut patch);
                out.push(GrayPatch::new(self.patch_size, patch)?);
            }
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_matrix(MatrixKind::Inverter, self.dim + 1, self.patch_size, &self.weights)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bytes(path.as_ref(), &self.to_bytes())
    }

    /// Loads an inverter file; the regularization weight is not stored and
    /// reads back as NaN.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (d1, patch, weights) = decode_matrix(MatrixKind::Inverter, &read_bytes(path)?, path)?;
        if d1 < 2 {
            return Err(Error::malformed(path, "inverter needs at least one input"));
        }
        Self::from_weights(d1 - 1, patch, f64::NAN, weights)
            .map_err(|e| Error::malformed(path, e.to_string()))
    }
}

fn clamp_unit(v: &mut [f32]) {
    for x in v {
        *x = if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
    }
}

/// Fits an inverter on explicit pairs with a fixed `lambda`.
pub fn train_inverter(pairs: &[(HogDescriptor, GrayPatch)], lambda: f64, patch_size: usize) -> Result<Inverter> {
    train_inverter_report(pairs, lambda, patch_size).map(|(inv, _)| inv)
}

pub fn train_inverter_report(
    pairs: &[(HogDescriptor, GrayPatch)],
    lambda: f64,
    patch_size: usize,
) -> Result<(Inverter, RidgeSolution)> {
    let first = pairs
        .first()
        .ok_or_else(|| Error::Argument("inverter training needs at least one pair".into()))?;
    let dim = first.0.dim();
    let mut sys = RidgeSystem::new(dim, patch_size * patch_size);
    for chunk in pairs.chunks(BATCH) {
        let mut xs = Vec::with_capacity(chunk.len() * dim);
        let mut ys = Vec::with_capacity(chunk.len() * patch_size * patch_size);
        for (d, p) in chunk {
            if d.dim() != dim {
                return Err(Error::Shape("training descriptors differ in dimension".into()));
            }
            if p.size() != patch_size {
                return Err(Error::Shape(format!(
                    "training patch of side {} vs inverter patch size {patch_size}",
                    p.size()
                )));
            }
            xs.extend_from_slice(&d.values);
            ys.extend_from_slice(p.data());
        }
        sys.add_batch(&xs, &ys)?;
    }
    let sol = sys.solve(lambda)?;
    Ok((Inverter::from_solution(dim, patch_size, &sol)?, sol))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverterConfig {
    pub lambdas: Vec<f64>,
    pub max_pairs: usize,
    pub holdout_fraction: f64,
}

impl Default for InverterConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![1e-2, 1e-1, 1.0, 10.0],
            max_pairs: 50_000,
            holdout_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaSelection {
    pub lambda: f64,
    /// `(λ, held-out MSE)` for every candidate.
    pub holdout_mse: Vec<(f64, f64)>,
    pub relative_residual: f64,
    pub train_pairs: usize,
    pub holdout_pairs: usize,
}

/// Picks `λ` by held-out error, then refits on all pairs with the winner.
pub fn select_and_fit(
    train: &RidgeSystem,
    holdout: &RidgeSystem,
    lambdas: &[f64],
    patch_size: usize,
) -> Result<(Inverter, LambdaSelection)> {
    if lambdas.is_empty() {
        return Err(Error::Config("empty lambda grid".into()));
    }
    if train.outputs() != patch_size * patch_size {
        return Err(Error::Shape("ridge outputs do not match the patch size".into()));
    }
    let mut scores = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        let sol = train.solve(l)?;
        let mse = if holdout.count() > 0 {
            holdout.mean_squared_error(&sol.weights)
        } else {
            train.mean_squared_error(&sol.weights)
        };
        scores.push((l, mse));
    }
    let best = scores
        .iter()
        .fold(scores[0], |b, s| if s.1 < b.1 { *s } else { b })
        .0;
    let mut all = train.clone();
    all.merge(holdout)?;
    let sol = all.solve(best)?;
    let inv = Inverter::from_solution(train.dim(), patch_size, &sol)?;
    Ok((
        inv,
        LambdaSelection {
            lambda: best,
            holdout_mse: scores,
            relative_residual: sol.relative_residual,
            train_pairs: train.count(),
            holdout_pairs: holdout.count(),
        },
    ))
}

/// Element `i` is the inversion of prototype `i`.
pub fn invert_prototypes(inv: &Inverter, cb: &Codebook) -> Result<Vec<GrayPatch>> {
    let set = DescriptorSet::from_flat(cb.dim(), cb.as_flat().to_vec())?;
    inv.invert_set(&set)
}

pub fn invert_descriptor(inv: &Inverter, x: &HogDescriptor) -> Result<GrayPatch> {
    inv.invert(&x.values)
}

/// Accumulates patches painted at their windows with uniform weight.
#[derive(Debug, Clone)]
pub struct ReconstructionCanvas {
    width: usize,
    height: usize,
    accum: Vec<f64>,
    weight: Vec<f64>,
}

impl ReconstructionCanvas {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            accum: vec![0.0; width * height],
            weight: vec![0.0; width * height],
        }
    }

    /// Adds the in-bounds part of `patch` at `window`.
    pub fn paint(&mut self, window: PatchWindow, patch: &GrayPatch) {
        let size = patch.size();
        if window.x0 >= self.width || window.y0 >= self.height {
            return;
        }
        let cols = size.min(self.width - window.x0);
        let rows = size.min(self.height - window.y0);
        let src = patch.data();
        for r in 0..rows {
            let base = (window.y0 + r) * self.width + window.x0;
            for c in 0..cols {
                self.accum[base + c] += src[r * size + c] as f64;
                self.weight[base + c] += 1.0;
            }
        }
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    /// `accum / weight` where covered, 0 elsewhere.
    pub fn finalize(&self) -> GrayImage {
        let data = self
            .accum
            .iter()
            .zip(&self.weight)
            .map(|(a, w)| if *w > 0.0 { (a / w) as f32 } else { 0.0 })
            .collect();
        GrayImage::from_clamped(self.width, self.height, data).expect("canvas has positive size")
    }
}

/// HOG descriptors for every grid window of an image, in grid order.
pub fn dense_descriptors(img: &GrayImage, grid: GridSpec, hog: &HogConfig) -> Result<(Vec<PatchWindow>, DescriptorSet)> {
    grid.validate()?;
    hog.validate()?;
    if !grid.patch_size.is_multiple_of(hog.cells_per_side) {
        return Err(Error::Config(format!(
            "patch size {} is not divisible by {} cells",
            grid.patch_size, hog.cells_per_side
        )));
    }
    let windows = grid_positions(img.width(), img.height(), grid);
    let describe = |w: &PatchWindow| -> Result<Vec<f32>> {
        let patch = extract_patch(img, *w)?;
        Ok(compute_hog(&patch, hog)?.values)
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<f32>> = windows.par_iter().map(describe).collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<f32>> = windows.iter().map(describe).collect::<Result<_>>()?;
    let mut set = DescriptorSet::new(hog.dim());
    for r in &rows {
        set.push(r)?;
    }
    Ok((windows, set))
}

/// Reconstructs an image from its dense descriptors.
///
/// With a codebook every descriptor is replaced by its nearest prototype's
/// inversion; without one the raw descriptor is inverted.
pub fn reconstruct(
    img: &GrayImage,
    grid: GridSpec,
    hog: &HogConfig,
    inv: &Inverter,
    cb: Option<&Codebook>,
) -> Result<GrayImage> {
    if inv.patch_size() != grid.patch_size {
        return Err(Error::Shape(format!(
            "inverter patch size {} vs grid patch size {}",
            inv.patch_size(),
            grid.patch_size
        )));
    }
    if inv.dim() != hog.dim() {
        return Err(Error::Shape(format!(
            "inverter dimension {} vs descriptor dimension {}",
            inv.dim(),
            hog.dim()
        )));
    }
    if let Some(cb) = cb {
        if cb.dim() != inv.dim() {
            return Err(Error::Shape(format!(
                "codebook dimension {} vs inverter dimension {}",
                cb.dim(),
                inv.dim()
            )));
        }
    }
    let (windows, descs) = dense_descriptors(img, grid, hog)?;
    let mut canvas = ReconstructionCanvas::new(img.width(), img.height());
    match cb {
        Some(cb) => {
            let atlas = invert_prototypes(inv, cb)?;
            let assigned = nearest_batch(descs.as_flat(), cb.as_flat(), cb.dim());
            for (w, (idx, _)) in windows.iter().zip(assigned) {
                canvas.paint(*w, &atlas[idx]);
            }
        }
        None => {
            let patches = inv.invert_set(&descs)?;
            for (w, p) in windows.iter().zip(&patches) {
                canvas.paint(*w, p);
            }
        }
    }
    Ok(canvas.finalize())
}

/// Mean absolute 5-point Laplacian response over interior pixels.
pub fn high_freq_energy(img: &GrayImage) -> Result<f64> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::Argument(format!(
            "high-frequency energy needs at least 3x3 pixels, got {w}x{h}"
        )));
    }
    let d = img.data();
    let mut total = 0.0f64;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let c = d[y * w + x] as f64;
            let lap = d[(y - 1) * w + x] as f64
                + d[(y + 1) * w + x] as f64
                + d[y * w + x - 1] as f64
                + d[y * w + x + 1] as f64
                - 4.0 * c;
            total += lap.abs();
        }
    }
    Ok(total / ((w - 2) * (h - 2)) as f64)
}
