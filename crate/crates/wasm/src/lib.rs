//! Browser bindings for the demo page: a reconstruction explorer, a HOG
//! glyph view and the kernel-map fidelity curve.
//!
//! Images cross the boundary as RGBA bytes, the layout of `ImageData`.

use std::collections::BTreeMap;

use vqlens::experiment::{sample_descriptor_pool, train_inverter_on};
use vqlens::synth::{scene, scene_source};
use vqlens::{
    compute_hog, extract_patch, grid_positions, kernel_map, kmeans_fit, reconstruct, Codebook, DescriptorSet,
    GrayImage, GridSpec, HogConfig, Inverter, InverterConfig, KMeansConfig, KernelMapConfig,
};
use wasm_bindgen::prelude::*;

type Result<T> = std::result::Result<T, JsError>;

fn js(e: vqlens::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn from_rgba(pixels: &[u8], width: usize, height: usize) -> Result<GrayImage> {
    GrayImage::from_rgb8(width, height, pixels, 4).map_err(js)
}

fn to_rgba(img: &GrayImage) -> Vec<u8> {
    img.to_luma8().iter().flat_map(|&v| [v, v, v, 255]).collect()
}

/// A random piecewise scene, `size`×`size`, as RGBA.
#[wasm_bindgen]
pub fn generate_scene(size: usize, seed: u32) -> Vec<u8> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed as u64);
    to_rgba(&scene(size, size, &mut rng))
}

/// Inverter plus lazily built codebooks, trained on generated scenes.
#[wasm_bindgen]
pub struct Explorer {
    hog: HogConfig,
    patch_size: usize,
    inverter: Inverter,
    pool: DescriptorSet,
    codebooks: BTreeMap<usize, Codebook>,
    seed: u64,
}

#[wasm_bindgen]
impl Explorer {
    /// Trains an inverter for `patch_size` windows on `scenes` generated
    /// 64×64 images.
    #[wasm_bindgen(constructor)]
    pub fn new(patch_size: usize, scenes: usize, seed: u32) -> Result<Explorer> {
        let hog = HogConfig::default();
        let grid = GridSpec::new(patch_size, (patch_size / 4).max(1)).map_err(js)?;
        let source = scene_source(scenes.max(1), 64, 64, seed as u64);
        let ids: Vec<usize> = (0..scenes.max(1)).collect();
        let cfg = InverterConfig {
            max_pairs: 4000,
            ..InverterConfig::default()
        };
        let (inverter, _) = train_inverter_on(&source, &ids, grid, &hog, &cfg, seed as u64).map_err(js)?;
        let pool = sample_descriptor_pool(&source, &ids, grid, &hog, 4000, seed as u64).map_err(js)?;
        Ok(Explorer {
            hog,
            patch_size,
            inverter,
            pool,
            codebooks: BTreeMap::new(),
            seed: seed as u64,
        })
    }

    #[wasm_bindgen(getter)]
    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    /// Descriptors available for clustering; `k` may not exceed this.
    #[wasm_bindgen(getter)]
    pub fn pool_size(&self) -> usize {
        self.pool.len()
    }

    /// Reconstructs an RGBA image from its descriptors at `stride`; `k = 0`
    /// inverts raw descriptors, otherwise they are first quantized to a
    /// `k`-word codebook.
    pub fn reconstruct(&mut self, pixels: &[u8], width: usize, height: usize, stride: usize, k: usize) -> Result<Vec<u8>> {
        let img = from_rgba(pixels, width, height)?;
        let grid = GridSpec::new(self.patch_size, stride).map_err(js)?;
        if k > 0 && !self.codebooks.contains_key(&k) {
            let cfg = KMeansConfig {
                k,
                max_iterations: 15,
                restarts: 1,
                seed: self.seed,
                ..KMeansConfig::default()
            };
            let cb = kmeans_fit(&self.pool, &cfg).map_err(js)?;
            self.codebooks.insert(k, cb);
        }
        let cb = if k > 0 { self.codebooks.get(&k) } else { None };
        let rec = reconstruct(&img, grid, &self.hog, &self.inverter, cb).map_err(js)?;
        Ok(to_rgba(&rec))
    }

    /// Mean squared error between two same-sized RGBA images, in gray.
    pub fn mse(&self, a: &[u8], b: &[u8], width: usize, height: usize) -> Result<f64> {
        from_rgba(a, width, height)?.mse(&from_rgba(b, width, height)?).map_err(js)
    }
}

const CHANNELS: usize = 32;
const SENSITIVE: usize = 18;
const INSENSITIVE: usize = 9;

fn stroke(canvas: &mut [f32], width: usize, height: usize, (cx, cy): (f64, f64), angle: f64, half: f64, value: f32) {
    let (dx, dy) = (angle.cos(), angle.sin());
    let steps = (2.0 * half).ceil() as i64 * 2;
    for i in 0..=steps {
        let t = -half + 2.0 * half * i as f64 / steps as f64;
        let (x, y) = ((cx + t * dx).round(), (cy + t * dy).round());
        if x >= 0.0 && y >= 0.0 && (x as usize) < width && (y as usize) < height {
            let p = &mut canvas[y as usize * width + x as usize];
            *p = p.max(value);
        }
    }
}

/// Draws the contrast-insensitive orientation channels of non-overlapping
/// `patch_size` windows as oriented strokes, one star per cell, brighter for
/// stronger channels. Strokes run along edges, across the gradient.
#[wasm_bindgen]
pub fn hog_glyphs(pixels: &[u8], width: usize, height: usize, patch_size: usize) -> Result<Vec<u8>> {
    let img = from_rgba(pixels, width, height)?;
    let hog = HogConfig::default();
    let grid = GridSpec::new(patch_size, patch_size).map_err(js)?;
    let cell = patch_size / hog.cells_per_side;
    let mut canvas = vec![0.0f32; width * height];
    let mut peak = 0.0f32;
    let mut strokes = Vec::new();
    for w in grid_positions(width, height, grid) {
        let d = compute_hog(&extract_patch(&img, w).map_err(js)?, &hog).map_err(js)?;
        for (c, block) in d.values.chunks_exact(CHANNELS).enumerate() {
            let (cx, cy) = (c % hog.cells_per_side, c / hog.cells_per_side);
            let centre = (
                (w.x0 + cx * cell) as f64 + cell as f64 / 2.0,
                (w.y0 + cy * cell) as f64 + cell as f64 / 2.0,
            );
            for (o, &v) in block[SENSITIVE..SENSITIVE + INSENSITIVE].iter().enumerate() {
                peak = peak.max(v);
                let angle = (20.0 * o as f64 + 90.0).to_radians();
                strokes.push((centre, angle, v));
            }
        }
    }
    if peak > 0.0 {
        let mut order: Vec<usize> = (0..strokes.len()).collect();
        order.sort_by(|a, b| strokes[*a].2.total_cmp(&strokes[*b].2));
        for i in order {
            let (centre, angle, v) = strokes[i];
            stroke(&mut canvas, width, height, centre, angle, cell as f64 / 2.0, v / peak);
        }
    }
    let glyphs = GrayImage::from_clamped(width, height, canvas).map_err(js)?;
    Ok(to_rgba(&glyphs))
}

fn chi2(x: f64, y: f64, gamma: f64) -> f64 {
    if x <= 0.0 || y <= 0.0 {
        return 0.0;
    }
    (x * y).powf(gamma / 2.0) * 2.0 * (x * y).sqrt() / (x + y)
}

/// Scalar kernel `k(1, y)` against its order-`n` approximation for `points`
/// values of `y` spaced log-uniformly in [1e-3, 1e3]. Returns flat triples
/// `(y, exact, approximate)`.
#[wasm_bindgen]
pub fn kernel_curve(n: usize, gamma: f64, points: usize) -> Result<Vec<f64>> {
    let cfg = KernelMapConfig {
        n,
        gamma,
        ..KernelMapConfig::default()
    };
    let base = kernel_map(&[1.0], &cfg).map_err(js)?;
    let mut out = Vec::with_capacity(points * 3);
    for i in 0..points {
        let y = 10f64.powf(-3.0 + 6.0 * i as f64 / (points.max(2) - 1) as f64);
        let psi = kernel_map(&[y], &cfg).map_err(js)?;
        let approx: f64 = base.iter().zip(&psi).map(|(a, b)| a * b).sum();
        out.extend([y, chi2(1.0, y, gamma), approx]);
    }
    Ok(out)
}
