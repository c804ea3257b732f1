//! Procedural test images: oriented textures with a known class structure,
//! and small piecewise scenes for reconstruction experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::MemoryCorpus;
use crate::image::GrayImage;

/// Parameters of an oriented-texture class corpus.
#[derive(Debug, Clone)]
pub struct TextureSpec {
    /// `(class name, dominant orientation in degrees)`.
    pub classes: Vec<(String, f64)>,
    pub per_class: usize,
    pub size: usize,
    /// Standard deviation of the per-image orientation jitter, degrees.
    pub jitter_deg: f64,
    pub noise: f64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            classes: vec![("deg000".into(), 0.0), ("deg060".into(), 60.0), ("deg120".into(), 120.0)],
            per_class: 40,
            size: 96,
            jitter_deg: 6.0,
            noise: 0.04,
        }
    }
}

/// One grating at `angle_deg` plus a faint distractor grating and noise.
pub fn oriented_texture(angle_deg: f64, size: usize, jitter_deg: f64, noise: f64, rng: &mut impl Rng) -> GrayImage {
    let jitter = Normal::new(0.0, jitter_deg.max(1e-12)).expect("finite sigma");
    let pixel_noise = Normal::new(0.0, noise.max(1e-12)).expect("finite sigma");
    let theta = (angle_deg + jitter.sample(rng)).to_radians();
    let period = rng.random_range(7.0..13.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let contrast = rng.random_range(0.25..0.4);
    let d_theta = rng.random_range(0.0..std::f64::consts::PI);
    let d_period = rng.random_range(15.0..30.0);
    let d_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let (s, c) = theta.sin_cos();
    let (ds, dc) = d_theta.sin_cos();
    let mut data = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (xf, yf) = (x as f64, y as f64);
            // the grating varies across the dominant orientation
            let u = -xf * s + yf * c;
            let v = xf * dc + yf * ds;
            let val = 0.5
                + contrast * (std::f64::consts::TAU * u / period + phase).sin()
                + 0.08 * (std::f64::consts::TAU * v / d_period + d_phase).sin()
                + if noise > 0.0 { pixel_noise.sample(rng) } else { 0.0 };
            data.push(val as f32);
        }
    }
    GrayImage::from_clamped(size, size, data).expect("dimensions match")
}

/// Classes in the given order, ids `"<class>/<index>"`.
pub fn texture_corpus(spec: &TextureSpec, seed: u64) -> MemoryCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = MemoryCorpus::new();
    for (name, angle) in &spec.classes {
        for i in 0..spec.per_class {
            let img = oriented_texture(*angle, spec.size, spec.jitter_deg, spec.noise, &mut rng);
            corpus.push(name.clone(), format!("{name}/{i:04}"), img);
        }
    }
    corpus
}

/// A piecewise scene: a shaded background, rectangles, discs and one
/// textured region.
pub fn scene(width: usize, height: usize, rng: &mut impl Rng) -> GrayImage {
    let (w, h) = (width as f64, height as f64);
    let gx = rng.random_range(-0.3..0.3) / w;
    let gy = rng.random_range(-0.3..0.3) / h;
    let base = rng.random_range(0.3..0.7);
    let mut data: Vec<f64> = (0..height)
        .flat_map(|y| (0..width).map(move |x| base + gx * x as f64 + gy * y as f64))
        .collect();

    for _ in 0..rng.random_range(3..7) {
        let x0 = rng.random_range(0.0..w * 0.8);
        let y0 = rng.random_range(0.0..h * 0.8);
        let x1 = x0 + rng.random_range(w * 0.1..w * 0.5);
        let y1 = y0 + rng.random_range(h * 0.1..h * 0.5);
        let v = rng.random_range(0.0..1.0);
        paint(&mut data, width, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1, |_, _| v);
    }
    for _ in 0..rng.random_range(1..4) {
        let cx = rng.random_range(0.0..w);
        let cy = rng.random_range(0.0..h);
        let r = rng.random_range(w * 0.05..w * 0.25);
        let v = rng.random_range(0.0..1.0);
        paint(&mut data, width, |x, y| (x - cx).powi(2) + (y - cy).powi(2) < r * r, |_, _| v);
    }
    let tx0 = rng.random_range(0.0..w * 0.6);
    let ty0 = rng.random_range(0.0..h * 0.6);
    let tw = rng.random_range(w * 0.2..w * 0.4);
    let th = rng.random_range(h * 0.2..h * 0.4);
    let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let period = rng.random_range(4.0..10.0);
    let (s, c) = theta.sin_cos();
    paint(
        &mut data,
        width,
        |x, y| x >= tx0 && x < tx0 + tw && y >= ty0 && y < ty0 + th,
        |x, y| 0.5 + 0.4 * (std::f64::consts::TAU * (x * c + y * s) / period).sin(),
    );
    GrayImage::from_clamped(width, height, data.into_iter().map(|v| v as f32).collect()).expect("dimensions match")
}

fn paint(
    data: &mut [f64],
    width: usize,
    inside: impl Fn(f64, f64) -> bool,
    value: impl Fn(f64, f64) -> f64,
) {
    for (i, px) in data.iter_mut().enumerate() {
        let (x, y) = ((i % width) as f64 + 0.5, (i / width) as f64 + 0.5);
        if inside(x, y) {
            *px = value(x, y);
        }
    }
}

pub fn scene_corpus(count: usize, width: usize, height: usize, seed: u64) -> Vec<GrayImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| scene(width, height, &mut rng)).collect()
}

/// `scene_corpus` wrapped as a single-class corpus named `scene`.
pub fn scene_source(count: usize, width: usize, height: usize, seed: u64) -> MemoryCorpus {
    let mut c = MemoryCorpus::new();
    for (i, img) in scene_corpus(count, width, height, seed).into_iter().enumerate() {
        c.push("scene", format!("scene/{i:04}"), img);
    }
    c
}
