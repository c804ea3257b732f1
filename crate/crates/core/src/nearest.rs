//! Exact nearest-prototype search, batched through a matrix product.
//!
//! Scores `‖c‖² − 2⟨x, c⟩` come from an `f32` GEMM; every prototype whose
//! score falls within a rounding margin of the best is then re-checked with
//! an exact `f64` distance, so the result equals a plain exhaustive scan
//! (ties resolved toward the lowest index).

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::linalg::{sgemm, Layout};

const BLOCK: usize = 256;

#[inline]
pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum()
}

#[inline]
fn squared_norm(a: &[f32]) -> f64 {
    a.iter().map(|v| (*v as f64) * (*v as f64)).sum()
}

/// Exhaustive scan; returns `(index, squared distance)`.
pub fn nearest_exhaustive(x: &[f32], centers: &[f32], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.chunks_exact(dim).enumerate() {
        let d = squared_distance(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn nearest_block(
    points: &[f32],
    centers: &[f32],
    center_norms: &[f64],
    max_norm: f64,
    dim: usize,
) -> Vec<(usize, f64)> {
    let m = points.len() / dim;
    let k = center_norms.len();
    let mut dots = vec![0.0f32; m * k];
    sgemm(
        points,
        Layout::row_major(m, dim),
        centers,
        Layout::row_major(k, dim).t(),
        &mut dots,
        Layout::row_major(m, k),
    );
    let mut out = Vec::with_capacity(m);
    for (i, x) in points.chunks_exact(dim).enumerate() {
        let row = &dots[i * k..(i + 1) * k];
        let scores = row
            .iter()
            .zip(center_norms)
            .map(|(g, cn)| cn - 2.0 * *g as f64);
        let best = scores.clone().fold(f64::INFINITY, f64::min);
        // |error of 2<x,c>| <= 2 p eps ‖x‖‖c‖ <= p eps (‖x‖² + ‖c‖²)
        let margin = 2.0 * (dim as f64) * (f32::EPSILON as f64) * (squared_norm(x) + max_norm) + 1e-12;
        let mut chosen = (0usize, f64::INFINITY);
        for (j, s) in scores.enumerate() {
            if s <= best + margin {
                let d = squared_distance(x, &centers[j * dim..(j + 1) * dim]);
                if d < chosen.1 {
                    chosen = (j, d);
                }
            }
        }
        out.push(chosen);
    }
    out
}

/// Nearest center for every row of `points`.
pub fn nearest_batch(points: &[f32], centers: &[f32], dim: usize) -> Vec<(usize, f64)> {
    if points.is_empty() {
        return Vec::new();
    }
    let norms: Vec<f64> = centers.chunks_exact(dim).map(squared_norm).collect();
    let max_norm = norms.iter().copied().fold(0.0, f64::max);
    let chunk = BLOCK * dim;

    #[cfg(feature = "parallel")]
    let blocks: Vec<Vec<(usize, f64)>> = points
        .par_chunks(chunk)
        .map(|b| nearest_block(b, centers, &norms, max_norm, dim))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let blocks: Vec<Vec<(usize, f64)>> = points
        .chunks(chunk)
        .map(|b| nearest_block(b, centers, &norms, max_norm, dim))
        .collect();

    blocks.into_iter().flatten().collect()
}
