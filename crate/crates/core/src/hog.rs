//! Felzenszwalb-style HOG over a square patch.
//!
//! Each of the `cells_per_side²` cells yields 32 channels: 18 contrast-sensitive
//! orientations, 9 contrast-insensitive orientations, 4 gradient-energy
//! channels (one per normalizing block) and one channel that is always zero.
//! With the default 4x4 cells this gives 512 values per patch.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PatchWindow;
use crate::image::GrayPatch;

/// Channels emitted per cell.
pub const CHANNELS_PER_CELL: usize = 32;

/// `1 / sqrt(18)`, the energy-channel weight of the original feature.
const ENERGY_WEIGHT: f64 = 0.235_702_260_395_515_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HogConfig {
    pub cells_per_side: usize,
    pub orientation_bins_sensitive: usize,
    pub orientation_bins_insensitive: usize,
    pub truncation: f64,
    pub epsilon: f64,
}

impl Default for HogConfig {
    fn default() -> Self {
        Self {
            cells_per_side: 4,
            orientation_bins_sensitive: 18,
            orientation_bins_insensitive: 9,
            truncation: 0.2,
            epsilon: 1e-4,
        }
    }
}

impl HogConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cells_per_side == 0 {
            return Err(Error::Config("cells_per_side must be positive".into()));
        }
        if self.orientation_bins_insensitive == 0
            || self.orientation_bins_sensitive != 2 * self.orientation_bins_insensitive
        {
            return Err(Error::Config(format!(
                "sensitive bins ({}) must be twice the insensitive bins ({})",
                self.orientation_bins_sensitive, self.orientation_bins_insensitive
            )));
        }
        // The 32-channel layout is fixed: 18 + 9 + 4 + 1.
        if self.orientation_bins_sensitive + self.orientation_bins_insensitive + 5
            != CHANNELS_PER_CELL
        {
            return Err(Error::Config(
                "orientation bins must be 18/9 for the 32-channel layout".into(),
            ));
        }
        if !(self.truncation > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::Config("truncation and epsilon must be positive".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.cells_per_side * self.cells_per_side * CHANNELS_PER_CELL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HogDescriptor {
    pub values: Vec<f32>,
    pub source_window: PatchWindow,
}

impl HogDescriptor {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Unnormalized contrast-sensitive orientation histograms, one per cell,
/// stored cell-major (row of cells first).
#[derive(Debug, Clone, PartialEq)]
pub struct CellHistograms {
    pub cells_per_side: usize,
    pub bins: usize,
    pub values: Vec<f64>,
}

impl CellHistograms {
    pub fn cell(&self, cx: usize, cy: usize) -> &[f64] {
        let i = (cy * self.cells_per_side + cx) * self.bins;
        &self.values[i..i + self.bins]
    }
}

fn check_patch(patch: &GrayPatch, cfg: &HogConfig) -> Result<usize> {
    cfg.validate()?;
    let side = patch.size();
    if !side.is_multiple_of(cfg.cells_per_side) {
        return Err(Error::Config(format!(
            "patch side {side} is not divisible by {} cells",
            cfg.cells_per_side
        )));
    }
    Ok(side / cfg.cells_per_side)
}

/// Gradient orientation histograms per cell.
///
/// Gradients are centered differences with replicated borders. Each pixel
/// splits its gradient magnitude between the two sensitive bins whose centers
/// (at multiples of `2π / bins`) bracket its orientation.
pub fn cell_histograms(patch: &GrayPatch, cfg: &HogConfig) -> Result<CellHistograms> {
    let cell = check_patch(patch, cfg)?;
    let side = patch.size();
    let cells = cfg.cells_per_side;
    let bins = cfg.orientation_bins_sensitive;
    let bins_f = bins as f64;
    let mut values = vec![0.0f64; cells * cells * bins];
    let px = patch.data();
    for y in 0..side {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(side - 1);
        let row = y * side;
        let base = (y / cell) * cells;
        for x in 0..side {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(side - 1);
            let dx = (px[row + right] - px[row + left]) as f64;
            let dy = (px[down * side + x] - px[up * side + x]) as f64;
            let mag = (dx * dx + dy * dy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let mut theta = dy.atan2(dx);
            if theta < 0.0 {
                theta += 2.0 * PI;
            }
            let pos = theta / (2.0 * PI) * bins_f;
            let lo_f = pos.floor();
            let frac = pos - lo_f;
            let lo = (lo_f as usize) % bins;
            let hi = (lo + 1) % bins;
            let h = &mut values[(base + x / cell) * bins..][..bins];
            h[lo] += (1.0 - frac) * mag;
            h[hi] += frac * mag;
        }
    }
    Ok(CellHistograms {
        cells_per_side: cells,
        bins,
        values,
    })
}

/// Computes the block-normalized descriptor of a patch.
pub fn compute_hog(patch: &GrayPatch, cfg: &HogConfig) -> Result<HogDescriptor> {
    let hist = cell_histograms(patch, cfg)?;
    let values = normalize_cells(&hist, cfg);
    Ok(HogDescriptor {
        values,
        source_window: PatchWindow {
            x0: 0,
            y0: 0,
            size: patch.size(),
        },
    })
}

/// Descriptor of a patch extracted at `window`.
pub fn compute_hog_at(patch: &GrayPatch, window: PatchWindow, cfg: &HogConfig) -> Result<HogDescriptor> {
    let mut d = compute_hog(patch, cfg)?;
    d.source_window = window;
    Ok(d)
}

/// Turns raw cell histograms into the 32-channel-per-cell feature.
///
/// Every cell is normalized by the energy of the four 2x2 cell blocks that
/// contain it; cells beyond the border are replaced by their nearest
/// neighbor inside the grid.
pub fn normalize_cells(hist: &CellHistograms, cfg: &HogConfig) -> Vec<f32> {
    let cells = hist.cells_per_side;
    let ns = cfg.orientation_bins_sensitive;
    let ni = cfg.orientation_bins_insensitive;
    let trunc = cfg.truncation;

    let energy: Vec<f64> = (0..cells * cells)
        .map(|c| {
            let h = &hist.values[c * ns..(c + 1) * ns];
            (0..ni).map(|o| (h[o] + h[o + ni]).powi(2)).sum()
        })
        .collect();
    let at = |x: isize, y: isize| -> f64 {
        let cx = x.clamp(0, cells as isize - 1) as usize;
        let cy = y.clamp(0, cells as isize - 1) as usize;
        energy[cy * cells + cx]
    };
    let block = |x0: isize, y0: isize| -> f64 {
        let e = at(x0, y0) + at(x0 + 1, y0) + at(x0, y0 + 1) + at(x0 + 1, y0 + 1);
        1.0 / (e + cfg.epsilon).sqrt()
    };

    let mut out = vec![0.0f32; cells * cells * CHANNELS_PER_CELL];
    for cy in 0..cells {
        for cx in 0..cells {
            let (x, y) = (cx as isize, cy as isize);
            let norms = [
                block(x, y),
                block(x - 1, y),
                block(x, y - 1),
                block(x - 1, y - 1),
            ];
            let h = hist.cell(cx, cy);
            let dst = &mut out[(cy * cells + cx) * CHANNELS_PER_CELL..][..CHANNELS_PER_CELL];
            let mut energy_ch = [0.0f64; 4];
            for o in 0..ns {
                let mut sum = 0.0;
                for (t, n) in energy_ch.iter_mut().zip(norms) {
                    let v = (h[o] * n).min(trunc);
                    sum += v;
                    *t += v;
                }
                dst[o] = (0.5 * sum) as f32;
            }
            for o in 0..ni {
                let v = h[o] + h[o + ni];
                let sum: f64 = norms.iter().map(|n| (v * n).min(trunc)).sum();
                dst[ns + o] = (0.5 * sum) as f32;
            }
            for (i, t) in energy_ch.iter().enumerate() {
                dst[ns + ni + i] = (ENERGY_WEIGHT * t) as f32;
            }
            // dst[31] stays zero.
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patch_from(size: usize, f: impl Fn(usize, usize) -> f32) -> GrayPatch {
        let mut data = Vec::with_capacity(size * size);
        for y in 0..size {
            for x in 0..size {
                data.push(f(x, y));
            }
        }
        GrayPatch::new(size, data).unwrap()
    }

    #[test]
    fn default_length_is_512() {
        let p = patch_from(64, |x, y| ((x ^ y) % 7) as f32 / 7.0);
        assert_eq!(compute_hog(&p, &HogConfig::default()).unwrap().dim(), 512);
    }

    #[test]
    fn constant_patch_gives_zero() {
        let p = patch_from(32, |_, _| 0.5);
        assert!(compute_hog(&p, &HogConfig::default())
            .unwrap()
            .values
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn indivisible_side_is_rejected() {
        let p = patch_from(10, |_, _| 0.0);
        assert!(matches!(
            compute_hog(&p, &HogConfig::default()),
            Err(Error::Config(_))
        ));
        let cfg = HogConfig {
            orientation_bins_sensitive: 16,
            ..HogConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn vertical_edge_votes_horizontal_bins() {
        let p = patch_from(8, |x, _| if x < 4 { 0.0 } else { 1.0 });
        let h = cell_histograms(&p, &HogConfig::default()).unwrap();
        let total: f64 = h.values.iter().sum();
        let bin0: f64 = h.values.chunks(18).map(|c| c[0] + c[1] + c[17]).sum();
        assert!(total > 0.0);
        assert!(bin0 / total >= 0.9);
    }

    #[test]
    fn zero_channel_is_zero() {
        let p = patch_from(16, |x, y| ((x * 3 + y * 5) % 9) as f32 / 9.0);
        let d = compute_hog(&p, &HogConfig::default()).unwrap();
        assert!(d.values.chunks(32).all(|c| c[31] == 0.0));
        assert!(d.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
