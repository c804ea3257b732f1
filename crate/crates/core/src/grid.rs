//! Dense sampling grid anchored at the image origin.
//!
//! Window corners sit at multiples of the stride and must lie strictly inside
//! the image; windows overhanging the right or bottom border read zeros there.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayImage, GrayPatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub patch_size: usize,
    pub stride: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            patch_size: 64,
            stride: 8,
        }
    }
}

impl GridSpec {
    pub fn new(patch_size: usize, stride: usize) -> Result<Self> {
        let spec = Self { patch_size, stride };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 8 || !self.patch_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "patch size must be a power of two >= 8, got {}",
                self.patch_size
            )));
        }
        if self.stride == 0 || self.stride > self.patch_size {
            return Err(Error::Config(format!(
                "stride must lie in [1, {}], got {}",
                self.patch_size, self.stride
            )));
        }
        Ok(())
    }

    pub fn window_count(&self, width: usize, height: usize) -> usize {
        width.div_ceil(self.stride) * height.div_ceil(self.stride)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchWindow {
    pub x0: usize,
    pub y0: usize,
    pub size: usize,
}

/// Row-major windows with corners at `(i * stride, j * stride)` inside the image.
pub fn grid_positions(width: usize, height: usize, grid: GridSpec) -> Vec<PatchWindow> {
    let s = grid.stride.max(1);
    let mut out = Vec::with_capacity(width.div_ceil(s) * height.div_ceil(s));
    for y0 in (0..height).step_by(s) {
        for x0 in (0..width).step_by(s) {
            out.push(PatchWindow {
                x0,
                y0,
                size: grid.patch_size,
            });
        }
    }
    out
}

/// Copies the window into a patch, zero-filling anything past the image border.
pub fn extract_patch(img: &GrayImage, window: PatchWindow) -> Result<GrayPatch> {
    let (w, h) = (img.width(), img.height());
    if window.x0 >= w || window.y0 >= h {
        return Err(Error::Bounds {
            x0: window.x0,
            y0: window.y0,
            width: w,
            height: h,
        });
    }
    let size = window.size;
    let mut patch = GrayPatch::zeros(size);
    let cols = size.min(w - window.x0);
    let rows = size.min(h - window.y0);
    let src = img.data();
    let dst = patch.data_mut();
    for r in 0..rows {
        let s = (window.y0 + r) * w + window.x0;
        dst[r * size..r * size + cols].copy_from_slice(&src[s..s + cols]);
    }
    Ok(patch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_examples() {
        assert_eq!(grid_positions(256, 256, GridSpec::new(64, 8).unwrap()).len(), 1024);
        let one = grid_positions(64, 64, GridSpec::new(64, 64).unwrap());
        assert_eq!(one, vec![PatchWindow { x0: 0, y0: 0, size: 64 }]);
        let two = grid_positions(65, 64, GridSpec::new(64, 64).unwrap());
        assert_eq!(
            two.iter().map(|w| (w.x0, w.y0)).collect::<Vec<_>>(),
            vec![(0, 0), (64, 0)]
        );
    }

    #[test]
    fn count_formula_small_range() {
        // Exhaustive over the small range; the grid only depends on the stride.
        for s in 1..=24 {
            let grid = GridSpec { patch_size: 64, stride: s };
            for w in s..=64 {
                for h in s..=64 {
                    assert_eq!(grid_positions(w, h, grid).len(), w.div_ceil(s) * h.div_ceil(s));
                }
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(GridSpec::new(48, 8).is_err());
        assert!(GridSpec::new(4, 2).is_err());
        assert!(GridSpec::new(16, 17).is_err());
        assert!(GridSpec::new(16, 0).is_err());
        assert!(GridSpec::new(16, 16).is_ok());
    }

    #[test]
    fn interior_patch_is_a_copy() {
        let img = GrayImage::from_fn(20, 20, |x, y| ((x * 7 + y * 3) % 11) as f32 / 10.0).unwrap();
        let p = extract_patch(&img, PatchWindow { x0: 4, y0: 5, size: 8 }).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(p.get(x, y), img.get(x + 4, y + 5));
            }
        }
    }

    #[test]
    fn overhang_is_zero_padded() {
        let img = GrayImage::filled(96, 64, 1.0).unwrap();
        let p = extract_patch(&img, PatchWindow { x0: 64, y0: 0, size: 64 }).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                let expect = if x < 32 { 1.0 } else { 0.0 };
                assert_eq!(p.get(x, y), expect);
            }
        }
    }

    #[test]
    fn corner_outside_is_an_error() {
        let img = GrayImage::filled(10, 10, 0.0).unwrap();
        assert!(matches!(
            extract_patch(&img, PatchWindow { x0: 10, y0: 0, size: 8 }),
            Err(Error::Bounds { .. })
        ));
    }
}
