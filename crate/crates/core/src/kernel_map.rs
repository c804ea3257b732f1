//! Explicit homogeneous kernel map for the χ² kernel.
//!
//! A γ-homogeneous additive kernel factors per dimension as
//! `k(x, y) = (xy)^{γ/2} 𝒦(log y − log x)`. For χ² the signature is
//! `𝒦(λ) = sech(λ/2)` with spectrum `κ(ω) = sech(πω)`. Sampling the
//! spectrum at `0, L, …, nL` gives a `2n + 1` dimensional real feature per
//! input dimension whose inner products approximate the kernel.

use serde::{Deserialize, Serialize};

use crate::codebook::BowHistogram;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelMapConfig {
    /// Approximation order.
    pub n: usize,
    /// Homogeneity degree of the approximated kernel.
    pub gamma: f64,
    /// Spectrum sampling period; `None` picks it from the order.
    pub period: Option<f64>,
}

impl Default for KernelMapConfig {
    fn default() -> Self {
        Self {
            n: 3,
            gamma: 0.5,
            period: None,
        }
    }
}

impl KernelMapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("kernel map order n must be >= 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if let Some(l) = self.period {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::Config(format!("sampling period must be > 0, got {l}")));
            }
        }
        Ok(())
    }

    /// The explicit period, or `2π / (5.86·√n + 3.65)`: the χ² rule of the
    /// reference kernel-map implementation (≈ 0.455 at `n = 3`).
    pub fn effective_period(&self) -> f64 {
        self.period
            .unwrap_or_else(|| 2.0 * std::f64::consts::PI / (5.86 * (self.n as f64).sqrt() + 3.65))
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        input_dim * (2 * self.n + 1)
    }
}

/// χ² spectrum.
#[inline]
fn chi2_spectrum(omega: f64) -> f64 {
    1.0 / (std::f64::consts::PI * omega).cosh()
}

/// `counts / sum`, or all zeros for an empty histogram.
pub fn l1_normalize(h: &BowHistogram) -> Vec<f64> {
    let total = h.total();
    if total == 0 {
        return vec![0.0; h.k()];
    }
    h.counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// Maps every input dimension to `2n + 1` coordinates, laid out per input
/// dimension as `[ψ₀, c₁, s₁, …, cₙ, sₙ]`. Zero inputs map to zeros.
pub fn kernel_map(v: &[f64], cfg: &KernelMapConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let width = 2 * cfg.n + 1;
    let mut out = vec![0.0; v.len() * width];
    let l = cfg.effective_period();
    let weights: Vec<f64> = (0..=cfg.n)
        .map(|j| {
            let k = chi2_spectrum(j as f64 * l) * l;
            if j == 0 { k } else { 2.0 * k }
        })
        .collect();
    for (i, &x) in v.iter().enumerate() {
        if x.is_nan() || x < 0.0 {
            return Err(Error::Domain(format!("kernel map input {x} at index {i} is negative")));
        }
        if x == 0.0 {
            continue;
        }
        let dst = &mut out[i * width..(i + 1) * width];
        let xg = x.powf(cfg.gamma);
        let log_x = x.ln();
        dst[0] = (xg * weights[0]).sqrt();
        for j in 1..=cfg.n {
            let amp = (xg * weights[j]).sqrt();
            let phase = j as f64 * l * log_x;
            dst[2 * j - 1] = amp * phase.cos();
            dst[2 * j] = amp * phase.sin();
        }
    }
    Ok(out)
}

/// `Σᵢ 2xᵢyᵢ / (xᵢ + yᵢ)`, with `0/0` terms contributing nothing.
pub fn exact_chi2_kernel(x: &[f64], y: &[f64]) -> Result<f64> {
    exact_homogeneous_chi2_kernel(x, y, 1.0)
}

/// The γ-homogeneous χ² kernel `Σᵢ (xᵢyᵢ)^{γ/2} · 2√(xᵢyᵢ) / (xᵢ + yᵢ)`;
/// equals [`exact_chi2_kernel`] at `γ = 1`.
pub fn exact_homogeneous_chi2_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("kernel inputs of length {} and {}", x.len(), y.len())));
    }
    let mut total = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        if a < 0.0 || b < 0.0 {
            return Err(Error::Domain("χ² kernel needs non-negative inputs".into()));
        }
        let s = a + b;
        if s == 0.0 || a == 0.0 || b == 0.0 {
            continue;
        }
        let p = a * b;
        total += if gamma == 1.0 {
            2.0 * p / s
        } else {
            p.powf(gamma / 2.0) * 2.0 * p.sqrt() / s
        };
    }
    Ok(total)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_and_zeros() {
        let cfg = KernelMapConfig::default();
        assert_eq!(kernel_map(&vec![0.1; 512], &cfg).unwrap().len(), 3584);
        assert!(kernel_map(&[0.0; 7], &cfg).unwrap().iter().all(|&v| v == 0.0));
        assert!(matches!(kernel_map(&[0.2, -0.1], &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn normalize_examples() {
        let h = BowHistogram { counts: vec![2, 1, 0] };
        let v = l1_normalize(&h);
        assert!((v[0] - 2.0 / 3.0).abs() < 1e-15 && (v[1] - 1.0 / 3.0).abs() < 1e-15 && v[2] == 0.0);
        assert_eq!(l1_normalize(&BowHistogram { counts: vec![0; 4] }), vec![0.0; 4]);
    }

    #[test]
    fn exact_kernel_examples() {
        let x = [0.5, 0.25, 0.25, 0.0];
        assert!((exact_chi2_kernel(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(exact_chi2_kernel(&[0.5, 0.5, 0.0], &[0.0, 0.0, 1.0]).unwrap(), 0.0);
        let y = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(exact_chi2_kernel(&x, &y).unwrap(), exact_chi2_kernel(&y, &x).unwrap());
        assert!(exact_chi2_kernel(&x, &y[..3]).is_err());
    }

    #[test]
    fn homogeneous_diagonal_is_power_sum() {
        let x = [0.3, 0.7, 0.0];
        let k = exact_homogeneous_chi2_kernel(&x, &x, 0.5).unwrap();
        assert!((k - (0.3f64.sqrt() + 0.7f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(KernelMapConfig { n: 0, ..Default::default() }.validate().is_err());
        assert!(KernelMapConfig { gamma: 1.5, ..Default::default() }.validate().is_err());
        assert!(KernelMapConfig { period: Some(0.0), ..Default::default() }.validate().is_err());
        let l3 = KernelMapConfig::default().effective_period();
        assert!((l3 - 0.4553).abs() < 1e-3);
        assert_eq!(KernelMapConfig { period: Some(0.5), ..Default::default() }.effective_period(), 0.5);
    }
}
