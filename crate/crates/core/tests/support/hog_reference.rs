//! Brute-force reference for the HOG descriptor, shared by test targets.
//!
//! Votes with a triangular kernel evaluated for every bin in degrees, and
//! pads the cell-energy grid explicitly instead of clamping indices, so it
//! shares no arithmetic path with the library.

fn pixel(p: &[f64], side: usize, x: isize, y: isize) -> f64 {
    let cx = x.max(0).min(side as isize - 1) as usize;
    let cy = y.max(0).min(side as isize - 1) as usize;
    p[cy * side + cx]
}

/// `cells × cells × 18` raw histograms.
pub fn reference_histograms(p: &[f64], side: usize, cells: usize) -> Vec<Vec<Vec<f64>>> {
    let cell = side / cells;
    let mut h = vec![vec![vec![0.0; 18]; cells]; cells];
    for y in 0..side as isize {
        for x in 0..side as isize {
            let gx = pixel(p, side, x + 1, y) - pixel(p, side, x - 1, y);
            let gy = pixel(p, side, x, y + 1) - pixel(p, side, x, y - 1);
            let mag = gx.hypot(gy);
            let deg = gy.atan2(gx).to_degrees().rem_euclid(360.0);
            for (b, slot) in h[y as usize / cell][x as usize / cell].iter_mut().enumerate() {
                let center = 20.0 * b as f64;
                let d = (deg - center).abs();
                let d = d.min(360.0 - d);
                *slot += mag * (1.0 - d / 20.0).max(0.0);
            }
        }
    }
    h
}

pub fn reference_descriptor(p: &[f64], side: usize, cells: usize) -> Vec<f64> {
    let h = reference_histograms(p, side, cells);
    let folded = |c: &Vec<f64>| -> Vec<f64> { (0..9).map(|o| c[o] + c[o + 9]).collect() };
    // energy grid padded by one replicated cell on every side
    let n = cells + 2;
    let mut e = vec![vec![0.0; n]; n];
    for (py, row) in e.iter_mut().enumerate() {
        for (px, v) in row.iter_mut().enumerate() {
            let cy = py.saturating_sub(1).min(cells - 1);
            let cx = px.saturating_sub(1).min(cells - 1);
            *v = folded(&h[cy][cx]).iter().map(|t| t * t).sum();
        }
    }
    let mut out = Vec::new();
    for cy in 0..cells {
        for cx in 0..cells {
            let (py, px) = (cy + 1, cx + 1);
            let mut norms = Vec::new();
            for (dy, dx) in [(0, 0), (0, -1), (-1, 0), (-1, -1)] {
                let y0 = (py as isize + dy) as usize;
                let x0 = (px as isize + dx) as usize;
                let s = e[y0][x0] + e[y0][x0 + 1] + e[y0 + 1][x0] + e[y0 + 1][x0 + 1];
                norms.push(1.0 / (s + 1e-4).sqrt());
            }
            let c = &h[cy][cx];
            let f = folded(c);
            let mut sens = [0.0; 18];
            let mut insens = [0.0; 9];
            let mut energy = [0.0; 4];
            for (k, n) in norms.iter().enumerate() {
                for o in 0..18 {
                    let v = (c[o] * n).min(0.2);
                    sens[o] += 0.5 * v;
                    energy[k] += v;
                }
                for o in 0..9 {
                    insens[o] += 0.5 * (f[o] * n).min(0.2);
                }
            }
            out.extend_from_slice(&sens);
            out.extend_from_slice(&insens);
            out.extend(energy.iter().map(|t| t / 18f64.sqrt()));
            out.push(0.0);
        }
    }
    out
}
