use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vqlens::inversion::{train_inverter_report, MAX_RELATIVE_RESIDUAL};
use vqlens::synth::scene_corpus;
use vqlens::{dense_descriptors, extract_patch, GrayPatch, GridSpec, HogConfig, HogDescriptor, Inverter};

fn pairs_from(images: &[vqlens::GrayImage], grid: GridSpec) -> Vec<(HogDescriptor, GrayPatch)> {
    let hog = HogConfig::default();
    let mut out = Vec::new();
    for img in images {
        let (windows, descs) = dense_descriptors(img, grid, &hog).unwrap();
        for (w, row) in windows.iter().zip(descs.rows()) {
            let d = HogDescriptor {
                values: row.to_vec(),
                source_window: *w,
            };
            out.push((d, extract_patch(img, *w).unwrap()));
        }
    }
    out
}

fn heldout_mse(inv: &Inverter, pairs: &[(HogDescriptor, GrayPatch)]) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for (d, p) in pairs {
        let pred = inv.predict_raw(&d.values).unwrap();
        for (a, b) in pred.iter().zip(p.data()) {
            total += ((a - b) as f64).powi(2);
            n += 1;
        }
    }
    total / n as f64
}

#[test]
fn residual_bound_and_mean_patch_limit() {
    let grid = GridSpec::new(16, 4).unwrap();
    let pairs = pairs_from(&scene_corpus(6, 48, 48, 3), grid);
    for lambda in [0.0, 1e-2, 1.0, 100.0] {
        let (_, sol) = train_inverter_report(&pairs, lambda, 16).unwrap();
        assert!(sol.relative_residual <= MAX_RELATIVE_RESIDUAL, "λ={lambda}: {}", sol.relative_residual);
    }

    let mut mean = vec![0.0f64; 256];
    for (_, p) in &pairs {
        for (m, v) in mean.iter_mut().zip(p.data()) {
            *m += *v as f64 / pairs.len() as f64;
        }
    }
    let (inv, _) = train_inverter_report(&pairs, 1e12, 16).unwrap();
    for (d, _) in pairs.iter().step_by(37) {
        let pred = inv.predict_raw(&d.values).unwrap();
        for (a, b) in pred.iter().zip(&mean) {
            assert!((*a as f64 - b).abs() <= 1e-3);
        }
    }
}

#[test]
fn beats_permuted_pairing() {
    let grid = GridSpec::new(16, 4).unwrap();
    let images = scene_corpus(8, 48, 48, 11);
    let train = pairs_from(&images[..6], grid);
    let test = pairs_from(&images[6..], grid);
    let (inv, _) = train_inverter_report(&train, 1.0, 16).unwrap();

    let mut patches: Vec<GrayPatch> = train.iter().map(|p| p.1.clone()).collect();
    patches.shuffle(&mut ChaCha8Rng::seed_from_u64(0));
    let shuffled: Vec<_> = train.iter().map(|p| p.0.clone()).zip(patches).collect();
    let (baseline, _) = train_inverter_report(&shuffled, 1.0, 16).unwrap();

    let good = heldout_mse(&inv, &test);
    let bad = heldout_mse(&baseline, &test);
    assert!(good < bad, "{good} vs permuted {bad}");
}
