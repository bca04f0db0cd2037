#![allow(dead_code)]

use metamorph_core::features::FeatureMap;
use metamorph_core::grid::{jacobian_forward, DeformationField, GridDims, ScalarField};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn dims(w: usize, h: usize) -> GridDims {
    GridDims::new(w, h).unwrap()
}

pub fn random_field(rng: &mut StdRng, d: GridDims) -> ScalarField {
    ScalarField::from_fn(d, |_, _| rng.gen::<f64>())
}

pub fn random_feature(rng: &mut StdRng, d: GridDims, deep: usize) -> FeatureMap {
    let channels = (0..3 + deep).map(|_| random_field(rng, d)).collect();
    FeatureMap::from_channels(channels, 1.0).unwrap()
}

/// Interior displacements uniform in `[-amp, amp]^2`, resampled until the
/// map is orientation preserving.
pub fn random_deformation(rng: &mut StdRng, d: GridDims, amp: f64) -> DeformationField {
    for _ in 0..1000 {
        let phi = DeformationField::from_displacement(d, |_, _| {
            [rng.gen_range(-amp..=amp), rng.gen_range(-amp..=amp)]
        });
        if jacobian_forward(&phi).min_det() > 0.1 {
            return phi;
        }
    }
    panic!("no admissible deformation with amplitude {amp}");
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(1e-300)
}
