//! Shared fixtures for the integration tests.

#![allow(dead_code)]

use demobot::config::Config;
use demobot::format::Model;
use demobot::harness::build_model;
use demobot_core::policy::GcbcParams;
use demobot_core::{ActionId, DemoDataset, DemoTrajectory, FeatureVector, TrajId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A real spread over many orders of magnitude, sign included.
fn awkward_real(rng: &mut ChaCha8Rng) -> f64 {
    let mantissa: f64 = rng.gen_range(-1.0..1.0);
    let exponent: i32 = rng.gen_range(-12..12);
    mantissa * 10f64.powi(exponent)
}

/// Random dataset with ids that need not start at zero and awkward feature values.
pub fn random_dataset(seed: u64) -> DemoDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.gen_range(1..=6);
    let n = rng.gen_range(1..=4);
    let mut id = rng.gen_range(0..5u32);
    let mut trajs = Vec::new();
    for _ in 0..n {
        let len = rng.gen_range(1..=7);
        let pairs: Vec<(FeatureVector, ActionId)> = (0..len)
            .map(|_| {
                let mut v: Vec<f64> = (0..dim).map(|_| awkward_real(&mut rng)).collect();
                if v.iter().all(|x| *x == 0.0) {
                    v[0] = 1.0;
                }
                let a = ActionId::from_index(rng.gen_range(0..ActionId::COUNT as u32)).unwrap();
                (FeatureVector::new(v).unwrap(), a)
            })
            .collect();
        let tag = if rng.gen_bool(0.5) { "gap_cover" } else { "curtain_open" };
        trajs.push(DemoTrajectory::from_pairs(TrajId(id), tag, pairs).unwrap());
        id += rng.gen_range(1..4);
    }
    let mut ds = DemoDataset::new(trajs).unwrap();
    if rng.gen_bool(0.5) {
        ds = ds
            .with_meta("seed", seed.to_string())
            .with_meta("note", "a \"quoted\" value");
    }
    ds
}

/// Random model; about half carry a small trained behavior-cloning network.
pub fn random_model(seed: u64) -> Model {
    let ds = random_dataset(seed);
    let mut config = Config::default();
    config.gcbc = GcbcParams {
        hidden: 4,
        epochs: 3,
        batch_size: 4,
        seed: seed >> 1,
        ..GcbcParams::default()
    };
    let with_gcbc = seed % 2 == 0 && ds.total_steps() >= 2;
    build_model(&ds, &config, with_gcbc).unwrap()
}
