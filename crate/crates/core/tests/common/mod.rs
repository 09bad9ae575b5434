#![allow(dead_code)]

use std::path::PathBuf;

use pointcert::network::{load_model, read_points, Model};
use pointcert::synth::{classifier, random_cloud, ClassifierConfig};
use pointcert::PointCloud;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture_classifier() -> Model {
    load_model(fixture("classifier.pcmodel.json")).unwrap()
}

pub fn fixture_clouds() -> Vec<PointCloud> {
    (0..3).map(|i| read_points(fixture(&format!("cloud{i}.xyz"))).unwrap()).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small random-weight classifier.
pub fn small_classifier(seed: u64) -> Model {
    classifier(&ClassifierConfig::scaled(3, 8), seed)
}

pub fn cloud(n: usize, seed: u64) -> PointCloud {
    random_cloud(n, seed)
}
