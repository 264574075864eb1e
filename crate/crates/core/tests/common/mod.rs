//! Shared helpers for the integration suites.
#![allow(dead_code)]

use std::path::PathBuf;

use freqnet_core::data::{load_cifar10, load_mnist, Dataset};
use freqnet_core::plane::{ComplexPlane, FeatureBlock, RealPlane};
use freqnet_core::rng::rng_for;
use rand::Rng;

/// Dataset directory: $FREQNET_DATA_DIR or <workspace>/data.
pub fn data_dir() -> PathBuf {
    if let Ok(dir) = std::env::var("FREQNET_DATA_DIR") {
        return PathBuf::from(dir);
    }
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn mnist_train() -> Dataset {
    let dir = data_dir().join("mnist");
    load_mnist(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )
    .unwrap_or_else(|e| panic!("MNIST train set not found under {} ({e}); see README for dataset setup", dir.display()))
}

pub fn mnist_test() -> Dataset {
    let dir = data_dir().join("mnist");
    load_mnist(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
    )
    .unwrap_or_else(|e| panic!("MNIST test set not found under {} ({e}); see README for dataset setup", dir.display()))
}

pub fn cifar_train() -> Dataset {
    let dir = data_dir().join("cifar-10-batches-bin");
    let paths: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
    load_cifar10(&paths).unwrap_or_else(|e| {
        panic!("CIFAR-10 batches not found under {} ({e}); see README for dataset setup", dir.display())
    })
}

pub fn cifar_test() -> Dataset {
    let dir = data_dir().join("cifar-10-batches-bin");
    load_cifar10(&[dir.join("test_batch.bin")]).unwrap_or_else(|e| {
        panic!("CIFAR-10 test batch not found under {} ({e}); see README for dataset setup", dir.display())
    })
}

pub fn random_plane(rows: usize, cols: usize, seed: u64) -> RealPlane {
    let mut rng = rng_for(&[seed]);
    let mut p = RealPlane::zeros(rows, cols);
    for v in p.as_mut_slice() {
        *v = rng.random::<f64>() * 2.0 - 1.0;
    }
    p
}

pub fn random_complex_plane(rows: usize, cols: usize, seed: u64) -> ComplexPlane {
    let mut rng = rng_for(&[seed]);
    let mut p = ComplexPlane::zeros(rows, cols);
    for v in p
        .re
        .as_mut_slice()
        .iter_mut()
        .chain(p.im.as_mut_slice().iter_mut())
    {
        *v = rng.random::<f64>() * 2.0 - 1.0;
    }
    p
}

pub fn random_block(batch: usize, ch: usize, rows: usize, cols: usize, seed: u64) -> FeatureBlock {
    let mut rng = rng_for(&[seed]);
    let mut fb = FeatureBlock::zeros(batch, ch, rows, cols);
    for v in fb.re.iter_mut().chain(fb.im.iter_mut()) {
        *v = rng.random::<f64>() * 2.0 - 1.0;
    }
    fb
}
