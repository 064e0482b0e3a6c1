#![allow(dead_code)]

use earkd_core::dataset::{PairedEpoch, StageLabel, SubjectEpochs};
use earkd_core::models::{Arch, ModelConfig};
use earkd_core::signal::EpochTensor;
use earkd_core::training::PairedSet;
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const T: usize = 96;

pub fn tiny_config(arch: Arch) -> ModelConfig {
    ModelConfig {
        arch,
        in_channels: 3,
        epoch_samples: T,
        feature_dim: 8,
        widths: vec![4, 6],
        stem_stride: 4,
        kernel_size: 3,
        pool_size: 2,
        heads: 2,
        depth: 1,
        feature_norm: true,
        seed: 11,
    }
}

pub fn random_epochs(n: usize, t: usize, seed: u64) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array3::from_shape_simple_fn((n, t, 3), || rng.sample::<f64, _>(StandardNormal))
}

/// Epochs whose class is visible as a constant offset on the first channel.
pub fn separable_subject(id: &str, n: usize, classes: &[StageLabel], seed: u64) -> SubjectEpochs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let epochs = (0..n)
        .map(|i| {
            let label = classes[i % classes.len()];
            let shift = 2.0 * label.code() as f64 - 2.0;
            let mk = |rng: &mut ChaCha8Rng, noise: f64| {
                let data = Array2::from_shape_fn((T, 3), |(t, c)| {
                    let wave = if c == 0 { shift * (t as f64 * 0.3).sin() } else { 0.0 };
                    wave + noise * rng.sample::<f64, _>(StandardNormal)
                });
                EpochTensor { data }
            };
            PairedEpoch {
                scalp: mk(&mut rng, 0.3),
                ear: mk(&mut rng, 0.6),
                label,
                subject_id: id.to_string(),
            }
        })
        .collect();
    SubjectEpochs {
        subject_id: id.to_string(),
        epochs,
    }
}

pub fn paired<F: earkd_core::nn::Scalar>(subjects: &[SubjectEpochs]) -> PairedSet<F> {
    let refs: Vec<&SubjectEpochs> = subjects.iter().collect();
    PairedSet::from_subjects(&refs).unwrap()
}
