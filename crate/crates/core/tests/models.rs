mod common;

use common::{random_epochs, tiny_config, T};
use earkd_core::models::{
    build_cnn_stager, build_stager, build_transformer_stager, forward_batch, load_checkpoint,
    read_checkpoint, save_checkpoint, softmax, write_checkpoint, Arch, ModelConfig, OutputGrad,
    SleepStager,
};
use earkd_core::nn::Act;
use earkd_core::Error;
use ndarray::{s, Array2, Array3, Axis};
use std::collections::BTreeMap;

fn both() -> [ModelConfig; 2] {
    [tiny_config(Arch::Cnn), tiny_config(Arch::Transformer)]
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn zero_epoch_gives_finite_outputs() {
    for cfg in both() {
        let m = build_stager::<f64>(&cfg).unwrap();
        let out = forward_batch(&m, Array3::zeros((2, T, 3)).view()).unwrap();
        assert!(out.logits.iter().chain(out.features.iter()).all(|v| v.is_finite()));
        let p = softmax(&out.logits);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn same_seed_same_parameters() {
    for cfg in both() {
        let a = build_stager::<f32>(&cfg).unwrap();
        let b = build_stager::<f32>(&cfg).unwrap();
        assert_eq!(a.params(), b.params());
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(a.params(), build_stager::<f32>(&other).unwrap().params());
    }
}

#[test]
fn batch_shapes_and_feature_dim() {
    for cfg in both() {
        let m = build_stager::<f64>(&cfg).unwrap();
        let out = forward_batch(&m, random_epochs(32, T, 1).view()).unwrap();
        assert_eq!(out.logits.dim(), (32, 5));
        assert_eq!(out.features.dim(), (32, cfg.feature_dim));
        assert_eq!(m.feature_dim(), cfg.feature_dim);
        let twin = build_stager::<f64>(&ModelConfig { seed: 99, ..cfg.clone() }).unwrap();
        assert_eq!(twin.feature_dim(), m.feature_dim());
    }
}

#[test]
fn arch_specific_builders_check_arch() {
    assert!(build_cnn_stager::<f32>(&tiny_config(Arch::Transformer)).is_err());
    assert!(build_transformer_stager::<f32>(&tiny_config(Arch::Cnn)).is_err());
    assert!(build_cnn_stager::<f32>(&tiny_config(Arch::Cnn)).is_ok());
}

#[test]
fn batch_rows_are_independent() {
    for cfg in both() {
        let m = build_stager::<f64>(&cfg).unwrap();
        let x = random_epochs(6, T, 2);
        let full = forward_batch(&m, x.view()).unwrap();
        for i in 0..6 {
            let one = forward_batch(&m, x.slice(s![i..i + 1, .., ..])).unwrap();
            let diff = max_abs_diff(&one.logits, &full.logits.slice(s![i..i + 1, ..]).to_owned());
            assert!(diff < 1e-6, "row {i}: {diff}");
        }
        let perm = [3usize, 0, 5, 1, 4, 2];
        let shuffled = x.select(Axis(0), &perm);
        let out = forward_batch(&m, shuffled.view()).unwrap();
        assert!(max_abs_diff(&out.logits, &full.logits.select(Axis(0), &perm)) < 1e-12);
        let dup = x.select(Axis(0), &[1, 1]);
        let out = forward_batch(&m, dup.view()).unwrap();
        assert_eq!(out.logits.row(0), out.logits.row(1));
        assert_eq!(out.features.row(0), out.features.row(1));
    }
}

#[test]
fn empty_batch_and_shape_errors() {
    let cfg = tiny_config(Arch::Cnn);
    let m = build_stager::<f32>(&cfg).unwrap();
    let out = forward_batch(&m, Array3::<f32>::zeros((0, T, 3)).view()).unwrap();
    assert_eq!(out.logits.dim(), (0, 5));
    assert_eq!(out.features.dim(), (0, cfg.feature_dim));
    let bad = forward_batch(&m, Array3::<f32>::zeros((1, T + 1, 3)).view());
    assert!(matches!(bad, Err(Error::ShapeError(_))));
    let bad = forward_batch(&m, Array3::<f32>::zeros((1, T, 2)).view());
    assert!(matches!(bad, Err(Error::ShapeError(_))));
}

#[test]
fn lengths_not_divisible_by_downsampling() {
    for arch in [Arch::Cnn, Arch::Transformer] {
        let cfg = ModelConfig {
            epoch_samples: 101,
            ..tiny_config(arch)
        };
        let m = build_stager::<f64>(&cfg).unwrap();
        let out = forward_batch(&m, random_epochs(2, 101, 3).view()).unwrap();
        assert!(out.logits.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn evaluation_is_deterministic() {
    for cfg in both() {
        let m = build_stager::<f32>(&cfg).unwrap();
        let x = random_epochs(4, T, 4).mapv(|v| v as f32);
        let a = forward_batch(&m, x.view()).unwrap();
        let b = forward_batch(&m, x.view()).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn gradients_flow_to_every_tensor() {
    for cfg in both() {
        let m = build_stager::<f64>(&cfg).unwrap();
        let x = random_epochs(4, T, 5);
        let act = Act::new(4, T, x.into_shape_with_order((4 * T, 3)).unwrap());
        let (out, tape) = m.forward_tape(&act);
        let g = m.backward(
            &tape,
            &OutputGrad {
                logits: Some(Array2::from_elem(out.logits.dim(), 0.1)),
                features: Some(out.features.clone()),
            },
        );
        assert!(g.all_finite());
        assert!(g.flatten().iter().any(|v| *v != 0.0));
        for (p, gv) in m.params().iter().zip(&g.values) {
            assert_eq!(p.value.len(), gv.len(), "{}", p.name);
        }
    }
}

fn round_trip<F: earkd_core::nn::Scalar>(m: &SleepStager<F>) {
    let mut meta = BTreeMap::new();
    meta.insert("strategy".to_string(), "supervised-ear".to_string());
    let bytes = write_checkpoint(m, &meta).unwrap();
    let back = read_checkpoint::<F>(&bytes).unwrap();
    assert_eq!(back.model.params(), m.params());
    assert_eq!(back.model.config(), m.config());
    assert_eq!(back.meta, meta);
    assert_eq!(back.model.param_digest(), m.param_digest());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    for cfg in both() {
        round_trip(&build_stager::<f32>(&cfg).unwrap());
        round_trip(&build_stager::<f64>(&cfg).unwrap());
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let m = build_stager::<f32>(&tiny_config(Arch::Cnn)).unwrap();
    save_checkpoint(&m, &BTreeMap::new(), &path).unwrap();
    assert_eq!(load_checkpoint::<f32>(&path).unwrap().model.params(), m.params());
}

#[test]
fn checkpoint_mismatches_are_reported() {
    let m = build_stager::<f32>(&tiny_config(Arch::Cnn)).unwrap();
    let bytes = write_checkpoint(&m, &BTreeMap::new()).unwrap();
    assert!(matches!(
        read_checkpoint::<f64>(&bytes),
        Err(Error::CheckpointMismatch(_))
    ));
    let truncated = &bytes[..bytes.len() - 4];
    assert!(matches!(
        read_checkpoint::<f32>(truncated),
        Err(Error::CheckpointMismatch(_))
    ));
    assert!(matches!(
        read_checkpoint::<f32>(b"not a checkpoint at all"),
        Err(Error::CheckpointMismatch(_))
    ));
}

#[test]
fn default_config_is_toy_scale() {
    for arch in [Arch::Cnn, Arch::Transformer] {
        let m = build_stager::<f32>(&ModelConfig::with_arch(arch)).unwrap();
        assert_eq!(m.feature_dim(), 64);
        assert!(m.params().num_scalars() <= 100_000, "{}", m.params().num_scalars());
    }
}

#[test]
fn config_toml_round_trip() {
    let cfg = tiny_config(Arch::Transformer);
    let text = toml::to_string(&cfg).unwrap();
    assert_eq!(ModelConfig::from_toml_str(&text).unwrap(), cfg);
    assert!(ModelConfig::from_toml_str("feature_dim = 0").is_err());
    assert!(ModelConfig::from_toml_str("arch = \"transformer\"\nfeature_dim = 10\nheads = 4").is_err());
}
