use earkd_core::dataset::{
    loso_splits, normalize_epoch, synth_electrode_subject, synth_subject, StageLabel, SynthConfig,
};
use earkd_core::preprocess::{
    ear_derivations, ear_electrodes, pairwise_band_power, preprocess_subject, reject_channels,
    scalp_derivations, SCALP_ELECTRODES,
};
use earkd_core::signal::{band_power, epoch_len, Bandpass, Recording, FILTER_ORDER};
use ndarray::{s, Array2};
use proptest::prelude::*;
use std::f64::consts::PI;

/// Squared magnitude of the analog Butterworth band-pass prototype after
/// prewarping, evaluated on the warped frequency axis.
fn analytic_gain_db(f: f64, low: f64, high: f64, fs: f64, order: usize) -> f64 {
    let warp = |f: f64| (PI * f / fs).tan();
    let (w1, w2, w) = (warp(low), warp(high), warp(f));
    let x = (w * w - w1 * w2) / (w * (w2 - w1));
    -10.0 * (1.0 + x.powi(2 * order as i32)).log10()
}

#[test]
fn filter_matches_the_analytic_response() {
    let (fs, low, high) = (200.0, 0.2, 42.0);
    let bp = Bandpass::butterworth(FILTER_ORDER, low, high, fs).unwrap();
    for i in 1..1000 {
        let f = i as f64 * 0.0999;
        let (got, want) = (bp.gain_db(f), analytic_gain_db(f, low, high, fs, FILTER_ORDER));
        if want > -60.0 {
            assert!((got - want).abs() < 1e-6, "{f} Hz: {got} vs {want}");
        }
    }
}

#[test]
fn filter_meets_the_band_specification() {
    let fs = 200.0;
    let bp = Bandpass::butterworth(FILTER_ORDER, 0.2, 42.0, fs).unwrap();
    // zero-phase filtering applies the magnitude twice
    let two_pass = |f: f64| 2.0 * bp.gain_db(f);
    let mut f = 1.0;
    while f <= 30.0 {
        assert!(two_pass(f).abs() <= 1.0, "ripple at {f} Hz: {}", two_pass(f));
        f += 0.25;
    }
    assert!(two_pass(0.05) <= -20.0);
    assert!(two_pass(80.0) <= -20.0);
}

#[test]
fn filtfilt_passes_and_blocks_sines() {
    let fs = 200.0;
    let bp = Bandpass::butterworth(FILTER_ORDER, 0.2, 42.0, fs).unwrap();
    let n = 20_000;
    let sine = |f: f64| (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect::<Vec<_>>();
    let rms = |x: &[f64]| (x[5000..15000].iter().map(|v| v * v).sum::<f64>() / 10000.0).sqrt();
    let pass = bp.filtfilt(&sine(10.0)).unwrap();
    assert!((rms(&pass) / (0.5f64).sqrt() - 1.0).abs() < 0.02);
    let stop = bp.filtfilt(&sine(90.0)).unwrap();
    assert!(rms(&stop) < 0.01);
}

fn random_electrodes(names: &[&str], n: usize, seed: u64) -> Recording {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let data = Array2::from_shape_simple_fn((n, names.len()), || rng.gen_range(-50.0..50.0));
    Recording::new(names.iter().map(|s| s.to_string()).collect(), data, 100.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalp_derivations_are_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let x = random_electrodes(&SCALP_ELECTRODES, 50, seed);
        let y = random_electrodes(&SCALP_ELECTRODES, 50, seed + 7);
        let mix = Recording::new(
            x.channel_ids().to_vec(),
            x.data() * a + y.data() * b,
            100.0,
        ).unwrap();
        let lhs = scalp_derivations(&mix).unwrap();
        let rhs = scalp_derivations(&x).unwrap().data() * a + scalp_derivations(&y).unwrap().data() * b;
        for (l, r) in lhs.data().iter().zip(&rhs) {
            prop_assert!((l - r).abs() < 1e-9);
        }
    }

    #[test]
    fn swapping_references_negates(seed in 0u64..1000) {
        let x = random_electrodes(&SCALP_ELECTRODES, 40, seed);
        let swapped_names: Vec<String> = ["C3", "C4", "O1", "O2", "A2", "A1", "F3", "F4"]
            .iter().map(|s| s.to_string()).collect();
        let swapped = Recording::new(swapped_names, x.data().clone(), 100.0).unwrap();
        let a = scalp_derivations(&x).unwrap();
        let b = scalp_derivations(&swapped).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            prop_assert!((u + v).abs() < 1e-12);
        }
    }

    #[test]
    fn common_mode_cancels_in_ear_derivations(seed in 0u64..1000, offset in -100.0f64..100.0) {
        let names = ear_electrodes();
        let x = random_electrodes(&names, 40, seed);
        let shifted = Recording::new(x.channel_ids().to_vec(), x.data() + offset, 100.0).unwrap();
        let usable: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        let a = ear_derivations(&x, &usable).unwrap();
        let b = ear_derivations(&shifted, &usable).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            prop_assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn normalized_epochs_have_unit_moments(
        values in proptest::collection::vec(-1e3f64..1e3, 60),
        scale in 1e-3f64..1e3,
        shift in -1e3f64..1e3,
    ) {
        let base = Array2::from_shape_vec((20, 3), values).unwrap();
        let mut a = base.clone();
        normalize_epoch(&mut a);
        let mut b = base.mapv(|v| v * scale + shift);
        normalize_epoch(&mut b);
        for c in 0..3 {
            let col = a.column(c);
            let mean = col.mean().unwrap();
            prop_assert!(mean.abs() < 1e-9);
            let var = col.mapv(|v| v * v).mean().unwrap();
            prop_assert!(var < 1e-9 || (var - 1.0).abs() < 1e-9);
        }
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() < 1e-6);
        }
    }

    #[test]
    fn loso_folds_partition_the_subjects(n in 2usize..20) {
        let ids: Vec<String> = (0..n).map(|i| format!("S{i}")).collect();
        let plan = loso_splits(&ids).unwrap();
        prop_assert_eq!(plan.folds.len(), n);
        for (k, fold) in plan.folds.iter().enumerate() {
            prop_assert_eq!(&fold.test_subject, &ids[k]);
            prop_assert_eq!(fold.train_subjects.len(), n - 1);
            prop_assert!(!fold.train_subjects.contains(&fold.test_subject));
        }
    }
}

fn power(x: &Array2<f64>) -> f64 {
    x.mapv(|v| v * v).mean().unwrap()
}

#[test]
fn synthetic_snr_matches_the_config() {
    for (scalp_db, ear_db) in [(10.0, -5.0), (6.0, 0.0), (15.0, -10.0)] {
        let cfg = SynthConfig {
            n_subjects: 2,
            epochs_per_subject: 40,
            snr_scalp_db: scalp_db,
            snr_ear_db: ear_db,
            ..SynthConfig::default()
        };
        let (_, parts) = synth_subject(&cfg, 3, 1).unwrap();
        let signal = power(&parts.latent);
        let scalp = 10.0 * (signal / power(&parts.scalp_noise)).log10();
        let att = cfg.ear_attenuation;
        let ear = 10.0 * (att * att * signal / power(&parts.ear_noise)).log10();
        assert!((scalp - scalp_db).abs() <= 1.0, "scalp {scalp} dB");
        assert!((ear - ear_db).abs() <= 1.0, "ear {ear} dB");
    }
}

#[test]
fn deep_sleep_is_dominated_by_delta() {
    let cfg = SynthConfig {
        epochs_per_subject: 300,
        ..SynthConfig::default()
    };
    let fs = cfg.sample_rate;
    let len = epoch_len(fs, 30.0);
    let (mut total, mut delta_wins) = (0, 0);
    for index in 0..3 {
        let (subject, _) = synth_subject(&cfg, 0, index).unwrap();
        for (k, stage) in subject.hypnogram.iter().enumerate() {
            if *stage != StageLabel::N3 {
                continue;
            }
            let x: Vec<f64> = subject
                .scalp
                .data()
                .slice(s![k * len..(k + 1) * len, 0])
                .to_vec();
            total += 1;
            if band_power(&x, fs, 0.5, 4.0).unwrap() > band_power(&x, fs, 8.0, 12.0).unwrap() {
                delta_wins += 1;
            }
        }
    }
    assert!(total > 20, "only {total} N3 epochs");
    assert!(delta_wins as f64 >= 0.95 * total as f64, "{delta_wins}/{total}");
}

#[test]
fn electrode_rendering_survives_preprocessing() {
    let cfg = SynthConfig {
        n_subjects: 2,
        epochs_per_subject: 20,
        ..SynthConfig::default()
    };
    for index in 0..2 {
        let subject = synth_electrode_subject(&cfg, 9, index).unwrap();
        let power = pairwise_band_power(&subject.ear).unwrap();
        let report = reject_channels(&power).unwrap();
        assert!(report.rejected.is_empty(), "{:?}", report.rejected);
        let out = preprocess_subject(&subject.scalp, &subject.ear).unwrap();
        assert_eq!(out.scalp.num_samples(), 20 * epoch_len(cfg.sample_rate, 30.0));
        assert_eq!(out.ear.names(), ["L-R", "LE", "RE"]);
    }
}
