//! Runs the synthetic LOSO benchmark for the supervised and distillation
//! strategies and prints pooled metrics per seed.
//!
//! Arguments are `key=value` pairs: `seeds=0,1 epochs=8 subjects=8
//! per_subject=200 arch=cnn lr=0.001 kd_weight=1`.

use std::collections::HashMap;
use std::time::Instant;

use earkd_core::dataset::{synth_subject_epochs, SynthConfig};
use earkd_core::evaluation::loso_benchmark;
use earkd_core::models::ModelConfig;
use earkd_core::training::{Strategy, TrainConfig};

fn main() -> earkd_core::Result<()> {
    let args: HashMap<String, String> = std::env::args()
        .skip(1)
        .filter_map(|a| a.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();
    let get = |k: &str, d: &str| args.get(k).cloned().unwrap_or_else(|| d.to_string());
    let seeds: Vec<u64> = get("seeds", "0")
        .split(',')
        .map(|s| s.parse().expect("seed"))
        .collect();
    let synth = SynthConfig {
        n_subjects: get("subjects", "8").parse().expect("subjects"),
        epochs_per_subject: get("per_subject", "200").parse().expect("per_subject"),
        snr_ear_db: get("snr_ear", "-5").parse().expect("snr_ear"),
        ..SynthConfig::default()
    };
    let mut model = ModelConfig::with_arch(get("arch", "cnn").parse()?);
    model.epoch_samples = (synth.sample_rate * 30.0).round() as usize;
    let train = TrainConfig {
        epochs: get("epochs", "8").parse().expect("epochs"),
        learning_rate: get("lr", "0.001").parse().expect("lr"),
        kd_weight: get("kd_weight", "1").parse().expect("kd_weight"),
        ..TrainConfig::default()
    };
    let strategies: Vec<Strategy> = get("strategies", "supervised-scalp,supervised-ear,kd-offline,kd-online")
        .split(',')
        .map(|s| s.parse().expect("strategy"))
        .collect();
    for seed in seeds {
        let start = Instant::now();
        let subjects = synth_subject_epochs(&synth, seed)?;
        let mut m = model.clone();
        m.seed = seed;
        let mut t = train.clone();
        t.seed = seed;
        let bench = loso_benchmark::<f32>(&strategies, &m, &subjects, &t)?;
        for r in &bench.reports {
            println!(
                "seed {seed} {:<17} acc {:.4} kappa {:.4} mf1 {:.4}",
                r.strategy.as_str(),
                r.pooled.accuracy,
                r.pooled.kappa,
                r.pooled.macro_f1
            );
        }
        if let Some((kd, sup)) = bench.mean_gap() {
            println!("seed {seed} feature gap kd-offline {kd:.4} supervised-ear {sup:.4}");
        }
        println!("seed {seed} took {:.1}s", start.elapsed().as_secs_f64());
    }
    Ok(())
}
