//! Synthetic paired scalp / ear sleep recordings.
//!
//! Every epoch draws a three-channel latent "brain" signal whose spectrum
//! depends on the sleep stage. The scalp derivations see the latent plus
//! white noise at `snr_scalp_db`; the ear derivations see an attenuated copy
//! of the latent plus the derivation-weighted sum of independent 1/f electrode
//! noise, scaled so the pooled derivation SNR equals `snr_ear_db`. Stage
//! sequences follow a fixed Markov chain. Everything is a pure function of
//! `(config, seed)`.

use std::path::Path;
use std::sync::Arc;

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dataset::stage::StageLabel;
use crate::error::{Error, Result};
use crate::dataset::paired::{make_paired_epochs, SubjectEpochs};
use crate::preprocess::{ear_electrodes, filter_recording, DerivationSet, EAR_NAMES, SCALP_ELECTRODES, SCALP_NAMES};
use crate::signal::{epoch_len, Recording, EPOCH_SECONDS};

/// Rows: current stage, columns: next stage, both in code order.
pub const TRANSITIONS: [[f64; 5]; 5] = [
    [0.80, 0.15, 0.03, 0.00, 0.02],
    [0.10, 0.45, 0.40, 0.00, 0.05],
    [0.03, 0.05, 0.80, 0.08, 0.04],
    [0.02, 0.01, 0.15, 0.82, 0.00],
    [0.05, 0.08, 0.07, 0.00, 0.80],
];

/// Latent amplitude scale in µV.
const LATENT_SCALE: f64 = 20.0;
/// Common-mode drift shared by every electrode, in µV.
const COMMON_MODE_SCALE: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub epochs_per_subject: usize,
    pub sample_rate: f64,
    pub snr_scalp_db: f64,
    pub snr_ear_db: f64,
    pub ear_attenuation: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 8,
            epochs_per_subject: 200,
            sample_rate: 100.0,
            snr_scalp_db: 10.0,
            snr_ear_db: -5.0,
            ear_attenuation: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_ear_db >= self.snr_scalp_db {
            return Err(Error::InvalidConfig(format!(
                "ear SNR {} dB must be below scalp SNR {} dB",
                self.snr_ear_db, self.snr_scalp_db
            )));
        }
        if !(self.ear_attenuation > 0.0 && self.ear_attenuation <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "ear attenuation {} outside (0, 1]",
                self.ear_attenuation
            )));
        }
        if self.n_subjects == 0 || self.epochs_per_subject == 0 {
            return Err(Error::InvalidConfig("empty synthetic dataset".into()));
        }
        // spindles reach 14 Hz and wake beta 25 Hz
        if !(self.sample_rate >= 60.0) {
            return Err(Error::InvalidConfig(format!(
                "sample rate {} Hz below 60 Hz",
                self.sample_rate
            )));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn subject_id(index: usize) -> String {
        format!("S{:02}", index + 1)
    }
}

/// Derivation-level synthetic subject.
#[derive(Debug, Clone)]
pub struct SynthSubject {
    pub subject_id: String,
    pub hypnogram: Vec<StageLabel>,
    pub scalp: DerivationSet,
    pub ear: DerivationSet,
}

/// Clean and noise parts of a subject's derivations: `scalp = latent +
/// scalp_noise`, `ear = ear_attenuation · latent + ear_noise`.
#[derive(Debug, Clone)]
pub struct SynthComponents {
    pub latent: Array2<f64>,
    pub scalp_noise: Array2<f64>,
    pub ear_noise: Array2<f64>,
}

/// Electrode-level synthetic subject (8 scalp, 12 ear channels).
#[derive(Debug, Clone)]
pub struct ElectrodeSubject {
    pub subject_id: String,
    pub hypnogram: Vec<StageLabel>,
    pub scalp: Recording,
    pub ear: Recording,
}

pub fn synth_paired_dataset(config: &SynthConfig, seed: u64) -> Result<Vec<SynthSubject>> {
    config.validate()?;
    (0..config.n_subjects)
        .into_par_iter()
        .map(|i| synth_subject(config, seed, i).map(|(s, _)| s))
        .collect()
}

/// Band-passed, paired and normalised epochs of every synthetic subject.
pub fn synth_subject_epochs(config: &SynthConfig, seed: u64) -> Result<Vec<SubjectEpochs>> {
    synth_paired_dataset(config, seed)?
        .into_par_iter()
        .map(|s| {
            let scalp = DerivationSet::new(filter_recording(s.scalp.recording())?)?;
            let ear = DerivationSet::new(filter_recording(s.ear.recording())?)?;
            Ok(SubjectEpochs {
                epochs: make_paired_epochs(&scalp, &ear, &s.hypnogram, &s.subject_id)?,
                subject_id: s.subject_id,
            })
        })
        .collect()
}

/// One derivation-level subject together with its latent and noise parts.
pub fn synth_subject(
    config: &SynthConfig,
    seed: u64,
    index: usize,
) -> Result<(SynthSubject, SynthComponents)> {
    config.validate()?;
    let mut gen = SubjectGenerator::new(config, seed, index);
    let total = gen.epoch_len * config.epochs_per_subject;
    let mut latent = Array2::zeros((total, 3));
    let mut scalp_noise = Array2::zeros((total, 3));
    let mut ear_noise = Array2::zeros((total, 3));
    let att = config.ear_attenuation;
    let hypnogram = gen.hypnogram.clone();
    let weights_t = ear_weights().reversed_axes();
    gen.for_each_epoch(|start, chunk| {
        let rows = s![start..start + chunk.latent.nrows(), ..];
        latent.slice_mut(rows).assign(&chunk.latent);
        scalp_noise.slice_mut(rows).assign(&chunk.scalp_noise);
        ear_noise
            .slice_mut(rows)
            .assign(&chunk.ear_electrode_noise.dot(&weights_t));
    });
    let scalp = &latent + &scalp_noise;
    let ear = &latent * att + &ear_noise;
    let fs = config.sample_rate;
    let names = |n: [&str; 3]| n.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let subject = SynthSubject {
        subject_id: SynthConfig::subject_id(index),
        hypnogram,
        scalp: DerivationSet::new(Recording::new(names(SCALP_NAMES), scalp, fs)?)?,
        ear: DerivationSet::new(Recording::new(names(EAR_NAMES), ear, fs)?)?,
    };
    Ok((
        subject,
        SynthComponents {
            latent,
            scalp_noise,
            ear_noise,
        },
    ))
}

/// Electrode-level rendering of the same subject: scalp and ear derivations
/// computed from these electrodes reproduce [`synth_subject`] up to rounding.
pub fn synth_electrode_subject(
    config: &SynthConfig,
    seed: u64,
    index: usize,
) -> Result<ElectrodeSubject> {
    config.validate()?;
    let mut gen = SubjectGenerator::new(config, seed, index);
    let total = gen.epoch_len * config.epochs_per_subject;
    let mut scalp = Array2::zeros((total, SCALP_ELECTRODES.len()));
    let mut ear = Array2::zeros((total, 12));
    let att = config.ear_attenuation;
    let hypnogram = gen.hypnogram.clone();
    gen.for_each_epoch(|start, chunk| {
        for t in 0..chunk.latent.nrows() {
            let cm = chunk.common_mode[t];
            let row = start + t;
            let d: Vec<f64> = (0..3)
                .map(|c| chunk.latent[[t, c]] + chunk.scalp_noise[[t, c]])
                .collect();
            // O1, O2, C3, C4, A1, A2, F3, F4
            let values = [
                cm - d[0] / 2.0,
                cm - d[1] / 2.0,
                cm + d[0] / 2.0,
                cm + d[1] / 2.0,
                cm + d[2] / 2.0,
                cm - d[2] / 2.0,
                cm + 0.5 * chunk.latent[[t, 0]] + chunk.frontal_noise[[t, 0]],
                cm + 0.5 * chunk.latent[[t, 1]] + chunk.frontal_noise[[t, 1]],
            ];
            for (c, v) in values.into_iter().enumerate() {
                scalp[[row, c]] = v;
            }

            let lr = att * chunk.latent[[t, 0]];
            let le = att * chunk.latent[[t, 1]];
            let re = att * chunk.latent[[t, 2]];
            let (wl, wr) = (lr / 2.0, -lr / 2.0);
            let structured = [
                wl + 2.0 / 3.0 * le,
                wl + 2.0 / 3.0 * le,
                wl - le / 3.0,
                wl - le / 3.0,
                wl - le / 3.0,
                wl - le / 3.0,
                wr + 2.0 / 3.0 * re,
                wr + 2.0 / 3.0 * re,
                wr - re / 3.0,
                wr - re / 3.0,
                wr - re / 3.0,
                wr - re / 3.0,
            ];
            for (k, v) in structured.into_iter().enumerate() {
                ear[[row, k]] = v + chunk.ear_electrode_noise[[t, k]] + cm;
            }
        }
    });
    let fs = config.sample_rate;
    Ok(ElectrodeSubject {
        subject_id: SynthConfig::subject_id(index),
        hypnogram,
        scalp: Recording::new(
            SCALP_ELECTRODES.iter().map(|s| s.to_string()).collect(),
            scalp,
            fs,
        )?,
        ear: Recording::new(
            ear_electrodes().into_iter().map(String::from).collect(),
            ear,
            fs,
        )?,
    })
}

/// Weights mapping the 12 ear electrodes onto L−R, LE and RE.
fn ear_weights() -> Array2<f64> {
    let mut w = Array2::zeros((3, 12));
    for k in 0..6 {
        w[[0, k]] = 1.0 / 6.0;
        w[[0, k + 6]] = -1.0 / 6.0;
    }
    for (row, offset) in [(1, 0), (2, 6)] {
        w[[row, offset]] = 0.5;
        w[[row, offset + 1]] = 0.5;
        for k in 2..6 {
            w[[row, offset + k]] = -0.25;
        }
    }
    w
}

struct SubjectTraits {
    gain: f64,
    alpha_center: f64,
    spindle_center: f64,
    channel_coupling: f64,
    electrode_gain: [f64; 12],
}

struct EpochChunk {
    latent: Array2<f64>,
    scalp_noise: Array2<f64>,
    ear_electrode_noise: Array2<f64>,
    frontal_noise: Array2<f64>,
    common_mode: Vec<f64>,
}

struct SubjectGenerator {
    rng: ChaCha8Rng,
    traits: SubjectTraits,
    hypnogram: Vec<StageLabel>,
    epoch_len: usize,
    sample_rate: f64,
    snr_scalp: f64,
    snr_ear: f64,
    attenuation: f64,
    ifft: Arc<dyn Fft<f64>>,
}

impl SubjectGenerator {
    fn new(config: &SynthConfig, seed: u64, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64 + 1);
        let mut electrode_gain = [1.0; 12];
        for g in &mut electrode_gain {
            *g = rng.gen_range(0.85..1.15);
        }
        let traits = SubjectTraits {
            gain: rng.gen_range(0.7..1.3),
            alpha_center: rng.gen_range(9.0..11.0),
            spindle_center: rng.gen_range(12.5..13.5),
            channel_coupling: rng.gen_range(0.3..0.7),
            electrode_gain,
        };
        let hypnogram = markov_hypnogram(&mut rng, config.epochs_per_subject);
        let epoch_len = epoch_len(config.sample_rate, EPOCH_SECONDS);
        Self {
            rng,
            traits,
            hypnogram,
            epoch_len,
            sample_rate: config.sample_rate,
            snr_scalp: 10f64.powf(config.snr_scalp_db / 10.0),
            snr_ear: 10f64.powf(config.snr_ear_db / 10.0),
            attenuation: config.ear_attenuation,
            ifft: FftPlanner::new().plan_fft_inverse(epoch_len),
        }
    }

    fn for_each_epoch(&mut self, mut sink: impl FnMut(usize, &EpochChunk)) {
        let stages = self.hypnogram.clone();
        for (i, stage) in stages.into_iter().enumerate() {
            let chunk = self.epoch(stage);
            sink(i * self.epoch_len, &chunk);
        }
    }

    fn epoch(&mut self, stage: StageLabel) -> EpochChunk {
        let n = self.epoch_len;
        let coupling = self.traits.channel_coupling;
        let shared = self.stage_source(stage);
        let mut latent = Array2::zeros((n, 3));
        for c in 0..3 {
            let own = self.stage_source(stage);
            let background = self.pink(0.5);
            for t in 0..n {
                latent[[t, c]] = LATENT_SCALE
                    * self.traits.gain
                    * (coupling.sqrt() * shared[t]
                        + (1.0 - coupling).sqrt() * own[t]
                        + 0.3 * background[t]);
            }
        }
        let latent_power = latent.iter().map(|v| v * v).sum::<f64>() / latent.len() as f64;

        let scalp_std = (latent_power / self.snr_scalp).sqrt();
        let scalp_noise = self.white((n, 3), scalp_std);

        let weights = ear_weights();
        let pooled: f64 = (0..3)
            .map(|d| {
                (0..12)
                    .map(|k| (weights[[d, k]] * self.traits.electrode_gain[k]).powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / 3.0;
        let ear_target = self.attenuation.powi(2) * latent_power / self.snr_ear;
        let electrode_std = (ear_target / pooled).sqrt();
        let mut ear_electrode_noise = Array2::zeros((n, 12));
        for k in 0..12 {
            let col = self.pink(0.5);
            ear_electrode_noise
                .column_mut(k)
                .iter_mut()
                .zip(col)
                .for_each(|(o, v)| *o = electrode_std * v);
        }
        for (k, g) in self.traits.electrode_gain.iter().enumerate() {
            ear_electrode_noise.column_mut(k).mapv_inplace(|v| v * g);
        }
        let frontal_noise = self.white((n, 2), scalp_std);
        let drift = self.band(0.05, 1.0);
        let offset: f64 = self.rng.gen_range(-1.0..1.0);
        let common_mode = drift
            .iter()
            .map(|v| COMMON_MODE_SCALE * (v + offset))
            .collect();
        EpochChunk {
            latent,
            scalp_noise,
            ear_electrode_noise,
            frontal_noise,
            common_mode,
        }
    }

    fn stage_source(&mut self, stage: StageLabel) -> Vec<f64> {
        let n = self.epoch_len;
        let alpha = self.traits.alpha_center;
        let mut out = vec![0.0; n];
        let add = |out: &mut [f64], x: Vec<f64>, amp: f64| {
            out.iter_mut().zip(x).for_each(|(o, v)| *o += amp * v);
        };
        match stage {
            StageLabel::W => {
                let a = self.jitter(1.0);
                add(&mut out, self.band(alpha - 1.5, alpha + 1.5), a);
                let b = self.jitter(0.35);
                add(&mut out, self.band(16.0, 25.0), b);
                let t = self.jitter(0.2);
                add(&mut out, self.band(4.0, 7.0), t);
            }
            StageLabel::N1 => {
                let t = self.jitter(1.0);
                add(&mut out, self.band(4.0, 7.0), t);
                let a = self.jitter(0.35);
                add(&mut out, self.band(alpha - 1.5, alpha + 1.5), a);
            }
            StageLabel::N2 => {
                let t = self.jitter(0.7);
                add(&mut out, self.band(4.0, 7.0), t);
                let spindles = self.spindles();
                add(&mut out, spindles, 1.0);
                let d = self.jitter(0.3);
                add(&mut out, self.band(0.5, 4.0), d);
            }
            StageLabel::N3 => {
                let d = self.jitter(2.5);
                add(&mut out, self.band(0.5, 4.0), d);
                let t = self.jitter(0.3);
                add(&mut out, self.band(4.0, 7.0), t);
            }
            StageLabel::Rem => {
                let m = self.jitter(0.6);
                add(&mut out, self.band(4.0, 10.0), m);
                let b = self.jitter(0.2);
                add(&mut out, self.band(16.0, 25.0), b);
            }
        }
        out
    }

    /// One to three Hann-windowed sigma-band bursts of 0.5–1.5 s.
    fn spindles(&mut self) -> Vec<f64> {
        let n = self.epoch_len;
        let center = self.traits.spindle_center;
        let carrier = self.band(center - 1.0, center + 1.0);
        let mut envelope = vec![0.0; n];
        let bursts = self.rng.gen_range(1..=3);
        for _ in 0..bursts {
            let len = (self.rng.gen_range(0.5..1.5) * self.sample_rate) as usize;
            let start = self.rng.gen_range(0..n - len);
            let amp = self.jitter(2.0);
            for i in 0..len {
                let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos();
                envelope[start + i] += amp * w;
            }
        }
        carrier.iter().zip(envelope).map(|(c, e)| c * e).collect()
    }

    fn jitter(&mut self, amp: f64) -> f64 {
        amp * self.rng.gen_range(0.6..1.4)
    }

    fn white(&mut self, shape: (usize, usize), std: f64) -> Array2<f64> {
        let rng = &mut self.rng;
        Array2::from_shape_simple_fn(shape, || {
            std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
        })
    }

    /// Gaussian noise with a flat spectrum over `[low, high]` Hz, unit RMS.
    fn band(&mut self, low: f64, high: f64) -> Vec<f64> {
        self.shaped(|f| (f >= low && f <= high).then_some(1.0))
    }

    /// 1/f noise above `low` Hz, unit RMS.
    fn pink(&mut self, low: f64) -> Vec<f64> {
        self.shaped(|f| (f >= low).then(|| 1.0 / f.sqrt()))
    }

    fn shaped(&mut self, weight: impl Fn(f64) -> Option<f64>) -> Vec<f64> {
        let n = self.epoch_len;
        let df = self.sample_rate / n as f64;
        let mut spec = vec![Complex64::new(0.0, 0.0); n];
        for k in 1..(n + 1) / 2 {
            if let Some(w) = weight(k as f64 * df) {
                let re: f64 = StandardNormal.sample(&mut self.rng);
                let im: f64 = StandardNormal.sample(&mut self.rng);
                spec[k] = Complex64::new(re * w, im * w);
                spec[n - k] = spec[k].conj();
            }
        }
        self.ifft.process(&mut spec);
        let mut out: Vec<f64> = spec.iter().map(|c| c.re).collect();
        let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        if rms > 0.0 {
            out.iter_mut().for_each(|v| *v /= rms);
        }
        out
    }
}

fn markov_hypnogram(rng: &mut ChaCha8Rng, len: usize) -> Vec<StageLabel> {
    let mut stage = StageLabel::W;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(stage);
        let u: f64 = rng.gen();
        let row = &TRANSITIONS[stage.code()];
        let mut acc = 0.0;
        let mut next = StageLabel::ALL.len() - 1;
        for (k, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = k;
                break;
            }
        }
        stage = StageLabel::ALL[next];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{ear_derivations, scalp_derivations};

    fn small() -> SynthConfig {
        SynthConfig {
            n_subjects: 2,
            epochs_per_subject: 12,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn transition_rows_sum_to_one() {
        for row in TRANSITIONS {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_paired_dataset(&small(), 7).unwrap();
        let b = synth_paired_dataset(&small(), 7).unwrap();
        let c = synth_paired_dataset(&small(), 8).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.hypnogram, y.hypnogram);
            assert_eq!(x.scalp, y.scalp);
            assert_eq!(x.ear, y.ear);
        }
        assert_ne!(a[0].scalp, c[0].scalp);
    }

    #[test]
    fn rejects_inverted_snr() {
        let cfg = SynthConfig {
            snr_ear_db: 12.0,
            ..small()
        };
        assert!(matches!(
            synth_paired_dataset(&cfg, 0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn electrodes_reproduce_derivations() {
        let cfg = small();
        let (subject, _) = synth_subject(&cfg, 3, 1).unwrap();
        let electrodes = synth_electrode_subject(&cfg, 3, 1).unwrap();
        assert_eq!(subject.hypnogram, electrodes.hypnogram);
        let usable: Vec<String> = ear_electrodes().into_iter().map(String::from).collect();
        let ear = ear_derivations(&electrodes.ear, &usable).unwrap();
        let scalp = scalp_derivations(&electrodes.scalp).unwrap();
        let max_diff = |a: &Array2<f64>, b: &Array2<f64>| {
            (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs()))
        };
        assert!(max_diff(ear.data(), subject.ear.data()) < 1e-9);
        assert!(max_diff(scalp.data(), subject.scalp.data()) < 1e-9);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = SynthConfig::default();
        assert_eq!(SynthConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
        let partial = SynthConfig::from_toml_str("n_subjects = 3\n").unwrap();
        assert_eq!(partial.n_subjects, 3);
        assert_eq!(partial.epochs_per_subject, 200);
        assert!(SynthConfig::from_toml_str("bogus = 1\n").is_err());
    }
}
