//! Training strategies: supervised, transfer (pretrain on scalp, fine-tune on
//! ear), offline feature distillation from a frozen teacher and online
//! distillation with teacher and student updated on the same batches.

mod data;
mod loss;
mod strategy;

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{build_stager, ModelConfig, OutputGrad, SleepStager};
use crate::nn::{Adam, Scalar};

pub use data::{Domain, EpochSet, PairedSet};
pub use loss::{ce_loss, ce_loss_grad, feature_mse, feature_mse_grad, kd_loss, kd_loss_weighted};
pub use strategy::{run_strategy, Strategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Weight of the feature-matching term in the distillation loss.
    pub kd_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epochs: 100,
            batch_size: 32,
            seed: 0,
            kd_weight: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("betas must lie in [0, 1)".into()));
        }
        if !(self.kd_weight >= 0.0) {
            return Err(Error::InvalidConfig("kd_weight must be non-negative".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn adam<F: Scalar>(&self, model: &SleepStager<F>) -> Adam<F> {
        Adam::new(model.params(), self.learning_rate, self.beta1, self.beta2)
    }
}

/// Trained model(s) and their per-epoch mean losses.
#[derive(Debug, Clone)]
pub struct TrainResult<F> {
    pub model: SleepStager<F>,
    pub loss_trace: Vec<f64>,
    /// Online distillation: the co-trained teacher. Transfer: the
    /// scalp-pretrained model that initialised fine-tuning.
    pub teacher: Option<SleepStager<F>>,
    pub teacher_trace: Option<Vec<f64>>,
}

/// Batch order for one training epoch, reseeded from `(seed, epoch)`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

fn supervised_step<F: Scalar>(
    model: &mut SleepStager<F>,
    adam: &mut Adam<F>,
    set: &EpochSet<F>,
    idx: &[usize],
) -> Result<f64> {
    let x = set.batch(idx);
    let (out, tape) = model.forward_tape(&x);
    let (loss, dl) = ce_loss_grad(&out.logits, &set.batch_labels(idx))?;
    let grads = model.backward(
        &tape,
        &OutputGrad {
            logits: Some(dl),
            features: None,
        },
    );
    adam.step(model.params_mut(), &grads);
    Ok(loss.f64())
}

fn kd_step<F: Scalar>(
    model: &mut SleepStager<F>,
    adam: &mut Adam<F>,
    set: &EpochSet<F>,
    idx: &[usize],
    teacher_feat: &Array2<F>,
    weight: f64,
) -> Result<f64> {
    let x = set.batch(idx);
    let (out, tape) = model.forward_tape(&x);
    let (ce, dl) = ce_loss_grad(&out.logits, &set.batch_labels(idx))?;
    let (mse, df) = feature_mse_grad(&out.features, teacher_feat)?;
    let w = F::of(weight);
    let grads = model.backward(
        &tape,
        &OutputGrad {
            logits: Some(dl),
            features: Some(df.mapv(|v| v * w)),
        },
    );
    adam.step(model.params_mut(), &grads);
    Ok((ce + w * mse).f64())
}

fn batches(order: &[usize], size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(size)
}

/// Plain supervised training with cross-entropy on one domain.
pub fn train_supervised<F: Scalar>(
    model: SleepStager<F>,
    data: &EpochSet<F>,
    config: &TrainConfig,
) -> Result<TrainResult<F>> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut model = model;
    let mut adam = config.adam(&model);
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let order = epoch_order(config.seed, epoch, data.len());
        let mut total = 0.0;
        for idx in batches(&order, config.batch_size) {
            let loss = supervised_step(&mut model, &mut adam, data, idx)?;
            total += loss * idx.len() as f64;
        }
        trace.push(total / data.len() as f64);
    }
    Ok(TrainResult {
        model,
        loss_trace: trace,
        teacher: None,
        teacher_trace: None,
    })
}

/// Supervised pretraining on scalp epochs, then every weight fine-tuned on ear
/// epochs with the same settings. The loss trace covers both phases.
pub fn train_transfer<F: Scalar>(
    model_config: &ModelConfig,
    scalp: &EpochSet<F>,
    ear: &EpochSet<F>,
    config: &TrainConfig,
) -> Result<TrainResult<F>> {
    let phase1 = train_supervised(build_stager(model_config)?, scalp, config)?;
    let pretrained = phase1.model.clone();
    let phase2 = train_supervised(phase1.model, ear, config)?;
    let mut trace = phase1.loss_trace;
    trace.extend(phase2.loss_trace);
    Ok(TrainResult {
        model: phase2.model,
        loss_trace: trace,
        teacher: Some(pretrained),
        teacher_trace: None,
    })
}

/// Distillation-layer features of every epoch in `set`, in evaluation mode.
pub fn compute_features<F: Scalar>(
    model: &SleepStager<F>,
    set: &EpochSet<F>,
    batch_size: usize,
) -> Array2<F> {
    let idx: Vec<usize> = (0..set.len()).collect();
    let parts: Vec<Array2<F>> = idx
        .chunks(batch_size.max(1))
        .map(|c| model.forward(&set.batch(c)).features)
        .collect();
    if parts.is_empty() {
        return Array2::zeros((0, model.feature_dim()));
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    concatenate(Axis(0), &views).expect("equal widths")
}

fn gather_rows<F: Scalar>(m: &Array2<F>, idx: &[usize]) -> Array2<F> {
    m.select(Axis(0), idx)
}

/// The teacher is frozen; a freshly initialised student learns from ear epochs
/// with cross-entropy plus feature matching against the teacher's features on
/// the paired scalp epochs.
pub fn train_offline_kd<F: Scalar>(
    teacher: &SleepStager<F>,
    student_config: &ModelConfig,
    paired: &PairedSet<F>,
    config: &TrainConfig,
) -> Result<TrainResult<F>> {
    config.validate()?;
    if teacher.feature_dim() != student_config.feature_dim {
        return Err(Error::FeatureShapeMismatch {
            teacher: teacher.feature_dim(),
            student: student_config.feature_dim,
        });
    }
    if paired.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut student = build_stager(student_config)?;
    // the teacher is deterministic and never updated, so its features can be
    // computed once rather than per batch
    let targets = compute_features(teacher, &paired.scalp, config.batch_size);
    let mut adam = config.adam(&student);
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let order = epoch_order(config.seed, epoch, paired.len());
        let mut total = 0.0;
        for idx in batches(&order, config.batch_size) {
            let t = gather_rows(&targets, idx);
            let loss = kd_step(&mut student, &mut adam, &paired.ear, idx, &t, config.kd_weight)?;
            total += loss * idx.len() as f64;
        }
        trace.push(total / paired.len() as f64);
    }
    Ok(TrainResult {
        model: student,
        loss_trace: trace,
        teacher: None,
        teacher_trace: None,
    })
}

/// Teacher and student both start from scratch and are updated on every
/// batch: first the teacher with cross-entropy on scalp epochs, then the
/// student with the distillation loss against that batch's teacher features.
pub fn train_online_kd<F: Scalar>(
    teacher_config: &ModelConfig,
    student_config: &ModelConfig,
    paired: &PairedSet<F>,
    config: &TrainConfig,
) -> Result<TrainResult<F>> {
    train_online_kd_with(teacher_config, student_config, paired, config, true)
}

/// [`train_online_kd`] with the student update optionally switched off.
pub fn train_online_kd_with<F: Scalar>(
    teacher_config: &ModelConfig,
    student_config: &ModelConfig,
    paired: &PairedSet<F>,
    config: &TrainConfig,
    update_student: bool,
) -> Result<TrainResult<F>> {
    config.validate()?;
    if teacher_config.feature_dim != student_config.feature_dim {
        return Err(Error::FeatureShapeMismatch {
            teacher: teacher_config.feature_dim,
            student: student_config.feature_dim,
        });
    }
    if paired.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut teacher = build_stager(teacher_config)?;
    let mut student = build_stager(student_config)?;
    let mut t_adam = config.adam(&teacher);
    let mut s_adam = config.adam(&student);
    let mut trace = Vec::with_capacity(config.epochs);
    let mut t_trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let order = epoch_order(config.seed, epoch, paired.len());
        let (mut total, mut t_total) = (0.0, 0.0);
        for idx in batches(&order, config.batch_size) {
            let t_loss = supervised_step(&mut teacher, &mut t_adam, &paired.scalp, idx)?;
            t_total += t_loss * idx.len() as f64;
            if update_student {
                // targets come from the teacher as it stands after its own step
                let t_feat = teacher.forward(&paired.scalp.batch(idx)).features;
                let loss = kd_step(
                    &mut student,
                    &mut s_adam,
                    &paired.ear,
                    idx,
                    &t_feat,
                    config.kd_weight,
                )?;
                total += loss * idx.len() as f64;
            }
        }
        trace.push(total / paired.len() as f64);
        t_trace.push(t_total / paired.len() as f64);
    }
    Ok(TrainResult {
        model: student,
        loss_trace: trace,
        teacher: Some(teacher),
        teacher_trace: Some(t_trace),
    })
}

/// CSV with columns `epoch,loss` and, when given, `teacher_loss`.
pub fn loss_csv(trace: &[f64], teacher: Option<&[f64]>) -> String {
    let mut out = String::from(if teacher.is_some() {
        "epoch,loss,teacher_loss\n"
    } else {
        "epoch,loss\n"
    });
    for (i, l) in trace.iter().enumerate() {
        let _ = write!(out, "{},{l}", i + 1);
        if let Some(t) = teacher {
            let _ = write!(out, ",{}", t.get(i).copied().unwrap_or(f64::NAN));
        }
        out.push('\n');
    }
    out
}

pub fn write_loss_csv(path: &Path, trace: &[f64], teacher: Option<&[f64]>) -> Result<()> {
    std::fs::write(path, loss_csv(trace, teacher))?;
    Ok(())
}
