use ndarray::{Array2, Axis};

use crate::dataset::stage::StageLabel;
use crate::error::{Error, Result};
use crate::preprocess::DerivationSet;
use crate::signal::{segment_epochs, EpochTensor, EPOCH_SECONDS};

/// Channels with a standard deviation below this are mapped to zeros.
pub const STD_FLOOR: f64 = 1e-8;

/// Scalp and ear derivations cut from the same 30 s window.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedEpoch {
    pub scalp: EpochTensor,
    pub ear: EpochTensor,
    pub label: StageLabel,
    pub subject_id: String,
}

/// All paired epochs of one subject in recording order.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectEpochs {
    pub subject_id: String,
    pub epochs: Vec<PairedEpoch>,
}

/// Per-channel z-score in place (population standard deviation).
pub fn normalize_epoch(data: &mut Array2<f64>) {
    let n = data.nrows() as f64;
    for mut column in data.axis_iter_mut(Axis(1)) {
        let mean = column.sum() / n;
        let var = column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if std < STD_FLOOR {
            column.fill(0.0);
        } else {
            column.mapv_inplace(|v| (v - mean) / std);
        }
    }
}

/// Segments both derivation sets into 30 s epochs, pairs them index by index
/// with `labels` and z-scores every channel of every epoch.
pub fn make_paired_epochs(
    scalp: &DerivationSet,
    ear: &DerivationSet,
    labels: &[StageLabel],
    subject_id: &str,
) -> Result<Vec<PairedEpoch>> {
    if scalp.num_samples() != ear.num_samples() {
        return Err(Error::AlignmentError(format!(
            "scalp has {} samples, ear has {}",
            scalp.num_samples(),
            ear.num_samples()
        )));
    }
    if scalp.sample_rate() != ear.sample_rate() {
        return Err(Error::AlignmentError(format!(
            "scalp at {} Hz, ear at {} Hz",
            scalp.sample_rate(),
            ear.sample_rate()
        )));
    }
    let scalp_epochs = segment_epochs(scalp.recording(), EPOCH_SECONDS)?;
    let ear_epochs = segment_epochs(ear.recording(), EPOCH_SECONDS)?;
    if labels.len() != scalp_epochs.len() {
        return Err(Error::LabelCountMismatch {
            labels: labels.len(),
            epochs: scalp_epochs.len(),
        });
    }
    Ok(scalp_epochs
        .into_iter()
        .zip(ear_epochs)
        .zip(labels)
        .map(|((mut s, mut e), label)| {
            normalize_epoch(&mut s.data);
            normalize_epoch(&mut e.data);
            PairedEpoch {
                scalp: s,
                ear: e,
                label: *label,
                subject_id: subject_id.to_string(),
            }
        })
        .collect())
}
