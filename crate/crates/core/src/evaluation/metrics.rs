use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{StageLabel, NUM_STAGES};
use crate::error::{Error, Result};

/// Rows are true stages, columns predicted stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_STAGES]; NUM_STAGES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_STAGES).map(|k| self.counts[k][k]).sum()
    }

    pub fn row_sum(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }

    pub fn col_sum(&self, k: usize) -> u64 {
        self.counts.iter().map(|r| r[k]).sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn is_diagonal(&self) -> bool {
        (0..NUM_STAGES).all(|t| (0..NUM_STAGES).all(|p| t == p || self.counts[t][p] == 0))
    }

    /// CSV with a header row of predicted stages and one row per true stage.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\pred");
        for s in StageLabel::ALL {
            let _ = write!(out, ",{}", s.token());
        }
        out.push('\n');
        for (s, row) in StageLabel::ALL.iter().zip(&self.counts) {
            out.push_str(s.token());
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion(preds: &[usize], labels: &[usize]) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::ShapeError(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in preds.iter().zip(labels) {
        if p >= NUM_STAGES {
            return Err(Error::InvalidLabel(p));
        }
        if t >= NUM_STAGES {
            return Err(Error::InvalidLabel(t));
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    Ok(cm.trace() as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub value: f64,
    /// Chance agreement is 1 (a single class on both sides); `value` is then 0.
    pub degenerate: bool,
}

pub fn cohen_kappa(cm: &ConfusionMatrix) -> Result<Kappa> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let n = total as f64;
    let po = cm.trace() as f64 / n;
    let pe = (0..NUM_STAGES)
        .map(|k| cm.row_sum(k) as f64 * cm.col_sum(k) as f64)
        .sum::<f64>()
        / (n * n);
    if pe >= 1.0 {
        return Ok(Kappa {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Kappa {
        value: (po - pe) / (1.0 - pe),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    /// `None` for a class that is neither present nor predicted.
    pub per_class: [Option<f64>; NUM_STAGES],
    /// Mean over the defined classes.
    pub macro_f1: f64,
}

pub fn per_class_f1(cm: &ConfusionMatrix) -> Result<F1Scores> {
    if cm.total() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut per_class = [None; NUM_STAGES];
    for (k, slot) in per_class.iter_mut().enumerate() {
        let tp = cm.counts[k][k];
        let fp = cm.col_sum(k) - tp;
        let fn_ = cm.row_sum(k) - tp;
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            *slot = Some(2.0 * tp as f64 / denom as f64);
        }
    }
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let macro_f1 = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok(F1Scores {
        per_class,
        macro_f1,
    })
}

/// Summary of one set of scored epochs; serialised as `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_epochs: u64,
    pub accuracy: f64,
    pub kappa: f64,
    pub kappa_degenerate: bool,
    /// In stage order W, N1, N2, N3, REM; `null` where undefined.
    pub f1_per_class: Vec<Option<f64>>,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self> {
        let kappa = cohen_kappa(cm)?;
        let f1 = per_class_f1(cm)?;
        Ok(Self {
            n_epochs: cm.total(),
            accuracy: accuracy(cm)?,
            kappa: kappa.value,
            kappa_degenerate: kappa.degenerate,
            f1_per_class: f1.per_class.to_vec(),
            macro_f1: f1.macro_f1,
            confusion: *cm,
        })
    }

    pub fn from_predictions(preds: &[usize], labels: &[usize]) -> Result<Self> {
        Self::from_confusion(&confusion(preds, labels)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_cases() {
        let cm = confusion(&[0, 1, 2, 3, 4], &[0, 1, 2, 3, 4]).unwrap();
        for k in 0..5 {
            assert_eq!(cm.counts[k][k], 1);
        }
        assert_eq!(cm.total(), 5);
        let cm = confusion(&[2; 10], &[0; 10]).unwrap();
        assert_eq!(cm.counts[0][2], 10);
        assert_eq!(confusion(&[], &[]).unwrap(), ConfusionMatrix::default());
        assert!(matches!(confusion(&[0], &[]), Err(Error::ShapeError(_))));
    }

    #[test]
    fn accuracy_cases() {
        let mut cm = ConfusionMatrix::default();
        assert!(matches!(accuracy(&cm), Err(Error::EmptyMatrix)));
        cm.counts[0][0] = 40;
        cm.counts[1][1] = 24;
        cm.counts[2][3] = 36;
        assert_eq!(accuracy(&cm).unwrap(), 0.64);
        let off = confusion(&[1, 0], &[0, 1]).unwrap();
        assert_eq!(accuracy(&off).unwrap(), 0.0);
    }

    #[test]
    fn kappa_cases() {
        let cm = confusion(&[0, 1, 2, 3, 4, 0], &[0, 1, 2, 3, 4, 0]).unwrap();
        assert_eq!(cohen_kappa(&cm).unwrap().value, 1.0);
        let single = confusion(&[3; 7], &[3; 7]).unwrap();
        let k = cohen_kappa(&single).unwrap();
        assert!(k.degenerate);
        assert_eq!(k.value, 0.0);
    }

    #[test]
    fn f1_cases() {
        let mut cm = ConfusionMatrix::default();
        cm.counts[0][0] = 8;
        cm.counts[1][0] = 2;
        cm.counts[0][1] = 2;
        cm.counts[1][1] = 5;
        let f1 = per_class_f1(&cm).unwrap();
        assert_eq!(f1.per_class[0], Some(0.8));
        assert_eq!(f1.per_class[2], None);
        let f1_1 = 10.0 / 14.0;
        assert!((f1.macro_f1 - (0.8 + f1_1) / 2.0).abs() < 1e-15);
    }
}
