use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::{PairedEpoch, SubjectEpochs};
use crate::error::{Error, Result};
use crate::nn::{Act, Scalar};

/// Which side of a paired epoch a model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Scalp,
    Ear,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Scalp => "scalp",
            Domain::Ear => "ear",
        }
    }
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scalp" => Ok(Domain::Scalp),
            "ear" => Ok(Domain::Ear),
            other => Err(Error::InvalidConfig(format!("unknown domain {other:?}"))),
        }
    }
}

/// Single-domain epochs stacked channels-last: `data` is `[N·T, C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet<F> {
    data: Array2<F>,
    epoch_samples: usize,
    labels: Vec<usize>,
}

impl<F: Scalar> EpochSet<F> {
    pub fn new(data: Array2<F>, epoch_samples: usize, labels: Vec<usize>) -> Result<Self> {
        if epoch_samples == 0 || data.nrows() != labels.len() * epoch_samples {
            return Err(Error::ShapeError(format!(
                "{} rows cannot hold {} epochs of {epoch_samples} samples",
                data.nrows(),
                labels.len()
            )));
        }
        Ok(Self {
            data: data.as_standard_layout().into_owned(),
            epoch_samples,
            labels,
        })
    }

    pub fn from_epochs<'a>(
        epochs: impl IntoIterator<Item = &'a PairedEpoch>,
        domain: Domain,
    ) -> Result<Self> {
        let mut rows: Vec<F> = Vec::new();
        let mut labels = Vec::new();
        let mut shape: Option<(usize, usize)> = None;
        for e in epochs {
            let t = match domain {
                Domain::Scalp => &e.scalp.data,
                Domain::Ear => &e.ear.data,
            };
            match shape {
                None => shape = Some(t.dim()),
                Some(s) if s != t.dim() => {
                    return Err(Error::ShapeError(format!(
                        "epoch shape {:?} differs from {s:?}",
                        t.dim()
                    )))
                }
                _ => {}
            }
            rows.extend(t.iter().map(|&v| F::of(v)));
            labels.push(e.label.code());
        }
        let Some((t, c)) = shape else {
            return Err(Error::EmptyDataset);
        };
        let data = Array2::from_shape_vec((labels.len() * t, c), rows).expect("row count");
        Self::new(data, t, labels)
    }

    pub fn from_subjects(subjects: &[&SubjectEpochs], domain: Domain) -> Result<Self> {
        Self::from_epochs(subjects.iter().flat_map(|s| s.epochs.iter()), domain)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn epoch_samples(&self) -> usize {
        self.epoch_samples
    }

    pub fn channels(&self) -> usize {
        self.data.ncols()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn epoch(&self, i: usize) -> ArrayView2<'_, F> {
        let t = self.epoch_samples;
        self.data.slice(ndarray::s![i * t..(i + 1) * t, ..])
    }

    /// Copies the listed epochs into one batch activation.
    pub fn batch(&self, indices: &[usize]) -> Act<F> {
        let (t, c) = (self.epoch_samples, self.channels());
        let src = self.data.as_slice().expect("standard layout");
        let mut out = Vec::with_capacity(indices.len() * t * c);
        for &i in indices {
            out.extend_from_slice(&src[i * t * c..(i + 1) * t * c]);
        }
        Act::new(
            indices.len(),
            t,
            Array2::from_shape_vec((indices.len() * t, c), out).expect("batch shape"),
        )
    }

    pub fn batch_labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }
}

/// Scalp and ear epoch sets with shared labels, index `i` pairing epoch `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSet<F> {
    pub scalp: EpochSet<F>,
    pub ear: EpochSet<F>,
}

impl<F: Scalar> PairedSet<F> {
    pub fn new(scalp: EpochSet<F>, ear: EpochSet<F>) -> Result<Self> {
        if scalp.labels() != ear.labels() {
            return Err(Error::AlignmentError(
                "scalp and ear label sequences differ".into(),
            ));
        }
        Ok(Self { scalp, ear })
    }

    pub fn from_subjects(subjects: &[&SubjectEpochs]) -> Result<Self> {
        Self::new(
            EpochSet::from_subjects(subjects, Domain::Scalp)?,
            EpochSet::from_subjects(subjects, Domain::Ear)?,
        )
    }

    pub fn len(&self) -> usize {
        self.scalp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scalp.is_empty()
    }

    pub fn domain(&self, d: Domain) -> &EpochSet<F> {
        match d {
            Domain::Scalp => &self.scalp,
            Domain::Ear => &self.ear,
        }
    }
}
