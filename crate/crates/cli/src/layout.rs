//! On-disk layout shared by the commands: one directory per subject holding
//! `scalp/` and `ear/` recording containers and `hypnogram.txt`.

use std::fs;
use std::path::{Path, PathBuf};

use earkd_core::dataset::{
    load_hypnogram, load_recording_container, loso_splits, make_paired_epochs, Fold,
    SubjectEpochs,
};
use earkd_core::preprocess::DerivationSet;

use crate::error::{CliError, CliResult};

pub const SCALP_DIR: &str = "scalp";
pub const EAR_DIR: &str = "ear";
pub const HYPNOGRAM_FILE: &str = "hypnogram.txt";
pub const REJECTION_FILE: &str = "rejection_report.json";
pub const SUMMARY_FILE: &str = "preprocess_summary.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TEACHER_CHECKPOINT_FILE: &str = "teacher.ckpt";
pub const LOSS_FILE: &str = "loss.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const FEATURES_FILE: &str = "features.csv";

/// Subject directories under `root`, sorted by name.
pub fn subject_dirs(root: &Path) -> CliResult<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(root)
        .map_err(|e| CliError::io(format!("listing {}", root.display()), e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| CliError::io(format!("listing {}", root.display()), e))?
            .path();
        if path.is_dir() && path.join(HYPNOGRAM_FILE).is_file() {
            let id = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            out.push((id, path));
        }
    }
    out.sort();
    Ok(out)
}

/// Paired, normalised epochs of one preprocessed subject.
pub fn load_subject(id: &str, dir: &Path) -> CliResult<SubjectEpochs> {
    let scalp = DerivationSet::new(load_recording_container(&dir.join(SCALP_DIR))?)?;
    let ear = DerivationSet::new(load_recording_container(&dir.join(EAR_DIR))?)?;
    let labels = load_hypnogram(&dir.join(HYPNOGRAM_FILE))?;
    Ok(SubjectEpochs {
        subject_id: id.to_string(),
        epochs: make_paired_epochs(&scalp, &ear, &labels, id)?,
    })
}

/// The subjects of a preprocessed dataset and fold `k` of its LOSO plan.
pub struct FoldData {
    pub fold: Fold,
    pub subjects: Vec<(String, PathBuf)>,
}

impl FoldData {
    pub fn open(root: &Path, k: usize) -> CliResult<Self> {
        let subjects = subject_dirs(root)?;
        let ids: Vec<String> = subjects.iter().map(|(id, _)| id.clone()).collect();
        let plan = loso_splits(&ids)?;
        let n = plan.folds.len();
        let fold = plan.folds.into_iter().nth(k).ok_or_else(|| {
            CliError::Usage(format!("--fold {k} out of range for {n} subjects"))
        })?;
        Ok(Self { fold, subjects })
    }

    fn load(&self, ids: &[String]) -> CliResult<Vec<SubjectEpochs>> {
        ids.iter()
            .map(|id| {
                let (_, dir) = self
                    .subjects
                    .iter()
                    .find(|(s, _)| s == id)
                    .expect("fold subjects come from the directory listing");
                load_subject(id, dir)
            })
            .collect()
    }

    pub fn train_subjects(&self) -> CliResult<Vec<SubjectEpochs>> {
        self.load(&self.fold.train_subjects)
    }

    pub fn test_subject(&self) -> CliResult<SubjectEpochs> {
        Ok(self.load(std::slice::from_ref(&self.fold.test_subject))?.remove(0))
    }

    pub fn dir_of(&self, id: &str) -> PathBuf {
        self.subjects
            .iter()
            .find(|(s, _)| s == id)
            .map(|(_, d)| d.clone())
            .expect("known subject")
    }
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

pub fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))
}
