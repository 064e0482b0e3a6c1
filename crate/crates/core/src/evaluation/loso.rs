use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::embed::{extract_features, mean_squared_distance};
use super::metrics::{confusion, ConfusionMatrix, MetricsReport};
use crate::dataset::{loso_splits, Fold, SubjectEpochs};
use crate::error::{Error, Result};
use crate::models::{argmax_rows, build_stager, ModelConfig, SleepStager};
use crate::nn::Scalar;
use crate::training::{
    compute_features, run_strategy, train_offline_kd, train_supervised, Domain, EpochSet,
    PairedSet, Strategy, TrainConfig,
};

/// Predicted stage of every epoch in `set`.
pub fn predict<F: Scalar>(model: &SleepStager<F>, set: &EpochSet<F>) -> Vec<usize> {
    let idx: Vec<usize> = (0..set.len()).collect();
    idx.chunks(64)
        .flat_map(|c| argmax_rows(&model.forward(&set.batch(c)).logits))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_subject: String,
    pub train_subjects: Vec<String>,
    pub metrics: MetricsReport,
    pub predictions: Vec<usize>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosoReport {
    pub strategy: Strategy,
    pub folds: Vec<FoldResult>,
    /// Metrics over the union of all held-out epochs.
    pub pooled: MetricsReport,
    /// Unweighted mean of the per-fold accuracies.
    pub subject_mean_accuracy: f64,
    pub subject_mean_kappa: f64,
}

impl LosoReport {
    fn from_folds(strategy: Strategy, folds: Vec<FoldResult>) -> Result<Self> {
        let mut pooled = ConfusionMatrix::default();
        for f in &folds {
            pooled.add(&f.metrics.confusion);
        }
        let k = folds.len() as f64;
        Ok(Self {
            strategy,
            subject_mean_accuracy: folds.iter().map(|f| f.metrics.accuracy).sum::<f64>() / k,
            subject_mean_kappa: folds.iter().map(|f| f.metrics.kappa).sum::<f64>() / k,
            pooled: MetricsReport::from_confusion(&pooled)?,
            folds,
        })
    }
}

/// Held-out feature distance between the scalp-supervised teacher (on scalp
/// epochs) and an ear model (on the paired ear epochs).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureGap {
    pub fold: usize,
    pub kd_offline: f64,
    pub supervised_ear: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub reports: Vec<LosoReport>,
    /// Present when both offline distillation and the ear baseline were run.
    pub feature_gaps: Vec<FeatureGap>,
}

impl BenchmarkReport {
    pub fn report(&self, strategy: Strategy) -> Option<&LosoReport> {
        self.reports.iter().find(|r| r.strategy == strategy)
    }

    pub fn mean_gap(&self) -> Option<(f64, f64)> {
        if self.feature_gaps.is_empty() {
            return None;
        }
        let k = self.feature_gaps.len() as f64;
        Some((
            self.feature_gaps.iter().map(|g| g.kd_offline).sum::<f64>() / k,
            self.feature_gaps.iter().map(|g| g.supervised_ear).sum::<f64>() / k,
        ))
    }
}

/// Configs for fold `k`: both seeds are offset by the fold index.
pub fn fold_configs(model: &ModelConfig, train: &TrainConfig, k: usize) -> (ModelConfig, TrainConfig) {
    let mut m = model.clone();
    m.seed = m.seed.wrapping_add(k as u64);
    let mut t = train.clone();
    t.seed = t.seed.wrapping_add(k as u64);
    (m, t)
}

fn fold_data<F: Scalar>(
    subjects: &[SubjectEpochs],
    fold: &Fold,
) -> Result<(PairedSet<F>, PairedSet<F>)> {
    let by_id: BTreeMap<&str, &SubjectEpochs> =
        subjects.iter().map(|s| (s.subject_id.as_str(), s)).collect();
    let train: Vec<&SubjectEpochs> = fold
        .train_subjects
        .iter()
        .map(|id| by_id[id.as_str()])
        .collect();
    let test = by_id[fold.test_subject.as_str()];
    Ok((
        PairedSet::from_subjects(&train)?,
        PairedSet::from_subjects(&[test])?,
    ))
}

fn fold_result<F: Scalar>(
    k: usize,
    fold: &Fold,
    model: &SleepStager<F>,
    test: &PairedSet<F>,
    domain: Domain,
) -> Result<FoldResult> {
    let set = test.domain(domain);
    let predictions = predict(model, set);
    let labels = set.labels().to_vec();
    Ok(FoldResult {
        fold: k,
        test_subject: fold.test_subject.clone(),
        train_subjects: fold.train_subjects.clone(),
        metrics: MetricsReport::from_confusion(&confusion(&predictions, &labels)?)?,
        predictions,
        labels,
    })
}

/// Leave-one-subject-out evaluation of a single strategy.
pub fn loso_evaluate<F: Scalar>(
    strategy: Strategy,
    model_config: &ModelConfig,
    subjects: &[SubjectEpochs],
    train_config: &TrainConfig,
) -> Result<LosoReport> {
    let mut bench = loso_benchmark::<F>(&[strategy], model_config, subjects, train_config)?;
    Ok(bench.reports.remove(0))
}

struct FoldOutcome {
    results: Vec<FoldResult>,
    gap: Option<FeatureGap>,
}

/// Runs several strategies over the same LOSO folds. Within a fold the
/// scalp-supervised model doubles as the offline-distillation teacher, and
/// folds run in parallel with seeds offset by the fold index.
pub fn loso_benchmark<F: Scalar>(
    strategies: &[Strategy],
    model_config: &ModelConfig,
    subjects: &[SubjectEpochs],
    train_config: &TrainConfig,
) -> Result<BenchmarkReport> {
    if strategies.is_empty() {
        return Err(Error::InvalidConfig("no strategies given".into()));
    }
    let ids: Vec<String> = subjects.iter().map(|s| s.subject_id.clone()).collect();
    let plan = loso_splits(&ids)?;
    let outcomes: Vec<FoldOutcome> = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(k, fold)| run_fold::<F>(k, fold, strategies, model_config, subjects, train_config))
        .collect::<Result<_>>()?;

    let mut reports = Vec::with_capacity(strategies.len());
    for (s, &strategy) in strategies.iter().enumerate() {
        let folds = outcomes.iter().map(|o| o.results[s].clone()).collect();
        reports.push(LosoReport::from_folds(strategy, folds)?);
    }
    Ok(BenchmarkReport {
        reports,
        feature_gaps: outcomes.iter().filter_map(|o| o.gap).collect(),
    })
}

fn run_fold<F: Scalar>(
    k: usize,
    fold: &Fold,
    strategies: &[Strategy],
    model_config: &ModelConfig,
    subjects: &[SubjectEpochs],
    train_config: &TrainConfig,
) -> Result<FoldOutcome> {
    let (mcfg, tcfg) = fold_configs(model_config, train_config, k);
    let (train, test) = fold_data::<F>(subjects, fold)?;
    let needs_teacher = strategies
        .iter()
        .any(|s| matches!(s, Strategy::SupervisedScalp | Strategy::KdOffline));
    let teacher = if needs_teacher {
        Some(train_supervised(build_stager(&mcfg)?, &train.scalp, &tcfg)?.model)
    } else {
        None
    };
    let mut models: Vec<(Strategy, SleepStager<F>)> = Vec::new();
    let mut results = Vec::with_capacity(strategies.len());
    for &strategy in strategies {
        let model = match (strategy, &teacher) {
            (Strategy::SupervisedScalp, Some(t)) => t.clone(),
            (Strategy::KdOffline, Some(t)) => train_offline_kd(t, &mcfg, &train, &tcfg)?.model,
            _ => run_strategy(strategy, &mcfg, &train, &tcfg, None)?.model,
        };
        results.push(fold_result(k, fold, &model, &test, strategy.eval_domain())?);
        models.push((strategy, model));
    }

    let find = |s: Strategy| models.iter().find(|(st, _)| *st == s).map(|(_, m)| m);
    let gap = match (&teacher, find(Strategy::KdOffline), find(Strategy::SupervisedEar)) {
        (Some(t), Some(kd), Some(sup)) => {
            let target = compute_features(t, &test.scalp, 64).mapv(|v| v.f64());
            let kd_f = extract_features(kd, &test.ear, Domain::Ear)?.features;
            let sup_f = extract_features(sup, &test.ear, Domain::Ear)?.features;
            Some(FeatureGap {
                fold: k,
                kd_offline: mean_squared_distance(kd_f.view(), target.view())?,
                supervised_ear: mean_squared_distance(sup_f.view(), target.view())?,
            })
        }
        _ => None,
    };
    Ok(FoldOutcome { results, gap })
}
