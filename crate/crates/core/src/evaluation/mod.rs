//! Metrics, leave-one-subject-out evaluation and feature-distribution export.

mod embed;
mod loso;
mod metrics;

pub use embed::{
    embed_2d, extract_features, mean_squared_distance, pca_2d, project_2d, tsne_2d, EmbedMethod,
    EmbeddingExport, FeatureSet, TSNE_ITERATIONS, TSNE_PERPLEXITY,
};
pub use loso::{
    fold_configs, loso_benchmark, loso_evaluate, predict, BenchmarkReport, FeatureGap,
    FoldResult, LosoReport,
};
pub use metrics::{
    accuracy, cohen_kappa, confusion, per_class_f1, ConfusionMatrix, F1Scores, Kappa,
    MetricsReport,
};
