//! Downstream metrics: k-fold SVM accuracy, clustering ARI and friend
//! recommendation.

mod clustering;
mod recommend;
mod report;
mod svm;

pub use clustering::{
    adjusted_rand_index, kmeans, kmeans_ari, spectral_ari, spectral_embedding, KMeansFit, SpectralParams,
    CLUSTERING_RUNS,
};
pub use recommend::{
    cosine_similarity, recommend_friends, recommend_per_account, score_account, AccountScores, RecommendationScores,
    RecommendationTask,
};
pub use report::{mean_std, EvalReport, MetricSummary};
pub use svm::{
    best_svm_accuracy, rms_normalize, svm_accuracy_10fold, svm_accuracy_kfold, Kernel, SvmClassifier, SvmParams,
    SVM_C_GRID,
};
