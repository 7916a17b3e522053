//! Coarse place recognition that steers the coordinate regressor: hierarchical
//! clustering of training positions, a two-level classifier on global frame
//! features, and the guidance vector derived from its posterior.

mod classifier;
mod guidance;
mod hierarchy;
mod kmeans;
mod loss;

pub use classifier::{
    leaf_accuracy, standardization, train_classifier, ClassifierEpoch, ClassifierHead, ClassifierTrainConfig,
    HeadCache, HeadGrads, HeadPrediction, CLASSIFIER_MAGIC, CLASSIFIER_VERSION,
};
pub use guidance::{confidence, guidance_feature, ZERO_NORM};
pub use hierarchy::{build_hierarchy, ClusterModel, HierLabel, CLUSTER_MAGIC, CLUSTER_VERSION};
pub use kmeans::{kmeans, nearest, KMeansFit};
pub use loss::{l1_loss, smoothed_cross_entropy, smoothed_target, PROB_FLOOR};
