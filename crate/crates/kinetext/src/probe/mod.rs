//! A small multimodal probe trained from scratch on generated videos and
//! their captions, used to check that the dataset's motion is learnable.
//!
//! The pipeline: [`features`] turns rendered frames into compact per-frame
//! motion descriptors (no pixels reach the model), [`model`] defines the
//! dual-encoder with its three objectives and hand-derived gradients,
//! [`train`] runs mini-batch SGD, and [`eval`] measures caption retrieval
//! and masked direction-word recovery (with a video-blind control).

pub mod eval;
pub mod features;
pub mod model;
pub mod train;

pub use eval::{
    direction_token_positions, evaluate_retrieval, masked_direction_accuracy,
    recalls_from_scores, RetrievalMetrics,
};
pub use features::{
    background_plate, extract_video_feature, load_examples, ProbeExample, VideoFeature,
    DIFF_THRESHOLD, FEATURES_PER_FRAME,
};
pub use model::{
    contrastive_aligned_orthogonal_loss, contrastive_floor, gradient_check, ProbeGrads,
    ProbeHyperparams, ProbeModel, Vocab, MASK_ID, TAU_FLOOR, UNK_ID,
};
pub use train::{train_probe, EpochLoss, TrainMetrics};
