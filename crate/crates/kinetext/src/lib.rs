//! Synthetic local-motion video dataset generation.
//!
//! The pipeline pastes a sprite onto a background along a sampled keyframe
//! trajectory, renders a template caption that describes exactly what the
//! trajectory does, optionally paraphrases that caption through an LLM
//! gateway, and writes a JSONL manifest next to the rendered frames. A small
//! contrastive probe trains on the result to check that captions and clips
//! actually line up.

pub mod analytics;
pub mod caption;
pub mod compositor;
pub mod config;
pub mod error;
pub mod kinematics;
pub mod paraphrase;
pub mod pipeline;
pub mod probe;
pub mod sprite;

pub use caption::{CaptionSlots, MotionCaption};
pub use config::{GenConfig, ThresholdConfig};
pub use error::Error;
pub use kinematics::{Keyframe, MotionSpec, PoseTrack};
pub use pipeline::{Manifest, PairRecord, ParaphraseVerdict};
