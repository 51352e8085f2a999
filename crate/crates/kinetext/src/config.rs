use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry and sampling bounds for one generation run.
///
/// Every field is serialized into the manifest header, so two manifests with
/// the same header section were produced under the same sampling regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    #[serde(default = "default_frame_side")]
    pub frame_width: u32,
    #[serde(default = "default_frame_side")]
    pub frame_height: u32,
    /// Frames per video, N.
    #[serde(default = "default_num_frames")]
    pub num_frames: usize,
    /// Keyframes per video, K. The first sits at frame 0 and the last at
    /// frame N-1; the K-2 interior ones are sampled.
    #[serde(default = "default_num_keyframes")]
    pub num_keyframes: usize,
    /// Bounds on the longest side of the scaled object, in pixels.
    #[serde(default = "default_min_obj_side")]
    pub min_obj_side: u32,
    #[serde(default = "default_max_obj_side")]
    pub max_obj_side: u32,
    /// Maximum per-frame center displacement per axis, in pixels.
    #[serde(default = "default_delta_max")]
    pub delta_max: f64,
    /// Keyframe angles are drawn uniformly from [-theta_range, theta_range]
    /// degrees.
    #[serde(default = "default_theta_range")]
    pub theta_range: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_frame_side() -> u32 {
    224
}
fn default_num_frames() -> usize {
    16
}
fn default_num_keyframes() -> usize {
    3
}
fn default_min_obj_side() -> u32 {
    32
}
fn default_max_obj_side() -> u32 {
    128
}
fn default_delta_max() -> f64 {
    10.0
}
fn default_theta_range() -> f64 {
    25.0
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            frame_width: default_frame_side(),
            frame_height: default_frame_side(),
            num_frames: default_num_frames(),
            num_keyframes: default_num_keyframes(),
            min_obj_side: default_min_obj_side(),
            max_obj_side: default_max_obj_side(),
            delta_max: default_delta_max(),
            theta_range: default_theta_range(),
            rng_seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_keyframes < 2 {
            return Err(Error::Config(format!(
                "num_keyframes must be >= 2, got {}",
                self.num_keyframes
            )));
        }
        if self.num_frames < self.num_keyframes {
            return Err(Error::Config(format!(
                "num_frames ({}) must be >= num_keyframes ({})",
                self.num_frames, self.num_keyframes
            )));
        }
        if self.min_obj_side == 0 {
            return Err(Error::Config("min_obj_side must be positive".into()));
        }
        if self.min_obj_side > self.max_obj_side {
            return Err(Error::Config(format!(
                "min_obj_side ({}) must be <= max_obj_side ({})",
                self.min_obj_side, self.max_obj_side
            )));
        }
        if self.max_obj_side >= self.frame_width.min(self.frame_height) {
            return Err(Error::Config(format!(
                "max_obj_side ({}) must be smaller than both frame sides ({}x{})",
                self.max_obj_side, self.frame_width, self.frame_height
            )));
        }
        if !self.delta_max.is_finite() || self.delta_max < 0.0 {
            return Err(Error::Config(format!(
                "delta_max must be finite and >= 0, got {}",
                self.delta_max
            )));
        }
        if !self.theta_range.is_finite() || self.theta_range < 0.0 {
            return Err(Error::Config(format!(
                "theta_range must be finite and >= 0, got {}",
                self.theta_range
            )));
        }
        Ok(())
    }
}

/// Quantization thresholds that turn measured motion into caption words.
///
/// All comparisons against these bounds are strict; a value that lands
/// exactly on a bound falls into the unmodified middle band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    /// Objects with scaled area strictly below this are "small" (px^2).
    #[serde(default = "default_size_small_max")]
    pub size_small_max: f64,
    /// Objects with scaled area strictly above this are "big" (px^2).
    #[serde(default = "default_size_big_min")]
    pub size_big_min: f64,
    /// Mean per-frame displacement strictly below this is "slowly" (px/frame).
    #[serde(default = "default_speed_slow_max")]
    pub speed_slow_max: f64,
    /// Mean per-frame displacement strictly above this is "quickly".
    #[serde(default = "default_speed_quick_min")]
    pub speed_quick_min: f64,
    /// Segment displacement strictly below this fraction of frame width is
    /// "a little".
    #[serde(default = "default_dist_little_max")]
    pub dist_little_max: f64,
    /// Segment displacement strictly above this fraction is "a lot".
    #[serde(default = "default_dist_lot_min")]
    pub dist_lot_min: f64,
    /// Angle deltas strictly below this are "slightly" (degrees).
    #[serde(default = "default_rot_slight_max")]
    pub rot_slight_max: f64,
    /// Angle deltas strictly above this are "significantly" (degrees).
    #[serde(default = "default_rot_signif_min")]
    pub rot_signif_min: f64,
    /// "diagonally" is emitted when |heading| mod 90 lies strictly inside
    /// this open band (degrees).
    #[serde(default = "default_diag_band")]
    pub diag_band: (f64, f64),
}

fn default_size_small_max() -> f64 {
    64.0 * 64.0
}
fn default_size_big_min() -> f64 {
    96.0 * 96.0
}
fn default_speed_slow_max() -> f64 {
    3.0
}
fn default_speed_quick_min() -> f64 {
    7.0
}
fn default_dist_little_max() -> f64 {
    0.10
}
fn default_dist_lot_min() -> f64 {
    0.30
}
fn default_rot_slight_max() -> f64 {
    8.0
}
fn default_rot_signif_min() -> f64 {
    16.0
}
fn default_diag_band() -> (f64, f64) {
    (30.0, 60.0)
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            size_small_max: default_size_small_max(),
            size_big_min: default_size_big_min(),
            speed_slow_max: default_speed_slow_max(),
            speed_quick_min: default_speed_quick_min(),
            dist_little_max: default_dist_little_max(),
            dist_lot_min: default_dist_lot_min(),
            rot_slight_max: default_rot_slight_max(),
            rot_signif_min: default_rot_signif_min(),
            diag_band: default_diag_band(),
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("size_small_max", self.size_small_max, "size_big_min", self.size_big_min),
            ("speed_slow_max", self.speed_slow_max, "speed_quick_min", self.speed_quick_min),
            ("dist_little_max", self.dist_little_max, "dist_lot_min", self.dist_lot_min),
            ("rot_slight_max", self.rot_slight_max, "rot_signif_min", self.rot_signif_min),
        ];
        for (lo_name, lo, hi_name, hi) in pairs {
            if !lo.is_finite() || !hi.is_finite() || lo <= 0.0 {
                return Err(Error::Config(format!(
                    "{lo_name}/{hi_name} must be finite and positive"
                )));
            }
            if lo >= hi {
                return Err(Error::Config(format!(
                    "{lo_name} ({lo}) must be strictly below {hi_name} ({hi})"
                )));
            }
        }
        let (lo, hi) = self.diag_band;
        if !(0.0..hi).contains(&lo) || hi > 90.0 {
            return Err(Error::Config(format!(
                "diag_band must satisfy 0 <= lo < hi <= 90, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }
}

/// How the paraphrase stage talks to its model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiShape {
    /// OpenAI-style chat: messages array in, `choices[0].message.content` out.
    Chat,
    /// Raw completion: prompt string in, `choices[0].text` out.
    Completion,
}

/// Paraphrase stage configuration. Secrets never live in the config file:
/// the API key is taken from `KINETEXT_API_KEY`, and `KINETEXT_ENDPOINT_URL`
/// overrides `endpoint_url` when set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParaphraseConfig {
    /// Master switch; off means records carry no paraphrase at all.
    #[serde(default)]
    pub enabled: bool,
    /// Use the deterministic built-in rewriter instead of the network.
    #[serde(default = "default_true")]
    pub offline: bool,
    #[serde(default)]
    pub endpoint_url: String,
    #[serde(default = "default_api_shape")]
    pub api_shape: ApiShape,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Transient-failure retries after the first attempt.
    #[serde(default = "default_retry_max")]
    pub retry_max: u32,
    /// Base backoff delay; doubles per retry.
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
    /// Maximum in-flight requests for batch submission.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Strict mode drops records whose paraphrase fails screening; the
    /// default keeps them with the template caption as fallback text.
    #[serde(default)]
    pub strict: bool,
    /// Optional path to a synonym lexicon overriding the built-in one.
    #[serde(default)]
    pub lexicon_path: Option<String>,
}

fn default_true() -> bool {
    true
}
fn default_api_shape() -> ApiShape {
    ApiShape::Chat
}
fn default_model() -> String {
    "vicuna-13b-v1.5".to_owned()
}
fn default_temperature() -> f64 {
    0.7
}
fn default_max_tokens() -> u32 {
    96
}
fn default_retry_max() -> u32 {
    4
}
fn default_retry_base_ms() -> u64 {
    250
}
fn default_concurrency() -> usize {
    4
}

impl Default for ParaphraseConfig {
    fn default() -> Self {
        // An empty TOML table deserializes to all defaults; reuse that path
        // so the two can never drift apart.
        toml::from_str("").expect("empty table must deserialize")
    }
}

impl ParaphraseConfig {
    /// Applies environment overrides for endpoint secrets.
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(url) = std::env::var("KINETEXT_ENDPOINT_URL") {
            if !url.is_empty() {
                self.endpoint_url = url;
            }
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.enabled && !self.offline && self.endpoint_url.is_empty() {
            return Err(Error::Config(
                "paraphrase.endpoint_url required when paraphrase is enabled and not offline"
                    .into(),
            ));
        }
        if self.concurrency == 0 {
            return Err(Error::Config("paraphrase.concurrency must be >= 1".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::Config(format!(
                "paraphrase.temperature must be in [0, 2], got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Run-level knobs that do not affect sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads; 0 means one per available core.
    #[serde(default)]
    pub workers: usize,
    /// The run fails with a partial-failure exit once more than this
    /// fraction of videos errored.
    #[serde(default = "default_max_failure_rate")]
    pub max_failure_rate: f64,
}

fn default_max_failure_rate() -> f64 {
    0.05
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { workers: 0, max_failure_rate: default_max_failure_rate() }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            return Err(Error::Config(format!(
                "run.max_failure_rate must be in [0, 1], got {}",
                self.max_failure_rate
            )));
        }
        Ok(())
    }
}

/// Top-level config file: `[gen]`, `[thresholds]`, `[paraphrase]`, `[run]`
/// tables, each optional, each falling back to defaults per field.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub gen: GenConfig,
    #[serde(default)]
    pub thresholds: ThresholdConfig,
    #[serde(default)]
    pub paraphrase: ParaphraseConfig,
    #[serde(default)]
    pub run: RunConfig,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("bad config file: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        self.thresholds.validate()?;
        self.paraphrase.validate()?;
        self.run.validate()
    }
}
