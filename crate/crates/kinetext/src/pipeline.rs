//! End-to-end dataset generation: worker-pooled video rendering, the
//! paraphrase stage, the JSONL manifest with its atomic write, the
//! failures sidecar, and manifest verification.
//!
//! Determinism contract: (configs, seed, sprite digest, offline
//! paraphraser, clip set) fully determine the manifest bytes and every
//! frame file. Records are ordered by video index and each video owns an
//! RNG stream keyed by its index, so any worker count produces identical
//! output.

use std::io::BufRead;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::caption::{assemble_caption, MotionCaption};
use crate::compositor::{composite, make_background, BackgroundMode, FrameSeq};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::kinematics::{interpolate, rng_for_video, sample_motion, MotionSpec};
use crate::paraphrase::{Gateway, ParaphraseResult, ScreenVerdict};
use crate::sprite::SpriteSet;

/// Outcome of the paraphrase stage for one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ParaphraseVerdict {
    /// The paraphrase passed screening and is stored on the record.
    Accepted,
    /// Screening rejected the paraphrase; the record keeps only the
    /// template caption and the rejected text is not persisted.
    Rejected { reason: String },
    /// The paraphrase stage was disabled for this run.
    Skipped,
}

/// One generated video-text pair, one JSONL line in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    /// Zero-padded decimal video index; doubles as the frame directory name.
    pub video_id: String,
    /// Directory of this video's frames, relative to the manifest.
    pub frames_path: String,
    pub background_mode: BackgroundMode,
    pub motion_spec: MotionSpec,
    pub template_caption: String,
    pub paraphrase: Option<String>,
    pub paraphrase_verdict: ParaphraseVerdict,
    /// The run seed; with the video index it reproduces this record.
    pub seed: u64,
    /// First line of the background clip's caption file, when one exists.
    pub source_caption: Option<String>,
}

/// First line of the manifest: everything needed to regenerate or audit
/// the records that follow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub version: String,
    pub gen: crate::config::GenConfig,
    pub thresholds: crate::config::ThresholdConfig,
    pub sprite_digest: String,
}

/// A parsed manifest: one header line plus one line per record.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub records: Vec<PairRecord>,
}

impl Manifest {
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl_str(text: &str) -> Result<Manifest> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header_line) = lines
            .next()
            .ok_or_else(|| Error::Argument("manifest is empty; expected a header line".into()))?;
        let header: ManifestHeader = serde_json::from_str(header_line)
            .map_err(|e| Error::Argument(format!("manifest header line: {e}")))?;
        let mut records = Vec::new();
        for (i, line) in lines {
            let record: PairRecord = serde_json::from_str(line)
                .map_err(|e| Error::Argument(format!("manifest line {}: {e}", i + 1)))?;
            records.push(record);
        }
        Ok(Manifest { header, records })
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl_str(&text)
    }

    /// Writes via a temp file in the same directory plus a rename, so an
    /// interrupted run never leaves a readable half-manifest behind.
    pub fn write_atomic(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("jsonl.tmp");
        std::fs::write(&tmp, self.to_jsonl()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

/// One background clip: its frames plus the optional caption that shipped
/// with it.
#[derive(Debug, Clone)]
pub struct Clip {
    pub frames: FrameSeq,
    pub caption: Option<String>,
}

/// A directory of background clips, each a folder of numbered frame images
/// with an optional `caption.txt` alongside them.
#[derive(Debug, Clone)]
pub struct ClipSource {
    clips: Vec<Clip>,
}

impl ClipSource {
    pub fn from_clips(clips: Vec<Clip>) -> Result<ClipSource> {
        if clips.is_empty() {
            return Err(Error::Asset("clip source has no clips".into()));
        }
        Ok(ClipSource { clips })
    }

    /// Loads every subdirectory of `root` as one clip, in name order.
    /// Frame images inside a clip are also taken in name order.
    pub fn load_dir(root: &Path) -> Result<ClipSource> {
        let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
        let mut clip_dirs: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        clip_dirs.sort();
        let mut clips = Vec::new();
        for dir in clip_dirs {
            let mut frame_paths: Vec<PathBuf> = std::fs::read_dir(&dir)
                .map_err(|e| Error::io(&dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    matches!(
                        p.extension().and_then(|e| e.to_str()),
                        Some("png" | "jpg" | "jpeg" | "bmp")
                    )
                })
                .collect();
            frame_paths.sort();
            if frame_paths.is_empty() {
                continue;
            }
            if frame_paths.len() < 2 {
                return Err(Error::Asset(format!(
                    "clip {} has fewer than 2 frames",
                    dir.display()
                )));
            }
            let mut frames = Vec::with_capacity(frame_paths.len());
            for p in &frame_paths {
                let img = image::open(p)
                    .map_err(|e| Error::Asset(format!("clip frame {}: {e}", p.display())))?;
                frames.push(img.to_rgb8());
            }
            let caption = match std::fs::read_to_string(dir.join("caption.txt")) {
                Ok(text) => text.lines().next().map(str::trim).filter(|l| !l.is_empty()).map(String::from),
                Err(_) => None,
            };
            clips.push(Clip {
                frames: FrameSeq::from_frames(frames, BackgroundMode::Video)?,
                caption,
            });
        }
        Self::from_clips(clips)
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn get(&self, index: usize) -> &Clip {
        &self.clips[index]
    }
}

/// Frame file name for index `i` within a video directory.
pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.png")
}

fn video_id_for(index: usize) -> String {
    format!("{index:05}")
}

/// One video that rendered successfully and awaits its paraphrase verdict.
struct PendingVideo {
    index: usize,
    video_id: String,
    spec: MotionSpec,
    caption: MotionCaption,
    source_caption: Option<String>,
}

/// One video that could not be produced; a line in `failures.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VideoFailure {
    pub video_index: usize,
    pub video_id: String,
    pub error: String,
}

fn render_one_video(
    cfg: &PipelineConfig,
    sprites: &SpriteSet,
    background: BackgroundMode,
    clips: Option<&ClipSource>,
    count: usize,
    out_dir: &Path,
    index: usize,
) -> Result<PendingVideo> {
    let gen = &cfg.gen;
    let mut rng = rng_for_video(gen.rng_seed, index as u64);

    // The clip draw comes first on the video's stream, before any motion
    // sampling, so adding or removing clips never perturbs the motion draws
    // of the i -> i paired case.
    let clip = match (background, clips) {
        (BackgroundMode::Black, _) => None,
        (_, Some(source)) => {
            let clip_index = if source.len() == count {
                index
            } else {
                rand::Rng::gen_range(&mut rng, 0..source.len())
            };
            Some(source.get(clip_index))
        }
        (_, None) => {
            return Err(Error::Config(format!(
                "background mode {:?} requires a clip directory",
                background.as_str()
            )))
        }
    };

    let spec = sample_motion(gen, sprites, &mut rng)?;
    let track = interpolate(&spec, gen.num_frames)?;
    let bg = make_background(
        background,
        clip.map(|c| &c.frames),
        gen.num_frames,
        (gen.frame_width, gen.frame_height),
    )?;
    let sprite = sprites.get(spec.object_index);
    let frames = composite(&bg, sprite, (spec.scaled_height, spec.scaled_width), &track)?;
    let caption = assemble_caption(&spec, &track, gen, &cfg.thresholds)?;

    let video_id = video_id_for(index);
    let dir = out_dir.join(&video_id);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (i, frame) in frames.frames().iter().enumerate() {
        let path = dir.join(frame_file_name(i));
        frame.save(&path).map_err(|e| Error::Asset(format!("writing {}: {e}", path.display())))?;
    }

    Ok(PendingVideo {
        index,
        video_id,
        spec,
        caption,
        source_caption: clip.and_then(|c| c.caption.clone()),
    })
}

/// What the paraphrase stage decided for one record: either the fields to
/// store, or a failure that drops the record.
enum ParaphraseOutcome {
    Keep(Option<String>, ParaphraseVerdict),
    Drop(String),
}

/// Applies strictness policy to one paraphrase result. Transport-level
/// failures drop the record in either mode; screening rejections drop it
/// only under `strict`, otherwise the record falls back to its template
/// caption alone.
fn paraphrase_outcome(result: Result<ParaphraseResult>, strict: bool) -> ParaphraseOutcome {
    match result {
        Ok(r) => match r.verdict {
            ScreenVerdict::Accepted => {
                ParaphraseOutcome::Keep(Some(r.text), ParaphraseVerdict::Accepted)
            }
            ScreenVerdict::Rejected(reason) => {
                if strict {
                    ParaphraseOutcome::Drop(format!(
                        "paraphrase rejected in strict mode: {}",
                        reason.as_str()
                    ))
                } else {
                    ParaphraseOutcome::Keep(
                        None,
                        ParaphraseVerdict::Rejected { reason: reason.as_str().to_owned() },
                    )
                }
            }
        },
        Err(e) => ParaphraseOutcome::Drop(format!("paraphrase stage failed: {e}")),
    }
}

/// Generates `count` video-text pairs under `out_dir` and writes
/// `manifest.jsonl` (atomically, last) plus a `failures.jsonl` sidecar when
/// any video failed. Returns the manifest, or the partial-failure error
/// once more than `run.max_failure_rate` of the videos failed — the
/// manifest for the surviving records is still on disk in that case.
pub fn generate_dataset(
    cfg: &PipelineConfig,
    sprites: &SpriteSet,
    background: BackgroundMode,
    clips: Option<&ClipSource>,
    count: usize,
    out_dir: &Path,
) -> Result<Manifest> {
    cfg.validate()?;
    if sprites.is_empty() {
        return Err(Error::Asset("sprite set is empty".into()));
    }
    if background != BackgroundMode::Black {
        match clips {
            Some(c) if !c.is_empty() => {}
            _ => {
                return Err(Error::Config(format!(
                    "background mode {:?} requires a non-empty clip directory",
                    background.as_str()
                )))
            }
        }
    }
    let gateway = if cfg.paraphrase.enabled { Some(Gateway::from_config(&cfg.paraphrase)?) } else { None };

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let failures_path = out_dir.join("failures.jsonl");
    let _ = std::fs::remove_file(&failures_path);

    let render = |i: usize| render_one_video(cfg, sprites, background, clips, count, out_dir, i);
    let rendered: Vec<Result<PendingVideo>> = if cfg.run.workers == 1 {
        (0..count).map(render).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.workers) // 0 = one per core
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| (0..count).into_par_iter().map(render).collect())
    };

    let mut failures: Vec<VideoFailure> = Vec::new();
    let mut pending: Vec<PendingVideo> = Vec::new();
    for (i, result) in rendered.into_iter().enumerate() {
        match result {
            Ok(p) => pending.push(p),
            Err(e) => failures.push(VideoFailure {
                video_index: i,
                video_id: video_id_for(i),
                error: e.to_string(),
            }),
        }
    }

    let outcomes: Vec<ParaphraseOutcome> = match &gateway {
        None => pending.iter().map(|_| ParaphraseOutcome::Keep(None, ParaphraseVerdict::Skipped)).collect(),
        Some(gw) => {
            let captions: Vec<MotionCaption> = pending.iter().map(|p| p.caption.clone()).collect();
            gw.paraphrase_batch(&captions)
                .into_iter()
                .map(|r| paraphrase_outcome(r, cfg.paraphrase.strict))
                .collect()
        }
    };

    let mut records = Vec::with_capacity(pending.len());
    for (p, outcome) in pending.into_iter().zip(outcomes) {
        match outcome {
            ParaphraseOutcome::Keep(paraphrase, verdict) => records.push(PairRecord {
                frames_path: p.video_id.clone(),
                video_id: p.video_id,
                background_mode: background,
                motion_spec: p.spec,
                template_caption: p.caption.rendered,
                paraphrase,
                paraphrase_verdict: verdict,
                seed: cfg.gen.rng_seed,
                source_caption: p.source_caption,
            }),
            ParaphraseOutcome::Drop(error) => failures.push(VideoFailure {
                video_index: p.index,
                video_id: p.video_id,
                error,
            }),
        }
    }
    failures.sort_by_key(|f| f.video_index);

    if !failures.is_empty() {
        let mut text = String::new();
        for f in &failures {
            text.push_str(&serde_json::to_string(f).expect("failure serializes"));
            text.push('\n');
        }
        std::fs::write(&failures_path, text).map_err(|e| Error::io(&failures_path, e))?;
    }

    let manifest = Manifest {
        header: ManifestHeader {
            version: env!("CARGO_PKG_VERSION").to_owned(),
            gen: cfg.gen.clone(),
            thresholds: cfg.thresholds.clone(),
            sprite_digest: sprites.digest().to_owned(),
        },
        records,
    };
    manifest.write_atomic(&out_dir.join("manifest.jsonl"))?;

    if count > 0 {
        let rate = failures.len() as f64 / count as f64;
        if rate > cfg.run.max_failure_rate {
            return Err(Error::FailureRateExceeded {
                failed: failures.len(),
                total: count,
                cap: cfg.run.max_failure_rate,
            });
        }
    }
    Ok(manifest)
}

/// Verification findings for one record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordIssue {
    pub video_id: String,
    pub diagnostics: Vec<String>,
}

/// Result of re-checking a manifest against the files next to it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub total: usize,
    pub passed: usize,
    pub issues: Vec<RecordIssue>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.issues.is_empty()
    }

    /// One line per record issue plus a summary line; stable output for
    /// scripting.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for issue in &self.issues {
            for d in &issue.diagnostics {
                out.push_str(&format!("FAIL {}: {d}\n", issue.video_id));
            }
        }
        out.push_str(&format!("{} of {} records passed\n", self.passed, self.total));
        out
    }
}

/// Re-derives every record's template caption from its motion spec and
/// checks that the frame files exist with the declared dimensions. Frames
/// are resolved relative to the manifest's directory.
pub fn verify_manifest(manifest_path: &Path) -> Result<VerifyReport> {
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let gen = &manifest.header.gen;
    let thresholds = &manifest.header.thresholds;

    let mut issues = Vec::new();
    for record in &manifest.records {
        let mut diagnostics = Vec::new();

        match record.motion_spec.validate(gen) {
            Err(e) => diagnostics.push(format!("motion spec does not match header config: {e}")),
            Ok(()) => match interpolate(&record.motion_spec, gen.num_frames)
                .and_then(|track| assemble_caption(&record.motion_spec, &track, gen, thresholds))
            {
                Err(e) => diagnostics.push(format!("caption could not be re-rendered: {e}")),
                Ok(caption) => {
                    if caption.rendered != record.template_caption {
                        diagnostics.push(format!(
                            "caption mismatch: manifest has {:?}, re-render gives {:?}",
                            record.template_caption, caption.rendered
                        ));
                    }
                }
            },
        }

        let dir = base.join(&record.frames_path);
        let mut missing = 0usize;
        let mut first_missing = None;
        let mut wrong_size = None;
        for i in 0..gen.num_frames {
            let path = dir.join(frame_file_name(i));
            match image::image_dimensions(&path) {
                Err(_) => {
                    missing += 1;
                    first_missing.get_or_insert(path);
                }
                Ok(dims) => {
                    if dims != (gen.frame_width, gen.frame_height) && wrong_size.is_none() {
                        wrong_size = Some((path, dims));
                    }
                }
            }
        }
        if missing > 0 {
            diagnostics.push(format!(
                "missing frames: {missing} of {} unreadable (first: {})",
                gen.num_frames,
                first_missing.expect("missing > 0 implies a path").display()
            ));
        }
        if let Some((path, (w, h))) = wrong_size {
            diagnostics.push(format!(
                "frame size mismatch: {} is {w}x{h}, header says {}x{}",
                path.display(),
                gen.frame_width,
                gen.frame_height
            ));
        }

        let coherent = match record.paraphrase_verdict {
            ParaphraseVerdict::Accepted => record.paraphrase.is_some(),
            _ => record.paraphrase.is_none(),
        };
        if !coherent {
            diagnostics.push(format!(
                "paraphrase field does not match verdict {:?}",
                record.paraphrase_verdict
            ));
        }

        if !diagnostics.is_empty() {
            issues.push(RecordIssue { video_id: record.video_id.clone(), diagnostics });
        }
    }
    Ok(VerifyReport {
        total: manifest.records.len(),
        passed: manifest.records.len() - issues.len(),
        issues,
    })
}

/// Reads the failures sidecar next to a manifest, if one exists.
pub fn load_failures(out_dir: &Path) -> Result<Vec<VideoFailure>> {
    let path = out_dir.join("failures.jsonl");
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut failures = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        failures.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Argument(format!("failures sidecar: {e}")))?,
        );
    }
    Ok(failures)
}
