//! Hand-crafted motion descriptors: per-frame changed-pixel statistics
//! against a background plate. No learned vision backbone — the features
//! are deterministic functions of the pixels, so the probe's only learnable
//! mapping from video to text is in the heads, which keeps the experiment
//! about whether the *captions* carry the motion signal.

use std::path::Path;

use rayon::prelude::*;

use crate::compositor::{BackgroundMode, FrameSeq};
use crate::error::{Error, Result};
use crate::pipeline::{frame_file_name, Manifest};

/// A pixel counts as changed when any channel differs from the plate by
/// strictly more than this.
pub const DIFF_THRESHOLD: u8 = 12;

/// Features per frame: normalized centroid (x, y), normalized centroid
/// displacement (dx, dy), mask area fraction, normalized orientation.
pub const FEATURES_PER_FRAME: usize = 6;

/// Per-frame displacements are divided by this many pixels; it comfortably
/// bounds one frame of motion under default sampling.
const DISPLACEMENT_SCALE: f64 = 16.0;

/// The fixed-length motion descriptor of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFeature {
    /// `FEATURES_PER_FRAME` values per frame, frame-major.
    pub values: Vec<f64>,
    /// True when no frame had any changed pixel; the track is all zeros.
    pub degenerate: bool,
}

impl VideoFeature {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_frames(&self) -> usize {
        self.values.len() / FEATURES_PER_FRAME
    }

    /// Centroid of frame `i` in pixels, or None when its mask was empty.
    pub fn centroid_px(&self, i: usize, width: u32, height: u32) -> Option<(f64, f64)> {
        let base = i * FEATURES_PER_FRAME;
        let area = self.values[base + 4];
        if area == 0.0 {
            return None;
        }
        Some((self.values[base] * width as f64, self.values[base + 1] * height as f64))
    }
}

/// Statistics of one frame's changed-pixel mask.
struct MaskStats {
    cx: f64,
    cy: f64,
    area: usize,
    orientation: f64,
}

fn mask_stats(frame: &image::RgbImage, plate: &image::RgbImage) -> Option<MaskStats> {
    let (w, h) = frame.dimensions();
    let mut count = 0usize;
    let mut sum_x = 0.0;
    let mut sum_y = 0.0;
    let mut changed = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let a = frame.get_pixel(x, y).0;
            let b = plate.get_pixel(x, y).0;
            let diff = a
                .iter()
                .zip(b.iter())
                .map(|(&p, &q)| p.abs_diff(q))
                .max()
                .unwrap_or(0);
            if diff > DIFF_THRESHOLD {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                count += 1;
                sum_x += px;
                sum_y += py;
                changed.push((px, py));
            }
        }
    }
    if count == 0 {
        return None;
    }
    let cx = sum_x / count as f64;
    let cy = sum_y / count as f64;
    // Principal-axis orientation from central second moments.
    let (mut mu20, mut mu02, mut mu11) = (0.0, 0.0, 0.0);
    for (px, py) in changed {
        let (dx, dy) = (px - cx, py - cy);
        mu20 += dx * dx;
        mu02 += dy * dy;
        mu11 += dx * dy;
    }
    let orientation = 0.5 * (2.0 * mu11).atan2(mu20 - mu02);
    Some(MaskStats { cx, cy, area: count, orientation })
}

/// Extracts the motion descriptor of `frames` against `background`.
///
/// A pixel belongs to the frame's mask when it differs from the same-index
/// background frame by more than [`DIFF_THRESHOLD`] in any channel. Frames
/// with empty masks contribute all-zero entries, and displacements
/// involving an empty frame are zero. When every frame is empty the feature
/// is flagged degenerate.
pub fn extract_video_feature(frames: &FrameSeq, background: &FrameSeq) -> Result<VideoFeature> {
    if frames.len() != background.len() {
        return Err(Error::Argument(format!(
            "feature extraction needs equal lengths, got {} frames vs {} background",
            frames.len(),
            background.len()
        )));
    }
    if frames.dimensions() != background.dimensions() {
        return Err(Error::Argument("frames and background must share dimensions".into()));
    }
    let (w, h) = frames.dimensions();
    let (wf, hf) = (w as f64, h as f64);

    let stats: Vec<Option<MaskStats>> = frames
        .frames()
        .iter()
        .zip(background.frames())
        .map(|(f, b)| mask_stats(f, b))
        .collect();

    let mut values = Vec::with_capacity(frames.len() * FEATURES_PER_FRAME);
    let mut prev: Option<(f64, f64)> = None;
    for s in &stats {
        match s {
            None => {
                values.extend_from_slice(&[0.0; FEATURES_PER_FRAME]);
                prev = None;
            }
            Some(m) => {
                let (dx, dy) = match prev {
                    Some((px, py)) => {
                        ((m.cx - px) / DISPLACEMENT_SCALE, (m.cy - py) / DISPLACEMENT_SCALE)
                    }
                    None => (0.0, 0.0),
                };
                values.push(m.cx / wf);
                values.push(m.cy / hf);
                values.push(dx);
                values.push(dy);
                values.push(m.area as f64 / (wf * hf));
                values.push(m.orientation / std::f64::consts::FRAC_PI_2);
                prev = Some((m.cx, m.cy));
            }
        }
    }
    debug_assert!(values.iter().all(|v| v.is_finite()));
    Ok(VideoFeature { values, degenerate: stats.iter().all(Option::is_none) })
}

/// The background plate a rendered video is compared against: all black
/// for black-background videos, the per-pixel temporal median otherwise.
/// The median approximates the true plate because the moving object covers
/// any one pixel for a minority of frames.
pub fn background_plate(frames: &FrameSeq, mode: BackgroundMode) -> Result<FrameSeq> {
    let (w, h) = frames.dimensions();
    let plate = match mode {
        BackgroundMode::Black => image::RgbImage::new(w, h),
        _ => {
            let n = frames.len();
            let mut plate = image::RgbImage::new(w, h);
            let mut samples = vec![0u8; n];
            for y in 0..h {
                for x in 0..w {
                    let mut out = [0u8; 3];
                    for (c, slot) in out.iter_mut().enumerate() {
                        for (i, f) in frames.frames().iter().enumerate() {
                            samples[i] = f.get_pixel(x, y).0[c];
                        }
                        samples.sort_unstable();
                        *slot = samples[n / 2];
                    }
                    plate.put_pixel(x, y, image::Rgb(out));
                }
            }
            plate
        }
    };
    FrameSeq::from_frames(vec![plate; frames.len()], mode)
}

/// One (video feature, caption) training example for the probe.
#[derive(Debug, Clone)]
pub struct ProbeExample {
    pub feature: VideoFeature,
    pub caption: String,
}

/// Loads every record of a manifest into probe examples: reads the frames,
/// builds the plate for the record's background mode, and extracts the
/// feature. Extraction runs in parallel across records; the output order
/// matches the manifest.
pub fn load_examples(manifest_path: &Path) -> Result<Vec<ProbeExample>> {
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let num_frames = manifest.header.gen.num_frames;
    manifest
        .records
        .par_iter()
        .map(|record| {
            let dir = base.join(&record.frames_path);
            let mut frames = Vec::with_capacity(num_frames);
            for i in 0..num_frames {
                let path = dir.join(frame_file_name(i));
                let img = image::open(&path)
                    .map_err(|e| Error::Asset(format!("reading {}: {e}", path.display())))?;
                frames.push(img.to_rgb8());
            }
            let frames = FrameSeq::from_frames(frames, record.background_mode)?;
            let plate = background_plate(&frames, record.background_mode)?;
            let feature = extract_video_feature(&frames, &plate)?;
            Ok(ProbeExample { feature, caption: record.template_caption.clone() })
        })
        .collect()
}
