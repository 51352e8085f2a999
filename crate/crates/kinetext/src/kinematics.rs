//! Motion parameter sampling and keyframe interpolation.
//!
//! A sampled motion is fully described by a [`MotionSpec`]: which sprite,
//! how large, and a short list of keyframes holding center positions and
//! in-plane angles. Everything downstream (pixels and text alike) is a pure
//! function of the spec, which is what makes generation reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::GenConfig;
use crate::error::{Error, Result};
use crate::sprite::SpriteSet;

/// Pose constraints at one frame index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub frame_index: usize,
    /// Center, horizontal pixels from the left edge.
    pub x: f64,
    /// Center, vertical pixels from the top edge.
    pub y: f64,
    /// Degrees, positive turning the object's top edge leftward on screen.
    pub angle: f64,
}

/// The complete parametric record of one injected motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSpec {
    pub object_name: String,
    pub object_index: usize,
    /// Scaled sprite height in pixels.
    pub scaled_height: u32,
    /// Scaled sprite width in pixels.
    pub scaled_width: u32,
    /// First keyframe at frame 0, last at frame N-1, indices strictly
    /// increasing.
    pub keyframes: Vec<Keyframe>,
}

impl MotionSpec {
    /// N: the video length this spec was sampled for.
    pub fn num_frames(&self) -> usize {
        self.keyframes.last().map(|k| k.frame_index + 1).unwrap_or(0)
    }

    /// Checks every structural invariant against the config that is claimed
    /// to have produced this spec.
    pub fn validate(&self, cfg: &GenConfig) -> Result<()> {
        let fail = |msg: String| Err(Error::Argument(format!("invalid motion spec: {msg}")));
        if self.object_name.is_empty() {
            return fail("empty object name".into());
        }
        if self.keyframes.len() != cfg.num_keyframes {
            return fail(format!(
                "expected {} keyframes, got {}",
                cfg.num_keyframes,
                self.keyframes.len()
            ));
        }
        if self.keyframes.first().map(|k| k.frame_index) != Some(0) {
            return fail("first keyframe must sit at frame 0".into());
        }
        if self.keyframes.last().map(|k| k.frame_index) != Some(cfg.num_frames - 1) {
            return fail(format!("last keyframe must sit at frame {}", cfg.num_frames - 1));
        }
        let (w, h) = (cfg.frame_width as f64, cfg.frame_height as f64);
        let (half_w, half_h) = (self.scaled_width as f64 / 2.0, self.scaled_height as f64 / 2.0);
        for pair in self.keyframes.windows(2) {
            if pair[1].frame_index <= pair[0].frame_index {
                return fail("keyframe indices must strictly increase".into());
            }
            let gap = (pair[1].frame_index - pair[0].frame_index) as f64;
            let reach = cfg.delta_max * gap;
            if (pair[1].x - pair[0].x).abs() > reach || (pair[1].y - pair[0].y).abs() > reach {
                return fail(format!(
                    "keyframe step exceeds per-frame reach {} over gap {gap}",
                    cfg.delta_max
                ));
            }
        }
        for k in &self.keyframes {
            if k.x < half_w || k.x > w - half_w || k.y < half_h || k.y > h - half_h {
                return fail(format!(
                    "center ({}, {}) puts the {}x{} box outside the {}x{} frame",
                    k.x, k.y, self.scaled_width, self.scaled_height, cfg.frame_width, cfg.frame_height
                ));
            }
            if k.angle.abs() > cfg.theta_range {
                return fail(format!("angle {} outside ±{}", k.angle, cfg.theta_range));
            }
        }
        Ok(())
    }
}

/// Per-frame interpolated pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub angle: f64,
}

/// Per-frame (center, angle) sequence derived from a spec; length N.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseTrack {
    pub poses: Vec<Pose>,
}

impl PoseTrack {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// The RNG stream for one output video. Child streams make parallel
/// generation order-independent: video `index` always sees the same draws no
/// matter which worker runs it.
pub fn rng_for_video(run_seed: u64, video_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    rng.set_stream(video_index);
    rng
}

/// In-plane rotation by `theta` degrees: ((cos, -sin), (sin, cos)).
pub fn rotation_matrix(theta_deg: f64) -> [[f64; 2]; 2] {
    let (sin, cos) = theta_deg.to_radians().sin_cos();
    [[cos, -sin], [sin, cos]]
}

/// Draws one motion within the config's bounds.
///
/// Draw order is fixed and documented: sprite index, longest side, interior
/// keyframe indices, then per keyframe x, y, angle. Changing it would change
/// every seeded dataset, so it is pinned by determinism tests.
pub fn sample_motion(
    cfg: &GenConfig,
    sprites: &SpriteSet,
    rng: &mut impl Rng,
) -> Result<MotionSpec> {
    cfg.validate()?;
    if sprites.is_empty() {
        return Err(Error::Asset("sprite set is empty".into()));
    }

    let object_index = rng.gen_range(0..sprites.len());
    let sprite = sprites.get(object_index);
    let (native_w, native_h) = (sprite.width(), sprite.height());

    let longest = rng.gen_range(cfg.min_obj_side..=cfg.max_obj_side);
    let (scaled_width, scaled_height) = if native_w >= native_h {
        let short = ((longest as f64 * native_h as f64 / native_w as f64).round() as u32).max(1);
        (longest, short)
    } else {
        let short = ((longest as f64 * native_w as f64 / native_h as f64).round() as u32).max(1);
        (short, longest)
    };

    let n = cfg.num_frames;
    let k = cfg.num_keyframes;
    let mut indices = Vec::with_capacity(k);
    indices.push(0);
    if k > 2 {
        // Partial Fisher-Yates over {1..N-2}: uniform without replacement,
        // bounded work even when every interior frame is a keyframe.
        let mut candidates: Vec<usize> = (1..=n - 2).collect();
        for r in 0..k - 2 {
            let j = rng.gen_range(r..candidates.len());
            candidates.swap(r, j);
        }
        let mut interior = candidates[..k - 2].to_vec();
        interior.sort_unstable();
        indices.extend(interior);
    }
    indices.push(n - 1);

    let (frame_w, frame_h) = (cfg.frame_width as f64, cfg.frame_height as f64);
    let (half_w, half_h) = (scaled_width as f64 / 2.0, scaled_height as f64 / 2.0);
    let (cont_x, cont_y) = ((half_w, frame_w - half_w), (half_h, frame_h - half_h));

    let mut keyframes: Vec<Keyframe> = Vec::with_capacity(k);
    for (i, &frame_index) in indices.iter().enumerate() {
        let (x, y) = if i == 0 {
            let x = uniform_in(rng, cont_x.0, cont_x.1);
            let y = uniform_in(rng, cont_y.0, cont_y.1);
            (x, y)
        } else {
            // Uniform over the intersection of the containment box and the
            // reach box around the previous keyframe; nonempty because the
            // previous center already satisfies containment.
            let prev = &keyframes[i - 1];
            let reach = cfg.delta_max * (frame_index - prev.frame_index) as f64;
            let x = uniform_in(rng, cont_x.0.max(prev.x - reach), cont_x.1.min(prev.x + reach));
            let y = uniform_in(rng, cont_y.0.max(prev.y - reach), cont_y.1.min(prev.y + reach));
            (x, y)
        };
        let angle = rng.gen_range(-cfg.theta_range..=cfg.theta_range);
        keyframes.push(Keyframe { frame_index, x, y, angle });
    }

    Ok(MotionSpec {
        object_name: sprite.name().to_owned(),
        object_index,
        scaled_height,
        scaled_width,
        keyframes,
    })
}

/// A degenerate interval (delta 0) collapses to its endpoint instead of
/// panicking inside the uniform sampler.
fn uniform_in<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Expands a spec into per-frame poses by piecewise-linear interpolation.
///
/// Exact at keyframes: the lerp is written `a + (b-a)*di/gap`, which reduces
/// to `a` at di=0, and the closing keyframe is emitted verbatim.
pub fn interpolate(spec: &MotionSpec, num_frames: usize) -> Result<PoseTrack> {
    if spec.keyframes.len() < 2 {
        return Err(Error::Argument("motion spec needs at least two keyframes".into()));
    }
    if num_frames != spec.num_frames() {
        return Err(Error::Argument(format!(
            "track length {} does not match the spec's final keyframe index {}",
            num_frames,
            spec.num_frames() - 1
        )));
    }

    let mut poses = Vec::with_capacity(num_frames);
    for pair in spec.keyframes.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let gap = (b.frame_index - a.frame_index) as f64;
        for frame in a.frame_index..b.frame_index {
            let di = (frame - a.frame_index) as f64;
            poses.push(Pose {
                x: a.x + (b.x - a.x) * di / gap,
                y: a.y + (b.y - a.y) * di / gap,
                angle: a.angle + (b.angle - a.angle) * di / gap,
            });
        }
    }
    let last = spec.keyframes.last().unwrap();
    poses.push(Pose { x: last.x, y: last.y, angle: last.angle });
    Ok(PoseTrack { poses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sprite::SpriteSet;

    fn spec_from(keyframes: Vec<Keyframe>) -> MotionSpec {
        MotionSpec {
            object_name: "square".into(),
            object_index: 0,
            scaled_height: 64,
            scaled_width: 64,
            keyframes,
        }
    }

    #[test]
    fn rotation_matrix_identity_at_zero() {
        assert_eq!(rotation_matrix(0.0), [[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn rotation_matrix_quarter_turn() {
        let m = rotation_matrix(90.0);
        for (row, want) in m.iter().zip([[0.0, -1.0], [1.0, 0.0]]) {
            for (got, want) in row.iter().zip(want) {
                assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
            }
        }
    }

    #[test]
    fn rotation_matrix_is_orthonormal_with_unit_determinant() {
        for theta in [-25.0, -7.3, 0.0, 12.0, 25.0, 90.0, 180.0] {
            let m = rotation_matrix(theta);
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            assert!((det - 1.0).abs() < 1e-9);
            let dot = m[0][0] * m[0][1] + m[1][0] * m[1][1];
            assert!(dot.abs() < 1e-12);
            assert!((theta.to_radians().cos() - m[0][0]).abs() < 1e-12);
            assert!((theta.to_radians().sin() - m[1][0]).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_hits_documented_midpoint() {
        let spec = spec_from(vec![
            Keyframe { frame_index: 0, x: 50.0, y: 50.0, angle: 0.0 },
            Keyframe { frame_index: 15, x: 110.0, y: 50.0, angle: 0.0 },
        ]);
        let track = interpolate(&spec, 16).unwrap();
        assert_eq!(track.poses[5], Pose { x: 70.0, y: 50.0, angle: 0.0 });
    }

    #[test]
    fn constant_angle_stays_constant() {
        let spec = spec_from(vec![
            Keyframe { frame_index: 0, x: 100.0, y: 100.0, angle: 10.0 },
            Keyframe { frame_index: 9, x: 120.0, y: 100.0, angle: 10.0 },
        ]);
        let track = interpolate(&spec, 10).unwrap();
        assert!(track.poses.iter().all(|p| p.angle == 10.0));
    }

    #[test]
    fn keyframe_poses_are_exact() {
        let spec = spec_from(vec![
            Keyframe { frame_index: 0, x: 40.25, y: 50.5, angle: -3.25 },
            Keyframe { frame_index: 8, x: 101.75, y: 88.125, angle: 12.5 },
            Keyframe { frame_index: 15, x: 60.0, y: 170.875, angle: -20.0 },
        ]);
        let track = interpolate(&spec, 16).unwrap();
        for k in &spec.keyframes {
            let p = track.poses[k.frame_index];
            assert_eq!((p.x, p.y, p.angle), (k.x, k.y, k.angle));
        }
    }

    #[test]
    fn slope_changes_only_at_keyframes() {
        let spec = spec_from(vec![
            Keyframe { frame_index: 0, x: 40.0, y: 160.0, angle: 0.0 },
            Keyframe { frame_index: 8, x: 110.0, y: 70.0, angle: 20.0 },
            Keyframe { frame_index: 15, x: 60.0, y: 100.0, angle: -15.0 },
        ]);
        let track = interpolate(&spec, 16).unwrap();
        let xs: Vec<f64> = track.poses.iter().map(|p| p.x).collect();
        for i in 1..xs.len() - 1 {
            let second_diff = xs[i + 1] - 2.0 * xs[i] + xs[i - 1];
            if i == 8 {
                assert!(second_diff.abs() > 1.0, "expected a kink at the interior keyframe");
            } else {
                assert!(second_diff.abs() < 1e-9, "unexpected kink at frame {i}");
            }
        }
    }

    #[test]
    fn zero_delta_pins_all_centers() {
        let cfg = GenConfig { delta_max: 0.0, ..GenConfig::default() };
        let sprites = SpriteSet::procedural(3);
        let mut rng = rng_for_video(11, 0);
        let spec = sample_motion(&cfg, &sprites, &mut rng).unwrap();
        let first = &spec.keyframes[0];
        assert!(spec.keyframes.iter().all(|k| k.x == first.x && k.y == first.y));
        // Angles still vary: delta constrains translation only.
        spec.validate(&cfg).unwrap();
    }

    #[test]
    fn sampled_specs_satisfy_all_invariants() {
        let cfg = GenConfig::default();
        let sprites = SpriteSet::procedural(4);
        for video in 0..2_000u64 {
            let mut rng = rng_for_video(99, video);
            let spec = sample_motion(&cfg, &sprites, &mut rng).unwrap();
            spec.validate(&cfg).unwrap();
            let track = interpolate(&spec, cfg.num_frames).unwrap();
            assert_eq!(track.len(), cfg.num_frames);
            for pair in track.poses.windows(2) {
                let (dx, dy) = (pair[1].x - pair[0].x, pair[1].y - pair[0].y);
                assert!(dx.abs() <= cfg.delta_max + 1e-9 && dy.abs() <= cfg.delta_max + 1e-9);
                assert!(dx.hypot(dy) <= cfg.delta_max * std::f64::consts::SQRT_2 + 1e-9);
            }
        }
    }

    #[test]
    fn interior_keyframes_are_sorted_unique_and_in_range() {
        let cfg = GenConfig { num_frames: 10, num_keyframes: 6, ..GenConfig::default() };
        let sprites = SpriteSet::procedural(2);
        for video in 0..500u64 {
            let mut rng = rng_for_video(5, video);
            let spec = sample_motion(&cfg, &sprites, &mut rng).unwrap();
            let idx: Vec<usize> = spec.keyframes.iter().map(|k| k.frame_index).collect();
            assert_eq!(idx[0], 0);
            assert_eq!(*idx.last().unwrap(), 9);
            assert!(idx.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn every_interior_frame_can_be_a_keyframe() {
        // N == K forces the without-replacement draw to exhaust {1..N-2}.
        let cfg = GenConfig { num_frames: 5, num_keyframes: 5, ..GenConfig::default() };
        let sprites = SpriteSet::procedural(1);
        let mut rng = rng_for_video(1, 0);
        let spec = sample_motion(&cfg, &sprites, &mut rng).unwrap();
        let idx: Vec<usize> = spec.keyframes.iter().map(|k| k.frame_index).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn same_seed_same_spec_bytes() {
        let cfg = GenConfig::default();
        let sprites = SpriteSet::procedural(4);
        let draw = || {
            let mut rng = rng_for_video(42, 7);
            let spec = sample_motion(&cfg, &sprites, &mut rng).unwrap();
            serde_json::to_string(&spec).unwrap()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn different_streams_differ() {
        let cfg = GenConfig::default();
        let sprites = SpriteSet::procedural(4);
        let mut a = rng_for_video(42, 0);
        let mut b = rng_for_video(42, 1);
        let spec_a = sample_motion(&cfg, &sprites, &mut a).unwrap();
        let spec_b = sample_motion(&cfg, &sprites, &mut b).unwrap();
        assert_ne!(spec_a, spec_b);
    }

    #[test]
    fn sprite_choice_is_uniform() {
        // 10_000 draws over 2 sprites: binomial sd is 50, so ±300 is six
        // sigma; a fair sampler essentially never leaves that window.
        let cfg = GenConfig::default();
        let sprites = SpriteSet::procedural(2);
        let mut counts = [0usize; 2];
        for video in 0..10_000u64 {
            let mut rng = rng_for_video(7, video);
            let spec = sample_motion(&cfg, &sprites, &mut rng).unwrap();
            counts[spec.object_index] += 1;
        }
        assert!(
            counts.iter().all(|&c| (4_700..=5_300).contains(&c)),
            "draws not uniform: {counts:?}"
        );
    }

    #[test]
    fn empty_sprite_set_is_an_asset_error() {
        let cfg = GenConfig::default();
        let sprites = SpriteSet::from_sprites(vec![]);
        let mut rng = rng_for_video(0, 0);
        assert!(matches!(sample_motion(&cfg, &sprites, &mut rng), Err(Error::Asset(_))));
    }

    #[test]
    fn track_length_mismatch_is_an_argument_error() {
        let spec = spec_from(vec![
            Keyframe { frame_index: 0, x: 50.0, y: 50.0, angle: 0.0 },
            Keyframe { frame_index: 15, x: 110.0, y: 50.0, angle: 0.0 },
        ]);
        assert!(matches!(interpolate(&spec, 10), Err(Error::Argument(_))));
    }

    #[test]
    fn spec_serialization_has_stable_field_order() {
        let spec = spec_from(vec![
            Keyframe { frame_index: 0, x: 50.0, y: 60.0, angle: 1.5 },
            Keyframe { frame_index: 15, x: 110.0, y: 50.0, angle: -2.0 },
        ]);
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.starts_with(
            "{\"object_name\":\"square\",\"object_index\":0,\
             \"scaled_height\":64,\"scaled_width\":64,\"keyframes\":[{\"frame_index\":0,"
        ));
    }
}
