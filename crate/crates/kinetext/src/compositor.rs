//! Rasterization: scaled/rotated sprites alpha-blended onto backgrounds.
//!
//! All resampling is bilinear in pixel-center convention (pixel (i, j) has
//! its center at (j+0.5, i+0.5)), with colors premultiplied by alpha during
//! interpolation. Compositing maps each output pixel through one inverse
//! affine transform straight into the native sprite raster, so a frame is
//! produced by a single resampling pass no matter how the pose combines
//! scale, rotation, and sub-pixel translation.
//!
//! Angle convention: positive angles turn the sprite's top edge leftward on
//! screen (counter-clockwise to the viewer). In y-down raster coordinates
//! the forward map is (x, y) -> (x cos t + y sin t, -x sin t + y cos t).

use image::{Rgb, RgbImage, RgbaImage};

use crate::error::{Error, Result};
use crate::kinematics::PoseTrack;
use crate::sprite::Sprite;

use serde::{Deserialize, Serialize};

/// What sits behind the injected object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundMode {
    /// All-zero frames.
    Black,
    /// Frame 0 of the source clip, repeated.
    StaticFrame,
    /// The full source clip, cropped/resampled.
    Video,
}

impl BackgroundMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            BackgroundMode::Black => "black",
            BackgroundMode::StaticFrame => "static_frame",
            BackgroundMode::Video => "video",
        }
    }
}

impl std::str::FromStr for BackgroundMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "black" => Ok(BackgroundMode::Black),
            "static_frame" => Ok(BackgroundMode::StaticFrame),
            "video" => Ok(BackgroundMode::Video),
            other => Err(Error::Config(format!(
                "unknown background mode {other:?} (expected black, static_frame, or video)"
            ))),
        }
    }
}

/// A fixed-size RGB frame sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSeq {
    frames: Vec<RgbImage>,
    background_mode: BackgroundMode,
}

impl FrameSeq {
    pub fn from_frames(frames: Vec<RgbImage>, background_mode: BackgroundMode) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::Argument(format!(
                "a frame sequence needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        let (w, h) = frames[0].dimensions();
        if w == 0 || h == 0 {
            return Err(Error::Argument("frames must have nonzero dimensions".into()));
        }
        if frames.iter().any(|f| f.dimensions() != (w, h)) {
            return Err(Error::Argument("all frames must share one size".into()));
        }
        Ok(FrameSeq { frames, background_mode })
    }

    pub fn frames(&self) -> &[RgbImage] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dimensions(&self) -> (u32, u32) {
        self.frames[0].dimensions()
    }

    pub fn background_mode(&self) -> BackgroundMode {
        self.background_mode
    }
}

fn chan(v: u8) -> f64 {
    v as f64 / 255.0
}

fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Bilinear sample of an RGBA raster at center-space (u, v), premultiplied;
/// everything outside the raster is transparent black.
fn sample_premultiplied(img: &RgbaImage, u: f64, v: f64) -> [f64; 4] {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x = u - 0.5;
    let y = v - 0.5;
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);

    let texel = |i: i64, j: i64| -> [f64; 4] {
        if i < 0 || j < 0 || i >= h || j >= w {
            return [0.0; 4];
        }
        let p = img.get_pixel(j as u32, i as u32).0;
        let a = chan(p[3]);
        [chan(p[0]) * a, chan(p[1]) * a, chan(p[2]) * a, a]
    };

    let (t00, t01) = (texel(y0, x0), texel(y0, x0 + 1));
    let (t10, t11) = (texel(y0 + 1, x0), texel(y0 + 1, x0 + 1));
    let mut out = [0.0; 4];
    for c in 0..4 {
        let top = t00[c] + (t01[c] - t00[c]) * fx;
        let bot = t10[c] + (t11[c] - t10[c]) * fx;
        out[c] = top + (bot - top) * fy;
    }
    out
}

/// Bilinear sample of an RGB raster, clamping coordinates to the edges.
fn sample_rgb_clamped(img: &RgbImage, u: f64, v: f64) -> [f64; 3] {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x = u - 0.5;
    let y = v - 0.5;
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);

    let texel = |i: i64, j: i64| -> [f64; 3] {
        let i = i.clamp(0, h - 1) as u32;
        let j = j.clamp(0, w - 1) as u32;
        let p = img.get_pixel(j, i).0;
        [chan(p[0]), chan(p[1]), chan(p[2])]
    };

    let (t00, t01) = (texel(y0, x0), texel(y0, x0 + 1));
    let (t10, t11) = (texel(y0 + 1, x0), texel(y0 + 1, x0 + 1));
    let mut out = [0.0; 3];
    for c in 0..3 {
        let top = t00[c] + (t01[c] - t00[c]) * fx;
        let bot = t10[c] + (t11[c] - t10[c]) * fx;
        out[c] = top + (bot - top) * fy;
    }
    out
}

/// Output raster size that tightly bounds a w x h rectangle rotated by theta.
fn rotated_bounds(w: f64, h: f64, theta_deg: f64) -> (u32, u32) {
    let (sin, cos) = theta_deg.to_radians().sin_cos();
    let out_w = (w * cos.abs() + h * sin.abs()).ceil().max(1.0) as u32;
    let out_h = (w * sin.abs() + h * cos.abs()).ceil().max(1.0) as u32;
    (out_w, out_h)
}

/// Scales a sprite to `(height, width)` and rotates it by `theta` degrees,
/// returning a tight raster. Exact quarter turns take a lossless index
/// permutation path so axis-aligned rotations never resample.
pub fn transform_sprite(sprite: &Sprite, scale_to: (u32, u32), theta_deg: f64) -> Result<Sprite> {
    let (target_h, target_w) = scale_to;
    if target_h == 0 || target_w == 0 {
        return Err(Error::Argument("transform_sprite target size must be nonzero".into()));
    }

    if theta_deg.rem_euclid(90.0) == 0.0 {
        let scaled = scale_rgba(sprite.image(), target_w, target_h);
        let quarter_turns = ((theta_deg / 90.0).round() as i64).rem_euclid(4) as u8;
        let rotated = rotate_quarter(&scaled, quarter_turns);
        return Sprite::new(sprite.name(), sprite.id(), rotated);
    }

    let native = sprite.image();
    let sx = target_w as f64 / native.width() as f64;
    let sy = target_h as f64 / native.height() as f64;
    let (out_w, out_h) = rotated_bounds(target_w as f64, target_h as f64, theta_deg);
    let (sin, cos) = theta_deg.to_radians().sin_cos();
    let (native_cx, native_cy) = (native.width() as f64 / 2.0, native.height() as f64 / 2.0);

    let mut out = RgbaImage::new(out_w, out_h);
    for i in 0..out_h {
        for j in 0..out_w {
            let qx = j as f64 + 0.5 - out_w as f64 / 2.0;
            let qy = i as f64 + 0.5 - out_h as f64 / 2.0;
            // Inverse of the forward pixel-space rotation.
            let px = qx * cos - qy * sin;
            let py = qx * sin + qy * cos;
            let u = px / sx + native_cx;
            let v = py / sy + native_cy;
            let s = sample_premultiplied(native, u, v);
            out.put_pixel(j, i, unpremultiply(s));
        }
    }
    Sprite::new(sprite.name(), sprite.id(), out)
}

fn unpremultiply(s: [f64; 4]) -> image::Rgba<u8> {
    let a = s[3];
    if a <= 0.0 {
        return image::Rgba([0, 0, 0, 0]);
    }
    image::Rgba([quantize(s[0] / a), quantize(s[1] / a), quantize(s[2] / a), quantize(a)])
}

fn scale_rgba(img: &RgbaImage, target_w: u32, target_h: u32) -> RgbaImage {
    if (target_w, target_h) == img.dimensions() {
        return img.clone();
    }
    let sx = img.width() as f64 / target_w as f64;
    let sy = img.height() as f64 / target_h as f64;
    let mut out = RgbaImage::new(target_w, target_h);
    for i in 0..target_h {
        for j in 0..target_w {
            let u = (j as f64 + 0.5) * sx;
            let v = (i as f64 + 0.5) * sy;
            out.put_pixel(j, i, unpremultiply(sample_premultiplied(img, u, v)));
        }
    }
    out
}

/// Lossless rotation by `turns` quarter turns counter-clockwise on screen.
fn rotate_quarter(img: &RgbaImage, turns: u8) -> RgbaImage {
    let (w, h) = img.dimensions();
    match turns {
        0 => img.clone(),
        1 => RgbaImage::from_fn(h, w, |x, y| *img.get_pixel(w - 1 - y, x)),
        2 => RgbaImage::from_fn(w, h, |x, y| *img.get_pixel(w - 1 - x, h - 1 - y)),
        3 => RgbaImage::from_fn(h, w, |x, y| *img.get_pixel(y, h - 1 - x)),
        _ => unreachable!("turns is taken mod 4"),
    }
}

/// Renders the sprite over every background frame at the track's poses.
///
/// `scaled_size` is (height, width) of the object before rotation. Pixels
/// the transformed sprite does not cover are copied from the background
/// unchanged.
pub fn composite(
    background: &FrameSeq,
    sprite: &Sprite,
    scaled_size: (u32, u32),
    track: &PoseTrack,
) -> Result<FrameSeq> {
    if track.len() != background.len() {
        return Err(Error::Argument(format!(
            "track length {} != background length {}",
            track.len(),
            background.len()
        )));
    }
    let (scaled_h, scaled_w) = scaled_size;
    if scaled_h == 0 || scaled_w == 0 {
        return Err(Error::Argument("scaled sprite size must be nonzero".into()));
    }
    let native = sprite.image();
    let sx = scaled_w as f64 / native.width() as f64;
    let sy = scaled_h as f64 / native.height() as f64;
    let (native_cx, native_cy) = (native.width() as f64 / 2.0, native.height() as f64 / 2.0);
    let (frame_w, frame_h) = background.dimensions();

    let mut frames = Vec::with_capacity(background.len());
    for (bg, pose) in background.frames().iter().zip(&track.poses) {
        let mut frame = bg.clone();
        let (sin, cos) = pose.angle.to_radians().sin_cos();
        let (bound_w, bound_h) = rotated_bounds(scaled_w as f64, scaled_h as f64, pose.angle);
        let x_lo = ((pose.x - bound_w as f64 / 2.0).floor().max(0.0)) as u32;
        let y_lo = ((pose.y - bound_h as f64 / 2.0).floor().max(0.0)) as u32;
        let x_hi = ((pose.x + bound_w as f64 / 2.0).ceil().min(frame_w as f64)) as u32;
        let y_hi = ((pose.y + bound_h as f64 / 2.0).ceil().min(frame_h as f64)) as u32;

        for y in y_lo..y_hi {
            for x in x_lo..x_hi {
                let qx = x as f64 + 0.5 - pose.x;
                let qy = y as f64 + 0.5 - pose.y;
                let px = qx * cos - qy * sin;
                let py = qx * sin + qy * cos;
                let u = px / sx + native_cx;
                let v = py / sy + native_cy;
                let src = sample_premultiplied(native, u, v);
                if src[3] <= 0.0 {
                    continue;
                }
                let dst = frame.get_pixel_mut(x, y);
                let blended = [
                    src[0] + (1.0 - src[3]) * chan(dst.0[0]),
                    src[1] + (1.0 - src[3]) * chan(dst.0[1]),
                    src[2] + (1.0 - src[3]) * chan(dst.0[2]),
                ];
                *dst = Rgb([quantize(blended[0]), quantize(blended[1]), quantize(blended[2])]);
            }
        }
        frames.push(frame);
    }
    FrameSeq::from_frames(frames, background.background_mode())
}

/// Builds the background sequence for one output video.
///
/// `video` center-crops the source to the target aspect, bilinearly rescales
/// to (width, height), and resamples time by index i -> floor(i*M/N) when the
/// clip length M differs from N.
pub fn make_background(
    mode: BackgroundMode,
    source: Option<&FrameSeq>,
    num_frames: usize,
    size: (u32, u32),
) -> Result<FrameSeq> {
    let (width, height) = size;
    match mode {
        BackgroundMode::Black => {
            let frame = RgbImage::new(width, height);
            FrameSeq::from_frames(vec![frame; num_frames], mode)
        }
        BackgroundMode::StaticFrame => {
            let source = source.ok_or_else(|| {
                Error::Argument("static_frame background requires a source clip".into())
            })?;
            let first = resample_frame(&source.frames()[0], width, height);
            FrameSeq::from_frames(vec![first; num_frames], mode)
        }
        BackgroundMode::Video => {
            let source = source
                .ok_or_else(|| Error::Argument("video background requires a source clip".into()))?;
            let m = source.len();
            let frames = (0..num_frames)
                .map(|i| {
                    let src_index = (i * m) / num_frames;
                    resample_frame(&source.frames()[src_index], width, height)
                })
                .collect();
            FrameSeq::from_frames(frames, mode)
        }
    }
}

/// Center-crop to the target aspect ratio, then bilinear resize.
fn resample_frame(src: &RgbImage, width: u32, height: u32) -> RgbImage {
    if src.dimensions() == (width, height) {
        return src.clone();
    }
    let (sw, sh) = (src.width() as f64, src.height() as f64);
    let target_aspect = width as f64 / height as f64;
    let (crop_w, crop_h) = if sw / sh > target_aspect {
        (sh * target_aspect, sh)
    } else {
        (sw, sw / target_aspect)
    };
    let x_off = (sw - crop_w) / 2.0;
    let y_off = (sh - crop_h) / 2.0;

    RgbImage::from_fn(width, height, |j, i| {
        let u = (j as f64 + 0.5) * crop_w / width as f64 + x_off;
        let v = (i as f64 + 0.5) * crop_h / height as f64 + y_off;
        let s = sample_rgb_clamped(src, u, v);
        Rgb([quantize(s[0]), quantize(s[1]), quantize(s[2])])
    })
}

/// Centroid of pixels that differ from the background by more than
/// `threshold` on any channel. Returns None when nothing differs.
pub fn changed_pixel_centroid(
    frame: &RgbImage,
    background: &RgbImage,
    threshold: u8,
) -> Option<(f64, f64)> {
    let mut sum_x = 0.0;
    let mut sum_y = 0.0;
    let mut count = 0u64;
    for (x, y, p) in frame.enumerate_pixels() {
        let b = background.get_pixel(x, y);
        let differs = p.0.iter().zip(b.0).any(|(&a, b)| a.abs_diff(b) > threshold);
        if differs {
            sum_x += x as f64 + 0.5;
            sum_y += y as f64 + 0.5;
            count += 1;
        }
    }
    (count > 0).then(|| (sum_x / count as f64, sum_y / count as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::Pose;
    use crate::sprite::SpriteSet;
    use image::Rgba;

    fn solid_sprite(w: u32, h: u32, rgba: [u8; 4]) -> Sprite {
        let img = RgbaImage::from_pixel(w, h, Rgba(rgba));
        Sprite::new("block", "0", img).unwrap()
    }

    /// A sprite with one marked corner so orientation mistakes are visible.
    fn marked_sprite(side: u32) -> Sprite {
        let mut img = RgbaImage::from_pixel(side, side, Rgba([0, 0, 255, 255]));
        img.put_pixel(0, 0, Rgba([255, 0, 0, 255]));
        Sprite::new("marker", "0", img).unwrap()
    }

    fn black_bg(n: usize, w: u32, h: u32) -> FrameSeq {
        make_background(BackgroundMode::Black, None, n, (w, h)).unwrap()
    }

    fn still_track(n: usize, x: f64, y: f64, angle: f64) -> PoseTrack {
        PoseTrack { poses: vec![Pose { x, y, angle }; n] }
    }

    #[test]
    fn identity_transform_is_pixel_exact() {
        let set = SpriteSet::procedural(2);
        let sprite = set.get(1);
        let out = transform_sprite(sprite, (sprite.height(), sprite.width()), 0.0).unwrap();
        assert_eq!(out.image(), sprite.image());
    }

    #[test]
    fn quarter_turn_is_exact_and_counterclockwise() {
        let sprite = marked_sprite(9);
        let out = transform_sprite(&sprite, (9, 9), 90.0).unwrap();
        assert_eq!(out.image().dimensions(), (9, 9));
        // Positive angle turns the top edge leftward: the top-left marker
        // lands at the bottom-left corner.
        assert_eq!(out.image().get_pixel(0, 8).0, [255, 0, 0, 255]);
        // Four quarter turns restore the original exactly.
        let mut img = sprite.image().clone();
        for _ in 0..4 {
            img = transform_sprite(&Sprite::new("m", "0", img).unwrap(), (9, 9), 90.0)
                .unwrap()
                .image()
                .clone();
        }
        assert_eq!(&img, sprite.image());
    }

    #[test]
    fn negative_quarter_turn_is_clockwise() {
        let sprite = marked_sprite(9);
        let out = transform_sprite(&sprite, (9, 9), -90.0).unwrap();
        // Clockwise: top-left marker moves to the top-right corner.
        assert_eq!(out.image().get_pixel(8, 0).0, [255, 0, 0, 255]);
    }

    #[test]
    fn rotated_bounds_match_analytic_formula() {
        let sprite = solid_sprite(64, 64, [10, 200, 30, 255]);
        let out = transform_sprite(&sprite, (64, 64), 25.0).unwrap();
        let rad = 25.0f64.to_radians();
        let want = (64.0 * (rad.cos() + rad.sin())).ceil() as u32;
        assert_eq!(out.image().dimensions(), (want, want));
        assert_eq!(want, 86);
    }

    #[test]
    fn downscale_by_two_is_box_average() {
        // Pixel-center sampling makes 2x downscale an exact 2x2 mean; this
        // pins the resampling convention independently of the golden images.
        let mut img = RgbaImage::new(4, 2);
        let vals = [[10u8, 30, 50, 70], [90, 110, 130, 150]];
        for (y, row) in vals.iter().enumerate() {
            for (x, &v) in row.iter().enumerate() {
                img.put_pixel(x as u32, y as u32, Rgba([v, v, v, 255]));
            }
        }
        let sprite = Sprite::new("grad", "0", img).unwrap();
        let out = transform_sprite(&sprite, (1, 2), 0.0).unwrap();
        let p0 = out.image().get_pixel(0, 0).0;
        let p1 = out.image().get_pixel(1, 0).0;
        assert_eq!(p0[0], 60); // mean(10, 30, 90, 110)
        assert_eq!(p1[0], 100); // mean(50, 70, 130, 150)
    }

    #[test]
    fn zero_target_size_is_an_argument_error() {
        let sprite = solid_sprite(8, 8, [1, 2, 3, 255]);
        assert!(matches!(transform_sprite(&sprite, (0, 8), 0.0), Err(Error::Argument(_))));
    }

    #[test]
    fn opaque_sprite_appears_verbatim_on_black() {
        let sprite = solid_sprite(10, 6, [200, 60, 20, 255]);
        let bg = black_bg(2, 64, 64);
        // Center chosen so the 10x6 box lands on whole-pixel boundaries.
        let track = still_track(2, 32.0, 32.0, 0.0);
        let out = composite(&bg, &sprite, (6, 10), &track).unwrap();
        for y in 0..64u32 {
            for x in 0..64u32 {
                let inside = (27..37).contains(&x) && (29..35).contains(&y);
                let want = if inside { [200, 60, 20] } else { [0, 0, 0] };
                assert_eq!(out.frames()[0].get_pixel(x, y).0, want, "at ({x},{y})");
            }
        }
    }

    #[test]
    fn transparent_sprite_leaves_background_untouched() {
        // The public constructor rejects fully transparent sprites, so this
        // bit-exactness case goes through the unchecked test constructor.
        let ghost = Sprite::new_unchecked("ghost", "0", RgbaImage::new(8, 8));
        let bg = black_bg(2, 32, 32);
        let track = still_track(2, 16.0, 16.0, 10.0);
        let out = composite(&bg, &ghost, (8, 8), &track).unwrap();
        assert_eq!(out.frames(), bg.frames());
    }

    #[test]
    fn half_alpha_blend_matches_source_over_formula() {
        let sprite = solid_sprite(12, 12, [128, 128, 128, 128]);
        let bg_frame = RgbImage::from_pixel(48, 48, Rgb([40, 80, 120]));
        let bg = FrameSeq::from_frames(vec![bg_frame; 2], BackgroundMode::Black).unwrap();
        let track = still_track(2, 24.0, 24.0, 0.0);
        let out = composite(&bg, &sprite, (12, 12), &track).unwrap();
        let a = 128.0 / 255.0;
        let center = out.frames()[0].get_pixel(24, 24).0;
        for (c, &bg_c) in center.iter().zip(&[40u8, 80, 120]) {
            let want = 255.0 * ((128.0 / 255.0) * a + (1.0 - a) * (bg_c as f64 / 255.0));
            assert!(
                (*c as f64 - want).abs() <= 1.0,
                "channel {c} vs closed form {want:.2}"
            );
        }
    }

    #[test]
    fn changed_pixels_stay_inside_rotated_bounds() {
        let set = SpriteSet::procedural(3);
        let sprite = set.get(2);
        let bg = black_bg(3, 96, 96);
        let poses = vec![
            Pose { x: 30.2, y: 41.7, angle: 17.0 },
            Pose { x: 48.0, y: 48.0, angle: -25.0 },
            Pose { x: 60.9, y: 33.3, angle: 3.5 },
        ];
        let track = PoseTrack { poses: poses.clone() };
        let (sh, sw) = (40u32, 46u32);
        let out = composite(&bg, sprite, (sh, sw), &track).unwrap();
        for (frame, pose) in out.frames().iter().zip(&poses) {
            let (bw, bh) = rotated_bounds(sw as f64, sh as f64, pose.angle);
            for (x, y, p) in frame.enumerate_pixels() {
                if p.0 == [0, 0, 0] {
                    continue;
                }
                let dx = x as f64 + 0.5 - pose.x;
                let dy = y as f64 + 0.5 - pose.y;
                assert!(
                    dx.abs() <= bw as f64 / 2.0 + 0.5 && dy.abs() <= bh as f64 / 2.0 + 0.5,
                    "pixel ({x},{y}) escaped the bound for pose {pose:?}"
                );
            }
        }
    }

    #[test]
    fn zero_motion_repeats_one_frame() {
        let set = SpriteSet::procedural(1);
        let bg = black_bg(5, 64, 64);
        let track = still_track(5, 31.5, 30.25, 12.0);
        let out = composite(&bg, set.get(0), (24, 26), &track).unwrap();
        for f in out.frames() {
            assert_eq!(f, &out.frames()[0]);
        }
    }

    #[test]
    fn centroid_follows_pose_center() {
        let sprite = solid_sprite(20, 20, [250, 250, 250, 255]);
        let bg = black_bg(2, 128, 128);
        let track = still_track(2, 71.25, 54.75, 13.0);
        let out = composite(&bg, &sprite, (30, 30), &track).unwrap();
        let (cx, cy) =
            changed_pixel_centroid(&out.frames()[0], &bg.frames()[0], 8).unwrap();
        assert!((cx - 71.25).abs() < 0.5 && (cy - 54.75).abs() < 0.5, "centroid ({cx}, {cy})");
    }

    #[test]
    fn black_background_is_all_zero() {
        let bg = black_bg(4, 224, 224);
        assert_eq!(bg.len(), 4);
        assert_eq!(bg.background_mode(), BackgroundMode::Black);
        assert!(bg.frames().iter().all(|f| f.pixels().all(|p| p.0 == [0, 0, 0])));
    }

    #[test]
    fn static_frame_repeats_clip_frame_zero() {
        let clip_frames: Vec<RgbImage> = (0..4u8)
            .map(|i| RgbImage::from_pixel(32, 32, Rgb([i * 10, 0, 0])))
            .collect();
        let clip = FrameSeq::from_frames(clip_frames, BackgroundMode::Video).unwrap();
        let bg =
            make_background(BackgroundMode::StaticFrame, Some(&clip), 4, (32, 32)).unwrap();
        assert!(bg.frames().iter().all(|f| f == &clip.frames()[0]));
    }

    #[test]
    fn video_background_resamples_time_by_index_map() {
        let clip_frames: Vec<RgbImage> = (0..4u8)
            .map(|i| RgbImage::from_pixel(16, 16, Rgb([i, i, i])))
            .collect();
        let clip = FrameSeq::from_frames(clip_frames, BackgroundMode::Video).unwrap();
        let bg = make_background(BackgroundMode::Video, Some(&clip), 8, (16, 16)).unwrap();
        let picked: Vec<u8> = bg.frames().iter().map(|f| f.get_pixel(0, 0).0[0]).collect();
        assert_eq!(picked, vec![0, 0, 1, 1, 2, 2, 3, 3]);
    }

    #[test]
    fn video_background_center_crops_and_box_averages() {
        // 8x4 source to 2x2 target: crop the middle 4x4, then 2x downscale
        // equals 2x2 box averaging.
        let mut src = RgbImage::new(8, 4);
        for (x, y, p) in src.enumerate_pixels_mut() {
            *p = Rgb([(x * 10 + y) as u8, 0, 0]);
        }
        let clip = FrameSeq::from_frames(vec![src.clone(); 2], BackgroundMode::Video).unwrap();
        let bg = make_background(BackgroundMode::Video, Some(&clip), 2, (2, 2)).unwrap();
        let avg = |xs: [(u32, u32); 4]| -> f64 {
            xs.iter().map(|&(x, y)| src.get_pixel(x, y).0[0] as f64).sum::<f64>() / 4.0
        };
        let want00 = avg([(2, 0), (3, 0), (2, 1), (3, 1)]).round() as u8;
        let want11 = avg([(4, 2), (5, 2), (4, 3), (5, 3)]).round() as u8;
        assert_eq!(bg.frames()[0].get_pixel(0, 0).0[0], want00);
        assert_eq!(bg.frames()[0].get_pixel(1, 1).0[0], want11);
    }

    #[test]
    fn non_black_modes_require_a_source() {
        for mode in [BackgroundMode::StaticFrame, BackgroundMode::Video] {
            assert!(matches!(
                make_background(mode, None, 4, (32, 32)),
                Err(Error::Argument(_))
            ));
        }
    }

    #[test]
    fn track_length_mismatch_is_rejected() {
        let set = SpriteSet::procedural(1);
        let bg = black_bg(4, 64, 64);
        let track = still_track(3, 32.0, 32.0, 0.0);
        assert!(matches!(
            composite(&bg, set.get(0), (20, 20), &track),
            Err(Error::Argument(_))
        ));
    }
}
