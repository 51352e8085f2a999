//! The template caption grammar.
//!
//! One sentence per video: an appearance phrase ("A small car in the left")
//! followed by one motion phrase per keyframe segment ("moves quickly
//! diagonally upwards a lot while rotating left slightly"), joined with
//! "first ... , before it ..." when there is more than one segment. Every
//! non-object word comes from a closed vocabulary, every qualifier is a
//! threshold decision on quantities measured from the pose track, and the
//! whole thing inverts: [`parse_caption`] recovers the slot record from the
//! rendered string exactly.
//!
//! Threshold comparisons are strict on both sides; a measured value that
//! lands exactly on a bound gets no modifier word.

use serde::{Deserialize, Serialize};

use crate::config::{GenConfig, ThresholdConfig};
use crate::error::{Error, Result};
use crate::kinematics::{MotionSpec, Pose, PoseTrack};

macro_rules! word_enum {
    ($(#[$doc:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$doc])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn from_word(word: &str) -> Option<Self> {
                match word {
                    $($text => Some($name::$variant),)+
                    _ => None,
                }
            }
        }
    };
}

word_enum!(
    /// Appearance size qualifier; absent between the two area thresholds.
    SizeWord { Small => "small", Big => "big" }
);

word_enum!(
    /// 3x3 grid cell containing the starting center.
    PositionWord {
        TopLeft => "top-left",
        Top => "top",
        TopRight => "top-right",
        Left => "left",
        Center => "center",
        Right => "right",
        BottomLeft => "bottom-left",
        Bottom => "bottom",
        BottomRight => "bottom-right",
    }
);

word_enum!(
    /// Mean per-frame displacement qualifier.
    SpeedWord { Slowly => "slowly", Quickly => "quickly" }
);

word_enum!(
    /// Screen direction of travel, nearest cardinal.
    DirectionWord {
        Upwards => "upwards",
        Right => "right",
        Downwards => "downwards",
        Left => "left",
    }
);

word_enum!(
    /// Total segment displacement qualifier (fraction of frame width).
    DistanceWord { ALittle => "little", ALot => "lot" }
);

word_enum!(
    /// Screen rotation direction: positive angle deltas turn the top edge
    /// leftward.
    RotDirectionWord { Left => "left", Right => "right" }
);

word_enum!(
    /// Rotation magnitude qualifier; absent between the two angle bounds.
    RotAmountWord { Slightly => "slightly", Significantly => "significantly" }
);

/// Motion qualifiers for one keyframe-to-keyframe segment.
///
/// `direction == None` means the segment has zero displacement, in which
/// case the whole translation phrase (speed, diagonal, distance included)
/// is empty. `rot_direction == None` means zero angle delta.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSlots {
    pub speed: Option<SpeedWord>,
    pub diagonal: bool,
    pub direction: Option<DirectionWord>,
    pub distance: Option<DistanceWord>,
    pub rot_direction: Option<RotDirectionWord>,
    pub rot_amount: Option<RotAmountWord>,
}

impl SegmentSlots {
    /// True when the segment renders as no words at all.
    pub fn is_empty(&self) -> bool {
        self.direction.is_none() && self.rot_direction.is_none()
    }
}

/// The full tagged slot record behind one rendered caption.
///
/// `segments` holds only segments that render words; a spec whose motion
/// segments are all empty records an empty list here, which is what keeps
/// render/parse an exact round trip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionSlots {
    pub size: Option<SizeWord>,
    pub object: String,
    pub position: PositionWord,
    pub segments: Vec<SegmentSlots>,
}

/// A rendered caption plus the slots it was rendered from.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionCaption {
    pub rendered: String,
    pub slots: CaptionSlots,
}

/// What grammatical role a rendered token plays. The analytics module maps
/// these to part-of-speech classes without re-parsing the string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    /// Leading "A".
    Article,
    Size,
    /// One token per whitespace-separated word of the object name.
    Object,
    /// "in".
    Adposition,
    /// "the".
    Determiner,
    Position,
    /// "moves".
    MoveVerb,
    Speed,
    /// "diagonally".
    Diagonal,
    Direction,
    /// "a" of "a little" / "a lot".
    DistanceArticle,
    /// "little" / "lot".
    DistanceAmount,
    /// "while".
    While,
    /// "rotating".
    RotVerb,
    RotDirection,
    RotAmount,
    /// "first".
    First,
    Comma,
    /// "before".
    Before,
    /// "it".
    It,
}

/// One rendered token with its role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
}

fn tok(text: &str, kind: TokenKind) -> Token {
    Token { text: text.to_owned(), kind }
}

/// Renders the slot record to its typed token stream. [`render`] is the
/// joined form; both paths share this single source of truth.
pub fn render_tokens(slots: &CaptionSlots) -> Vec<Token> {
    let mut out = Vec::new();
    out.push(tok("A", TokenKind::Article));
    if let Some(size) = slots.size {
        out.push(tok(size.as_str(), TokenKind::Size));
    }
    for word in slots.object.split_whitespace() {
        out.push(tok(word, TokenKind::Object));
    }
    out.push(tok("in", TokenKind::Adposition));
    out.push(tok("the", TokenKind::Determiner));
    out.push(tok(slots.position.as_str(), TokenKind::Position));

    let rendered: Vec<&SegmentSlots> = slots.segments.iter().filter(|s| !s.is_empty()).collect();
    for (i, seg) in rendered.iter().enumerate() {
        if rendered.len() > 1 {
            if i == 0 {
                out.push(tok("first", TokenKind::First));
            } else {
                out.push(tok(",", TokenKind::Comma));
                out.push(tok("before", TokenKind::Before));
                out.push(tok("it", TokenKind::It));
            }
        }
        if let Some(direction) = seg.direction {
            out.push(tok("moves", TokenKind::MoveVerb));
            if let Some(speed) = seg.speed {
                out.push(tok(speed.as_str(), TokenKind::Speed));
            }
            if seg.diagonal {
                out.push(tok("diagonally", TokenKind::Diagonal));
            }
            out.push(tok(direction.as_str(), TokenKind::Direction));
            if let Some(distance) = seg.distance {
                out.push(tok("a", TokenKind::DistanceArticle));
                out.push(tok(distance.as_str(), TokenKind::DistanceAmount));
            }
        }
        if let Some(rot_direction) = seg.rot_direction {
            out.push(tok("while", TokenKind::While));
            out.push(tok("rotating", TokenKind::RotVerb));
            out.push(tok(rot_direction.as_str(), TokenKind::RotDirection));
            if let Some(amount) = seg.rot_amount {
                out.push(tok(amount.as_str(), TokenKind::RotAmount));
            }
        }
    }
    out
}

/// Joins tokens single-spaced, commas attached to the preceding word.
pub fn render(slots: &CaptionSlots) -> String {
    let mut out = String::new();
    for token in render_tokens(slots) {
        if token.kind != TokenKind::Comma && !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&token.text);
    }
    out
}

/// Size qualifier for a scaled object area (width' * height', px^2).
pub fn size_word(area: f64, t: &ThresholdConfig) -> Option<SizeWord> {
    if area < t.size_small_max {
        Some(SizeWord::Small)
    } else if area > t.size_big_min {
        Some(SizeWord::Big)
    } else {
        None
    }
}

/// Grid cell for a starting center. Cell edges belong to the lower-index
/// cell: a center exactly on the one-third line counts as the left/top cell.
pub fn position_word(x: f64, y: f64, frame_w: f64, frame_h: f64) -> PositionWord {
    let col = (x > frame_w / 3.0) as usize + (x > 2.0 * frame_w / 3.0) as usize;
    let row = (y > frame_h / 3.0) as usize + (y > 2.0 * frame_h / 3.0) as usize;
    const GRID: [[PositionWord; 3]; 3] = [
        [PositionWord::TopLeft, PositionWord::Top, PositionWord::TopRight],
        [PositionWord::Left, PositionWord::Center, PositionWord::Right],
        [PositionWord::BottomLeft, PositionWord::Bottom, PositionWord::BottomRight],
    ];
    GRID[row][col]
}

/// Appearance phrase inputs: size qualifier and grid position.
pub fn describe_appearance(
    spec: &MotionSpec,
    cfg: &GenConfig,
    t: &ThresholdConfig,
) -> (Option<SizeWord>, PositionWord) {
    let area = spec.scaled_width as f64 * spec.scaled_height as f64;
    let start = &spec.keyframes[0];
    (
        size_word(area, t),
        position_word(start.x, start.y, cfg.frame_width as f64, cfg.frame_height as f64),
    )
}

pub(crate) fn speed_word(mean_step: f64, t: &ThresholdConfig) -> Option<SpeedWord> {
    if mean_step < t.speed_slow_max {
        Some(SpeedWord::Slowly)
    } else if mean_step > t.speed_quick_min {
        Some(SpeedWord::Quickly)
    } else {
        None
    }
}

pub(crate) fn distance_word(total: f64, frame_w: f64, t: &ThresholdConfig) -> Option<DistanceWord> {
    if total < t.dist_little_max * frame_w {
        Some(DistanceWord::ALittle)
    } else if total > t.dist_lot_min * frame_w {
        Some(DistanceWord::ALot)
    } else {
        None
    }
}

/// Heading in screen terms: 0 = rightward, 90 = upwards (decreasing pixel
/// row), measured counter-clockwise to the viewer. Range (-180, 180].
pub(crate) fn heading_degrees(dx: f64, dy: f64) -> f64 {
    (-dy).atan2(dx).to_degrees()
}

/// Nearest cardinal; exact 45-degree ties go to the vertical word.
pub(crate) fn direction_word(heading: f64) -> DirectionWord {
    if (45.0..=135.0).contains(&heading) {
        DirectionWord::Upwards
    } else if (-135.0..=-45.0).contains(&heading) {
        DirectionWord::Downwards
    } else if heading.abs() < 45.0 {
        DirectionWord::Right
    } else {
        DirectionWord::Left
    }
}

pub(crate) fn is_diagonal(heading: f64, t: &ThresholdConfig) -> bool {
    let folded = heading.abs().rem_euclid(90.0);
    folded > t.diag_band.0 && folded < t.diag_band.1
}

/// Translation qualifiers for one segment of consecutive poses.
///
/// The quantities come from the poses themselves, not from the sampled
/// parameters, so the words describe what the pixels actually do: mean
/// per-frame step for speed, endpoint displacement for heading and distance.
pub fn describe_translation(
    poses: &[Pose],
    cfg: &GenConfig,
    t: &ThresholdConfig,
) -> (Option<SpeedWord>, bool, Option<DirectionWord>, Option<DistanceWord>) {
    debug_assert!(poses.len() >= 2, "a segment spans at least one frame");
    let (first, last) = (&poses[0], &poses[poses.len() - 1]);
    let (dx, dy) = (last.x - first.x, last.y - first.y);
    if dx == 0.0 && dy == 0.0 {
        return (None, false, None, None);
    }
    let steps = poses.len() - 1;
    let mean_step = poses
        .windows(2)
        .map(|p| (p[1].x - p[0].x).hypot(p[1].y - p[0].y))
        .sum::<f64>()
        / steps as f64;
    let total = dx.hypot(dy);
    let heading = heading_degrees(dx, dy);
    (
        speed_word(mean_step, t),
        is_diagonal(heading, t),
        Some(direction_word(heading)),
        distance_word(total, cfg.frame_width as f64, t),
    )
}

/// Rotation qualifiers for one segment: sign of the angle delta picks the
/// word ("left" when positive, i.e. top edge moving leftward on screen),
/// magnitude picks the amount.
pub fn describe_rotation(
    poses: &[Pose],
    t: &ThresholdConfig,
) -> (Option<RotDirectionWord>, Option<RotAmountWord>) {
    debug_assert!(poses.len() >= 2, "a segment spans at least one frame");
    let delta = poses[poses.len() - 1].angle - poses[0].angle;
    if delta == 0.0 {
        return (None, None);
    }
    let direction = if delta > 0.0 { RotDirectionWord::Left } else { RotDirectionWord::Right };
    let amount = if delta.abs() < t.rot_slight_max {
        Some(RotAmountWord::Slightly)
    } else if delta.abs() > t.rot_signif_min {
        Some(RotAmountWord::Significantly)
    } else {
        None
    };
    (Some(direction), amount)
}

/// Builds the caption for a spec from its interpolated track.
///
/// Motion quantities are measured per keyframe segment from the track; the
/// slot record keeps only segments that render words, so all-empty motion
/// yields the appearance sentence alone.
pub fn assemble_caption(
    spec: &MotionSpec,
    track: &PoseTrack,
    cfg: &GenConfig,
    t: &ThresholdConfig,
) -> Result<MotionCaption> {
    if spec.keyframes.len() < 2 {
        return Err(Error::Argument("caption needs a spec with at least two keyframes".into()));
    }
    if track.len() != spec.num_frames() {
        return Err(Error::Argument(format!(
            "track length {} does not match spec frame count {}",
            track.len(),
            spec.num_frames()
        )));
    }
    let (size, position) = describe_appearance(spec, cfg, t);
    let mut segments = Vec::with_capacity(spec.keyframes.len() - 1);
    for pair in spec.keyframes.windows(2) {
        let poses = &track.poses[pair[0].frame_index..=pair[1].frame_index];
        let (speed, diagonal, direction, distance) = describe_translation(poses, cfg, t);
        let (rot_direction, rot_amount) = describe_rotation(poses, t);
        let seg = SegmentSlots { speed, diagonal, direction, distance, rot_direction, rot_amount };
        if !seg.is_empty() {
            segments.push(seg);
        }
    }
    let slots = CaptionSlots { size, object: spec.object_name.clone(), position, segments };
    Ok(MotionCaption { rendered: render(&slots), slots })
}

/// Exact count of distinct rendered strings reachable for one fixed object
/// with `num_keyframes` keyframes under the full grammar.
///
/// Appearance contributes 3 x 9 = 27 variants. A rendered (non-empty)
/// segment has 510 forms: translation absent or 3*2*4*3 = 72 present, times
/// rotation absent or 2*3 = 6 present, minus the both-absent combination.
/// Dropping empty segments means a K-keyframe caption shows anywhere from 0
/// to K-1 segments, so the total is 27 * sum_{j=0}^{K-1} 510^j.
pub fn count_caption_space(num_keyframes: usize) -> u128 {
    count_caption_space_of(num_keyframes, true, true)
}

/// Counting core with sub-grammar switches, used to cross-check the closed
/// form against brute-force enumeration on small vocabularies.
pub fn count_caption_space_of(num_keyframes: usize, translation: bool, rotation: bool) -> u128 {
    let translation_forms: u128 = if translation { 3 * 2 * 4 * 3 } else { 0 };
    let rotation_forms: u128 = if rotation { 2 * 3 } else { 0 };
    let segment_forms = (translation_forms + 1) * (rotation_forms + 1) - 1;
    let appearance: u128 = 3 * 9;
    let mut total = 0u128;
    let mut power = 1u128;
    // Empty segments are dropped, so K keyframes render 0..=K-1 segments.
    for _ in 0..num_keyframes.max(1) {
        total += power;
        power = power.saturating_mul(segment_forms);
    }
    appearance * total
}

struct Cursor {
    tokens: Vec<String>,
    pos: usize,
}

impl Cursor {
    fn new(text: &str) -> Self {
        let mut tokens = Vec::new();
        for raw in text.split_whitespace() {
            let trimmed = raw.trim_end_matches(',');
            let commas = raw.len() - trimmed.len();
            if !trimmed.is_empty() {
                tokens.push(trimmed.to_owned());
            }
            for _ in 0..commas {
                tokens.push(",".to_owned());
            }
        }
        Cursor { tokens, pos: 0 }
    }

    fn peek(&self, ahead: usize) -> Option<&str> {
        self.tokens.get(self.pos + ahead).map(|s| s.as_str())
    }

    fn next(&mut self) -> Option<&str> {
        let t = self.tokens.get(self.pos).map(|s| s.as_str());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn try_consume(&mut self, word: &str) -> bool {
        if self.peek(0) == Some(word) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, word: &str) -> Result<()> {
        match self.next() {
            Some(t) if t == word => Ok(()),
            Some(t) => Err(parse_err(format!("expected {word:?}, found {t:?}"))),
            None => Err(parse_err(format!("expected {word:?}, found end of caption"))),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }
}

fn parse_err(msg: String) -> Error {
    Error::Argument(format!("caption parse error: {msg}"))
}

/// Inverse grammar: recovers the slot record from a rendered caption.
pub fn parse_caption(text: &str) -> Result<CaptionSlots> {
    let mut cur = Cursor::new(text);
    cur.expect("A")?;

    let size = match cur.peek(0) {
        Some(w) => SizeWord::from_word(w),
        None => return Err(parse_err("caption ends after the article".into())),
    };
    if size.is_some() {
        cur.next();
    }

    // The object runs until the "in the <position>" anchor.
    let mut object_words: Vec<String> = Vec::new();
    let position = loop {
        let is_anchor = cur.peek(0) == Some("in")
            && cur.peek(1) == Some("the")
            && cur.peek(2).and_then(PositionWord::from_word).is_some();
        if is_anchor {
            cur.next();
            cur.next();
            let w = cur.next().expect("peeked position word");
            break PositionWord::from_word(w).expect("checked above");
        }
        match cur.next() {
            Some(w) => object_words.push(w.to_owned()),
            None => return Err(parse_err("no \"in the <position>\" phrase found".into())),
        }
    };
    if object_words.is_empty() {
        return Err(parse_err("empty object name".into()));
    }

    let mut segments = Vec::new();
    if !cur.at_end() {
        if cur.try_consume("first") {
            segments.push(parse_segment(&mut cur)?);
            while cur.try_consume(",") {
                cur.expect("before")?;
                cur.expect("it")?;
                segments.push(parse_segment(&mut cur)?);
            }
            if segments.len() < 2 {
                return Err(parse_err("\"first\" requires at least two segments".into()));
            }
        } else {
            segments.push(parse_segment(&mut cur)?);
        }
    }
    if !cur.at_end() {
        return Err(parse_err(format!("trailing tokens starting at {:?}", cur.peek(0).unwrap())));
    }

    Ok(CaptionSlots { size, object: object_words.join(" "), position, segments })
}

fn parse_segment(cur: &mut Cursor) -> Result<SegmentSlots> {
    let mut seg = SegmentSlots::default();
    if cur.try_consume("moves") {
        seg.speed = cur.peek(0).and_then(SpeedWord::from_word);
        if seg.speed.is_some() {
            cur.next();
        }
        seg.diagonal = cur.try_consume("diagonally");
        let dir = cur
            .next()
            .ok_or_else(|| parse_err("\"moves\" without a direction word".into()))?;
        seg.direction = Some(
            DirectionWord::from_word(dir)
                .ok_or_else(|| parse_err(format!("unknown direction {dir:?}")))?,
        );
        if cur.peek(0) == Some("a") {
            if let Some(dist) = cur.peek(1).and_then(DistanceWord::from_word) {
                cur.next();
                cur.next();
                seg.distance = Some(dist);
            }
        }
    }
    if cur.try_consume("while") {
        cur.expect("rotating")?;
        let dir = cur
            .next()
            .ok_or_else(|| parse_err("\"while rotating\" without a direction".into()))?;
        seg.rot_direction = Some(
            RotDirectionWord::from_word(dir)
                .ok_or_else(|| parse_err(format!("unknown rotation direction {dir:?}")))?,
        );
        seg.rot_amount = cur.peek(0).and_then(RotAmountWord::from_word);
        if seg.rot_amount.is_some() {
            cur.next();
        }
    }
    if seg.is_empty() {
        return Err(parse_err("segment carries no motion phrase".into()));
    }
    Ok(seg)
}
