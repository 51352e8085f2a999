//! Caption paraphrasing: prompt rendering, an HTTP completion gateway with
//! retries, a deterministic offline rewriter, and the factual-consistency
//! screen that guards all of them.
//!
//! The screen works from a synonym lexicon over six motion classes (four
//! translation directions, two rotation directions). A paraphrase token
//! only counts against a caption when its classes are entirely outside the
//! classes licensed by the original caption's own tokens and inside their
//! opposites; that makes the identity paraphrase acceptable by definition
//! and keeps multi-segment captions with opposing motions screenable.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Deserialize;

use crate::analytics::tokenize;
use crate::caption::{DirectionWord, MotionCaption, RotDirectionWord};
use crate::config::{ApiShape, ParaphraseConfig};
use crate::error::{Error, Result};

/// One of the six screenable motion classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MotionClass {
    Upwards,
    Downwards,
    TransLeft,
    TransRight,
    RotLeft,
    RotRight,
}

impl MotionClass {
    pub const ALL: [MotionClass; 6] = [
        MotionClass::Upwards,
        MotionClass::Downwards,
        MotionClass::TransLeft,
        MotionClass::TransRight,
        MotionClass::RotLeft,
        MotionClass::RotRight,
    ];

    pub fn opposite(self) -> MotionClass {
        match self {
            MotionClass::Upwards => MotionClass::Downwards,
            MotionClass::Downwards => MotionClass::Upwards,
            MotionClass::TransLeft => MotionClass::TransRight,
            MotionClass::TransRight => MotionClass::TransLeft,
            MotionClass::RotLeft => MotionClass::RotRight,
            MotionClass::RotRight => MotionClass::RotLeft,
        }
    }

    pub fn is_translation(self) -> bool {
        !matches!(self, MotionClass::RotLeft | MotionClass::RotRight)
    }

    fn of_direction(d: DirectionWord) -> MotionClass {
        match d {
            DirectionWord::Upwards => MotionClass::Upwards,
            DirectionWord::Downwards => MotionClass::Downwards,
            DirectionWord::Left => MotionClass::TransLeft,
            DirectionWord::Right => MotionClass::TransRight,
        }
    }

    fn of_rotation(r: RotDirectionWord) -> MotionClass {
        match r {
            RotDirectionWord::Left => MotionClass::RotLeft,
            RotDirectionWord::Right => MotionClass::RotRight,
        }
    }

    /// The grammar's own word for the class, which its word list must
    /// always contain.
    fn anchor(self) -> &'static str {
        match self {
            MotionClass::Upwards => "upwards",
            MotionClass::Downwards => "downwards",
            MotionClass::TransLeft | MotionClass::RotLeft => "left",
            MotionClass::TransRight | MotionClass::RotRight => "right",
        }
    }

    fn label(self) -> &'static str {
        match self {
            MotionClass::Upwards => "translation.upwards",
            MotionClass::Downwards => "translation.downwards",
            MotionClass::TransLeft => "translation.left",
            MotionClass::TransRight => "translation.right",
            MotionClass::RotLeft => "rotation.left",
            MotionClass::RotRight => "rotation.right",
        }
    }
}

/// Token-to-class evidence map plus per-class verb phrases and object
/// synonyms. Ships as an editable TOML asset; see the asset header for the
/// invariants the loader enforces.
#[derive(Debug, Clone)]
pub struct DirectionLexicon {
    classes: HashMap<String, BTreeSet<MotionClass>>,
    verbs: HashMap<MotionClass, Vec<String>>,
    objects: HashMap<String, Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DirectionFile {
    translation: TranslationTable,
    rotation: RotationTable,
    #[serde(default)]
    objects: BTreeMap<String, Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TranslationTable {
    upwards: ClassEntry,
    downwards: ClassEntry,
    left: ClassEntry,
    right: ClassEntry,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RotationTable {
    left: ClassEntry,
    right: ClassEntry,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassEntry {
    words: Vec<String>,
    #[serde(default)]
    verbs: Vec<String>,
}

/// The synonym lexicon shipped with the crate.
pub const DEFAULT_DIRECTION_LEXICON: &str = include_str!("../assets/direction_lexicon.toml");

impl DirectionLexicon {
    /// Parses and validates the shipped asset.
    pub fn shipped() -> Self {
        Self::from_toml_str(DEFAULT_DIRECTION_LEXICON).expect("shipped lexicon asset is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: DirectionFile = toml::from_str(text)
            .map_err(|e| Error::Config(format!("direction lexicon parse error: {e}")))?;
        let entries = [
            (MotionClass::Upwards, file.translation.upwards),
            (MotionClass::Downwards, file.translation.downwards),
            (MotionClass::TransLeft, file.translation.left),
            (MotionClass::TransRight, file.translation.right),
            (MotionClass::RotLeft, file.rotation.left),
            (MotionClass::RotRight, file.rotation.right),
        ];
        let mut classes: HashMap<String, BTreeSet<MotionClass>> = HashMap::new();
        let mut verbs = HashMap::new();
        for (class, entry) in entries {
            if entry.words.is_empty() {
                return Err(Error::Config(format!("{} has an empty word list", class.label())));
            }
            let mut words = BTreeSet::new();
            for word in &entry.words {
                let word = word.to_lowercase();
                classes.entry(word.clone()).or_default().insert(class);
                words.insert(word);
            }
            if !words.contains(class.anchor()) {
                return Err(Error::Config(format!(
                    "{} must contain the grammar word {:?}",
                    class.label(),
                    class.anchor()
                )));
            }
            for phrase in &entry.verbs {
                let covered = tokenize(phrase).iter().any(|t| words.contains(t));
                if !covered {
                    return Err(Error::Config(format!(
                        "{} verb {phrase:?} contains none of the class's words",
                        class.label()
                    )));
                }
            }
            verbs.insert(class, entry.verbs);
        }
        let objects = file
            .objects
            .into_iter()
            .map(|(k, v)| (k.to_lowercase(), v.into_iter().map(|s| s.to_lowercase()).collect()))
            .collect();
        Ok(DirectionLexicon { classes, verbs, objects })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Classes a normalized token gives evidence for; empty when neutral.
    pub fn classes_of(&self, token: &str) -> BTreeSet<MotionClass> {
        self.classes.get(token).cloned().unwrap_or_default()
    }

    fn verb_options(&self, class: MotionClass) -> &[String] {
        self.verbs.get(&class).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The object name itself plus any registered synonyms.
    fn object_candidates<'a>(&'a self, name: &'a str) -> Vec<String> {
        let lowered = name.to_lowercase();
        let mut all = vec![lowered.clone()];
        if let Some(syns) = self.objects.get(&lowered) {
            all.extend(syns.iter().cloned());
        }
        all
    }
}

/// Screening outcome for one paraphrase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScreenVerdict {
    Accepted,
    Rejected(RejectReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    /// Nothing left after tokenization.
    Empty,
    ObjectMissing,
    /// A direction slot's class has no evidence word in the paraphrase.
    DirectionMissing,
    DirectionContradiction,
    RotationContradiction,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::Empty => "empty",
            RejectReason::ObjectMissing => "object-missing",
            RejectReason::DirectionMissing => "direction-missing",
            RejectReason::DirectionContradiction => "direction-contradiction",
            RejectReason::RotationContradiction => "rotation-contradiction",
        }
    }
}

fn word_matches(token: &str, word: &str) -> bool {
    token == word || (token.len() == word.len() + 1 && token.starts_with(word) && token.ends_with('s'))
}

fn phrase_present(tokens: &[String], phrase: &str) -> bool {
    let words: Vec<&str> = phrase.split_whitespace().collect();
    if words.is_empty() || tokens.len() < words.len() {
        return false;
    }
    tokens.windows(words.len()).any(|win| {
        win.iter().zip(&words).all(|(tok, word)| word_matches(tok, word))
    })
}

/// Factual-consistency screen.
///
/// Checks, in order: non-empty text; the object (or a lexicon synonym)
/// appears; no token asserts a class opposite to a licensed class without
/// itself being licensed; every translation-direction slot has an evidence
/// word. Licensed classes are those of the original caption's own tokens,
/// so a position word like "left" licenses leftness even when the motion
/// goes right, and the identity paraphrase always passes. Contradictions
/// are reported before omissions because asserting the reverse of the true
/// motion is the more specific failure.
pub fn screen_consistency(
    original: &MotionCaption,
    paraphrase: &str,
    lexicon: &DirectionLexicon,
) -> ScreenVerdict {
    let tokens = tokenize(paraphrase);
    if tokens.is_empty() {
        return ScreenVerdict::Rejected(RejectReason::Empty);
    }

    let object_ok = lexicon
        .object_candidates(&original.slots.object)
        .iter()
        .any(|candidate| phrase_present(&tokens, candidate));
    if !object_ok {
        return ScreenVerdict::Rejected(RejectReason::ObjectMissing);
    }

    let licensed: BTreeSet<MotionClass> =
        tokenize(&original.rendered).iter().flat_map(|t| lexicon.classes_of(t)).collect();
    let opposed: BTreeSet<MotionClass> = licensed.iter().map(|c| c.opposite()).collect();
    for token in &tokens {
        let classes = lexicon.classes_of(token);
        if classes.is_empty() || !classes.is_disjoint(&licensed) {
            continue;
        }
        let bad: Vec<MotionClass> = classes.intersection(&opposed).copied().collect();
        if bad.is_empty() {
            continue;
        }
        return if bad.iter().any(|c| c.is_translation()) {
            ScreenVerdict::Rejected(RejectReason::DirectionContradiction)
        } else {
            ScreenVerdict::Rejected(RejectReason::RotationContradiction)
        };
    }

    let required: BTreeSet<MotionClass> = original
        .slots
        .segments
        .iter()
        .filter_map(|seg| seg.direction.map(MotionClass::of_direction))
        .collect();
    for &class in &required {
        let present = tokens.iter().any(|t| lexicon.classes_of(t).contains(&class));
        if !present {
            return ScreenVerdict::Rejected(RejectReason::DirectionMissing);
        }
    }
    ScreenVerdict::Accepted
}

/// The two-part chat prompt: a fixed preamble and a user turn with
/// `{object}` and `{caption}` placeholders.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub system_preamble: String,
    pub user_turn: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            system_preamble: "A chat between a curious user and an artificial intelligence \
                              assistant. The assistant gives helpful, detailed, and polite \
                              answers to the user's questions."
                .into(),
            user_turn: "Rephrase this video caption using verbs related to {object} to \
                        describe the motion: {caption}"
                .into(),
        }
    }
}

impl PromptTemplate {
    /// The instruction turn with both placeholders substituted.
    pub fn render_user_turn(&self, object_name: &str, caption: &str) -> Result<String> {
        if object_name.trim().is_empty() || caption.trim().is_empty() {
            return Err(Error::Argument("prompt needs a non-empty object name and caption".into()));
        }
        Ok(self.user_turn.replace("{object}", object_name).replace("{caption}", caption))
    }

    /// The full raw-completion prompt, ending in "ASSISTANT:".
    pub fn render_full(&self, object_name: &str, caption: &str) -> Result<String> {
        let turn = self.render_user_turn(object_name, caption)?;
        Ok(format!(
            "{}\nUSER: Hello!\nASSISTANT: Hi!</s>\nUSER: {}\nASSISTANT:",
            self.system_preamble, turn
        ))
    }
}

/// Renders the default prompt for an (object, caption) pair.
pub fn render_prompt(object_name: &str, caption: &str) -> Result<String> {
    PromptTemplate::default().render_full(object_name, caption)
}

/// A produced paraphrase with its screening verdict. `latency_ms` is
/// wall-clock and informational only; it is never persisted.
#[derive(Debug, Clone)]
pub struct ParaphraseResult {
    pub text: String,
    pub verdict: ScreenVerdict,
    pub model_id: String,
    pub latency_ms: u64,
}

enum Mode {
    Offline,
    Http(HttpEndpoint),
}

/// Paraphrase front end: offline rewriter or HTTP endpoint, plus the
/// screen, behind one call.
pub struct Gateway {
    mode: Mode,
    lexicon: DirectionLexicon,
    template: PromptTemplate,
    concurrency: usize,
}

impl Gateway {
    pub fn from_config(cfg: &ParaphraseConfig) -> Result<Gateway> {
        let lexicon = match &cfg.lexicon_path {
            Some(path) => DirectionLexicon::load(Path::new(path))?,
            None => DirectionLexicon::shipped(),
        };
        let mode = if cfg.offline {
            Mode::Offline
        } else {
            if cfg.endpoint_url.trim().is_empty() {
                return Err(Error::Config(
                    "paraphrase.endpoint_url is required when offline = false".into(),
                ));
            }
            Mode::Http(HttpEndpoint::new(cfg)?)
        };
        Ok(Gateway { mode, lexicon, template: PromptTemplate::default(), concurrency: cfg.concurrency })
    }

    /// Offline gateway over the shipped lexicon; handy default.
    pub fn offline() -> Gateway {
        Gateway {
            mode: Mode::Offline,
            lexicon: DirectionLexicon::shipped(),
            template: PromptTemplate::default(),
            concurrency: 1,
        }
    }

    pub fn lexicon(&self) -> &DirectionLexicon {
        &self.lexicon
    }

    pub fn model_id(&self) -> &str {
        match &self.mode {
            Mode::Offline => "offline-synonym-rewriter",
            Mode::Http(ep) => &ep.model,
        }
    }

    /// Produces and screens one paraphrase. `Err` only on a config problem
    /// or exhausted transport retries; a bad completion comes back as a
    /// rejected result instead.
    pub fn paraphrase(&self, caption: &MotionCaption) -> Result<ParaphraseResult> {
        let start = Instant::now();
        let text = match &self.mode {
            Mode::Offline => offline_rewrite(caption, &self.lexicon),
            Mode::Http(ep) => {
                ep.complete(&self.template, &caption.slots.object, &caption.rendered)?
            }
        };
        let verdict = screen_consistency(caption, &text, &self.lexicon);
        Ok(ParaphraseResult {
            text,
            verdict,
            model_id: self.model_id().to_owned(),
            latency_ms: start.elapsed().as_millis() as u64,
        })
    }

    /// Paraphrases a batch with at most `concurrency` requests in flight;
    /// the output order matches the input order exactly.
    pub fn paraphrase_batch(&self, captions: &[MotionCaption]) -> Vec<Result<ParaphraseResult>> {
        let workers = self.concurrency.max(1).min(captions.len().max(1));
        if workers <= 1 {
            return captions.iter().map(|c| self.paraphrase(c)).collect();
        }
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<Result<ParaphraseResult>>>> =
            Mutex::new((0..captions.len()).map(|_| None).collect());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= captions.len() {
                        break;
                    }
                    let r = self.paraphrase(&captions[i]);
                    results.lock().unwrap()[i] = Some(r);
                });
            }
        });
        results
            .into_inner()
            .unwrap()
            .into_iter()
            .map(|r| r.expect("every batch index is filled"))
            .collect()
    }
}

struct HttpEndpoint {
    url: String,
    shape: ApiShape,
    model: String,
    temperature: f64,
    max_tokens: u32,
    retry_max: u32,
    retry_base_ms: u64,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

enum SendError {
    /// Worth retrying: transport failure, 408/429, or any 5xx.
    Transient(String),
    Fatal(String),
}

impl HttpEndpoint {
    fn new(cfg: &ParaphraseConfig) -> Result<HttpEndpoint> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| Error::Gateway(format!("http client: {e}")))?;
        Ok(HttpEndpoint {
            url: cfg.endpoint_url.clone(),
            shape: cfg.api_shape,
            model: cfg.model.clone(),
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
            retry_max: cfg.retry_max,
            retry_base_ms: cfg.retry_base_ms,
            api_key: std::env::var("KINETEXT_API_KEY").ok().filter(|k| !k.is_empty()),
            client,
        })
    }

    fn request_body(
        &self,
        template: &PromptTemplate,
        object_name: &str,
        caption: &str,
    ) -> Result<serde_json::Value> {
        Ok(match self.shape {
            ApiShape::Chat => serde_json::json!({
                "model": self.model,
                "temperature": self.temperature,
                "max_tokens": self.max_tokens,
                "messages": [
                    {"role": "system", "content": template.system_preamble},
                    {"role": "user", "content": "Hello!"},
                    {"role": "assistant", "content": "Hi!"},
                    {"role": "user", "content": template.render_user_turn(object_name, caption)?},
                ],
            }),
            ApiShape::Completion => serde_json::json!({
                "model": self.model,
                "temperature": self.temperature,
                "max_tokens": self.max_tokens,
                "prompt": template.render_full(object_name, caption)?,
                "stop": ["</s>"],
            }),
        })
    }

    fn complete(
        &self,
        template: &PromptTemplate,
        object_name: &str,
        caption: &str,
    ) -> Result<String> {
        let body = self.request_body(template, object_name, caption)?;
        let mut delay = self.retry_base_ms;
        let mut attempt = 0u32;
        loop {
            match self.send_once(&body) {
                Ok(raw) => return Ok(extract_completion(&raw)),
                Err(SendError::Fatal(msg)) => {
                    return Err(Error::Gateway(format!("endpoint {}: {msg}", self.url)))
                }
                Err(SendError::Transient(msg)) => {
                    if attempt >= self.retry_max {
                        return Err(Error::Gateway(format!(
                            "endpoint {}: giving up after {} attempts: {msg}",
                            self.url,
                            attempt + 1
                        )));
                    }
                    std::thread::sleep(Duration::from_millis(delay));
                    delay = (delay * 2).min(8_000);
                    attempt += 1;
                }
            }
        }
    }

    fn send_once(&self, body: &serde_json::Value) -> std::result::Result<String, SendError> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let response = req.send().map_err(|e| {
            if e.is_builder() {
                SendError::Fatal(format!("request build failed: {e}"))
            } else {
                SendError::Transient(format!("transport: {e}"))
            }
        })?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| SendError::Transient(format!("reading response: {e}")))?;
        if status.is_success() {
            return self.extract(&text).ok_or_else(|| {
                SendError::Fatal(format!("unexpected response shape: {}", snippet(&text)))
            });
        }
        let msg = format!("status {status}: {}", snippet(&text));
        if status.as_u16() == 408 || status.as_u16() == 429 || status.is_server_error() {
            Err(SendError::Transient(msg))
        } else {
            Err(SendError::Fatal(msg))
        }
    }

    fn extract(&self, response_text: &str) -> Option<String> {
        let v: serde_json::Value = serde_json::from_str(response_text).ok()?;
        let choice = v.get("choices")?.get(0)?;
        let content = match self.shape {
            ApiShape::Chat => choice.get("message")?.get("content")?,
            ApiShape::Completion => choice.get("text")?,
        };
        content.as_str().map(str::to_owned)
    }
}

fn snippet(text: &str) -> String {
    let t = text.trim();
    if t.len() > 200 {
        format!("{}...", &t[..200])
    } else {
        t.to_owned()
    }
}

/// Keeps only the tokens after the final "ASSISTANT:" echo, if any, and
/// strips end-of-sequence markers.
fn extract_completion(raw: &str) -> String {
    let after = raw.rsplit_once("ASSISTANT:").map(|(_, a)| a).unwrap_or(raw);
    after.trim().trim_end_matches("</s>").trim().to_owned()
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(text: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Deterministic index into `n` options: mixes the caption hash with a
/// per-slot salt so different slots of one caption vary independently.
fn pick(hash: u64, salt: u64, n: usize) -> usize {
    debug_assert!(n > 0);
    let mixed = (hash ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15)).wrapping_mul(FNV_PRIME);
    ((mixed >> 16) % n as u64) as usize
}

fn pick_str<'a>(options: &'a [&'a str], hash: u64, salt: u64) -> &'a str {
    options[pick(hash, salt, options.len())]
}

/// The zero-network paraphraser: a slot-aware synonym rewrite whose every
/// choice is keyed by an FNV-1a hash of the rendered caption, so identical
/// captions always rewrite identically. Motion verbs come from the same
/// lexicon the screen checks against, which keeps the output self-consistent.
pub fn offline_rewrite(caption: &MotionCaption, lexicon: &DirectionLexicon) -> String {
    let slots = &caption.slots;
    let h = fnv1a(&caption.rendered);
    let mut out = String::new();
    let push = |s: &str, out: &mut String| {
        if s.is_empty() {
            return;
        }
        if !out.is_empty() && !s.starts_with(',') {
            out.push(' ');
        }
        out.push_str(s);
    };

    push(pick_str(&["The", "A"], h, 1), &mut out);
    match slots.size {
        Some(crate::caption::SizeWord::Small) => {
            push(pick_str(&["small", "little", "tiny"], h, 2), &mut out)
        }
        Some(crate::caption::SizeWord::Big) => {
            push(pick_str(&["big", "large", "sizable"], h, 2), &mut out)
        }
        None => {}
    }
    push(&slots.object, &mut out);

    let pos = slots.position.as_str();
    let pos_options = [
        format!("in the {pos}"),
        format!("on the {pos} side of the frame"),
        format!("in the {pos} of the view"),
    ];
    let pos_phrase = &pos_options[pick(h, 3, pos_options.len())];

    if slots.segments.is_empty() {
        push(pick_str(&["sits", "rests", "stays"], h, 4), &mut out);
        push(pos_phrase, &mut out);
        return out;
    }
    push(pos_phrase, &mut out);

    for (i, seg) in slots.segments.iter().enumerate() {
        let salt = 10 + 8 * i as u64;
        if i > 0 {
            push(
                pick_str(&[", then it", ", after which it", ", and next it"], h, salt),
                &mut out,
            );
        } else if slots.segments.len() > 1 {
            push("first", &mut out);
        }
        if let Some(dir) = seg.direction {
            let verbs = lexicon.verb_options(MotionClass::of_direction(dir));
            debug_assert!(!verbs.is_empty(), "shipped lexicon has verbs for every class");
            push(&verbs[pick(h, salt + 1, verbs.len())], &mut out);
            match seg.speed {
                Some(crate::caption::SpeedWord::Quickly) => {
                    push(pick_str(&["rapidly", "swiftly", "at speed"], h, salt + 2), &mut out)
                }
                Some(crate::caption::SpeedWord::Slowly) => {
                    push(pick_str(&["gradually", "gently", "at a crawl"], h, salt + 2), &mut out)
                }
                None => {}
            }
            if seg.diagonal {
                push(pick_str(&["diagonally", "at an angle", "on a diagonal"], h, salt + 3), &mut out);
            }
            match seg.distance {
                Some(crate::caption::DistanceWord::ALot) => push(
                    pick_str(&["a long way", "far across the frame"], h, salt + 4),
                    &mut out,
                ),
                Some(crate::caption::DistanceWord::ALittle) => {
                    push(pick_str(&["a short way", "only a bit"], h, salt + 4), &mut out)
                }
                None => {}
            }
        }
        if let Some(rot) = seg.rot_direction {
            push("while", &mut out);
            let verbs = lexicon.verb_options(MotionClass::of_rotation(rot));
            debug_assert!(!verbs.is_empty());
            push(&verbs[pick(h, salt + 5, verbs.len())], &mut out);
            match seg.rot_amount {
                Some(crate::caption::RotAmountWord::Slightly) => {
                    push(pick_str(&["a touch", "mildly"], h, salt + 6), &mut out)
                }
                Some(crate::caption::RotAmountWord::Significantly) => {
                    push(pick_str(&["sharply", "a great deal"], h, salt + 6), &mut out)
                }
                None => {}
            }
        }
    }
    out
}
