//! Caption-content diagnostics: part-of-speech profiles and noun-set
//! uniqueness.
//!
//! There is no statistical tagger here. Words are tagged through an
//! editable lexicon with an "other" bucket for anything unknown, and
//! captions produced by the in-crate grammar can be tagged exactly through
//! their slot records instead of their strings. The two paths agree on
//! generated captions as long as the object names are registered as nouns,
//! which [`TagLexicon::register_object`] does.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::Deserialize;

use crate::caption::{render_tokens, CaptionSlots, Token, TokenKind};
use crate::error::{Error, Result};

/// Part-of-speech classes tracked by the profile. Everything that is not
/// one of the five content classes is `Other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PosTag {
    Noun,
    Adjective,
    Verb,
    Adverb,
    Adposition,
    Other,
}

impl PosTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            PosTag::Noun => "noun",
            PosTag::Adjective => "adjective",
            PosTag::Verb => "verb",
            PosTag::Adverb => "adverb",
            PosTag::Adposition => "adposition",
            PosTag::Other => "other",
        }
    }

    fn from_name(name: &str) -> Option<PosTag> {
        Some(match name {
            "noun" => PosTag::Noun,
            "adjective" => PosTag::Adjective,
            "verb" => PosTag::Verb,
            "adverb" => PosTag::Adverb,
            "adposition" => PosTag::Adposition,
            "other" => PosTag::Other,
            _ => return None,
        })
    }
}

/// Word-to-tag map plus a plural-to-lemma map.
///
/// [`TagLexicon::builtin`] covers the closed grammar vocabulary and can
/// never lose an entry; extensions loaded on top only add or override
/// general words. Tag conventions for the grammar are fixed: "moves" and
/// "rotating" are verbs, "small"/"big" adjectives, "in" an adposition,
/// "upwards"/"downwards" and the "-ly" qualifiers adverbs, while "left",
/// "right" and the grid-cell words count as other.
#[derive(Debug, Clone)]
pub struct TagLexicon {
    words: HashMap<String, PosTag>,
    plurals: HashMap<String, String>,
}

/// On-disk shape of a lexicon extension file.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconFile {
    #[serde(default)]
    words: BTreeMap<String, String>,
    #[serde(default)]
    plurals: BTreeMap<String, String>,
}

const BUILTIN_WORDS: &[(&str, PosTag)] = &[
    ("a", PosTag::Other),
    ("the", PosTag::Other),
    ("in", PosTag::Adposition),
    ("small", PosTag::Adjective),
    ("big", PosTag::Adjective),
    ("top-left", PosTag::Other),
    ("top", PosTag::Other),
    ("top-right", PosTag::Other),
    ("left", PosTag::Other),
    ("center", PosTag::Other),
    ("right", PosTag::Other),
    ("bottom-left", PosTag::Other),
    ("bottom", PosTag::Other),
    ("bottom-right", PosTag::Other),
    ("moves", PosTag::Verb),
    ("rotating", PosTag::Verb),
    ("slowly", PosTag::Adverb),
    ("quickly", PosTag::Adverb),
    ("diagonally", PosTag::Adverb),
    ("upwards", PosTag::Adverb),
    ("downwards", PosTag::Adverb),
    ("little", PosTag::Other),
    ("lot", PosTag::Other),
    ("while", PosTag::Other),
    ("first", PosTag::Other),
    ("before", PosTag::Other),
    ("it", PosTag::Other),
];

/// General-vocabulary extensions shipped with the crate; see the file
/// header for the editing contract.
pub const DEFAULT_EXTENSIONS: &str = include_str!("../assets/tag_lexicon.toml");

impl TagLexicon {
    /// The closed grammar vocabulary only.
    pub fn builtin() -> Self {
        let words = BUILTIN_WORDS.iter().map(|&(w, t)| (w.to_owned(), t)).collect();
        TagLexicon { words, plurals: HashMap::new() }
    }

    /// Builtin plus the shipped general-vocabulary extension file.
    pub fn extended() -> Self {
        let mut lex = Self::builtin();
        lex.add_extensions_toml(DEFAULT_EXTENSIONS).expect("shipped lexicon asset parses");
        lex
    }

    /// Merges extension entries parsed from TOML text.
    pub fn add_extensions_toml(&mut self, text: &str) -> Result<()> {
        let file: LexiconFile = toml::from_str(text)
            .map_err(|e| Error::Config(format!("lexicon parse error: {e}")))?;
        for (word, tag_name) in file.words {
            let tag = PosTag::from_name(&tag_name).ok_or_else(|| {
                Error::Config(format!("lexicon entry {word:?}: unknown tag {tag_name:?}"))
            })?;
            self.words.insert(word.to_lowercase(), tag);
        }
        for (plural, lemma) in file.plurals {
            self.plurals.insert(plural.to_lowercase(), lemma.to_lowercase());
        }
        Ok(())
    }

    /// Merges extension entries from a TOML file on disk.
    pub fn load_extensions(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.add_extensions_toml(&text)
    }

    /// Registers every word of an object name as a noun (existing entries
    /// win) along with a regular "-s" plural for single-word names.
    pub fn register_object(&mut self, name: &str) {
        for word in name.split_whitespace() {
            let word = word.to_lowercase();
            let plural = format!("{word}s");
            self.plurals.entry(plural.clone()).or_insert_with(|| word.clone());
            self.words.entry(plural).or_insert(PosTag::Noun);
            self.words.entry(word).or_insert(PosTag::Noun);
        }
    }

    /// Looks up a token (case-insensitive, punctuation-trimmed); `None`
    /// means unknown.
    pub fn tag(&self, raw: &str) -> Option<PosTag> {
        let word = normalize_token(raw)?;
        self.words.get(&word).copied()
    }

    /// Tags one grammar token from a slot record. Object words fall back
    /// to noun when the lexicon does not know them; all other slots are
    /// covered by the builtin vocabulary.
    pub fn tag_token(&self, token: &Token) -> PosTag {
        let fallback = if token.kind == TokenKind::Object { PosTag::Noun } else { PosTag::Other };
        self.tag(&token.text).unwrap_or(fallback)
    }

    /// Lemma used for noun-set membership: lowercased, plural-mapped.
    pub fn lemma(&self, raw: &str) -> Option<String> {
        let word = normalize_token(raw)?;
        Some(self.plurals.get(&word).cloned().unwrap_or(word))
    }
}

impl Default for TagLexicon {
    fn default() -> Self {
        Self::extended()
    }
}

/// Lowercases and trims leading/trailing punctuation; `None` when nothing
/// remains. Internal hyphens survive, so "top-left" is one token.
pub(crate) fn normalize_token(raw: &str) -> Option<String> {
    let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
    if trimmed.is_empty() {
        None
    } else {
        Some(trimmed.to_lowercase())
    }
}

pub(crate) fn tokenize(caption: &str) -> Vec<String> {
    caption.split_whitespace().filter_map(normalize_token).collect()
}

/// Per-caption average counts of the five content classes plus the unknown
/// bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct PosProfile {
    pub nouns: f64,
    pub adjectives: f64,
    pub verbs: f64,
    pub adverbs: f64,
    pub adpositions: f64,
    pub other: f64,
    /// Number of non-empty captions the averages are over.
    pub captions: usize,
}

impl PosProfile {
    fn from_counts(counts: &HashMap<PosTag, u64>, captions: usize) -> PosProfile {
        let avg = |tag: PosTag| counts.get(&tag).copied().unwrap_or(0) as f64 / captions as f64;
        PosProfile {
            nouns: avg(PosTag::Noun),
            adjectives: avg(PosTag::Adjective),
            verbs: avg(PosTag::Verb),
            adverbs: avg(PosTag::Adverb),
            adpositions: avg(PosTag::Adposition),
            other: avg(PosTag::Other),
            captions,
        }
    }
}

/// Tags caption strings through the lexicon and averages the class counts.
/// Empty captions are filtered; an input with no usable caption is an
/// argument error.
pub fn pos_profile<S: AsRef<str>>(captions: &[S], lexicon: &TagLexicon) -> Result<PosProfile> {
    let mut counts = HashMap::new();
    let mut kept = 0usize;
    for caption in captions {
        let tokens = tokenize(caption.as_ref());
        if tokens.is_empty() {
            continue;
        }
        kept += 1;
        for token in tokens {
            *counts.entry(lexicon.tag(&token).unwrap_or(PosTag::Other)).or_insert(0) += 1;
        }
    }
    if kept == 0 {
        return Err(Error::Argument("no non-empty captions to profile".into()));
    }
    Ok(PosProfile::from_counts(&counts, kept))
}

/// Tags grammar-generated captions exactly through their slot records.
pub fn pos_profile_slots(records: &[CaptionSlots], lexicon: &TagLexicon) -> Result<PosProfile> {
    if records.is_empty() {
        return Err(Error::Argument("no slot records to profile".into()));
    }
    let mut counts = HashMap::new();
    for slots in records {
        for token in render_tokens(slots) {
            if token.kind == TokenKind::Comma {
                continue;
            }
            *counts.entry(lexicon.tag_token(&token)).or_insert(0) += 1;
        }
    }
    Ok(PosProfile::from_counts(&counts, records.len()))
}

/// Fraction of captions whose noun-lemma set occurs exactly once in the
/// corpus. Captions without nouns share the empty set.
pub fn noun_uniqueness<S: AsRef<str>>(captions: &[S], lexicon: &TagLexicon) -> Result<f64> {
    let mut sets: Vec<BTreeSet<String>> = Vec::new();
    for caption in captions {
        let tokens = tokenize(caption.as_ref());
        if tokens.is_empty() {
            continue;
        }
        let nouns = tokens
            .iter()
            .filter(|t| lexicon.tag(t) == Some(PosTag::Noun))
            .filter_map(|t| lexicon.lemma(t))
            .collect();
        sets.push(nouns);
    }
    if sets.is_empty() {
        return Err(Error::Argument("no non-empty captions to measure".into()));
    }
    let mut freq: HashMap<&BTreeSet<String>, usize> = HashMap::new();
    for set in &sets {
        *freq.entry(set).or_insert(0) += 1;
    }
    let unique = sets.iter().filter(|s| freq[*s] == 1).count();
    Ok(unique as f64 / sets.len() as f64)
}
