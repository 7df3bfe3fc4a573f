//! Corpus ingestion, vocabulary construction, and synthetic data.
//!
//! A corpus is a flat list of labeled utterances in one of two shapes:
//! phone-token sequences or dense T x D frame matrices. Either way every
//! utterance carries a speaker id, which is what the speaker-disjoint
//! protocol keys on. Loaded corpora are immutable and freely shareable.

mod io;
mod synth;
mod vocab;

pub use synth::{synth_corpus, SynthSpec};
pub use vocab::{Vocabulary, PAD_INDEX, PAD_TOKEN, UNK_INDEX, UNK_TOKEN};

use crate::error::{Error, Result};
use crate::grad::Tensor;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

/// Input representation: phone tokens or real-valued frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Phones,
    Features,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Phones => "phones",
            Mode::Features => "features",
        })
    }
}

/// One recording as a sequence of phone tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct PhoneUtterance {
    pub id: String,
    pub speaker: String,
    pub intent: String,
    pub phones: Vec<String>,
}

/// One recording as a T x D matrix of frame features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureUtterance {
    pub id: String,
    pub speaker: String,
    pub intent: String,
    pub frames: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Utterance {
    Phones(PhoneUtterance),
    Features(FeatureUtterance),
}

impl Utterance {
    pub fn id(&self) -> &str {
        match self {
            Utterance::Phones(u) => &u.id,
            Utterance::Features(u) => &u.id,
        }
    }

    pub fn speaker(&self) -> &str {
        match self {
            Utterance::Phones(u) => &u.speaker,
            Utterance::Features(u) => &u.speaker,
        }
    }

    pub fn intent(&self) -> &str {
        match self {
            Utterance::Phones(u) => &u.intent,
            Utterance::Features(u) => &u.intent,
        }
    }

    fn mode(&self) -> Mode {
        match self {
            Utterance::Phones(_) => Mode::Phones,
            Utterance::Features(_) => Mode::Features,
        }
    }
}

/// An immutable single-mode utterance collection with a speaker -> intent
/// index derived at construction.
#[derive(Debug, Clone)]
pub struct Corpus {
    mode: Mode,
    utterances: Vec<Utterance>,
    index: BTreeMap<String, BTreeMap<String, Vec<usize>>>,
}

impl Corpus {
    /// Validate and index a list of utterances. All must share one mode,
    /// ids must be unique, phone sequences non-empty, frames finite.
    pub fn from_utterances(utterances: Vec<Utterance>) -> Result<Self> {
        let Some(first) = utterances.first() else {
            return Err(Error::EmptyInput("corpus"));
        };
        let mode = first.mode();
        let mut ids = HashSet::new();
        let mut index: BTreeMap<String, BTreeMap<String, Vec<usize>>> = BTreeMap::new();
        for (pos, utt) in utterances.iter().enumerate() {
            if utt.mode() != mode {
                return Err(Error::Mode(format!(
                    "utterance {:?} is {} in a {} corpus",
                    utt.id(),
                    utt.mode(),
                    mode
                )));
            }
            if !ids.insert(utt.id().to_string()) {
                return Err(Error::Duplicate(utt.id().to_string()));
            }
            match utt {
                Utterance::Phones(u) if u.phones.is_empty() => {
                    return Err(Error::EmptyInput("phone sequence"));
                }
                Utterance::Features(u) => {
                    if u.frames.rank() != 2 {
                        return Err(Error::shape("corpus frames", u.frames.shape(), &[0, 0]));
                    }
                    if !u.frames.is_finite() {
                        return Err(Error::Numeric(format!("frames of {:?}", u.id())));
                    }
                }
                _ => {}
            }
            index
                .entry(utt.speaker().to_string())
                .or_default()
                .entry(utt.intent().to_string())
                .or_default()
                .push(pos);
        }
        Ok(Corpus {
            mode,
            utterances,
            index,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn utterance(&self, pos: usize) -> &Utterance {
        &self.utterances[pos]
    }

    /// Distinct speakers, sorted.
    pub fn speakers(&self) -> Vec<&str> {
        self.index.keys().map(String::as_str).collect()
    }

    /// Distinct intents, sorted.
    pub fn intents(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .index
            .values()
            .flat_map(|by_intent| by_intent.keys().map(String::as_str))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn has_speaker(&self, speaker: &str) -> bool {
        self.index.contains_key(speaker)
    }

    pub fn has_intent(&self, intent: &str) -> bool {
        self.index
            .values()
            .any(|by_intent| by_intent.contains_key(intent))
    }

    /// Positions of this speaker's utterances for one intent, in corpus order.
    pub fn positions_for(&self, speaker: &str, intent: &str) -> &[usize] {
        self.index
            .get(speaker)
            .and_then(|by_intent| by_intent.get(intent))
            .map_or(&[], Vec::as_slice)
    }

    /// Feature dimension of a feature-mode corpus.
    pub fn feature_dim(&self) -> Option<usize> {
        match &self.utterances[0] {
            Utterance::Features(u) => Some(u.frames.shape()[1]),
            Utterance::Phones(_) => None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::load(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::save(self, path)
    }

    /// Canonical JSONL serialization, one record per line.
    pub fn to_jsonl(&self) -> Result<String> {
        io::to_jsonl(self)
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn digest(&self) -> Result<String> {
        use sha2::{Digest, Sha256};
        Ok(hex::encode(Sha256::digest(self.to_jsonl()?.as_bytes())))
    }
}
