//! Phone-token vocabulary with reserved PAD and UNK slots.

use super::Utterance;
use crate::error::{Error, Result};
use std::collections::{BTreeMap, HashMap};

pub const PAD_INDEX: usize = 0;
pub const UNK_INDEX: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Bijective token <-> index map built from training utterances only.
/// Tokens are indexed in first-occurrence order starting at 2; anything
/// unseen at training time encodes to UNK, which preserves sequence length.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    lookup: HashMap<String, usize>,
    frequencies: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Scan phone-mode utterances in order. Feature-mode input is a mode
    /// error: there is nothing to tokenize.
    pub fn build<'a>(utterances: impl IntoIterator<Item = &'a Utterance>) -> Result<Self> {
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut lookup = HashMap::new();
        let mut frequencies = BTreeMap::new();
        for utt in utterances {
            let Utterance::Phones(u) = utt else {
                return Err(Error::Mode(
                    "vocabulary requires phone-mode utterances".into(),
                ));
            };
            for phone in &u.phones {
                if phone == PAD_TOKEN || phone == UNK_TOKEN {
                    return Err(Error::Config(format!(
                        "phone token {phone:?} collides with a reserved vocabulary entry"
                    )));
                }
                *frequencies.entry(phone.clone()).or_insert(0) += 1;
                if !lookup.contains_key(phone) {
                    lookup.insert(phone.clone(), tokens.len());
                    tokens.push(phone.clone());
                }
            }
        }
        Ok(Vocabulary {
            tokens,
            lookup,
            frequencies,
        })
    }

    /// Total entries including PAD and UNK.
    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.lookup.get(token).copied().unwrap_or(UNK_INDEX)
    }

    pub fn encode(&self, phones: &[String]) -> Vec<usize> {
        phones.iter().map(|p| self.index_of(p)).collect()
    }

    /// Occurrence counts over the training utterances the vocabulary saw.
    pub fn frequencies(&self) -> &BTreeMap<String, usize> {
        &self.frequencies
    }

    /// Token -> index map for serialization, reserved entries included.
    pub fn to_index_map(&self) -> BTreeMap<String, usize> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect()
    }

    /// Rebuild from a serialized map; indices must be a permutation of
    /// 0..n with PAD and UNK in their reserved slots. Frequencies are not
    /// serialized and come back empty.
    pub fn from_index_map(map: &BTreeMap<String, usize>) -> Result<Self> {
        let mut tokens = vec![String::new(); map.len()];
        for (token, &idx) in map {
            if idx >= map.len() || !tokens[idx].is_empty() {
                return Err(Error::Config(format!(
                    "vocabulary indices must be a permutation of 0..{}",
                    map.len()
                )));
            }
            tokens[idx] = token.clone();
        }
        if tokens.len() < 2 || tokens[PAD_INDEX] != PAD_TOKEN || tokens[UNK_INDEX] != UNK_TOKEN {
            return Err(Error::Config(
                "vocabulary must reserve index 0 for PAD and 1 for UNK".into(),
            ));
        }
        let lookup = tokens
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Vocabulary {
            tokens,
            lookup,
            frequencies: BTreeMap::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PhoneUtterance;

    fn utt(id: &str, phones: &[&str]) -> Utterance {
        Utterance::Phones(PhoneUtterance {
            id: id.into(),
            speaker: "s1".into(),
            intent: "go".into(),
            phones: phones.iter().map(|s| s.to_string()).collect(),
        })
    }

    #[test]
    fn three_tokens_make_a_five_entry_vocabulary() {
        let utts = [utt("u1", &["a", "b"]), utt("u2", &["c", "a"])];
        let vocab = Vocabulary::build(&utts).unwrap();
        assert_eq!(vocab.size(), 5);
        assert_eq!(vocab.index_of("a"), 2);
        assert_eq!(vocab.index_of("b"), 3);
        assert_eq!(vocab.index_of("c"), 4);
    }

    #[test]
    fn unseen_token_encodes_to_unk() {
        let utts = [utt("u1", &["a", "b", "c"])];
        let vocab = Vocabulary::build(&utts).unwrap();
        assert_eq!(vocab.index_of("ʒ"), UNK_INDEX);
        assert_eq!(
            vocab.encode(&["a".into(), "ʒ".into(), "c".into()]),
            vec![2, 1, 4]
        );
    }

    #[test]
    fn frequencies_match_a_brute_force_count() {
        let utts = [
            utt("u1", &["a", "b", "a"]),
            utt("u2", &["b", "a"]),
            utt("u3", &["c"]),
        ];
        let vocab = Vocabulary::build(&utts).unwrap();

        // Independent recount straight off the utterance lists.
        let mut expected: BTreeMap<String, usize> = BTreeMap::new();
        for u in &utts {
            let Utterance::Phones(p) = u else { unreachable!() };
            for ph in &p.phones {
                *expected.entry(ph.clone()).or_insert(0) += 1;
            }
        }
        assert_eq!(vocab.frequencies(), &expected);
        assert_eq!(vocab.frequencies()["a"], 3);
    }

    #[test]
    fn feature_input_is_a_mode_error() {
        let feat = Utterance::Features(crate::corpus::FeatureUtterance {
            id: "f".into(),
            speaker: "s".into(),
            intent: "go".into(),
            frames: crate::grad::Tensor::zeros(vec![1, 2]),
        });
        assert!(matches!(
            Vocabulary::build(std::iter::once(&feat)),
            Err(Error::Mode(_))
        ));
    }

    #[test]
    fn index_map_round_trips() {
        let utts = [utt("u1", &["x", "y"])];
        let vocab = Vocabulary::build(&utts).unwrap();
        let rebuilt = Vocabulary::from_index_map(&vocab.to_index_map()).unwrap();
        assert_eq!(rebuilt.tokens, vocab.tokens);
        assert_eq!(rebuilt.index_of("y"), vocab.index_of("y"));
    }

    #[test]
    fn reserved_token_collision_is_rejected() {
        let utts = [utt("u1", &["<unk>"])];
        assert!(matches!(Vocabulary::build(&utts), Err(Error::Config(_))));
    }
}
