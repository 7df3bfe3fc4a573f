//! JSONL reading and writing for corpora.
//!
//! One object per line; phone mode carries `"phones": [str, ...]`, feature
//! mode carries `"dim"` plus `"frames"` as nested arrays. Blank lines are
//! malformed, not skipped, so that line numbers in errors always match the
//! file as stored.

use super::{Corpus, FeatureUtterance, Mode, PhoneUtterance, Utterance};
use crate::error::{Error, Result};
use crate::grad::Tensor;
use crate::jsonfmt;
use serde::Serialize;
use serde_json::Value;
use std::fs;
use std::io::Write;
use std::path::Path;

pub fn load(path: &Path) -> Result<Corpus> {
    from_jsonl(&fs::read_to_string(path)?)
}

pub fn from_jsonl(text: &str) -> Result<Corpus> {
    let mut utterances = Vec::new();
    let mut mode = None;
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            return Err(Error::Parse {
                line: lineno,
                message: "blank line (records must be contiguous)".into(),
            });
        }
        let utt = parse_record(line, lineno)?;
        match mode {
            None => mode = Some(utt.mode()),
            Some(m) if m != utt.mode() => {
                return Err(Error::Mode(format!(
                    "line {lineno}: {} record in a {} corpus",
                    utt.mode(),
                    m
                )));
            }
            Some(_) => {}
        }
        utterances.push(utt);
    }
    Corpus::from_utterances(utterances)
}

pub fn save(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(to_jsonl(corpus)?.as_bytes())?;
    Ok(())
}

pub fn to_jsonl(corpus: &Corpus) -> Result<String> {
    let mut out = String::new();
    for utt in corpus.utterances() {
        out.push_str(&record_to_json(utt)?);
        out.push('\n');
    }
    Ok(out)
}

#[derive(Serialize)]
struct PhoneRecord<'a> {
    id: &'a str,
    speaker: &'a str,
    intent: &'a str,
    phones: &'a [String],
}

#[derive(Serialize)]
struct FeatureRecord<'a> {
    id: &'a str,
    speaker: &'a str,
    intent: &'a str,
    dim: usize,
    frames: Vec<&'a [f64]>,
}

fn record_to_json(utt: &Utterance) -> Result<String> {
    let json = match utt {
        Utterance::Phones(u) => jsonfmt::to_string(&PhoneRecord {
            id: &u.id,
            speaker: &u.speaker,
            intent: &u.intent,
            phones: &u.phones,
        })?,
        Utterance::Features(u) => {
            let rows = u.frames.shape()[0];
            jsonfmt::to_string(&FeatureRecord {
                id: &u.id,
                speaker: &u.speaker,
                intent: &u.intent,
                dim: u.frames.shape()[1],
                frames: (0..rows).map(|r| u.frames.row_slice(r)).collect(),
            })?
        }
    };
    Ok(json)
}

fn parse_record(line: &str, lineno: usize) -> Result<Utterance> {
    let fail = |message: String| Error::Parse {
        line: lineno,
        message,
    };
    let value: Value =
        serde_json::from_str(line).map_err(|e| fail(format!("invalid JSON: {e}")))?;
    let Value::Object(map) = value else {
        return Err(fail("record must be a JSON object".into()));
    };

    for key in map.keys() {
        if !matches!(key.as_str(), "id" | "speaker" | "intent" | "phones" | "dim" | "frames") {
            return Err(fail(format!("unknown field {key:?}")));
        }
    }
    let get_str = |field: &str| -> Result<String> {
        match map.get(field) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(fail(format!("field {field:?} must be a string"))),
            None => Err(fail(format!("missing field {field:?}"))),
        }
    };
    let id = get_str("id")?;
    let speaker = get_str("speaker")?;
    let intent = get_str("intent")?;

    match (map.get("phones"), map.get("dim"), map.get("frames")) {
        (Some(phones), None, None) => {
            let Value::Array(items) = phones else {
                return Err(fail("field \"phones\" must be an array of strings".into()));
            };
            let mut tokens = Vec::with_capacity(items.len());
            for item in items {
                match item {
                    Value::String(s) => tokens.push(s.clone()),
                    _ => return Err(fail("phone tokens must be strings".into())),
                }
            }
            if tokens.is_empty() {
                return Err(fail("phone sequence must be non-empty".into()));
            }
            Ok(Utterance::Phones(PhoneUtterance {
                id,
                speaker,
                intent,
                phones: tokens,
            }))
        }
        (None, Some(dim), Some(frames)) => {
            let dim = dim
                .as_u64()
                .filter(|&d| d >= 1)
                .ok_or_else(|| fail("field \"dim\" must be a positive integer".into()))?
                as usize;
            let Value::Array(rows) = frames else {
                return Err(fail("field \"frames\" must be an array of rows".into()));
            };
            if rows.is_empty() {
                return Err(fail("frames must have at least one row".into()));
            }
            let mut values = Vec::with_capacity(rows.len() * dim);
            for (r, row) in rows.iter().enumerate() {
                let Value::Array(cells) = row else {
                    return Err(fail(format!("frame row {r} must be an array")));
                };
                if cells.len() != dim {
                    return Err(fail(format!(
                        "frame row {r} has {} entries, expected dim={dim}",
                        cells.len()
                    )));
                }
                for cell in cells {
                    let v = cell
                        .as_f64()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| fail(format!("frame row {r} has a non-numeric entry")))?;
                    values.push(v);
                }
            }
            let frames = Tensor::new(vec![rows.len(), dim], values)
                .map_err(|e| fail(e.to_string()))?;
            Ok(Utterance::Features(FeatureUtterance {
                id,
                speaker,
                intent,
                frames,
            }))
        }
        (Some(_), _, _) => Err(fail("record mixes \"phones\" with feature fields".into())),
        _ => Err(fail("record needs either \"phones\" or \"dim\"+\"frames\"".into())),
    }
}
