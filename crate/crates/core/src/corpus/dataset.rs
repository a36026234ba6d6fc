//! Line-oriented dataset files and the forget-corpus file.
//!
//! A dataset file starts with a header line
//! `{"format":"purge.dataset.v1","config_hash":...,"seed":...}` followed by one
//! JSON record per line with fields `query`, `answer`, `split`, `target`.
//! A forget-corpus file is a single JSON object
//! `{"format":"purge.forget.v1","target","phrases","scores","k","config_hash","seed"}`.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ForgetCorpus, Vocabulary};
use crate::error::{Error, Result};

pub const DATASET_FORMAT: &str = "purge.dataset.v1";
pub const FORGET_FORMAT: &str = "purge.forget.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    /// Training pairs for the base model.
    Train,
    /// Queries for probing the base model (answer unused).
    Probe,
    Forget,
    Neighbor,
    Retain,
    Test,
    Member,
    Nonmember,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub query: String,
    pub answer: String,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct DatasetHeader {
    format: String,
    config_hash: String,
    seed: u64,
}

pub fn write_dataset(
    path: impl AsRef<Path>,
    records: &[DatasetRecord],
    config_hash: &str,
    seed: u64,
) -> Result<()> {
    let mut out = Vec::new();
    let header = DatasetHeader {
        format: DATASET_FORMAT.into(),
        config_hash: config_hash.into(),
        seed,
    };
    serde_json::to_writer(&mut out, &header)?;
    out.push(b'\n');
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let header: DatasetHeader = match lines.next() {
        Some(line) => serde_json::from_str(&line?)
            .map_err(|e| Error::Format(format!("dataset header: {e}")))?,
        None => return Err(Error::Format("empty dataset file".into())),
    };
    if header.format != DATASET_FORMAT {
        return Err(Error::Format(format!("unsupported dataset format {:?}", header.format)));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("dataset line {}: {e}", i + 2)))?;
        records.push(record);
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ForgetFile {
    format: String,
    target: String,
    phrases: Vec<String>,
    scores: Vec<f64>,
    k: usize,
    config_hash: String,
    seed: u64,
}

pub fn write_forget_corpus(
    path: impl AsRef<Path>,
    corpus: &ForgetCorpus,
    vocab: &Vocabulary,
    config_hash: &str,
    seed: u64,
) -> Result<()> {
    let file = ForgetFile {
        format: FORGET_FORMAT.into(),
        target: corpus.target.clone(),
        phrases: corpus.surfaces(vocab),
        scores: corpus.scores.clone(),
        k: corpus.k,
        config_hash: config_hash.into(),
        seed,
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Loads a forget corpus, re-tokenizing phrases against `vocab` (strictly).
pub fn read_forget_corpus(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<ForgetCorpus> {
    let file: ForgetFile = serde_json::from_str(&std::fs::read_to_string(path)?)
        .map_err(|e| Error::Format(format!("forget corpus: {e}")))?;
    if file.format != FORGET_FORMAT {
        return Err(Error::Format(format!("unsupported forget corpus format {:?}", file.format)));
    }
    if file.phrases.len() != file.scores.len() {
        return Err(Error::Format("phrases and scores differ in length".into()));
    }
    let phrases = file
        .phrases
        .iter()
        .map(|p| vocab.encode_strict(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(ForgetCorpus {
        target: file.target,
        phrases,
        scores: file.scores,
        k: file.k,
    })
}
