//! Newline-delimited JSON persistence.
//!
//! Every file starts with a header record carrying `schema_version`, the file
//! kind and the number of records that follow, so truncation at a line
//! boundary is detected as well as a cut inside a record.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    Episode, OfflineDataset, PreferenceDataset, PreferenceLabel, PreferenceTriple, Segment,
    SegmentId,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const SCHEMA_VERSION: u32 = 1;

const KIND_OFFLINE: &str = "offline_dataset";
const KIND_PREFERENCES: &str = "preference_dataset";

#[derive(Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    kind: String,
    records: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct EpisodeRecord<S> {
    schema_version: u32,
    episode: usize,
    states: Vec<Vec<S>>,
    actions: Vec<Vec<S>>,
    rewards_hidden: Vec<S>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct SegmentRecord<S> {
    id: SegmentId,
    states: Vec<Vec<S>>,
    actions: Vec<Vec<S>>,
    rewards_hidden: Vec<S>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct TripleRecord<S> {
    schema_version: u32,
    seg0: SegmentRecord<S>,
    seg1: SegmentRecord<S>,
    label: String,
    round: usize,
}

impl<S: Scalar> SegmentRecord<S> {
    fn from_segment(s: &Segment<S>) -> Self {
        Self {
            id: s.id,
            states: s.states.clone(),
            actions: s.actions.clone(),
            rewards_hidden: s.rewards_hidden.clone(),
        }
    }
}

fn write_lines<T: Serialize>(
    path: &Path,
    header: &Header,
    records: impl Iterator<Item = T>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the header and returns the record lines with their 1-based record numbers.
fn read_lines(path: &Path, kind: &str) -> Result<Vec<(usize, String)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let first = lines.next().ok_or(Error::Parse {
        record: 0,
        message: "empty file".into(),
    })??;
    let header: Header = serde_json::from_str(&first).map_err(|e| Error::Parse {
        record: 0,
        message: format!("bad header: {e}"),
    })?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(Error::Validation {
            record: 0,
            message: format!("unsupported schema_version {}", header.schema_version),
        });
    }
    if header.kind != kind {
        return Err(Error::Validation {
            record: 0,
            message: format!("expected kind {kind}, found {}", header.kind),
        });
    }
    let mut out = Vec::with_capacity(header.records);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((i + 1, line));
    }
    if out.len() != header.records {
        return Err(Error::Parse {
            record: out.len() + 1,
            message: format!(
                "truncated file: header announces {} records, found {}",
                header.records,
                out.len()
            ),
        });
    }
    Ok(out)
}

fn check_version(record: usize, v: u32) -> Result<()> {
    if v != SCHEMA_VERSION {
        return Err(Error::Validation {
            record,
            message: format!("unsupported schema_version {v}"),
        });
    }
    Ok(())
}

pub fn save_offline<S: Scalar>(path: impl AsRef<Path>, dataset: &OfflineDataset<S>) -> Result<()> {
    let header = Header {
        schema_version: SCHEMA_VERSION,
        kind: KIND_OFFLINE.into(),
        records: dataset.episodes.len(),
    };
    write_lines(
        path.as_ref(),
        &header,
        dataset
            .episodes
            .iter()
            .enumerate()
            .map(|(i, e)| EpisodeRecord {
                schema_version: SCHEMA_VERSION,
                episode: i,
                states: e.states.clone(),
                actions: e.actions.clone(),
                rewards_hidden: e.rewards_hidden.clone(),
            }),
    )
}

pub fn load_offline<S: Scalar>(path: impl AsRef<Path>) -> Result<OfflineDataset<S>> {
    let mut episodes = Vec::new();
    for (record, line) in read_lines(path.as_ref(), KIND_OFFLINE)? {
        let r: EpisodeRecord<S> = serde_json::from_str(&line).map_err(|e| Error::Parse {
            record,
            message: e.to_string(),
        })?;
        check_version(record, r.schema_version)?;
        if r.episode != episodes.len() {
            return Err(Error::Validation {
                record,
                message: format!("episode index {} out of order", r.episode),
            });
        }
        let ep =
            Episode::new(r.states, r.actions, r.rewards_hidden).map_err(|e| Error::Validation {
                record,
                message: e.to_string(),
            })?;
        episodes.push(ep);
    }
    OfflineDataset::new(episodes).map_err(|e| Error::Validation {
        record: 0,
        message: e.to_string(),
    })
}

pub fn save_preferences<S: Scalar>(
    path: impl AsRef<Path>,
    dataset: &PreferenceDataset<S>,
) -> Result<()> {
    let header = Header {
        schema_version: SCHEMA_VERSION,
        kind: KIND_PREFERENCES.into(),
        records: dataset.len(),
    };
    write_lines(
        path.as_ref(),
        &header,
        dataset.triples().iter().map(|t| TripleRecord {
            schema_version: SCHEMA_VERSION,
            seg0: SegmentRecord::from_segment(&t.seg0),
            seg1: SegmentRecord::from_segment(&t.seg1),
            label: t.label.as_str().to_string(),
            round: t.round,
        }),
    )
}

/// Loads triples; segments shared between triples are shared in memory as well.
pub fn load_preferences<S: Scalar>(path: impl AsRef<Path>) -> Result<PreferenceDataset<S>> {
    let mut cache: std::collections::HashMap<SegmentId, Arc<Segment<S>>> = Default::default();
    let mut intern = |record: usize, r: SegmentRecord<S>| -> Result<Arc<Segment<S>>> {
        if let Some(s) = cache.get(&r.id) {
            return Ok(Arc::clone(s));
        }
        let seg = Segment::new(r.id, r.states, r.actions, r.rewards_hidden).map_err(|e| {
            Error::Validation {
                record,
                message: e.to_string(),
            }
        })?;
        let seg = Arc::new(seg);
        cache.insert(seg.id, Arc::clone(&seg));
        Ok(seg)
    };
    let mut ds = PreferenceDataset::new();
    for (record, line) in read_lines(path.as_ref(), KIND_PREFERENCES)? {
        let r: TripleRecord<S> = serde_json::from_str(&line).map_err(|e| Error::Parse {
            record,
            message: e.to_string(),
        })?;
        check_version(record, r.schema_version)?;
        let label = PreferenceLabel::parse(&r.label).ok_or_else(|| Error::Validation {
            record,
            message: format!("label {:?} not in {{first, second, skip}}", r.label),
        })?;
        let seg0 = intern(record, r.seg0)?;
        let seg1 = intern(record, r.seg1)?;
        let triple =
            PreferenceTriple::new(seg0, seg1, label, r.round).map_err(|e| Error::Validation {
                record,
                message: e.to_string(),
            })?;
        ds.push(triple);
    }
    Ok(ds)
}
