//! On-disk corpus store.
//!
//! Layout of a store directory:
//!
//! ```text
//! <dir>/index                 id index, rewritten atomically after every commit
//! <dir>/segments/000001.seg   immutable segment files, one per commit
//! ```
//!
//! Every file starts with a magic line carrying the format version
//! (`RUMOURSEG 1`, `RUMOURIDX 1 segments=N`). Segment bodies are JSON lines,
//! each either a full record (`{"record":{..}}`) or a retweet-count bump for a
//! record stored in an earlier segment (`{"retweet_count":{"id":..,"value":..}}`).
//! Index bodies are `id<TAB>segment` lines. Readers load the index first and
//! then only the segments it names, so a commit in progress is never observed
//! half-written.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::record::TweetRecord;

pub const SEGMENT_MAGIC: &str = "RUMOURSEG";
pub const INDEX_MAGIC: &str = "RUMOURIDX";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt store file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("no corpus store at {0}")]
    Missing(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SegmentEntry {
    Record(TweetRecord),
    RetweetCount { id: String, value: u64 },
}

/// Pending writes produced by one ingestion pass.
#[derive(Debug, Default, Clone)]
pub struct Batch {
    records: Vec<TweetRecord>,
    count_updates: BTreeMap<String, u64>,
}

impl Batch {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty() && self.count_updates.is_empty()
    }

    pub fn push(&mut self, record: TweetRecord) {
        self.records.push(record);
    }

    pub fn bump_retweet_count(&mut self, id: &str, value: u64) {
        let e = self.count_updates.entry(id.to_string()).or_insert(value);
        *e = (*e).max(value);
    }

    pub fn records(&self) -> &[TweetRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Raises the count of the record queued at `index`.
    pub(crate) fn raise_pending(&mut self, index: usize, value: u64) {
        let r = &mut self.records[index];
        r.retweet_count = r.retweet_count.max(value);
    }
}

/// Corpus of tweet records indexed by id, by UTC day and by reply parent.
///
/// A store is either directory-backed (commits are persisted) or purely in
/// memory. Opened stores are snapshots; other processes may open the same
/// directory concurrently for reading.
#[derive(Debug, Default, Clone)]
pub struct CorpusStore {
    dir: Option<PathBuf>,
    records: BTreeMap<String, TweetRecord>,
    by_day: BTreeMap<NaiveDate, Vec<String>>,
    by_parent: BTreeMap<String, Vec<String>>,
    segment_ids: BTreeMap<String, u32>,
    segments: u32,
}

impl CorpusStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Builds an in-memory store; later duplicates of an id are ignored.
    pub fn from_records(records: impl IntoIterator<Item = TweetRecord>) -> Self {
        let mut store = Self::in_memory();
        let mut batch = Batch::default();
        let mut seen = std::collections::HashSet::new();
        for r in records {
            if seen.insert(r.id.clone()) {
                batch.push(r);
            }
        }
        store
            .commit(batch)
            .expect("in-memory commit performs no i/o");
        store
    }

    /// Opens an existing store, or initialises an empty one at `dir`.
    pub fn open_or_create(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref();
        if !dir.join("index").exists() {
            fs::create_dir_all(dir.join("segments")).map_err(io_err(dir))?;
            let store = Self {
                dir: Some(dir.to_path_buf()),
                ..Self::default()
            };
            store.write_index()?;
            return Ok(store);
        }
        Self::open(dir)
    }

    /// Opens an existing store read-consistently.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref();
        let index_path = dir.join("index");
        if !index_path.exists() {
            return Err(StoreError::Missing(dir.to_path_buf()));
        }
        let (segments, index) = read_index(&index_path)?;
        let mut store = Self {
            dir: Some(dir.to_path_buf()),
            ..Self::default()
        };
        for seg in 1..=segments {
            let path = segment_path(dir, seg);
            for entry in read_segment(&path)? {
                match entry {
                    SegmentEntry::Record(r) => {
                        store.segment_ids.insert(r.id.clone(), seg);
                        store.insert(r);
                    }
                    SegmentEntry::RetweetCount { id, value } => {
                        if let Some(r) = store.records.get_mut(&id) {
                            r.retweet_count = r.retweet_count.max(value);
                        }
                    }
                }
            }
        }
        store.segments = segments;
        store.sort_indexes();
        if index.len() != store.records.len() {
            return Err(StoreError::Corrupt {
                path: index_path,
                reason: format!(
                    "index lists {} ids but segments hold {}",
                    index.len(),
                    store.records.len()
                ),
            });
        }
        Ok(store)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&TweetRecord> {
        self.records.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.records.contains_key(id)
    }

    /// All records in id order.
    pub fn iter(&self) -> impl Iterator<Item = &TweetRecord> {
        self.records.values()
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.by_day.keys().copied()
    }

    /// Records posted on `day`, chronologically.
    pub fn day(&self, day: NaiveDate) -> Vec<&TweetRecord> {
        self.by_day
            .get(&day)
            .map(|ids| ids.iter().filter_map(|id| self.records.get(id)).collect())
            .unwrap_or_default()
    }

    /// Records whose `in_reply_to` is `parent`, chronologically then by id.
    pub fn replies_to(&self, parent: &str) -> Vec<&TweetRecord> {
        self.by_parent
            .get(parent)
            .map(|ids| ids.iter().filter_map(|id| self.records.get(id)).collect())
            .unwrap_or_default()
    }

    /// Parent ids referenced by stored replies.
    pub fn reply_parents(&self) -> impl Iterator<Item = &str> {
        self.by_parent.keys().map(String::as_str)
    }

    /// Persists `batch` as a new immutable segment and applies it.
    pub fn commit(&mut self, batch: Batch) -> Result<(), StoreError> {
        if batch.is_empty() {
            return Ok(());
        }
        if let Some(dir) = self.dir.clone() {
            let seg = self.segments + 1;
            let path = segment_path(&dir, seg);
            write_atomic(&path, |w| {
                writeln!(w, "{SEGMENT_MAGIC} {FORMAT_VERSION}")?;
                for r in &batch.records {
                    write_json_line(w, &SegmentEntry::Record(r.clone()))?;
                }
                for (id, value) in &batch.count_updates {
                    write_json_line(
                        w,
                        &SegmentEntry::RetweetCount {
                            id: id.clone(),
                            value: *value,
                        },
                    )?;
                }
                Ok(())
            })?;
            self.segments = seg;
            for r in &batch.records {
                self.segment_ids.insert(r.id.clone(), seg);
            }
        }
        for r in batch.records {
            self.insert(r);
        }
        self.sort_indexes();
        for (id, value) in batch.count_updates {
            if let Some(r) = self.records.get_mut(&id) {
                r.retweet_count = r.retweet_count.max(value);
            }
        }
        if self.dir.is_some() {
            self.write_index()?;
        }
        Ok(())
    }

    fn insert(&mut self, r: TweetRecord) {
        self.by_day.entry(r.day()).or_default().push(r.id.clone());
        if let Some(parent) = &r.in_reply_to {
            self.by_parent.entry(parent.clone()).or_default().push(r.id.clone());
        }
        self.records.insert(r.id.clone(), r);
    }

    fn sort_indexes(&mut self) {
        let records = &self.records;
        let key = |id: &String| records[id].chrono_key();
        for ids in self.by_day.values_mut().chain(self.by_parent.values_mut()) {
            if !ids.is_sorted_by_key(key) {
                ids.sort_by(|a, b| key(a).cmp(&key(b)));
            }
        }
    }

    fn write_index(&self) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        write_atomic(&dir.join("index"), |w| {
            writeln!(w, "{INDEX_MAGIC} {FORMAT_VERSION} segments={}", self.segments)?;
            for (id, seg) in &self.segment_ids {
                writeln!(w, "{id}\t{seg}")?;
            }
            Ok(())
        })
    }
}

fn segment_path(dir: &Path, seg: u32) -> PathBuf {
    dir.join("segments").join(format!("{seg:06}.seg"))
}

fn write_json_line<T: Serialize>(w: &mut impl Write, v: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *w, v)?;
    w.write_all(b"\n")
}

fn write_atomic(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>,
) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    let run = || -> io::Result<()> {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
        w.get_ref().sync_all()?;
        fs::rename(&tmp, path)
    };
    run().map_err(io_err(path))
}

fn check_magic(path: &Path, line: Option<io::Result<String>>, magic: &str) -> Result<String, StoreError> {
    let line = line
        .transpose()
        .map_err(io_err(path))?
        .unwrap_or_default();
    let mut parts = line.split_whitespace();
    if parts.next() != Some(magic) {
        return Err(StoreError::Corrupt {
            path: path.to_path_buf(),
            reason: format!("missing {magic} header"),
        });
    }
    let version: Option<u32> = parts.next().and_then(|v| v.parse().ok());
    if version != Some(FORMAT_VERSION) {
        return Err(StoreError::Corrupt {
            path: path.to_path_buf(),
            reason: format!("unsupported format version in header {line:?}"),
        });
    }
    Ok(parts.collect::<Vec<_>>().join(" "))
}

fn read_index(path: &Path) -> Result<(u32, Vec<String>), StoreError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(f).lines();
    let rest = check_magic(path, lines.next(), INDEX_MAGIC)?;
    let segments = rest
        .strip_prefix("segments=")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| StoreError::Corrupt {
            path: path.to_path_buf(),
            reason: "index header lacks segment count".into(),
        })?;
    let mut ids = Vec::new();
    for line in lines {
        let line = line.map_err(io_err(path))?;
        if let Some((id, _)) = line.split_once('\t') {
            ids.push(id.to_string());
        }
    }
    Ok((segments, ids))
}

fn read_segment(path: &Path) -> Result<Vec<SegmentEntry>, StoreError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(f).lines();
    check_magic(path, lines.next(), SEGMENT_MAGIC)?;
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(io_err(path))?;
        let entry = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            reason: format!("line {}: {e}", n + 2),
        })?;
        out.push(entry);
    }
    Ok(out)
}
