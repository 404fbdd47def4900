//! Parsing, filtering and de-duplication of archived tweet streams.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;
use std::ops::AddAssign;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::record::{parse_timestamp, undetermined_lang, TweetRecord};
use crate::store::{Batch, CorpusStore, StoreError};

/// Records are committed to a fresh segment every this many kept records.
const SEGMENT_RECORDS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed record: {0}")]
pub struct MalformedRecord(pub String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FilterError {
    #[error("keyword filtering enabled with an empty keyword list")]
    NoKeywords,
    #[error("empty keyword")]
    EmptyKeyword,
    #[error("date range start {start} is not before end {end}")]
    EmptyDateRange {
        start: DateTime<Utc>,
        end: DateTime<Utc>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("storage failure after {} records read: {source}", stats.total_read)]
    Storage {
        stats: CorpusStats,
        #[source]
        source: StoreError,
    },
    #[error("input read failure after {} records read: {source}", stats.total_read)]
    Input {
        stats: CorpusStats,
        #[source]
        source: std::io::Error,
    },
}

impl IngestError {
    /// Counters accumulated before the failure.
    pub fn partial_stats(&self) -> &CorpusStats {
        match self {
            IngestError::Storage { stats, .. } | IngestError::Input { stats, .. } => stats,
        }
    }
}

/// Which records an ingestion pass keeps.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestFilter {
    keywords: Option<Vec<String>>,
    languages: Option<BTreeSet<String>>,
    date_range: Option<(DateTime<Utc>, DateTime<Utc>)>,
}

impl IngestFilter {
    /// Accepts everything.
    pub fn any() -> Self {
        Self::default()
    }

    pub fn new(
        keywords: Option<Vec<String>>,
        languages: Option<BTreeSet<String>>,
        date_range: Option<(DateTime<Utc>, DateTime<Utc>)>,
    ) -> Result<Self, FilterError> {
        if let Some(k) = &keywords {
            if k.is_empty() {
                return Err(FilterError::NoKeywords);
            }
            if k.iter().any(|k| k.is_empty()) {
                return Err(FilterError::EmptyKeyword);
            }
        }
        if let Some((start, end)) = date_range {
            if start >= end {
                return Err(FilterError::EmptyDateRange { start, end });
            }
        }
        Ok(Self {
            keywords: keywords.map(|ks| ks.iter().map(|k| fold(k)).collect()),
            languages,
            date_range,
        })
    }

    pub fn keywords(&self) -> Option<&[String]> {
        self.keywords.as_deref()
    }

    pub fn languages(&self) -> Option<&BTreeSet<String>> {
        self.languages.as_ref()
    }

    pub fn date_range(&self) -> Option<(DateTime<Utc>, DateTime<Utc>)> {
        self.date_range
    }
}

/// Counters for one ingestion pass. Every line read lands in exactly one bucket.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total_read: u64,
    pub kept: u64,
    pub dropped_duplicate: u64,
    pub dropped_language: u64,
    pub dropped_date: u64,
    pub dropped_keyword: u64,
    pub dropped_malformed: u64,
}

impl CorpusStats {
    pub fn dropped(&self) -> u64 {
        self.dropped_duplicate
            + self.dropped_language
            + self.dropped_date
            + self.dropped_keyword
            + self.dropped_malformed
    }

    pub fn is_balanced(&self) -> bool {
        self.total_read == self.kept + self.dropped()
    }
}

impl AddAssign for CorpusStats {
    fn add_assign(&mut self, o: Self) {
        self.total_read += o.total_read;
        self.kept += o.kept;
        self.dropped_duplicate += o.dropped_duplicate;
        self.dropped_language += o.dropped_language;
        self.dropped_date += o.dropped_date;
        self.dropped_keyword += o.dropped_keyword;
        self.dropped_malformed += o.dropped_malformed;
    }
}

fn fold(s: &str) -> String {
    s.to_lowercase()
}

/// Case-insensitive substring match against any keyword.
pub fn keyword_match(text: &str, keywords: &[impl AsRef<str>]) -> bool {
    if text.is_empty() {
        return false;
    }
    let text = fold(text);
    keywords
        .iter()
        .any(|k| !k.as_ref().is_empty() && text.contains(&fold(k.as_ref())))
}

fn string_or_int(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) if n.is_u64() || n.is_i64() => Some(n.to_string()),
        _ => None,
    }
}

fn optional_id(obj: &serde_json::Map<String, Value>, key: &str) -> Result<Option<String>, MalformedRecord> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => string_or_int(v)
            .filter(|s| !s.is_empty())
            .map(Some)
            .ok_or_else(|| MalformedRecord(format!("{key} must be a non-empty id"))),
    }
}

/// Parses and validates one JSON-lines record. Unknown fields are ignored.
pub fn parse_record(line: &[u8]) -> Result<TweetRecord, MalformedRecord> {
    let value: Value =
        serde_json::from_slice(line).map_err(|e| MalformedRecord(format!("invalid json: {e}")))?;
    let Value::Object(obj) = value else {
        return Err(MalformedRecord("record is not a json object".into()));
    };

    let id = obj
        .get("id")
        .and_then(string_or_int)
        .filter(|id| !id.is_empty())
        .ok_or_else(|| MalformedRecord("missing or empty id".into()))?;
    let text = match obj.get("text") {
        Some(Value::String(t)) => t.clone(),
        _ => return Err(MalformedRecord("missing text".into())),
    };
    let created_at = obj
        .get("created_at")
        .and_then(parse_timestamp)
        .ok_or_else(|| MalformedRecord("missing or invalid created_at".into()))?;
    let retweet_count = match obj.get("retweet_count") {
        None | Some(Value::Null) => 0,
        Some(Value::Number(n)) => match n.as_i64() {
            Some(c) if c >= 0 => c as u64,
            Some(_) => return Err(MalformedRecord("negative retweet_count".into())),
            None => n
                .as_u64()
                .ok_or_else(|| MalformedRecord("retweet_count must be an integer".into()))?,
        },
        Some(_) => return Err(MalformedRecord("retweet_count must be an integer".into())),
    };
    let author = match obj.get("author") {
        Some(Value::String(a)) => a.clone(),
        _ => String::new(),
    };
    let lang = match obj.get("lang") {
        Some(Value::String(l)) if !l.is_empty() => l.clone(),
        _ => undetermined_lang(),
    };
    let in_reply_to = optional_id(&obj, "in_reply_to")?;
    let retweet_of = optional_id(&obj, "retweet_of")?;

    if in_reply_to.as_deref() == Some(id.as_str()) {
        return Err(MalformedRecord(format!("record {id} replies to itself")));
    }
    if in_reply_to.is_some() && retweet_of.is_some() {
        return Err(MalformedRecord(format!(
            "record {id} is both a reply and a retweet"
        )));
    }

    Ok(TweetRecord {
        id,
        author,
        text,
        created_at,
        retweet_count,
        lang,
        in_reply_to,
        retweet_of,
    })
}

enum Verdict {
    Keep,
    Language,
    Date,
    Keyword,
}

fn judge(r: &TweetRecord, filter: &IngestFilter) -> Verdict {
    if let Some(langs) = &filter.languages {
        if !langs.contains(&r.lang) {
            return Verdict::Language;
        }
    }
    if let Some((start, end)) = filter.date_range {
        if r.created_at < start || r.created_at >= end {
            return Verdict::Date;
        }
    }
    if let Some(ks) = &filter.keywords {
        if !keyword_match(&r.text, ks) {
            return Verdict::Keyword;
        }
    }
    Verdict::Keep
}

/// Reads JSON lines from `input`, keeping records that pass `filter` and are
/// not already in `store`.
///
/// The first sighting of an id decides whether it is kept; later sightings
/// count as duplicates but may still raise the stored retweet count. Blank
/// lines are skipped without being counted.
pub fn ingest_corpus(
    mut input: impl BufRead,
    filter: &IngestFilter,
    store: &mut CorpusStore,
) -> Result<CorpusStats, IngestError> {
    let mut stats = CorpusStats::default();
    let mut batch = Batch::default();
    // id -> position in the pending batch, or None when the first sighting was rejected
    let mut seen: HashMap<String, Option<usize>> = HashMap::new();
    let mut line = Vec::new();

    loop {
        line.clear();
        match input.read_until(b'\n', &mut line) {
            Ok(0) => break,
            Ok(_) => {}
            Err(source) => return Err(IngestError::Input { stats, source }),
        }
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        stats.total_read += 1;

        let record = match parse_record(&line) {
            Ok(r) => r,
            Err(_) => {
                stats.dropped_malformed += 1;
                continue;
            }
        };

        if let Some(existing) = store.get(&record.id) {
            stats.dropped_duplicate += 1;
            if record.retweet_count > existing.retweet_count {
                batch.bump_retweet_count(&record.id, record.retweet_count);
            }
            continue;
        }
        if let Some(slot) = seen.get(&record.id) {
            stats.dropped_duplicate += 1;
            if let Some(idx) = slot {
                batch.raise_pending(*idx, record.retweet_count);
            }
            continue;
        }

        let verdict = judge(&record, filter);
        match verdict {
            Verdict::Keep => {
                seen.insert(record.id.clone(), Some(batch.len()));
                batch.push(record);
                stats.kept += 1;
            }
            rejected => {
                seen.insert(record.id.clone(), None);
                match rejected {
                    Verdict::Language => stats.dropped_language += 1,
                    Verdict::Date => stats.dropped_date += 1,
                    Verdict::Keyword => stats.dropped_keyword += 1,
                    Verdict::Keep => unreachable!(),
                }
            }
        }

        if batch.len() >= SEGMENT_RECORDS {
            // positions restart with the next batch; committed ids are found in the store
            for slot in seen.values_mut() {
                *slot = None;
            }
            let full = std::mem::take(&mut batch);
            if let Err(source) = store.commit(full) {
                return Err(IngestError::Storage { stats, source });
            }
        }
    }

    if let Err(source) = store.commit(batch) {
        return Err(IngestError::Storage { stats, source });
    }
    Ok(stats)
}
