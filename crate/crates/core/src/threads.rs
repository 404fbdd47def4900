//! Conversation reconstruction: a source tweet plus its reply tree.
//!
//! Threads are grown breadth-first. Each level of the frontier is handed to
//! the [`ReplyProvider`] as one batch, so depth assignment falls out of the
//! level number and memory is bounded by the widest level.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::record::TweetRecord;
use crate::store::CorpusStore;

pub const THREAD_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("reply provider failed for {id}: {message}")]
pub struct ProviderError {
    pub id: String,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ThreadError {
    #[error("source {0} is itself a reply")]
    SourceIsReply(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid thread document {path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
}

/// Source of reply edges. Implementations must only return records whose
/// `in_reply_to` equals the queried id.
pub trait ReplyProvider: Sync {
    fn direct_replies(&self, id: &str) -> Result<Vec<TweetRecord>, ProviderError>;

    /// Replies for one frontier level, in the order of `ids`.
    fn direct_replies_batch(&self, ids: &[&str]) -> Result<Vec<Vec<TweetRecord>>, ProviderError> {
        ids.iter().map(|id| self.direct_replies(id)).collect()
    }

    /// Replies whose parent this provider can never resolve.
    fn orphans(&self) -> Vec<String> {
        Vec::new()
    }
}

/// Serves reply edges recorded in a corpus store.
#[derive(Debug, Clone, Copy)]
pub struct CorpusReplyProvider<'a> {
    store: &'a CorpusStore,
}

pub fn corpus_reply_provider(store: &CorpusStore) -> CorpusReplyProvider<'_> {
    CorpusReplyProvider { store }
}

impl ReplyProvider for CorpusReplyProvider<'_> {
    fn direct_replies(&self, id: &str) -> Result<Vec<TweetRecord>, ProviderError> {
        Ok(self.store.replies_to(id).into_iter().cloned().collect())
    }

    fn orphans(&self) -> Vec<String> {
        self.store
            .reply_parents()
            .filter(|p| !self.store.contains(p))
            .flat_map(|p| self.store.replies_to(p))
            .map(|r| r.id.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadNode {
    pub record: TweetRecord,
    pub depth: u32,
    pub parent: String,
}

/// A source tweet and every reply reachable from it.
///
/// Nodes are listed level by level; within a level, grouped by parent in
/// parent order, siblings by `created_at` then id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thread {
    pub format_version: u32,
    pub source: TweetRecord,
    pub nodes: Vec<ThreadNode>,
    pub reply_count: usize,
    pub max_depth: u32,
}

impl Thread {
    pub fn id(&self) -> &str {
        &self.source.id
    }

    /// Replies (all depths) in the conversation.
    pub fn size(&self) -> usize {
        self.reply_count
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(self).expect("thread serialises");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }

    /// Checks the tree invariants; returns a description of the first violation.
    pub fn check(&self) -> Result<(), String> {
        let mut depth_of: BTreeMap<&str, u32> = BTreeMap::new();
        depth_of.insert(&self.source.id, 0);
        for n in &self.nodes {
            let Some(&pd) = depth_of.get(n.parent.as_str()) else {
                return Err(format!("{} has unknown or later parent {}", n.record.id, n.parent));
            };
            if n.record.in_reply_to.as_deref() != Some(n.parent.as_str()) {
                return Err(format!("{} is not a reply to {}", n.record.id, n.parent));
            }
            if n.depth != pd + 1 {
                return Err(format!("{} has depth {} under parent depth {pd}", n.record.id, n.depth));
            }
            if depth_of.insert(&n.record.id, n.depth).is_some() {
                return Err(format!("{} appears twice", n.record.id));
            }
        }
        if self.reply_count != self.nodes.len() {
            return Err("reply_count disagrees with node list".into());
        }
        if self.max_depth != self.nodes.iter().map(|n| n.depth).max().unwrap_or(0) {
            return Err("max_depth disagrees with node list".into());
        }
        Ok(())
    }
}

struct Expansion {
    thread: Thread,
    cycles_broken: usize,
}

fn expand(
    source: &TweetRecord,
    provider: &dyn ReplyProvider,
    max_depth: Option<u32>,
) -> Result<Expansion, ThreadError> {
    if source.is_reply() {
        return Err(ThreadError::SourceIsReply(source.id.clone()));
    }
    let mut visited: HashSet<String> = HashSet::from([source.id.clone()]);
    let mut nodes = Vec::new();
    let mut cycles_broken = 0;
    let mut frontier = vec![source.id.clone()];
    let mut depth = 0;

    while !frontier.is_empty() && max_depth.is_none_or(|m| depth < m) {
        depth += 1;
        let ids: Vec<&str> = frontier.iter().map(String::as_str).collect();
        let levels = provider.direct_replies_batch(&ids)?;
        let mut next = Vec::new();
        for (parent, mut replies) in frontier.iter().zip(levels) {
            replies.retain(|r| r.in_reply_to.as_deref() == Some(parent.as_str()));
            replies.sort_by(|a, b| a.chrono_key().cmp(&b.chrono_key()));
            replies.dedup_by(|a, b| a.id == b.id);
            for record in replies {
                if !visited.insert(record.id.clone()) {
                    cycles_broken += 1;
                    continue;
                }
                next.push(record.id.clone());
                nodes.push(ThreadNode {
                    record,
                    depth,
                    parent: parent.clone(),
                });
            }
        }
        frontier = next;
    }

    let max_depth = nodes.iter().map(|n| n.depth).max().unwrap_or(0);
    Ok(Expansion {
        thread: Thread {
            format_version: THREAD_FORMAT_VERSION,
            source: source.clone(),
            reply_count: nodes.len(),
            nodes,
            max_depth,
        },
        cycles_broken,
    })
}

/// Collects the conversation rooted at `source`, optionally stopping at
/// `max_depth` levels of replies.
pub fn build_thread(
    source: &TweetRecord,
    provider: &dyn ReplyProvider,
    max_depth: Option<u32>,
) -> Result<Thread, ThreadError> {
    expand(source, provider, max_depth).map(|e| e.thread)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThreadBuildStats {
    pub sources_processed: u64,
    pub replies_collected: u64,
    pub orphans_dropped: u64,
    pub cycles_broken: u64,
    pub avg_replies_per_source: Option<f64>,
    /// Sources whose build failed, with the reason.
    pub failures: Vec<(String, String)>,
}

/// Builds one thread per source in parallel. A failing source is recorded in
/// the stats and does not stop the others.
pub fn build_all(
    sources: &[TweetRecord],
    provider: &dyn ReplyProvider,
    max_depth: Option<u32>,
) -> (Vec<Thread>, ThreadBuildStats) {
    let results: Vec<_> = sources
        .par_iter()
        .map(|s| (s.id.clone(), expand(s, provider, max_depth)))
        .collect();

    let mut stats = ThreadBuildStats::default();
    let mut threads = Vec::with_capacity(results.len());
    for (id, result) in results {
        match result {
            Ok(e) => {
                stats.sources_processed += 1;
                stats.replies_collected += e.thread.reply_count as u64;
                stats.cycles_broken += e.cycles_broken as u64;
                threads.push(e.thread);
            }
            Err(err) => stats.failures.push((id, err.to_string())),
        }
    }
    let source_ids: HashSet<&str> = sources.iter().map(|s| s.id.as_str()).collect();
    stats.orphans_dropped = provider
        .orphans()
        .iter()
        .filter(|id| !source_ids.contains(id.as_str()))
        .count() as u64;
    if stats.sources_processed > 0 {
        stats.avg_replies_per_source =
            Some(stats.replies_collected as f64 / stats.sources_processed as f64);
    }
    (threads, stats)
}

/// Writes `threads/<source-id>.json`, one document per thread.
pub fn write_threads(dir: &Path, threads: &[Thread]) -> Result<(), ThreadError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ThreadError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    for t in threads {
        let path = thread_path(dir, t.id());
        if !is_safe_file_stem(t.id()) {
            return Err(ThreadError::Invalid {
                path,
                reason: format!("source id {:?} cannot be used as a file name", t.id()),
            });
        }
        fs::write(&path, t.to_json()).map_err(io(&path))?;
    }
    Ok(())
}

fn is_safe_file_stem(id: &str) -> bool {
    !id.is_empty() && !id.starts_with('.') && !id.contains(['/', '\\', '\0'])
}

pub fn thread_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}

/// Loads every `*.json` thread document in `dir`, keyed by source id.
pub fn load_threads(dir: &Path) -> Result<BTreeMap<String, Thread>, ThreadError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ThreadError::Io { path, source }
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    let loaded: Result<Vec<Thread>, ThreadError> = paths
        .par_iter()
        .map(|path| {
            let bytes = fs::read(path).map_err(io(path))?;
            let t = Thread::from_json(&bytes).map_err(|e| ThreadError::Invalid {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            if t.format_version != THREAD_FORMAT_VERSION {
                return Err(ThreadError::Invalid {
                    path: path.clone(),
                    reason: format!("unsupported format_version {}", t.format_version),
                });
            }
            Ok(t)
        })
        .collect();
    Ok(loaded?.into_iter().map(|t| (t.id().to_string(), t)).collect())
}
