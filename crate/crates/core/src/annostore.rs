//! Annotation state as an append-only event log.
//!
//! Every selection an annotator makes becomes an [`Event`] with a store-wide
//! sequence number. The current view (latest judgment per thread, stories) is
//! a pure fold over the log, so replaying `annotations.log` from empty
//! reproduces it exactly.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::record::{timestamp, to_millis};

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Rumour,
    NonRumour,
    Unsure,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Rumour, Label::NonRumour, Label::Unsure];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Rumour => "rumour",
            Label::NonRumour => "nonrumour",
            Label::Unsure => "unsure",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rumour" | "rumor" => Ok(Label::Rumour),
            "nonrumour" | "non-rumour" | "non_rumour" | "nonrumor" => Ok(Label::NonRumour),
            "unsure" => Ok(Label::Unsure),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub seq: u64,
    pub thread_id: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub story_id: Option<String>,
    pub annotator: String,
    #[serde(with = "timestamp")]
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Story {
    pub story_id: String,
    pub name: String,
    #[serde(with = "timestamp")]
    pub created_at: DateTime<Utc>,
}

/// One entry of `annotations.log`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    StoryCreated {
        seq: u64,
        story: Story,
        annotator: String,
    },
    StoryRenamed {
        seq: u64,
        story_id: String,
        name: String,
        annotator: String,
        #[serde(with = "timestamp")]
        at: DateTime<Utc>,
    },
    Judgment(Judgment),
}

impl Event {
    pub fn seq(&self) -> u64 {
        match self {
            Event::StoryCreated { seq, .. } | Event::StoryRenamed { seq, .. } => *seq,
            Event::Judgment(j) => j.seq,
        }
    }
}

/// How a rumour judgment names its story.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoryRef {
    /// An existing story id.
    Id(String),
    /// A story name; an unknown name creates a new story.
    Name(String),
}

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("unknown thread {0}")]
    UnknownThread(String),
    #[error("a rumour judgment needs a story")]
    MissingStory,
    #[error("a story cannot be attached to a {0} judgment")]
    StoryOnNonRumour(Label),
    #[error("unknown story {0}")]
    UnknownStory(String),
    #[error("story name {name:?} is already used by {existing}")]
    NameCollision { name: String, existing: String },
    #[error("story name is empty")]
    EmptyName,
    #[error("thread {0} is not currently judged a rumour")]
    NotARumour(String),
    #[error("event seq {got} does not follow {last}")]
    OutOfOrder { last: u64, got: u64 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt annotation log {path} line {line}: {reason}")]
    CorruptLog {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

fn fold_name(name: &str) -> String {
    name.trim().to_lowercase()
}

/// Current view plus the full history it was folded from.
#[derive(Debug, Clone, Default)]
pub struct AnnotationState {
    threads: Option<BTreeSet<String>>,
    history: Vec<Event>,
    current: BTreeMap<String, Judgment>,
    stories: BTreeMap<String, Story>,
    names: BTreeMap<String, String>,
    stories_created: u64,
}

impl AnnotationState {
    /// A state that only accepts judgments for the given thread ids.
    pub fn with_threads(ids: impl IntoIterator<Item = String>) -> Self {
        Self {
            threads: Some(ids.into_iter().collect()),
            ..Self::default()
        }
    }

    /// Folds `events` into an empty state (no thread registry).
    pub fn replay(events: impl IntoIterator<Item = Event>) -> Result<Self, AnnotationError> {
        let mut state = Self::default();
        for e in events {
            state.apply(e)?;
        }
        Ok(state)
    }

    pub fn set_threads(&mut self, ids: impl IntoIterator<Item = String>) {
        self.threads = Some(ids.into_iter().collect());
    }

    pub fn history(&self) -> &[Event] {
        &self.history
    }

    pub fn current(&self, thread_id: &str) -> Option<&Judgment> {
        self.current.get(thread_id)
    }

    pub fn judgments(&self) -> impl Iterator<Item = &Judgment> {
        self.current.values()
    }

    pub fn stories(&self) -> impl Iterator<Item = &Story> {
        self.stories.values()
    }

    pub fn story(&self, story_id: &str) -> Option<&Story> {
        self.stories.get(story_id)
    }

    pub fn story_by_name(&self, name: &str) -> Option<&Story> {
        self.names.get(&fold_name(name)).and_then(|id| self.stories.get(id))
    }

    /// Threads whose current judgment puts them in `story_id`, by thread id.
    pub fn members(&self, story_id: &str) -> Vec<&Judgment> {
        self.current
            .values()
            .filter(|j| j.story_id.as_deref() == Some(story_id))
            .collect()
    }

    pub fn last_seq(&self) -> u64 {
        self.history.last().map_or(0, Event::seq)
    }

    fn next_seq(&self) -> u64 {
        self.last_seq() + 1
    }

    fn knows_thread(&self, id: &str) -> bool {
        self.threads.as_ref().is_none_or(|t| t.contains(id))
    }

    /// Applies one event. This is the fold every view is derived from.
    pub fn apply(&mut self, event: Event) -> Result<(), AnnotationError> {
        let last = self.last_seq();
        if event.seq() <= last {
            return Err(AnnotationError::OutOfOrder {
                last,
                got: event.seq(),
            });
        }
        match &event {
            Event::StoryCreated { story, .. } => {
                let key = fold_name(&story.name);
                if key.is_empty() {
                    return Err(AnnotationError::EmptyName);
                }
                if let Some(existing) = self.names.get(&key) {
                    return Err(AnnotationError::NameCollision {
                        name: story.name.clone(),
                        existing: existing.clone(),
                    });
                }
                self.names.insert(key, story.story_id.clone());
                self.stories.insert(story.story_id.clone(), story.clone());
                self.stories_created += 1;
            }
            Event::StoryRenamed { story_id, name, .. } => {
                let key = fold_name(name);
                if key.is_empty() {
                    return Err(AnnotationError::EmptyName);
                }
                let story = self
                    .stories
                    .get_mut(story_id)
                    .ok_or_else(|| AnnotationError::UnknownStory(story_id.clone()))?;
                if let Some(existing) = self.names.get(&key) {
                    if existing != story_id {
                        return Err(AnnotationError::NameCollision {
                            name: name.clone(),
                            existing: existing.clone(),
                        });
                    }
                }
                self.names.remove(&fold_name(&story.name));
                story.name = name.clone();
                self.names.insert(key, story_id.clone());
            }
            Event::Judgment(j) => {
                match (j.label, &j.story_id) {
                    (Label::Rumour, None) => return Err(AnnotationError::MissingStory),
                    (Label::Rumour, Some(s)) if !self.stories.contains_key(s) => {
                        return Err(AnnotationError::UnknownStory(s.clone()))
                    }
                    (label, Some(_)) if label != Label::Rumour => {
                        return Err(AnnotationError::StoryOnNonRumour(label))
                    }
                    _ => {}
                }
                self.current.insert(j.thread_id.clone(), j.clone());
            }
        }
        self.history.push(event);
        Ok(())
    }

    fn new_story_id(&self) -> String {
        format!("s{:04}", self.stories_created + 1)
    }

    /// Events that would record a judgment, without applying them.
    pub fn plan_judgment(
        &self,
        thread_id: &str,
        label: Label,
        story: Option<StoryRef>,
        annotator: &str,
        at: DateTime<Utc>,
    ) -> Result<Vec<Event>, AnnotationError> {
        if !self.knows_thread(thread_id) {
            return Err(AnnotationError::UnknownThread(thread_id.to_string()));
        }
        let at = to_millis(at);
        let mut events = Vec::new();
        let mut seq = self.next_seq();
        let story_id = match (label, story) {
            (Label::Rumour, None) => return Err(AnnotationError::MissingStory),
            (Label::NonRumour | Label::Unsure, Some(_)) => {
                return Err(AnnotationError::StoryOnNonRumour(label))
            }
            (Label::NonRumour | Label::Unsure, None) => None,
            (Label::Rumour, Some(StoryRef::Id(id))) => {
                if !self.stories.contains_key(&id) {
                    return Err(AnnotationError::UnknownStory(id));
                }
                Some(id)
            }
            (Label::Rumour, Some(StoryRef::Name(name))) => {
                let name = name.trim().to_string();
                if name.is_empty() {
                    return Err(AnnotationError::EmptyName);
                }
                match self.story_by_name(&name) {
                    Some(s) => Some(s.story_id.clone()),
                    None => {
                        let story = Story {
                            story_id: self.new_story_id(),
                            name,
                            created_at: at,
                        };
                        let id = story.story_id.clone();
                        events.push(Event::StoryCreated {
                            seq,
                            story,
                            annotator: annotator.to_string(),
                        });
                        seq += 1;
                        Some(id)
                    }
                }
            }
        };
        events.push(Event::Judgment(Judgment {
            seq,
            thread_id: thread_id.to_string(),
            label,
            story_id,
            annotator: annotator.to_string(),
            at,
        }));
        Ok(events)
    }

    /// Events that would rename a story; empty when the name is unchanged.
    pub fn plan_rename(
        &self,
        story_id: &str,
        new_name: &str,
        annotator: &str,
        at: DateTime<Utc>,
    ) -> Result<Vec<Event>, AnnotationError> {
        let story = self
            .stories
            .get(story_id)
            .ok_or_else(|| AnnotationError::UnknownStory(story_id.to_string()))?;
        let name = new_name.trim();
        if name.is_empty() {
            return Err(AnnotationError::EmptyName);
        }
        if story.name == name {
            return Ok(Vec::new());
        }
        if let Some(existing) = self.names.get(&fold_name(name)) {
            if existing != story_id {
                return Err(AnnotationError::NameCollision {
                    name: name.to_string(),
                    existing: existing.clone(),
                });
            }
        }
        Ok(vec![Event::StoryRenamed {
            seq: self.next_seq(),
            story_id: story_id.to_string(),
            name: name.to_string(),
            annotator: annotator.to_string(),
            at: to_millis(at),
        }])
    }

    /// Events that would move a rumour thread to another story.
    pub fn plan_move(
        &self,
        thread_id: &str,
        target_story_id: &str,
        annotator: &str,
        at: DateTime<Utc>,
    ) -> Result<Vec<Event>, AnnotationError> {
        if !self.knows_thread(thread_id) {
            return Err(AnnotationError::UnknownThread(thread_id.to_string()));
        }
        match self.current.get(thread_id) {
            Some(j) if j.label == Label::Rumour => {}
            _ => return Err(AnnotationError::NotARumour(thread_id.to_string())),
        }
        if !self.stories.contains_key(target_story_id) {
            return Err(AnnotationError::UnknownStory(target_story_id.to_string()));
        }
        Ok(vec![Event::Judgment(Judgment {
            seq: self.next_seq(),
            thread_id: thread_id.to_string(),
            label: Label::Rumour,
            story_id: Some(target_story_id.to_string()),
            annotator: annotator.to_string(),
            at: to_millis(at),
        })])
    }

    fn apply_all(&mut self, events: Vec<Event>) -> Result<(), AnnotationError> {
        for e in events {
            self.apply(e)?;
        }
        Ok(())
    }

    pub fn record_judgment(
        &mut self,
        thread_id: &str,
        label: Label,
        story: Option<StoryRef>,
        annotator: &str,
        at: DateTime<Utc>,
    ) -> Result<Judgment, AnnotationError> {
        let events = self.plan_judgment(thread_id, label, story, annotator, at)?;
        self.apply_all(events)?;
        Ok(self.current[thread_id].clone())
    }

    pub fn rename_story(
        &mut self,
        story_id: &str,
        new_name: &str,
        annotator: &str,
        at: DateTime<Utc>,
    ) -> Result<Story, AnnotationError> {
        let events = self.plan_rename(story_id, new_name, annotator, at)?;
        self.apply_all(events)?;
        Ok(self.stories[story_id].clone())
    }

    pub fn move_thread(
        &mut self,
        thread_id: &str,
        target_story_id: &str,
        annotator: &str,
        at: DateTime<Utc>,
    ) -> Result<Judgment, AnnotationError> {
        let events = self.plan_move(thread_id, target_story_id, annotator, at)?;
        self.apply_all(events)?;
        Ok(self.current[thread_id].clone())
    }

    /// Current view and stories in a stable serialised form.
    pub fn snapshot(&self) -> Snapshot {
        let mut members: BTreeMap<&str, usize> = BTreeMap::new();
        for j in self.current.values() {
            if let Some(s) = &j.story_id {
                *members.entry(s.as_str()).or_default() += 1;
            }
        }
        Snapshot {
            format_version: SNAPSHOT_FORMAT_VERSION,
            last_seq: self.last_seq(),
            current: self.current.values().cloned().collect(),
            stories: self
                .stories
                .values()
                .map(|s| {
                    let n = members.get(s.story_id.as_str()).copied().unwrap_or(0);
                    StoryView {
                        story: s.clone(),
                        members: n,
                        empty: n == 0,
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryView {
    #[serde(flatten)]
    pub story: Story,
    pub members: usize,
    pub empty: bool,
}

/// The `annotations.json` export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub format_version: u32,
    pub last_seq: u64,
    pub current: Vec<Judgment>,
    pub stories: Vec<StoryView>,
}

impl Snapshot {
    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("snapshot serialises");
        out.push(b'\n');
        out
    }
}

/// Time spent on one first-time judgment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationDuration {
    pub seq: u64,
    pub thread_id: String,
    pub annotator: String,
    pub label: Label,
    pub seconds: f64,
}

/// Per-thread annotation time from consecutive selection timestamps.
///
/// For each annotator, judgment events are taken in seq order. An event's
/// duration is the time since that annotator's previous judgment, provided
/// the gap does not exceed `session_gap`. Only a thread's first judgment in
/// the log gets a duration; re-annotations and moves still anchor the next
/// event's delta.
pub fn annotation_durations(state: &AnnotationState, session_gap: Duration) -> Vec<AnnotationDuration> {
    let mut judged: HashSet<&str> = HashSet::new();
    let mut previous: BTreeMap<&str, DateTime<Utc>> = BTreeMap::new();
    let mut out = Vec::new();
    // history is already in seq order
    for e in state.history() {
        let Event::Judgment(j) = e else { continue };
        let first_time = judged.insert(&j.thread_id);
        let prev = previous.insert(&j.annotator, j.at);
        let Some(prev) = prev else { continue };
        let gap = j.at - prev;
        if first_time && gap >= Duration::zero() && gap <= session_gap {
            out.push(AnnotationDuration {
                seq: j.seq,
                thread_id: j.thread_id.clone(),
                annotator: j.annotator.clone(),
                label: j.label,
                seconds: gap.num_milliseconds() as f64 / 1000.0,
            });
        }
    }
    out
}

/// Reads every event from a log file. A missing file is an empty log.
pub fn read_log(path: &Path) -> Result<Vec<Event>, AnnotationError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => {
            return Err(AnnotationError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    let mut events = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| AnnotationError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| AnnotationError::CorruptLog {
            path: path.to_path_buf(),
            line: n + 1,
            reason: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}

/// Writes a complete log, replacing any existing file.
pub fn write_log(path: &Path, events: &[Event]) -> Result<(), AnnotationError> {
    let io = |source| AnnotationError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for e in events {
        write_event(&mut w, e).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn write_event(w: &mut impl Write, e: &Event) -> io::Result<()> {
    serde_json::to_writer(&mut *w, e)?;
    w.write_all(b"\n")
}

/// State backed by an append-only `annotations.log`. Events reach the file
/// before they are applied in memory.
#[derive(Debug)]
pub struct AnnotationStore {
    state: AnnotationState,
    log: Option<(PathBuf, File)>,
}

impl AnnotationStore {
    pub fn in_memory(state: AnnotationState) -> Self {
        Self { state, log: None }
    }

    /// Replays `path` (if present) and opens it for appending.
    pub fn open(path: &Path, threads: Option<BTreeSet<String>>) -> Result<Self, AnnotationError> {
        let mut state = AnnotationState::replay(read_log(path)?)?;
        state.threads = threads;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|source| AnnotationError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| AnnotationError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(Self {
            state,
            log: Some((path.to_path_buf(), file)),
        })
    }

    pub fn state(&self) -> &AnnotationState {
        &self.state
    }

    pub fn into_state(self) -> AnnotationState {
        self.state
    }

    fn commit(&mut self, events: Vec<Event>) -> Result<(), AnnotationError> {
        if let Some((path, file)) = &mut self.log {
            let mut buf = Vec::new();
            for e in &events {
                write_event(&mut buf, e).expect("writing to a vec");
            }
            let io = |source| AnnotationError::Io {
                path: path.clone(),
                source,
            };
            file.write_all(&buf).map_err(io)?;
            file.flush().map_err(io)?;
            file.sync_data().map_err(io)?;
        }
        self.state.apply_all(events)
    }

    pub fn record_judgment(
        &mut self,
        thread_id: &str,
        label: Label,
        story: Option<StoryRef>,
        annotator: &str,
        at: DateTime<Utc>,
    ) -> Result<Judgment, AnnotationError> {
        let events = self.state.plan_judgment(thread_id, label, story, annotator, at)?;
        self.commit(events)?;
        Ok(self.state.current[thread_id].clone())
    }

    pub fn rename_story(
        &mut self,
        story_id: &str,
        new_name: &str,
        annotator: &str,
        at: DateTime<Utc>,
    ) -> Result<Story, AnnotationError> {
        let events = self.state.plan_rename(story_id, new_name, annotator, at)?;
        self.commit(events)?;
        Ok(self.state.stories[story_id].clone())
    }

    pub fn move_thread(
        &mut self,
        thread_id: &str,
        target_story_id: &str,
        annotator: &str,
        at: DateTime<Utc>,
    ) -> Result<Judgment, AnnotationError> {
        let events = self.state.plan_move(thread_id, target_story_id, annotator, at)?;
        self.commit(events)?;
        Ok(self.state.current[thread_id].clone())
    }
}
