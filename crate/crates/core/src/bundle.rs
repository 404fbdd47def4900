//! Single-document dataset export: threads, the annotation event log and the
//! current-view snapshot.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annostore::{write_log, AnnotationError, AnnotationState, Event, Snapshot};
use crate::threads::{write_threads, Thread, ThreadError};

pub const BUNDLE_KIND: &str = "rumour-dataset-bundle";
pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("not a dataset bundle (kind {0:?})")]
    WrongKind(String),
    #[error("unsupported bundle format_version {0}")]
    Version(u32),
    #[error("bundle snapshot disagrees with its event log")]
    SnapshotMismatch,
    #[error("bundle judges unknown thread {0}")]
    UnknownThread(String),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Thread(#[from] ThreadError),
    #[error("invalid bundle json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub kind: String,
    pub format_version: u32,
    pub threads: Vec<Thread>,
    pub events: Vec<Event>,
    pub snapshot: Snapshot,
}

impl DatasetBundle {
    pub fn new(threads: &BTreeMap<String, Thread>, state: &AnnotationState) -> Self {
        Self {
            kind: BUNDLE_KIND.to_string(),
            format_version: BUNDLE_FORMAT_VERSION,
            threads: threads.values().cloned().collect(),
            events: state.history().to_vec(),
            snapshot: state.snapshot(),
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(self).expect("bundle serialises");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, BundleError> {
        let bundle: Self = serde_json::from_slice(bytes)?;
        if bundle.kind != BUNDLE_KIND {
            return Err(BundleError::WrongKind(bundle.kind));
        }
        if bundle.format_version != BUNDLE_FORMAT_VERSION {
            return Err(BundleError::Version(bundle.format_version));
        }
        Ok(bundle)
    }

    /// Rebuilds the thread set and annotation state, checking the snapshot
    /// against a replay of the events.
    pub fn restore(&self) -> Result<(BTreeMap<String, Thread>, AnnotationState), BundleError> {
        let threads: BTreeMap<String, Thread> = self
            .threads
            .iter()
            .map(|t| (t.id().to_string(), t.clone()))
            .collect();
        let mut state = AnnotationState::replay(self.events.iter().cloned())?;
        if state.snapshot() != self.snapshot {
            return Err(BundleError::SnapshotMismatch);
        }
        if let Some(j) = state.judgments().find(|j| !threads.contains_key(&j.thread_id)) {
            return Err(BundleError::UnknownThread(j.thread_id.clone()));
        }
        state.set_threads(threads.keys().cloned());
        Ok((threads, state))
    }

    /// Writes the thread documents and a fresh `annotations.log`.
    pub fn install(&self, threads_dir: &Path, log_path: &Path) -> Result<(), BundleError> {
        let (threads, state) = self.restore()?;
        let list: Vec<Thread> = threads.into_values().collect();
        write_threads(threads_dir, &list)?;
        write_log(log_path, state.history())?;
        Ok(())
    }
}
