//! Building blocks for curating a rumour dataset from a tweet corpus.
//!
//! The pipeline runs in stages, one module each:
//!
//! * [`ingest`]: parse archived JSON-lines tweets, filter by keyword, language
//!   and date, de-duplicate, and persist them in a [`store::CorpusStore`].
//! * [`sampler`]: inspect the retweet-count distribution and keep
//!   high-engagement source tweets above a threshold.
//! * [`threads`]: grow each source into its reply tree.
//! * [`annostore`]: record rumour / non-rumour / unsure judgments and story
//!   groupings as an append-only event log.
//! * [`report`]: per-day rumour table, trimmed annotation times, hourly
//!   activity and conversation-size summaries.
//!
//! [`bundle`] packages threads and annotations into one exportable document,
//! and [`fixtures`] generates deterministic synthetic datasets.

pub mod annostore;
pub mod bundle;
pub mod fixtures;
pub mod ingest;
pub mod record;
pub mod report;
pub mod sampler;
pub mod store;
pub mod threads;

pub use annostore::{
    annotation_durations, AnnotationDuration, AnnotationError, AnnotationState, AnnotationStore,
    Event, Judgment, Label, Snapshot, Story, StoryRef,
};
pub use bundle::{BundleError, DatasetBundle};
pub use ingest::{ingest_corpus, keyword_match, parse_record, CorpusStats, IngestError, IngestFilter};
pub use record::TweetRecord;
pub use report::{build_report, ReportBundle, ReportParams, ThreadSet};
pub use sampler::{compute_distribution, sample_sources, threshold_sensitivity, RetweetDistribution, SamplePlan};
pub use store::CorpusStore;
pub use threads::{build_all, build_thread, corpus_reply_provider, ReplyProvider, Thread, ThreadBuildStats};
