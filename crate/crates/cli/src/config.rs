//! Pipeline configuration: a TOML file, overridden by command-line flags.
//!
//! ```toml
//! store_dir = "data/store"        # corpus store; also the default home of the two below
//! threads_dir = "data/threads"    # default: <store_dir>/threads
//! log_path = "data/annotations.log"  # default: <store_dir>/annotations.log
//! host = "127.0.0.1"
//! port = 8080
//!
//! [ingest]
//! keywords = ["ferguson", "#ferguson"]
//! languages = ["en"]
//! from = "2014-08-09"
//! to = "2014-08-16"
//!
//! [sample]
//! min_retweets = 100
//! languages = ["en"]
//! exclude_replies = true
//! exclude_retweets = true
//! max_depth = 50
//!
//! [report]
//! trim = 0.05
//! session_gap = 600
//! thresholds = [100, 250]
//!
//! [tokens]
//! "change-me" = "journalist-1"
//! ```
//!
//! Relative paths in the file are resolved against the file's directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rumour_core::report::{DEFAULT_SESSION_GAP_S, DEFAULT_TRIM};
use rumour_core::SamplePlan;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_HOST: &str = "127.0.0.1";
pub const DEFAULT_MIN_RETWEETS: u64 = 100;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub store_dir: Option<PathBuf>,
    pub threads_dir: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
    pub host: Option<String>,
    pub port: Option<u16>,
    #[serde(default)]
    pub ingest: IngestSection,
    #[serde(default)]
    pub sample: SampleSection,
    #[serde(default)]
    pub report: ReportSection,
    #[serde(default)]
    pub tokens: BTreeMap<String, String>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    pub keywords: Option<Vec<String>>,
    pub languages: Option<Vec<String>>,
    pub from: Option<String>,
    pub to: Option<String>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    pub min_retweets: Option<u64>,
    pub languages: Option<Vec<String>>,
    pub exclude_replies: Option<bool>,
    pub exclude_retweets: Option<bool>,
    pub max_depth: Option<u32>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    pub trim: Option<f64>,
    pub session_gap: Option<i64>,
    pub thresholds: Option<Vec<u64>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut cfg: FileConfig = toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.store_dir, &mut cfg.threads_dir, &mut cfg.log_path].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Values given on the command line; `None` defers to the file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub store_dir: Option<PathBuf>,
    pub threads_dir: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
    pub host: Option<String>,
    pub port: Option<u16>,
    pub keywords: Option<Vec<String>>,
    pub ingest_languages: Option<Vec<String>>,
    pub from: Option<String>,
    pub to: Option<String>,
    pub min_retweets: Option<u64>,
    pub sample_languages: Option<Vec<String>>,
    pub exclude_replies: Option<bool>,
    pub exclude_retweets: Option<bool>,
    pub max_depth: Option<u32>,
    pub trim: Option<f64>,
    pub session_gap: Option<i64>,
    pub thresholds: Option<Vec<u64>>,
}

/// The effective configuration after applying flags over the file over
/// defaults. Echoed to stderr by every subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineConfig {
    pub config_file: Option<PathBuf>,
    pub store_dir: Option<PathBuf>,
    pub threads_dir: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
    pub host: String,
    pub port: u16,
    pub ingest: IngestSettings,
    pub sample: SampleSettings,
    pub report: ReportSettings,
    /// Only the number of configured tokens is ever printed.
    #[serde(serialize_with = "count_only")]
    pub tokens: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSettings {
    pub keywords: Option<Vec<String>>,
    pub languages: Option<Vec<String>>,
    pub from: Option<String>,
    pub to: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleSettings {
    pub min_retweets: u64,
    pub languages: Option<Vec<String>>,
    pub exclude_replies: bool,
    pub exclude_retweets: bool,
    pub max_depth: Option<u32>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportSettings {
    pub trim: f64,
    pub session_gap: i64,
    pub thresholds: Vec<u64>,
}

fn count_only<S: serde::Serializer>(tokens: &BTreeMap<String, String>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u64(tokens.len() as u64)
}

impl PipelineConfig {
    pub fn resolve(file_path: Option<&Path>, file: FileConfig, flags: Overrides) -> Self {
        let store_dir = flags.store_dir.or(file.store_dir);
        let threads_dir = flags
            .threads_dir
            .or(file.threads_dir)
            .or_else(|| store_dir.as_ref().map(|s| s.join("threads")));
        let log_path = flags
            .log_path
            .or(file.log_path)
            .or_else(|| store_dir.as_ref().map(|s| s.join("annotations.log")));
        Self {
            config_file: file_path.map(Path::to_path_buf),
            store_dir,
            threads_dir,
            log_path,
            host: flags.host.or(file.host).unwrap_or_else(|| DEFAULT_HOST.to_string()),
            port: flags.port.or(file.port).unwrap_or(DEFAULT_PORT),
            ingest: IngestSettings {
                keywords: flags.keywords.or(file.ingest.keywords),
                languages: flags.ingest_languages.or(file.ingest.languages),
                from: flags.from.or(file.ingest.from),
                to: flags.to.or(file.ingest.to),
            },
            sample: SampleSettings {
                min_retweets: flags.min_retweets.or(file.sample.min_retweets).unwrap_or(DEFAULT_MIN_RETWEETS),
                languages: flags.sample_languages.or(file.sample.languages),
                exclude_replies: flags.exclude_replies.or(file.sample.exclude_replies).unwrap_or(true),
                exclude_retweets: flags.exclude_retweets.or(file.sample.exclude_retweets).unwrap_or(true),
                max_depth: flags.max_depth.or(file.sample.max_depth),
            },
            report: ReportSettings {
                trim: flags.trim.or(file.report.trim).unwrap_or(DEFAULT_TRIM),
                session_gap: flags.session_gap.or(file.report.session_gap).unwrap_or(DEFAULT_SESSION_GAP_S),
                thresholds: flags.thresholds.or(file.report.thresholds).unwrap_or_default(),
            },
            tokens: file.tokens,
        }
    }

    pub fn sample_plan(&self) -> SamplePlan {
        SamplePlan {
            min_retweets: self.sample.min_retweets,
            languages: self
                .sample
                .languages
                .as_ref()
                .map(|l| l.iter().cloned().collect::<BTreeSet<_>>()),
            exclude_replies: self.sample.exclude_replies,
            exclude_retweets: self.sample.exclude_retweets,
        }
    }

    pub fn report_params(&self) -> rumour_core::ReportParams {
        rumour_core::ReportParams {
            trim: self.report.trim,
            session_gap_s: self.report.session_gap,
            thresholds: self.report.thresholds.clone(),
        }
    }
}
