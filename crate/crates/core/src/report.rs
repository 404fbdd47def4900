//! Analytics over annotated threads: per-day rumour table, trimmed annotation
//! timings, hourly activity and conversation-size summaries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::annostore::{annotation_durations, AnnotationState, Judgment, Label};
use crate::sampler::{round_to, threshold_sensitivity_over, SampleError, ThresholdPoint};
use crate::threads::Thread;

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_TRIM: f64 = 0.05;
pub const DEFAULT_SESSION_GAP_S: i64 = 600;

pub type ThreadSet = BTreeMap<String, Thread>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("no values to average")]
    Empty,
    #[error("trim fraction {0} outside [0, 0.5)")]
    BadTrim(f64),
    #[error("no annotated threads on {0}")]
    UnknownDate(NaiveDate),
    #[error("no annotated threads labelled {0}")]
    EmptyLabel(Label),
    #[error(transparent)]
    Sample(#[from] SampleError),
}

fn round1(x: f64) -> f64 {
    round_to(x, 1)
}

/// Sort ascending, drop `floor(trim * n)` values from each end, average the rest.
pub fn trimmed_mean(values: &[f64], trim: f64) -> Result<f64, ReportError> {
    if values.is_empty() {
        return Err(ReportError::Empty);
    }
    if !(0.0..0.5).contains(&trim) {
        return Err(ReportError::BadTrim(trim));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cut = (trim * sorted.len() as f64).floor() as usize;
    let kept = &sorted[cut..sorted.len() - cut];
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Quantile by linear interpolation between closest ranks; `sorted` must be
/// ascending and non-empty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// One row of the rumour distribution table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRow {
    /// `None` on the overall row.
    pub date: Option<NaiveDate>,
    pub rumour_count: u64,
    pub nonrumour_count: u64,
    pub unsure_count: u64,
    /// Share of rumours among rumour + non-rumour threads, one decimal.
    pub rumour_pct: Option<f64>,
    pub total_threads: u64,
    pub avg_thread_size: f64,
    pub median_thread_size: f64,
    pub story_count: u64,
}

fn fmt_number(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.0}")
    } else {
        format!("{x:.1}")
    }
}

impl DayRow {
    /// `"<rumours>/<total> (<pct>%)"`, e.g. `2/14 (14.3%)`.
    pub fn counts_label(&self) -> String {
        match self.rumour_pct {
            Some(p) => format!("{}/{} ({p:.1}%)", self.rumour_count, self.total_threads),
            None => format!("{}/{} (n/a)", self.rumour_count, self.total_threads),
        }
    }

    pub fn date_label(&self) -> String {
        self.date
            .map(|d| d.format("%-d %b").to_string())
            .unwrap_or_else(|| "Overall".to_string())
    }

    /// One printed table line.
    pub fn line(&self) -> String {
        format!(
            "{}: {}, avg {:.1}, med {}, {} stories",
            self.date_label(),
            self.counts_label(),
            self.avg_thread_size,
            fmt_number(self.median_thread_size),
            self.story_count
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayTable {
    pub rows: Vec<DayRow>,
    pub overall: DayRow,
}

impl DayTable {
    pub fn lines(&self) -> Vec<String> {
        self.rows
            .iter()
            .chain(std::iter::once(&self.overall))
            .map(DayRow::line)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "date,rumours,rumour_pct,threads,avg_size,median_size,stories\n",
        );
        for r in self.rows.iter().chain(std::iter::once(&self.overall)) {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.1},{},{}",
                r.date.map_or_else(|| "overall".to_string(), |d| d.to_string()),
                r.rumour_count,
                r.rumour_pct.map_or_else(String::new, |p| format!("{p:.1}")),
                r.total_threads,
                r.avg_thread_size,
                fmt_number(r.median_thread_size),
                r.story_count
            );
        }
        out
    }
}

/// Annotated threads paired with their current judgment.
fn annotated<'a>(
    threads: &'a ThreadSet,
    state: &'a AnnotationState,
) -> impl Iterator<Item = (&'a Thread, &'a Judgment)> {
    threads
        .values()
        .filter_map(move |t| state.current(t.id()).map(|j| (t, j)))
}

fn row(date: Option<NaiveDate>, members: &[(&Thread, &Judgment)]) -> DayRow {
    let count = |l: Label| members.iter().filter(|(_, j)| j.label == l).count() as u64;
    let (rumour_count, nonrumour_count, unsure_count) =
        (count(Label::Rumour), count(Label::NonRumour), count(Label::Unsure));
    let decided = rumour_count + nonrumour_count;
    let sizes: Vec<f64> = members.iter().map(|(t, _)| t.size() as f64).collect();
    let stories: BTreeSet<&str> = members
        .iter()
        .filter(|(_, j)| j.label == Label::Rumour)
        .filter_map(|(_, j)| j.story_id.as_deref())
        .collect();
    DayRow {
        date,
        rumour_count,
        nonrumour_count,
        unsure_count,
        rumour_pct: (decided > 0).then(|| round1(100.0 * rumour_count as f64 / decided as f64)),
        total_threads: members.len() as u64,
        avg_thread_size: if sizes.is_empty() {
            0.0
        } else {
            round1(sizes.iter().sum::<f64>() / sizes.len() as f64)
        },
        median_thread_size: if sizes.is_empty() { 0.0 } else { median(&sizes) },
        story_count: stories.len() as u64,
    }
}

/// Per-day rows over annotated threads (day of the source tweet, UTC) plus an
/// overall row. Stories spanning several days are counted once overall.
pub fn day_table(threads: &ThreadSet, state: &AnnotationState) -> DayTable {
    let mut by_day: BTreeMap<NaiveDate, Vec<(&Thread, &Judgment)>> = BTreeMap::new();
    for (t, j) in annotated(threads, state) {
        by_day.entry(t.source.day()).or_default().push((t, j));
    }
    let rows = by_day.iter().map(|(d, m)| row(Some(*d), m)).collect();
    let all: Vec<_> = annotated(threads, state).collect();
    DayTable {
        rows,
        overall: row(None, &all),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub overall_mean_s: Option<f64>,
    pub rumour_mean_s: Option<f64>,
    pub nonrumour_mean_s: Option<f64>,
    pub unsure_mean_s: Option<f64>,
    pub n_durations: u64,
    pub trim_fraction: f64,
    pub session_gap_s: i64,
}

/// Trimmed mean annotation time overall and per label (each group trimmed
/// on its own).
pub fn timing_stats(
    state: &AnnotationState,
    session_gap: Duration,
    trim: f64,
) -> Result<TimingStats, ReportError> {
    if !(0.0..0.5).contains(&trim) {
        return Err(ReportError::BadTrim(trim));
    }
    let durations = annotation_durations(state, session_gap);
    let of = |label: Option<Label>| {
        let v: Vec<f64> = durations
            .iter()
            .filter(|d| label.is_none_or(|l| d.label == l))
            .map(|d| d.seconds)
            .collect();
        trimmed_mean(&v, trim).ok()
    };
    Ok(TimingStats {
        overall_mean_s: of(None),
        rumour_mean_s: of(Some(Label::Rumour)),
        nonrumour_mean_s: of(Some(Label::NonRumour)),
        unsure_mean_s: of(Some(Label::Unsure)),
        n_durations: durations.len() as u64,
        trim_fraction: trim,
        session_gap_s: session_gap.num_seconds(),
    })
}

/// Hourly counts of rumourous source tweets and their replies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HourHistogram {
    pub date: NaiveDate,
    #[serde(with = "crate::record::timestamp")]
    pub start: DateTime<Utc>,
    pub step_seconds: u32,
    pub sources: Vec<u64>,
    pub replies: Vec<u64>,
}

/// Bins start at midnight UTC of `date` and cover at least that day; they
/// extend past midnight when replies arrive later.
pub fn hourly_histogram(
    threads: &ThreadSet,
    state: &AnnotationState,
    date: NaiveDate,
) -> Result<HourHistogram, ReportError> {
    let day: Vec<_> = annotated(threads, state)
        .filter(|(t, _)| t.source.day() == date)
        .collect();
    if day.is_empty() {
        return Err(ReportError::UnknownDate(date));
    }
    let start = date.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc();
    let bin = |at: DateTime<Utc>| ((at - start).num_milliseconds().max(0) / 3_600_000) as usize;

    let mut sources = vec![0u64; 24];
    let mut replies = vec![0u64; 24];
    for (t, _) in day.iter().filter(|(_, j)| j.label == Label::Rumour) {
        let b = bin(t.source.created_at);
        if b >= sources.len() {
            sources.resize(b + 1, 0);
        }
        sources[b] += 1;
        for n in &t.nodes {
            let b = bin(n.record.created_at);
            if b >= replies.len() {
                replies.resize(b + 1, 0);
            }
            replies[b] += 1;
        }
    }
    let len = sources.len().max(replies.len());
    sources.resize(len, 0);
    replies.resize(len, 0);
    Ok(HourHistogram {
        date,
        start,
        step_seconds: 3600,
        sources,
        replies,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub n: u64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

pub fn summarize(values: &[f64]) -> Option<SizeSummary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(SizeSummary {
        n: v.len() as u64,
        min: v[0],
        q1: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q3: quantile(&v, 0.75),
        max: v[v.len() - 1],
        mean: v.iter().sum::<f64>() / v.len() as f64,
    })
}

/// Reply-count summaries for each requested label.
pub fn size_distribution(
    threads: &ThreadSet,
    state: &AnnotationState,
    labels: &[Label],
) -> Result<BTreeMap<Label, SizeSummary>, ReportError> {
    labels
        .iter()
        .map(|&label| {
            let sizes: Vec<f64> = annotated(threads, state)
                .filter(|(_, j)| j.label == label)
                .map(|(t, _)| t.size() as f64)
                .collect();
            summarize(&sizes)
                .map(|s| (label, s))
                .ok_or(ReportError::EmptyLabel(label))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    pub trim: f64,
    pub session_gap_s: i64,
    /// Thresholds for the rumour-share sensitivity table; empty skips it.
    #[serde(default)]
    pub thresholds: Vec<u64>,
}

impl Default for ReportParams {
    fn default() -> Self {
        Self {
            trim: DEFAULT_TRIM,
            session_gap_s: DEFAULT_SESSION_GAP_S,
            thresholds: Vec::new(),
        }
    }
}

/// Everything `report.json` holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub format_version: u32,
    pub params: ReportParams,
    pub day_table: DayTable,
    pub table_lines: Vec<String>,
    pub timing: TimingStats,
    pub hourly: Vec<HourHistogram>,
    pub sizes: BTreeMap<Label, SizeSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_sensitivity: Option<Vec<ThresholdPoint>>,
}

impl ReportBundle {
    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("report serialises");
        out.push(b'\n');
        out
    }
}

/// Computes the full report. Sensitivity uses the thread sources as the
/// sampled population.
pub fn build_report(
    threads: &ThreadSet,
    state: &AnnotationState,
    params: &ReportParams,
) -> Result<ReportBundle, ReportError> {
    let day_table = day_table(threads, state);
    let timing = timing_stats(state, Duration::seconds(params.session_gap_s), params.trim)?;
    let hourly = day_table
        .rows
        .iter()
        .filter_map(|r| r.date)
        .map(|d| hourly_histogram(threads, state, d))
        .collect::<Result<_, _>>()?;
    let present: BTreeSet<Label> = annotated(threads, state).map(|(_, j)| j.label).collect();
    let present: Vec<Label> = present.into_iter().collect();
    let sizes = size_distribution(threads, state, &present)?;
    let threshold_sensitivity = if params.thresholds.is_empty() {
        None
    } else {
        Some(threshold_sensitivity_over(
            threads.values().map(|t| &t.source),
            state,
            &params.thresholds,
        )?)
    };
    Ok(ReportBundle {
        format_version: REPORT_FORMAT_VERSION,
        params: params.clone(),
        table_lines: day_table.lines(),
        day_table,
        timing,
        hourly,
        sizes,
        threshold_sensitivity,
    })
}
