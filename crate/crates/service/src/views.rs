//! Response documents. All are pure functions of the thread set and an
//! annotation snapshot.

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use rumour_core::annostore::StoryView;
use rumour_core::record::timestamp;
use rumour_core::{AnnotationState, Judgment, Label, Story, Thread, ThreadSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DaySummary {
    pub date: NaiveDate,
    pub threads: u64,
    pub annotated: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadSummary {
    pub source_id: String,
    pub text: String,
    pub author: String,
    #[serde(with = "timestamp")]
    pub created_at: DateTime<Utc>,
    pub retweet_count: u64,
    pub reply_count: u64,
    /// `rumour`, `nonrumour`, `unsure` or `unannotated`.
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub story_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub story_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayTimeline {
    pub date: NaiveDate,
    pub threads: Vec<ThreadSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewStory {
    #[serde(flatten)]
    pub story: StoryView,
    pub threads: Vec<ThreadSummary>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewCounts {
    pub rumours: u64,
    pub non_rumours: u64,
    pub unsure: u64,
    pub unannotated: u64,
}

impl ReviewCounts {
    pub fn total(&self) -> u64 {
        self.rumours + self.non_rumours + self.unsure + self.unannotated
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewSummary {
    pub stories: Vec<ReviewStory>,
    pub counts: ReviewCounts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentResponse {
    pub judgment: Judgment,
    #[serde(default)]
    pub story: Option<Story>,
}

/// Thread ids per source day, chronological.
pub fn day_index(threads: &ThreadSet) -> BTreeMap<NaiveDate, Vec<String>> {
    let mut days: BTreeMap<NaiveDate, Vec<&Thread>> = BTreeMap::new();
    for t in threads.values() {
        days.entry(t.source.day()).or_default().push(t);
    }
    days.into_iter()
        .map(|(d, mut ts)| {
            ts.sort_by(|a, b| a.source.chrono_key().cmp(&b.source.chrono_key()));
            (d, ts.into_iter().map(|t| t.id().to_string()).collect())
        })
        .collect()
}

pub fn summary(thread: &Thread, state: &AnnotationState) -> ThreadSummary {
    let current = state.current(thread.id());
    let story = current
        .and_then(|j| j.story_id.as_deref())
        .and_then(|s| state.story(s));
    ThreadSummary {
        source_id: thread.source.id.clone(),
        text: thread.source.text.clone(),
        author: thread.source.author.clone(),
        created_at: thread.source.created_at,
        retweet_count: thread.source.retweet_count,
        reply_count: thread.reply_count as u64,
        label: current.map_or("unannotated", |j| j.label.as_str()).to_string(),
        story_id: story.map(|s| s.story_id.clone()),
        story_name: story.map(|s| s.name.clone()),
    }
}

pub fn days(index: &BTreeMap<NaiveDate, Vec<String>>, state: &AnnotationState) -> Vec<DaySummary> {
    index
        .iter()
        .map(|(date, ids)| DaySummary {
            date: *date,
            threads: ids.len() as u64,
            annotated: ids.iter().filter(|id| state.current(id).is_some()).count() as u64,
        })
        .collect()
}

pub fn timeline(
    threads: &ThreadSet,
    index: &BTreeMap<NaiveDate, Vec<String>>,
    state: &AnnotationState,
    date: NaiveDate,
) -> Option<DayTimeline> {
    let ids = index.get(&date)?;
    Some(DayTimeline {
        date,
        threads: ids
            .iter()
            .filter_map(|id| threads.get(id))
            .map(|t| summary(t, state))
            .collect(),
    })
}

pub fn review(threads: &ThreadSet, state: &AnnotationState) -> ReviewSummary {
    let snapshot = state.snapshot();
    let stories = snapshot
        .stories
        .into_iter()
        .map(|view| {
            let mut members: Vec<&Thread> = state
                .members(&view.story.story_id)
                .into_iter()
                .filter_map(|j| threads.get(&j.thread_id))
                .collect();
            members.sort_by(|a, b| a.source.chrono_key().cmp(&b.source.chrono_key()));
            ReviewStory {
                threads: members.into_iter().map(|t| summary(t, state)).collect(),
                story: view,
            }
        })
        .collect();
    let mut counts = ReviewCounts::default();
    for t in threads.values() {
        match state.current(t.id()).map(|j| j.label) {
            Some(Label::Rumour) => counts.rumours += 1,
            Some(Label::NonRumour) => counts.non_rumours += 1,
            Some(Label::Unsure) => counts.unsure += 1,
            None => counts.unannotated += 1,
        }
    }
    ReviewSummary { stories, counts }
}
