//! Retweet-count distribution analysis and threshold sampling of source tweets.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::annostore::{AnnotationState, Label};
use crate::record::TweetRecord;
use crate::store::CorpusStore;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SampleError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("min_retweets must be at least 1")]
    ZeroThreshold,
    #[error("thresholds must be strictly increasing")]
    UnorderedThresholds,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBucket {
    /// Inclusive lower bound.
    pub lower: u64,
    /// Exclusive upper bound; `None` for the open-ended last bucket.
    pub upper: Option<u64>,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CcdfPoint {
    pub threshold: u64,
    /// Tweets with `retweet_count >= threshold`.
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetweetDistribution {
    pub total: u64,
    pub histogram: Vec<HistogramBucket>,
    pub ccdf: Vec<CcdfPoint>,
}

/// The 0, 1, 2, 5, 10, 20, 50, ... ladder, up to the first point above `max`.
pub fn ladder(max: u64) -> Vec<u64> {
    let mut out = vec![0];
    let mut decade: u64 = 1;
    'outer: loop {
        for m in [1, 2, 5] {
            let Some(p) = decade.checked_mul(m) else {
                break 'outer;
            };
            out.push(p);
            if p > max {
                break 'outer;
            }
        }
        match decade.checked_mul(10) {
            Some(d) => decade = d,
            None => break,
        }
    }
    out
}

/// Distribution of retweet counts over every stored record.
pub fn compute_distribution(
    store: &CorpusStore,
    extra_thresholds: &[u64],
) -> Result<RetweetDistribution, SampleError> {
    distribution_of(store.iter().map(|r| r.retweet_count), extra_thresholds)
}

pub fn distribution_of(
    counts: impl IntoIterator<Item = u64>,
    extra_thresholds: &[u64],
) -> Result<RetweetDistribution, SampleError> {
    let mut counts: Vec<u64> = counts.into_iter().collect();
    if counts.is_empty() {
        return Err(SampleError::EmptyCorpus);
    }
    counts.sort_unstable();
    let total = counts.len() as u64;
    let max = *counts.last().unwrap();
    let at_least = |t: u64| (counts.len() - counts.partition_point(|&c| c < t)) as u64;

    let bounds = ladder(max);
    let histogram = bounds
        .iter()
        .enumerate()
        .filter_map(|(i, &lower)| {
            let upper = bounds.get(i + 1).copied();
            // the last ladder point lies above max, so it can only hold an empty bucket
            if lower > max {
                return None;
            }
            let count = at_least(lower) - upper.map_or(0, at_least);
            Some(HistogramBucket {
                lower,
                upper,
                count,
            })
        })
        .collect();

    let thresholds: BTreeSet<u64> = bounds.iter().chain(extra_thresholds).copied().collect();
    let ccdf = thresholds
        .into_iter()
        .map(|threshold| CcdfPoint {
            threshold,
            count: at_least(threshold),
        })
        .collect();

    Ok(RetweetDistribution {
        total,
        histogram,
        ccdf,
    })
}

/// Which records qualify as source tweets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub min_retweets: u64,
    #[serde(default)]
    pub languages: Option<BTreeSet<String>>,
    #[serde(default = "yes")]
    pub exclude_replies: bool,
    #[serde(default = "yes")]
    pub exclude_retweets: bool,
}

fn yes() -> bool {
    true
}

impl SamplePlan {
    pub fn new(min_retweets: u64) -> Result<Self, SampleError> {
        let plan = Self {
            min_retweets,
            languages: None,
            exclude_replies: true,
            exclude_retweets: true,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), SampleError> {
        if self.min_retweets == 0 {
            return Err(SampleError::ZeroThreshold);
        }
        Ok(())
    }

    /// Threshold is inclusive: a count equal to `min_retweets` qualifies.
    pub fn admits(&self, r: &TweetRecord) -> bool {
        r.retweet_count >= self.min_retweets
            && !(self.exclude_replies && r.is_reply())
            && !(self.exclude_retweets && r.is_retweet())
            && self.languages.as_ref().is_none_or(|l| l.contains(&r.lang))
    }
}

/// Records admitted by `plan`, ordered by `created_at` then id.
pub fn sample_sources(store: &CorpusStore, plan: &SamplePlan) -> Result<Vec<TweetRecord>, SampleError> {
    plan.validate()?;
    Ok(sample_records(store.iter(), plan))
}

pub fn sample_records<'a>(
    records: impl IntoIterator<Item = &'a TweetRecord>,
    plan: &SamplePlan,
) -> Vec<TweetRecord> {
    let mut out: Vec<TweetRecord> = records
        .into_iter()
        .filter(|r| plan.admits(r))
        .cloned()
        .collect();
    out.sort_by(|a, b| a.chrono_key().cmp(&b.chrono_key()));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub threshold: u64,
    pub sampled: u64,
    /// Sampled tweets judged Rumour or NonRumour; Unsure is left out.
    pub annotated: u64,
    pub rumours: u64,
    /// Percentage rounded to two decimals; `None` when nothing is annotated.
    pub rumour_pct: Option<f64>,
}

/// Rumour share among annotated source tweets at each threshold, with the
/// default plan flags (replies and retweets excluded).
pub fn threshold_sensitivity(
    store: &CorpusStore,
    state: &AnnotationState,
    thresholds: &[u64],
) -> Result<Vec<ThresholdPoint>, SampleError> {
    threshold_sensitivity_over(store.iter(), state, thresholds)
}

pub fn threshold_sensitivity_over<'a>(
    candidates: impl IntoIterator<Item = &'a TweetRecord>,
    state: &AnnotationState,
    thresholds: &[u64],
) -> Result<Vec<ThresholdPoint>, SampleError> {
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SampleError::UnorderedThresholds);
    }
    if thresholds.first() == Some(&0) {
        return Err(SampleError::ZeroThreshold);
    }
    let base = SamplePlan::new(1)?;
    // (retweet_count, label) for every eligible candidate
    let pool: Vec<(u64, Option<Label>)> = candidates
        .into_iter()
        .filter(|r| base.admits(r))
        .map(|r| (r.retweet_count, state.current(&r.id).map(|j| j.label)))
        .collect();

    Ok(thresholds
        .iter()
        .map(|&threshold| {
            let mut point = ThresholdPoint {
                threshold,
                sampled: 0,
                annotated: 0,
                rumours: 0,
                rumour_pct: None,
            };
            for (count, label) in &pool {
                if *count < threshold {
                    continue;
                }
                point.sampled += 1;
                match label {
                    Some(Label::Rumour) => {
                        point.annotated += 1;
                        point.rumours += 1;
                    }
                    Some(Label::NonRumour) => point.annotated += 1,
                    Some(Label::Unsure) | None => {}
                }
            }
            if point.annotated > 0 {
                point.rumour_pct = Some(round_to(
                    100.0 * point.rumours as f64 / point.annotated as f64,
                    2,
                ));
            }
            point
        })
        .collect())
}

pub(crate) fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn rec(id: &str, rt: u64) -> TweetRecord {
        TweetRecord {
            id: id.into(),
            author: "a".into(),
            text: "t".into(),
            created_at: Utc.timestamp_millis_opt(id.len() as i64).unwrap(),
            retweet_count: rt,
            lang: "en".into(),
            in_reply_to: None,
            retweet_of: None,
        }
    }

    fn ccdf_at(d: &RetweetDistribution, t: u64) -> u64 {
        d.ccdf.iter().find(|p| p.threshold == t).unwrap().count
    }

    #[test]
    fn ladder_points() {
        assert_eq!(ladder(0), [0, 1]);
        assert_eq!(ladder(100), [0, 1, 2, 5, 10, 20, 50, 100, 200]);
        assert_eq!(ladder(u64::MAX).last(), Some(&10_000_000_000_000_000_000));
    }

    #[test]
    fn ccdf_direct_count() {
        let d = distribution_of([0, 0, 5, 100, 250], &[]).unwrap();
        assert_eq!(ccdf_at(&d, 100), 2);
        assert_eq!(ccdf_at(&d, 200), 1);
        assert_eq!(ccdf_at(&d, 0), 5);
        let d = distribution_of([0, 0, 5, 100, 250], &[250]).unwrap();
        assert_eq!(ccdf_at(&d, 250), 1);
        assert_eq!(d.histogram.iter().map(|b| b.count).sum::<u64>(), 5);
    }

    #[test]
    fn ccdf_boundary_inclusive() {
        let d = distribution_of([100], &[101]).unwrap();
        assert_eq!(ccdf_at(&d, 0), 1);
        assert_eq!(ccdf_at(&d, 100), 1);
        assert_eq!(ccdf_at(&d, 101), 0);
        assert!(d.ccdf.windows(2).all(|w| w[0].count >= w[1].count));
    }

    #[test]
    fn empty_corpus_rejected() {
        assert_eq!(
            compute_distribution(&CorpusStore::in_memory(), &[]),
            Err(SampleError::EmptyCorpus)
        );
    }

    #[test]
    fn inclusive_threshold() {
        let store = CorpusStore::from_records([rec("a", 99), rec("bb", 100), rec("ccc", 101)]);
        let got = sample_sources(&store, &SamplePlan::new(100).unwrap()).unwrap();
        let ids: Vec<_> = got.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["bb", "ccc"]);
    }

    #[test]
    fn replies_excluded() {
        let mut records: Vec<_> = ["a", "bb", "ccc", "dddd", "eeeee"]
            .iter()
            .map(|id| rec(id, 3))
            .collect();
        records[1].in_reply_to = Some("a".into());
        records[3].in_reply_to = Some("a".into());
        let store = CorpusStore::from_records(records);
        let got = sample_sources(&store, &SamplePlan::new(1).unwrap()).unwrap();
        assert_eq!(got.len(), 3);
        assert!(got.iter().all(|r| r.in_reply_to.is_none()));
    }

    #[test]
    fn zero_threshold_rejected() {
        assert_eq!(SamplePlan::new(0), Err(SampleError::ZeroThreshold));
    }

    #[test]
    fn thresholds_must_increase() {
        let state = AnnotationState::default();
        let store = CorpusStore::in_memory();
        assert_eq!(
            threshold_sensitivity(&store, &state, &[250, 100]),
            Err(SampleError::UnorderedThresholds)
        );
    }

    #[test]
    fn unannotated_threshold_is_undefined() {
        let store = CorpusStore::from_records([rec("a", 500)]);
        let pts = threshold_sensitivity(&store, &AnnotationState::default(), &[100]).unwrap();
        assert_eq!(pts[0].sampled, 1);
        assert_eq!(pts[0].rumour_pct, None);
    }
}
