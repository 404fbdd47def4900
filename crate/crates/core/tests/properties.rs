use std::collections::BTreeSet;

use chrono::{Duration, TimeZone, Utc};
use proptest::prelude::*;

use rumour_core::report::trimmed_mean;
use rumour_core::sampler::{distribution_of, sample_records};
use rumour_core::{AnnotationState, Label, SamplePlan, StoryRef, TweetRecord};

fn tweet(i: usize, retweets: u64, kind: u8) -> TweetRecord {
    TweetRecord {
        id: format!("{}", 100 + i),
        author: "a".into(),
        text: "#ferguson".into(),
        created_at: Utc.timestamp_opt(1_407_542_400 + i as i64 * 60, 0).unwrap(),
        retweet_count: retweets,
        lang: "en".into(),
        in_reply_to: (kind == 1).then(|| "1".to_string()),
        retweet_of: (kind == 2).then(|| "2".to_string()),
    }
}

fn corpus() -> impl Strategy<Value = Vec<TweetRecord>> {
    prop::collection::vec((0u64..600, 0u8..3), 0..120).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (rt, kind))| tweet(i, rt, kind))
            .collect()
    })
}

#[derive(Debug, Clone)]
enum Op {
    Judge(usize, u8, u8),
    Rename(usize, u8),
    Move(usize, usize),
}

fn ops() -> impl Strategy<Value = Vec<Op>> {
    let op = prop_oneof![
        (0usize..12, 0u8..3, 0u8..5).prop_map(|(t, l, s)| Op::Judge(t, l, s)),
        (0usize..6, 0u8..6).prop_map(|(s, n)| Op::Rename(s, n)),
        (0usize..12, 0usize..6).prop_map(|(t, s)| Op::Move(t, s)),
    ];
    prop::collection::vec(op, 0..80)
}

fn run(ops: &[Op]) -> AnnotationState {
    let mut state = AnnotationState::with_threads((0..12).map(|i| format!("t{i}")));
    let mut at = Utc.with_ymd_and_hms(2014, 8, 20, 9, 0, 0).unwrap();
    for op in ops {
        at += Duration::seconds(17);
        let stories: Vec<String> = state.stories().map(|s| s.story_id.clone()).collect();
        let _ = match *op {
            Op::Judge(t, l, s) => {
                let label = Label::ALL[l as usize];
                let story = (label == Label::Rumour).then(|| StoryRef::Name(format!("Story {s}")));
                state.record_judgment(&format!("t{t}"), label, story, "a", at).map(drop)
            }
            Op::Rename(s, n) if s < stories.len() => state
                .rename_story(&stories[s], &format!("name {n}"), "b", at)
                .map(drop),
            Op::Move(t, s) if s < stories.len() => state.move_thread(&format!("t{t}"), &stories[s], "a", at).map(drop),
            _ => Ok(()),
        };
    }
    state
}

proptest! {
    #[test]
    fn ccdf_is_non_increasing_and_matches_a_count(counts in prop::collection::vec(0u64..100_000, 1..300)) {
        let d = distribution_of(counts.iter().copied(), &[7, 333]).unwrap();
        for w in d.ccdf.windows(2) {
            prop_assert!(w[0].threshold < w[1].threshold);
            prop_assert!(w[0].count >= w[1].count);
        }
        for p in &d.ccdf {
            prop_assert_eq!(p.count, counts.iter().filter(|&&c| c >= p.threshold).count() as u64);
        }
        prop_assert_eq!(d.histogram.iter().map(|b| b.count).sum::<u64>(), counts.len() as u64);
    }

    #[test]
    fn higher_threshold_samples_are_subsets(records in corpus(), a in 1u64..600, b in 1u64..600) {
        let (lo, hi) = (a.min(b), a.max(b));
        let ids = |t| -> BTreeSet<String> {
            sample_records(&records, &SamplePlan::new(t).unwrap()).into_iter().map(|r| r.id).collect()
        };
        prop_assert!(ids(hi).is_subset(&ids(lo)));
    }

    #[test]
    fn threshold_is_inclusive(records in corpus()) {
        for r in records.iter().filter(|r| r.retweet_count > 0 && r.in_reply_to.is_none() && r.retweet_of.is_none()) {
            let sampled = sample_records(&records, &SamplePlan::new(r.retweet_count).unwrap());
            prop_assert!(sampled.iter().any(|s| s.id == r.id));
            let above = sample_records(&records, &SamplePlan::new(r.retweet_count + 1).unwrap());
            prop_assert!(above.iter().all(|s| s.id != r.id));
        }
    }

    #[test]
    fn replay_reproduces_the_view(ops in ops()) {
        let state = run(&ops);
        let replayed = AnnotationState::replay(state.history().to_vec()).unwrap();
        prop_assert_eq!(replayed.snapshot().to_json(), state.snapshot().to_json());
    }

    #[test]
    fn trimmed_mean_stays_within_the_kept_range(
        values in prop::collection::vec(-1.0e6f64..1.0e6, 1..200),
        trim in 0.0f64..0.49,
    ) {
        let m = trimmed_mean(&values, trim).unwrap();
        let mut v = values.clone();
        v.sort_by(f64::total_cmp);
        let cut = (trim * v.len() as f64).floor() as usize;
        prop_assert!(m >= v[cut] - 1e-6 && m <= v[v.len() - 1 - cut] + 1e-6);
        let plain = trimmed_mean(&values, 0.0).unwrap();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        prop_assert!((plain - mean).abs() <= 1e-6 * (1.0 + mean.abs()));
    }
}
