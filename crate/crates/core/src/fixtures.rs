//! Deterministic synthetic datasets shaped to the Ferguson per-day counts.
//!
//! The real corpus cannot be redistributed. These generators produce threads,
//! annotation logs and raw corpora whose aggregate figures match the target
//! ones, so the analytics can be checked end to end.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::annostore::{write_log, AnnotationError, AnnotationState, Event, Label, StoryRef};
use crate::record::TweetRecord;
use crate::threads::{write_threads, Thread, ThreadError, ThreadNode, THREAD_FORMAT_VERSION};

/// One annotated day of the Ferguson-shaped fixture.
#[derive(Debug, Clone, Copy)]
pub struct DayShape {
    pub date: (i32, u32, u32),
    pub threads: usize,
    pub rumours: usize,
    /// Sum of reply counts over the day's threads.
    pub total_replies: u64,
    pub median_replies: u64,
    /// Story indices (into [`story_names`]) with at least one thread that day.
    pub stories: &'static [usize],
}

const DAY9_STORIES: &[usize] = &[0, 1];
const DAY10_STORIES: &[usize] = &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12];
const DAY13_STORIES: &[usize] = &[10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24, 25, 26];
const DAY15_STORIES: &[usize] = &[25, 26, 27, 28, 29, 30, 31, 32, 33, 34, 35, 36, 37, 38, 39, 40, 41];

/// Per-day rows of the Ferguson table. Average sizes 31, 16.5, 16.3, 20.5
/// are hit through the reply totals.
pub const FERGUSON_DAYS: [DayShape; 4] = [
    DayShape {
        date: (2014, 8, 9),
        threads: 14,
        rumours: 2,
        total_replies: 434,
        median_replies: 42,
        stories: DAY9_STORIES,
    },
    DayShape {
        date: (2014, 8, 10),
        threads: 206,
        rumours: 18,
        total_replies: 3399,
        median_replies: 16,
        stories: DAY10_STORIES,
    },
    DayShape {
        date: (2014, 8, 13),
        threads: 430,
        rumours: 30,
        total_replies: 7009,
        median_replies: 15,
        stories: DAY13_STORIES,
    },
    DayShape {
        date: (2014, 8, 15),
        threads: 535,
        rumours: 241,
        total_replies: 10968,
        median_replies: 16,
        stories: DAY15_STORIES,
    },
];

const ROBBERY: usize = 27;
const OFFICER: usize = 28;
const PENTAGON: usize = 13;
const ISRAEL: usize = 14;

/// Thread counts pinned for named stories; everything else is spread evenly.
const PINNED_STORY_SIZES: [(usize, usize); 4] = [(ROBBERY, 89), (OFFICER, 26), (PENTAGON, 1), (ISRAEL, 1)];

/// Rumour threads with at least this many retweets, and how many sources
/// reach it overall (85 / 310 = 27.42%).
pub const HIGH_RETWEETS: u64 = 250;
pub const HIGH_RUMOURS: usize = 85;
pub const HIGH_SOURCES: usize = 310;

pub const ANNOTATOR: &str = "journalist-1";

pub fn story_names() -> Vec<String> {
    let mut names: Vec<String> = (0..42).map(|i| format!("ferguson story {i:02}")).collect();
    names[0] = "curfew declared in ferguson".into();
    names[1] = "police used tear gas on journalists".into();
    names[PENTAGON] = "pentagon supplied st. louis county police with military-grade weapons".into();
    names[ISRAEL] = "two of the four ferguson police departments were trained by israel".into();
    names[ROBBERY] = "michael brown involved in a robbery".into();
    names[OFFICER] = "police officer name about to be announced".into();
    names[29] = "new shooting in ferguson killed a woman".into();
    names
}

/// Name a story first receives; renamed to its final name at the end of the log.
const OFFICER_DRAFT_NAME: &str = "story A";

fn day_start(d: (i32, u32, u32)) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(d.0, d.1, d.2, 0, 0, 0).unwrap()
}

/// `n` non-negative sizes summing to `total` whose median is exactly `median`.
pub fn shaped_sizes(n: usize, total: u64, median: u64) -> Vec<u64> {
    assert!(n > 0);
    let mids = if n % 2 == 1 { 1 } else { 2 };
    let side = (n - mids) / 2;
    let fixed = median * mids as u64;
    let rest = total
        .checked_sub(fixed + median * side as u64)
        .expect("total too small for the requested median");

    // lower half: a ramp up to the median, scaled down when the budget is tight
    let weights: u64 = (1..=side as u64).sum();
    let lower_budget = (median * side as u64 / 2).min(rest);
    let mut lower: Vec<u64> = (1..=side as u64)
        .map(|w| (lower_budget * w / weights.max(1)).min(median))
        .collect();
    let lower_sum: u64 = lower.iter().sum();

    // upper half: strictly above the median when the budget allows, plus a
    // quadratically skewed share of what is left
    let lift = u64::from(rest - lower_sum >= side as u64);
    let extra = rest - lower_sum - lift * side as u64;
    let weights: u64 = (1..=side as u64).map(|w| w * w).sum();
    let mut upper: Vec<u64> = (1..=side as u64)
        .map(|w| median + lift + extra * w * w / weights.max(1))
        .collect();
    let upper_sum: u64 = upper.iter().sum();
    let short = total - fixed - lower_sum - upper_sum;
    if let Some(last) = upper.last_mut() {
        *last += short;
    } else {
        assert_eq!(short, 0);
    }
    lower.extend(std::iter::repeat_n(median, mids));
    lower.extend(upper);
    lower
}

/// Rumour positions within a day of `n` chronologically ordered threads.
fn rumour_positions(n: usize, rumours: usize, from_fraction: f64) -> Vec<usize> {
    let start = (n as f64 * from_fraction) as usize;
    let span = n - start;
    (0..rumours)
        .map(|j| start + ((j as f64 + 0.5) * span as f64 / rumours as f64) as usize)
        .collect()
}

/// Per-story thread counts for each day, honouring the pinned sizes.
fn story_allocation() -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for day in FERGUSON_DAYS {
        let mut counts: Vec<usize> = vec![1; day.stories.len()];
        let mut left = day.rumours - day.stories.len();
        for (pos, story) in day.stories.iter().enumerate() {
            if let Some((_, size)) = PINNED_STORY_SIZES.iter().find(|(s, _)| s == story) {
                counts[pos] = *size;
                left -= size - 1;
            }
        }
        let free: Vec<usize> = (0..day.stories.len())
            .filter(|p| !PINNED_STORY_SIZES.iter().any(|(s, _)| *s == day.stories[*p]))
            .collect();
        let mut i = 0;
        while left > 0 {
            counts[free[i % free.len()]] += 1;
            left -= 1;
            i += 1;
        }
        out.push(counts);
    }
    out
}

/// Durations (milliseconds) for non-rumour and rumour first judgments.
///
/// Each group is a core block around a target mean plus outliers at both
/// tails; 5% tail trimming removes the outliers, leaving 20.7 s, 31.8 s and
/// 23.5 s overall.
pub fn ferguson_durations_ms() -> (Vec<i64>, Vec<i64>) {
    fn group(n: usize, core_mean: i64, lo: (usize, i64), hi: (usize, i64), spread: i64, step: i64) -> Vec<i64> {
        let core_n = n - lo.0 - hi.0;
        let mut core: Vec<i64> = (0..core_n as i64)
            .map(|i| core_mean + ((i * step) % (2 * spread + 1) - spread) * 100)
            .collect();
        let diff = core_mean * core_n as i64 - core.iter().sum::<i64>();
        core[0] += diff;
        let mut out = vec![lo.1; lo.0];
        out.extend(core);
        out.extend(std::iter::repeat_n(hi.1, hi.0));
        out
    }
    let nonrumour = group(893, 20_700, (44, 2_000), (44, 200_000), 60, 37);
    let rumour = group(291, 31_536, (5, 6_000), (14, 280_000), 80, 37);
    (nonrumour, rumour)
}

pub struct FergusonFixture {
    pub threads: BTreeMap<String, Thread>,
    pub state: AnnotationState,
}

impl FergusonFixture {
    pub fn events(&self) -> &[Event] {
        self.state.history()
    }

    pub fn write_to(&self, threads_dir: &Path, log_path: &Path) -> Result<(), FixtureError> {
        let list: Vec<Thread> = self.threads.values().cloned().collect();
        write_threads(threads_dir, &list)?;
        write_log(log_path, self.events())?;
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error(transparent)]
    Thread(#[from] ThreadError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

fn tweet(id: String, author: String, text: String, at: DateTime<Utc>, rt: u64, parent: Option<&str>) -> TweetRecord {
    TweetRecord {
        id,
        author,
        text,
        created_at: at,
        retweet_count: rt,
        lang: "en".into(),
        in_reply_to: parent.map(Into::into),
        retweet_of: None,
    }
}

/// Reply tree of `size` replies under `source`; roughly one reply in five
/// answers an earlier reply instead of the source.
fn reply_tree(source: &TweetRecord, size: u64, next_id: &mut u64, rng: &mut ChaCha8Rng) -> Vec<ThreadNode> {
    use rand::Rng;
    let mut nodes: Vec<ThreadNode> = Vec::with_capacity(size as usize);
    for k in 0..size {
        let offset = Duration::seconds(rng.random_range(30..(3 * 3600)));
        let (parent, depth, base) = if !nodes.is_empty() && rng.random_ratio(1, 5) {
            let p = &nodes[rng.random_range(0..nodes.len())];
            (p.record.id.clone(), p.depth + 1, p.record.created_at)
        } else {
            (source.id.clone(), 1, source.created_at)
        };
        let id = format!("{:018}", *next_id);
        *next_id += 1;
        let record = tweet(
            id,
            format!("user{}", rng.random_range(0..50_000)),
            format!("reply {k} to {}", source.id),
            base + offset,
            0,
            Some(&parent),
        );
        nodes.push(ThreadNode { record, depth, parent });
    }
    // breadth-first, siblings chronological: the same order the builder emits
    let mut ordered = Vec::with_capacity(nodes.len());
    let mut frontier = vec![source.id.clone()];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for parent in &frontier {
            let mut kids: Vec<&ThreadNode> = nodes.iter().filter(|n| &n.parent == parent).collect();
            kids.sort_by(|a, b| a.record.chrono_key().cmp(&b.record.chrono_key()));
            for k in kids {
                next.push(k.record.id.clone());
                ordered.push(k.clone());
            }
        }
        frontier = next;
    }
    ordered
}

/// 1,185 annotated threads over four days with 291 rumours in 42 stories and
/// an annotation log timed to the target averages.
pub fn ferguson_fixture() -> FergusonFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_2014_0815);
    let names = story_names();
    let allocation = story_allocation();

    // (thread, label, story index)
    let mut plan: Vec<(Thread, Label, Option<usize>)> = Vec::new();
    let mut next_reply_id: u64 = 499_000_000_000_000_000;
    let mut rumour_serial = 0usize;
    let mut nonrumour_serial = 0usize;

    for (d, day) in FERGUSON_DAYS.iter().enumerate() {
        let start = day_start(day.date);
        let mut sizes = shaped_sizes(day.threads, day.total_replies, day.median_replies);
        sizes.shuffle(&mut rng);

        let from = if d == 3 { 0.45 } else { 0.0 };
        let rumour_at = rumour_positions(day.threads, day.rumours, from);
        let mut story_for: Vec<usize> = day
            .stories
            .iter()
            .zip(&allocation[d])
            .flat_map(|(s, n)| std::iter::repeat_n(*s, *n))
            .collect();
        story_for.shuffle(&mut rng);
        let mut stories = story_for.into_iter();

        let step = 86_400_000 / day.threads as i64;
        for (i, &size) in sizes.iter().enumerate() {
            let at = start + Duration::milliseconds(i as i64 * step + (i as i64 * 7919) % step.max(1));
            let is_rumour = rumour_at.binary_search(&i).is_ok();
            let rt = if is_rumour {
                rumour_serial += 1;
                if rumour_serial <= HIGH_RUMOURS {
                    HIGH_RETWEETS + (rumour_serial as u64 * 37) % 2_000
                } else {
                    100 + (rumour_serial as u64 * 13) % 150
                }
            } else {
                nonrumour_serial += 1;
                if nonrumour_serial <= HIGH_SOURCES - HIGH_RUMOURS {
                    HIGH_RETWEETS + (nonrumour_serial as u64 * 53) % 3_000
                } else {
                    100 + (nonrumour_serial as u64 * 29) % 150
                }
            };
            let id = format!("{:018}", 498_000_000_000_000_000u64 + (d as u64 * 1_000_000) + i as u64);
            let source = tweet(
                id,
                format!("reporter{}", i % 97),
                format!("#ferguson update {} on {}", i, start.date_naive()),
                at,
                rt,
                None,
            );
            let nodes = reply_tree(&source, size, &mut next_reply_id, &mut rng);
            let thread = Thread {
                format_version: THREAD_FORMAT_VERSION,
                max_depth: nodes.iter().map(|n| n.depth).max().unwrap_or(0),
                reply_count: nodes.len(),
                source,
                nodes,
            };
            let (label, story) = if is_rumour {
                (Label::Rumour, Some(stories.next().expect("story per rumour")))
            } else {
                (Label::NonRumour, None)
            };
            plan.push((thread, label, story));
        }
    }

    // annotation session: every thread in timeline order, timed from the duration pools
    let (mut nr_ms, mut r_ms) = ferguson_durations_ms();
    nr_ms.shuffle(&mut rng);
    r_ms.shuffle(&mut rng);
    let mut nr_ms = nr_ms.into_iter();
    let mut r_ms = r_ms.into_iter();

    let threads: BTreeMap<String, Thread> = plan
        .iter()
        .map(|(t, _, _)| (t.id().to_string(), t.clone()))
        .collect();
    let mut state = AnnotationState::with_threads(threads.keys().cloned());
    let mut clock = Utc.with_ymd_and_hms(2014, 8, 20, 8, 0, 0).unwrap();
    let mut first = true;
    for (thread, label, story) in &plan {
        if !first {
            let ms = match label {
                Label::Rumour => r_ms.next(),
                _ => nr_ms.next(),
            }
            .expect("one duration per judgment after the first");
            clock += Duration::milliseconds(ms);
        }
        first = false;
        let story = story.map(|s| {
            StoryRef::Name(if s == OFFICER {
                OFFICER_DRAFT_NAME.to_string()
            } else {
                names[s].clone()
            })
        });
        state
            .record_judgment(thread.id(), *label, story, ANNOTATOR, clock)
            .expect("fixture judgments are valid");
    }
    let officer = state
        .story_by_name(OFFICER_DRAFT_NAME)
        .expect("officer story exists")
        .story_id
        .clone();
    state
        .rename_story(&officer, &names[OFFICER], ANNOTATOR, clock + Duration::minutes(30))
        .expect("rename is valid");

    FergusonFixture { threads, state }
}

pub const AVG_SOURCES: usize = 12_595;
pub const AVG_REPLIES: usize = 262_495;

/// Raw corpus with 12,595 high-retweet sources and 262,495 replies to them,
/// plus low-retweet chatter, retweets and orphan replies that sampling and
/// thread building must leave out.
pub fn average_replies_corpus() -> Vec<TweetRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(20_8);
    let start = day_start((2014, 8, 9));
    let mut out = Vec::with_capacity(AVG_SOURCES + AVG_REPLIES + 5_000);
    let mut next_id: u64 = 600_000_000_000_000_000;
    let base = AVG_REPLIES / AVG_SOURCES;
    let extra = AVG_REPLIES % AVG_SOURCES;
    let mut sizes: Vec<u64> = (0..AVG_SOURCES)
        .map(|i| (base + usize::from(i < extra)) as u64)
        .collect();
    // spread sizes while keeping the total: move k replies between pairs
    for i in (0..AVG_SOURCES - 1).step_by(2) {
        let k = (i as u64 * 7) % 15;
        let k = k.min(sizes[i + 1]);
        sizes[i] += k;
        sizes[i + 1] -= k;
    }
    sizes.shuffle(&mut rng);

    for (i, size) in sizes.into_iter().enumerate() {
        let at = start + Duration::seconds(i as i64 * 97);
        let source = tweet(
            format!("{:018}", 500_000_000_000_000_000u64 + i as u64),
            format!("reporter{}", i % 311),
            "#ferguson".into(),
            at,
            100 + (i as u64 * 17) % 4_000,
            None,
        );
        for node in reply_tree(&source, size, &mut next_id, &mut rng) {
            out.push(node.record);
        }
        out.push(source);
    }
    for i in 0..3_000u64 {
        out.push(tweet(
            format!("{:018}", 700_000_000_000_000_000u64 + i),
            "bystander".into(),
            "#ferguson".into(),
            start + Duration::seconds(i as i64),
            i % 100,
            None,
        ));
    }
    for i in 0..500u64 {
        let mut rt = tweet(
            format!("{:018}", 710_000_000_000_000_000u64 + i),
            "amplifier".into(),
            "RT #ferguson".into(),
            start + Duration::seconds(i as i64),
            5_000,
            None,
        );
        rt.retweet_of = Some(format!("{:018}", 500_000_000_000_000_000u64 + i));
        out.push(rt);
    }
    for i in 0..250u64 {
        out.push(tweet(
            format!("{:018}", 720_000_000_000_000_000u64 + i),
            "lost".into(),
            "reply to a deleted tweet".into(),
            start + Duration::seconds(i as i64),
            0,
            Some(&format!("{:018}", 730_000_000_000_000_000u64 + i)),
        ));
    }
    out
}

/// Calendar dates of [`FERGUSON_DAYS`].
pub fn ferguson_dates() -> Vec<NaiveDate> {
    FERGUSON_DAYS
        .iter()
        .map(|d| NaiveDate::from_ymd_opt(d.date.0, d.date.1, d.date.2).unwrap())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shaped_sizes_hit_total_and_median() {
        for day in FERGUSON_DAYS {
            let mut s = shaped_sizes(day.threads, day.total_replies, day.median_replies);
            assert_eq!(s.len(), day.threads);
            assert_eq!(s.iter().sum::<u64>(), day.total_replies);
            s.sort();
            let n = s.len();
            let med2 = s[(n - 1) / 2] + s[n / 2];
            assert_eq!(med2, 2 * day.median_replies);
        }
    }

    #[test]
    fn allocation_covers_every_rumour() {
        let alloc = story_allocation();
        for (day, counts) in FERGUSON_DAYS.iter().zip(&alloc) {
            assert_eq!(counts.iter().sum::<usize>(), day.rumours);
            assert!(counts.iter().all(|&c| c >= 1));
        }
    }

    #[test]
    fn duration_pools_have_expected_sizes() {
        let (nr, r) = ferguson_durations_ms();
        assert_eq!((nr.len(), r.len()), (893, 291));
        assert!(nr.iter().chain(&r).all(|&ms| ms > 0 && ms < 600_000));
    }
}
