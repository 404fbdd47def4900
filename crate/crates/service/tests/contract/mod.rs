//! Endpoint contract checks against a live server. Shared by the service
//! tests (in-process server) and the CLI acceptance target (`serve` binary).

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::future::Future;
use std::path::{Path, PathBuf};
use std::time::Instant;

use reqwest::header::HeaderMap;
use reqwest::StatusCode;
use serde_json::{json, Value};

use rumour_core::fixtures::ferguson_fixture;
use rumour_core::threads::{load_threads, thread_path};

pub const SCHEMA_PATH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/export.schema.json");

pub struct Server {
    pub base: String,
    pub stop: Box<dyn FnOnce() + Send>,
}

pub trait Launcher {
    /// Serves `threads_dir` with the log at `log`, both possibly absent.
    fn start(&self, threads_dir: &Path, log: &Path) -> impl Future<Output = Server>;
    /// Installs an export bundle into fresh paths.
    fn import(&self, bundle: &[u8], threads_dir: &Path, log: &Path) -> impl Future<Output = Result<(), String>>;
}

pub struct Check {
    pub name: &'static str,
    pub result: Result<(), String>,
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

macro_rules! ensure_eq {
    ($a:expr, $b:expr) => {
        match (&$a, &$b) {
            (a, b) => {
                if a != b {
                    return Err(format!("{} = {:?}, expected {:?}", stringify!($a), a, b));
                }
            }
        }
    };
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Result<Value, String> {
        serde_json::from_slice(&self.body).map_err(|e| format!("response is not json: {e}"))
    }

    fn error_code(&self) -> Option<String> {
        self.json().ok()?["error"]["code"].as_str().map(str::to_string)
    }

    fn expect(self, status: StatusCode, code: Option<&str>) -> Result<Self, String> {
        if self.status != status {
            return Err(format!(
                "status {} expected {status}: {}",
                self.status,
                String::from_utf8_lossy(&self.body)
            ));
        }
        if let Some(code) = code {
            ensure_eq!(self.error_code().as_deref(), Some(code));
        }
        if self.headers.get("x-schema-version").and_then(|v| v.to_str().ok()) != Some("1") {
            return Err("missing x-schema-version: 1".into());
        }
        Ok(self)
    }
}

pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base: &str) -> Self {
        Self {
            base: base.to_string(),
            http: reqwest::Client::new(),
        }
    }

    async fn send(&self, req: reqwest::RequestBuilder) -> Result<Reply, String> {
        let resp = req.send().await.map_err(|e| e.to_string())?;
        Ok(Reply {
            status: resp.status(),
            headers: resp.headers().clone(),
            body: resp.bytes().await.map_err(|e| e.to_string())?.to_vec(),
        })
    }

    pub async fn get(&self, path: &str) -> Result<Reply, String> {
        self.send(self.http.get(format!("{}{path}", self.base))).await
    }

    pub async fn get_ok(&self, path: &str) -> Result<Value, String> {
        self.get(path).await?.expect(StatusCode::OK, None)?.json()
    }

    pub async fn post_raw(&self, path: &str, token: Option<&str>, key: Option<&str>, body: Vec<u8>) -> Result<Reply, String> {
        let mut req = self
            .http
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .body(body);
        if let Some(t) = token {
            req = req.header("x-annotator-token", t);
        }
        if let Some(k) = key {
            req = req.header("idempotency-key", k);
        }
        self.send(req).await
    }

    pub async fn post(&self, path: &str, body: Value) -> Result<Reply, String> {
        self.post_raw(path, Some("ann-1"), None, body.to_string().into_bytes()).await
    }
}

struct Dirs {
    _tmp: tempfile::TempDir,
    threads: PathBuf,
    log: PathBuf,
}

fn dirs() -> Dirs {
    let tmp = tempfile::tempdir().expect("tempdir");
    Dirs {
        threads: tmp.path().join("threads"),
        log: tmp.path().join("annotations.log"),
        _tmp: tmp,
    }
}

/// Ferguson-shaped dataset; `annotated` keeps its event log.
fn ferguson_dirs(annotated: bool) -> Dirs {
    let d = dirs();
    let scratch = d._tmp.path().join("scratch.log");
    let log = if annotated { &d.log } else { &scratch };
    ferguson_fixture().write_to(&d.threads, log).expect("fixture written");
    d
}

/// Independent fold of an exported event list: thread → (label, story),
/// story → name.
fn fold_events(events: &[Value]) -> (BTreeMap<String, (String, Option<String>)>, BTreeMap<String, String>) {
    let mut ordered: Vec<&Value> = events.iter().collect();
    ordered.sort_by_key(|e| e["seq"].as_u64().or_else(|| e["story"]["seq"].as_u64()));
    let mut current = BTreeMap::new();
    let mut names = BTreeMap::new();
    for e in ordered {
        match e["type"].as_str() {
            Some("story_created") => {
                names.insert(
                    e["story"]["story_id"].as_str().unwrap().to_string(),
                    e["story"]["name"].as_str().unwrap().to_string(),
                );
            }
            Some("story_renamed") => {
                names.insert(e["story_id"].as_str().unwrap().to_string(), e["name"].as_str().unwrap().to_string());
            }
            Some("judgment") => {
                current.insert(
                    e["thread_id"].as_str().unwrap().to_string(),
                    (
                        e["label"].as_str().unwrap().to_string(),
                        e["story_id"].as_str().map(str::to_string),
                    ),
                );
            }
            other => panic!("unexpected event type {other:?}"),
        }
    }
    (current, names)
}

/// Compares /api/review against a fold of /api/export's events.
async fn review_matches_fold(c: &Client) -> Result<(), String> {
    let export = c.get_ok("/api/export").await?;
    let review = c.get_ok("/api/review").await?;
    let events = export["events"].as_array().ok_or("no events")?;
    let (current, names) = fold_events(events);
    let total = export["threads"].as_array().ok_or("no threads")?.len() as u64;
    let tally = |l: &str| current.values().filter(|(label, _)| label == l).count() as u64;
    let counts = &review["counts"];
    ensure_eq!(counts["rumours"].as_u64(), Some(tally("rumour")));
    ensure_eq!(counts["non_rumours"].as_u64(), Some(tally("nonrumour")));
    ensure_eq!(counts["unsure"].as_u64(), Some(tally("unsure")));
    ensure_eq!(counts["unannotated"].as_u64(), Some(total - current.len() as u64));
    let mut expected: BTreeMap<String, BTreeSet<String>> = names.keys().map(|s| (s.clone(), BTreeSet::new())).collect();
    for (thread, (_, story)) in &current {
        if let Some(s) = story {
            expected.get_mut(s).ok_or("judgment names missing story")?.insert(thread.clone());
        }
    }
    let stories = review["stories"].as_array().ok_or("no stories")?;
    ensure_eq!(stories.len(), expected.len());
    for s in stories {
        let id = s["story_id"].as_str().ok_or("story without id")?;
        ensure_eq!(s["name"].as_str(), names.get(id).map(String::as_str));
        let members: BTreeSet<String> = s["threads"]
            .as_array()
            .ok_or("no threads")?
            .iter()
            .map(|t| t["source_id"].as_str().unwrap().to_string())
            .collect();
        ensure!(members == expected[id], "members of {id} differ from the fold");
        ensure_eq!(s["empty"].as_bool(), Some(members.is_empty()));
    }
    Ok(())
}

/// Exports from `c`, imports into a fresh instance and compares review bytes.
async fn round_trip<L: Launcher>(launcher: &L, c: &Client) -> Result<(), String> {
    let bundle = c.get("/api/export").await?.expect(StatusCode::OK, None)?.body;
    let before = c.get("/api/review").await?.expect(StatusCode::OK, None)?.body;
    let fresh = dirs();
    launcher.import(&bundle, &fresh.threads, &fresh.log).await?;
    let server = launcher.start(&fresh.threads, &fresh.log).await;
    let other = Client::new(&server.base);
    let after = other.get("/api/review").await.and_then(|r| r.expect(StatusCode::OK, None));
    let again = other.get("/api/export").await.and_then(|r| r.expect(StatusCode::OK, None));
    (server.stop)();
    let after = after?.body;
    ensure!(after == before, "review differs after import ({} vs {} bytes)", after.len(), before.len());
    ensure!(again?.body == bundle, "re-export differs from the imported bundle");
    Ok(())
}

fn schema_valid(bundle: &Value) -> Result<(), String> {
    let schema: Value = serde_json::from_slice(&std::fs::read(SCHEMA_PATH).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let validator = jsonschema::validator_for(&schema).map_err(|e| e.to_string())?;
    let errors: Vec<String> = validator.iter_errors(bundle).take(3).map(|e| e.to_string()).collect();
    ensure!(errors.is_empty(), "schema violations: {errors:?}");
    Ok(())
}

async fn day_ids(c: &Client, date: &str) -> Result<Vec<String>, String> {
    let tl = c.get_ok(&format!("/api/days/{date}/threads")).await?;
    Ok(tl["threads"]
        .as_array()
        .ok_or("no threads")?
        .iter()
        .map(|t| t["source_id"].as_str().unwrap().to_string())
        .collect())
}

async fn summary_of(c: &Client, date: &str, id: &str) -> Result<Value, String> {
    let tl = c.get_ok(&format!("/api/days/{date}/threads")).await?;
    tl["threads"]
        .as_array()
        .ok_or("no threads")?
        .iter()
        .find(|t| t["source_id"] == id)
        .cloned()
        .ok_or_else(|| format!("{id} missing from {date}"))
}

async fn event_count(c: &Client) -> Result<usize, String> {
    Ok(c.get_ok("/api/export").await?["events"].as_array().ok_or("no events")?.len())
}

const FIXTURE_DATES: [&str; 4] = ["2014-08-09", "2014-08-10", "2014-08-13", "2014-08-15"];

/// Runs every check; never panics on a failed expectation.
pub async fn run_all<L: Launcher>(launcher: &L) -> Vec<Check> {
    let mut checks = Vec::new();
    macro_rules! check {
        ($name:expr, $body:expr) => {{
            let result: Result<(), String> = async { $body }.await;
            checks.push(Check { name: $name, result });
        }};
    }

    // Empty dataset.
    {
        let d = dirs();
        let server = launcher.start(&d.threads, &d.log).await;
        let c = Client::new(&server.base);
        check!("GET /api/days: empty dataset is []", {
            ensure_eq!(c.get_ok("/api/days").await?, json!([]));
            Ok(())
        });
        check!("GET /api/export: round trip on empty store", {
            schema_valid(&c.get_ok("/api/export").await?)?;
            round_trip(launcher, &c).await
        });
        check!("GET /api/report: empty dataset gives an empty table", {
            let r = c.get_ok("/api/report").await?;
            ensure_eq!(r["table_lines"], json!(["Overall: 0/0 (n/a), avg 0.0, med 0, 0 stories"]));
            ensure_eq!(r["timing"]["n_durations"], json!(0));
            Ok(())
        });
        (server.stop)();
    }

    // Ferguson-shaped dataset, fully annotated.
    {
        let d = ferguson_dirs(true);
        let server = launcher.start(&d.threads, &d.log).await;
        let c = Client::new(&server.base);
        check!("GET /api/days: four days with 14/206/430/535 threads", {
            let days = c.get_ok("/api/days").await?;
            let dates: Vec<&str> = days.as_array().ok_or("not a list")?.iter().filter_map(|d| d["date"].as_str()).collect();
            let counts: Vec<u64> = days.as_array().unwrap().iter().filter_map(|d| d["threads"].as_u64()).collect();
            ensure_eq!(dates, FIXTURE_DATES.to_vec());
            ensure_eq!(counts, vec![14, 206, 430, 535]);
            Ok(())
        });
        check!("GET /api/days/{date}/threads: 9 Aug has 14 summaries in time order", {
            let tl = c.get_ok("/api/days/2014-08-09/threads").await?;
            let list = tl["threads"].as_array().ok_or("no threads")?;
            ensure_eq!(list.len(), 14);
            let times: Vec<&str> = list.iter().filter_map(|t| t["created_at"].as_str()).collect();
            ensure!(times.windows(2).all(|w| w[0] <= w[1]), "not ordered by created_at");
            Ok(())
        });
        check!("GET /api/days/{date}/threads: reply_count equals the thread documents", {
            let on_disk = load_threads(&d.threads).map_err(|e| e.to_string())?;
            let mut seen = 0;
            for date in FIXTURE_DATES {
                let tl = c.get_ok(&format!("/api/days/{date}/threads")).await?;
                for t in tl["threads"].as_array().ok_or("no threads")? {
                    let id = t["source_id"].as_str().ok_or("no id")?;
                    let doc = on_disk.get(id).ok_or_else(|| format!("{id} not on disk"))?;
                    ensure_eq!(t["reply_count"].as_u64(), Some(doc.reply_count as u64));
                    seen += 1;
                }
            }
            ensure_eq!(seen, on_disk.len());
            Ok(())
        });
        check!("GET /api/days/{date}/threads: date with no threads is 404", {
            c.get("/api/days/2014-08-11/threads").await?.expect(StatusCode::NOT_FOUND, Some("unknown_date"))?;
            Ok(())
        });
        check!("GET /api/days/{date}/threads: malformed date is 400", {
            c.get("/api/days/9-Aug/threads").await?.expect(StatusCode::BAD_REQUEST, Some("bad_date"))?;
            Ok(())
        });
        check!("GET /api/threads/{id}: equals the on-disk document", {
            for date in FIXTURE_DATES {
                for id in day_ids(&c, date).await?.into_iter().step_by(37) {
                    let served = c.get(&format!("/api/threads/{id}")).await?.expect(StatusCode::OK, None)?.body;
                    let stored = std::fs::read(thread_path(&d.threads, &id)).map_err(|e| e.to_string())?;
                    ensure!(served == stored, "thread {id} differs from its file");
                    let doc: Value = serde_json::from_slice(&served).map_err(|e| e.to_string())?;
                    for n in doc["nodes"].as_array().ok_or("no nodes")? {
                        ensure!(n["depth"].as_u64().is_some_and(|x| x >= 1), "node without depth");
                    }
                }
            }
            Ok(())
        });
        check!("GET /api/threads/{id}: unknown id is 404", {
            c.get("/api/threads/no-such-thread").await?.expect(StatusCode::NOT_FOUND, Some("unknown_thread"))?;
            Ok(())
        });
        check!("GET /api/review: Ferguson fixture has 42 stories and 291 rumours", {
            let r = c.get_ok("/api/review").await?;
            ensure_eq!(r["stories"].as_array().map(Vec::len), Some(42));
            ensure_eq!(r["counts"]["rumours"].as_u64(), Some(291));
            let sum: u64 = ["rumours", "non_rumours", "unsure", "unannotated"]
                .iter()
                .map(|k| r["counts"][k].as_u64().unwrap_or(0))
                .sum();
            ensure_eq!(sum, 1185);
            Ok(())
        });
        check!("GET /api/review: counts equal a fold over the event log", review_matches_fold(&c).await);
        check!("GET /api/stories: lists every story with member counts", {
            let stories = c.get_ok("/api/stories").await?;
            let list = stories.as_array().ok_or("not a list")?;
            ensure_eq!(list.len(), 42);
            let members: u64 = list.iter().filter_map(|s| s["members"].as_u64()).sum();
            ensure_eq!(members, 291);
            ensure!(list.iter().any(|s| s["name"] == "police officer name about to be announced"), "renamed story missing");
            ensure!(!list.iter().any(|s| s["name"] == "story A"), "draft name still listed");
            Ok(())
        });
        check!("GET /api/export: bundle validates against the bundle schema", {
            schema_valid(&c.get_ok("/api/export").await?)
        });
        check!("GET /api/export: import into a fresh instance reproduces /api/review byte for byte", {
            round_trip(launcher, &c).await
        });
        check!("GET /api/report: table lines for the Ferguson fixture", {
            let r = c.get_ok("/api/report").await?;
            let lines: Vec<&str> = r["table_lines"].as_array().ok_or("no lines")?.iter().filter_map(Value::as_str).collect();
            let counts: Vec<&str> = lines.iter().map(|l| l.split(", avg").next().unwrap_or("")).collect();
            ensure_eq!(
                counts,
                vec![
                    "9 Aug: 2/14 (14.3%)",
                    "10 Aug: 18/206 (8.7%)",
                    "13 Aug: 30/430 (7.0%)",
                    "15 Aug: 241/535 (45.0%)",
                    "Overall: 291/1185 (24.6%)",
                ]
            );
            Ok(())
        });
        check!("GET /api/report: out-of-range trim is 400", {
            c.get("/api/report?trim=0.7").await?.expect(StatusCode::BAD_REQUEST, Some("bad_query"))?;
            c.get("/api/report?thresholds=250,100").await?.expect(StatusCode::BAD_REQUEST, Some("bad_query"))?;
            Ok(())
        });
        check!("GET /api/report: reads stay responsive while reports run", {
            let reports: Vec<_> = (0..4).map(|_| c.get("/api/report?thresholds=100,250")).collect();
            let reads = async {
                let start = Instant::now();
                for _ in 0..10 {
                    c.get_ok("/api/days").await?;
                }
                Ok::<_, String>(start.elapsed())
            };
            let (reports, elapsed) = tokio::join!(futures::future::join_all(reports), reads);
            for r in reports {
                r?.expect(StatusCode::OK, None)?;
            }
            let elapsed = elapsed?;
            ensure!(elapsed.as_secs_f64() < 5.0, "ten reads took {elapsed:?}");
            Ok(())
        });
        check!("unknown route is 404 with a machine-readable code", {
            c.get("/api/nothing-here").await?.expect(StatusCode::NOT_FOUND, Some("unknown_route"))?;
            c.post("/api/threads", json!({})).await?.expect(StatusCode::NOT_FOUND, Some("unknown_route"))?;
            Ok(())
        });
        (server.stop)();
    }

    // Ferguson-shaped threads, nothing annotated yet; mutations.
    {
        let d = ferguson_dirs(false);
        let server = launcher.start(&d.threads, &d.log).await;
        let c = Client::new(&server.base);
        let ids = day_ids(&c, "2014-08-09").await.unwrap_or_default();
        let (t1, t2, t3) = match ids.as_slice() {
            [a, b, c, ..] => (a.clone(), b.clone(), c.clone()),
            _ => {
                checks.push(Check {
                    name: "mutation fixture",
                    result: Err("9 Aug timeline unavailable".into()),
                });
                (server.stop)();
                return checks;
            }
        };
        let aug9 = "2014-08-09";
        let judge = |id: &str| format!("/api/threads/{id}/judgment");

        check!("GET /api/review: no annotations puts every thread in unannotated", {
            let r = c.get_ok("/api/review").await?;
            ensure_eq!(
                r["counts"],
                json!({"rumours": 0, "non_rumours": 0, "unsure": 0, "unannotated": 1185})
            );
            ensure_eq!(r["stories"], json!([]));
            Ok(())
        });
        check!("GET /api/days: annotating one thread increments that day's count", {
            let before = c.get_ok("/api/days").await?;
            c.post(&judge(&t3), json!({"label": "unsure"})).await?.expect(StatusCode::OK, None)?;
            let after = c.get_ok("/api/days").await?;
            for (b, a) in before.as_array().unwrap().iter().zip(after.as_array().unwrap()) {
                let delta = a["annotated"].as_u64().unwrap() - b["annotated"].as_u64().unwrap();
                ensure_eq!(delta, u64::from(a["date"] == aug9));
            }
            Ok(())
        });
        check!("POST judgment: rumour with a new story creates the story", {
            let r = c
                .post(&judge(&t1), json!({"label": "rumour", "story": {"name": "robbery involvement"}}))
                .await?
                .expect(StatusCode::OK, None)?
                .json()?;
            ensure_eq!(r["judgment"]["label"], json!("rumour"));
            ensure_eq!(r["story"]["name"], json!("robbery involvement"));
            ensure_eq!(r["judgment"]["story_id"], r["story"]["story_id"]);
            ensure_eq!(r["judgment"]["annotator"], json!("ann-1"));
            ensure!(r["judgment"]["seq"].as_u64().is_some_and(|s| s > 0), "no seq");
            Ok(())
        });
        check!("POST judgment: non-rumour without story", {
            let r = c.post(&judge(&t2), json!({"label": "nonrumour"})).await?.expect(StatusCode::OK, None)?.json()?;
            ensure_eq!(r["judgment"]["label"], json!("nonrumour"));
            ensure!(r["judgment"].get("story_id").is_none(), "story_id present");
            ensure_eq!(r["story"], Value::Null);
            Ok(())
        });
        check!("POST judgment: existing story name is reused case-insensitively", {
            let r = c
                .post(&judge(&t3), json!({"label": "rumour", "story": {"name": "Robbery Involvement"}}))
                .await?
                .expect(StatusCode::OK, None)?
                .json()?;
            ensure_eq!(r["story"]["name"], json!("robbery involvement"));
            ensure_eq!(c.get_ok("/api/stories").await?.as_array().map(Vec::len), Some(1));
            Ok(())
        });
        check!("POST judgment: re-annotation is last-write-wins with full history", {
            let before = event_count(&c).await?;
            c.post(&judge(&t1), json!({"label": "nonrumour"})).await?.expect(StatusCode::OK, None)?;
            ensure_eq!(summary_of(&c, aug9, &t1).await?["label"], json!("nonrumour"));
            let export = c.get_ok("/api/export").await?;
            let history: Vec<&Value> = export["events"]
                .as_array()
                .unwrap()
                .iter()
                .filter(|e| e["type"] == "judgment" && e["thread_id"] == t1.as_str())
                .collect();
            ensure_eq!(history.len(), 2);
            ensure_eq!(event_count(&c).await?, before + 1);
            Ok(())
        });
        check!("POST judgment: unknown thread is 404", {
            c.post(&judge("no-such-thread"), json!({"label": "nonrumour"}))
                .await?
                .expect(StatusCode::NOT_FOUND, Some("unknown_thread"))?;
            Ok(())
        });
        check!("POST judgment: rumour without story is 422", {
            c.post(&judge(&t2), json!({"label": "rumour"})).await?.expect(StatusCode::UNPROCESSABLE_ENTITY, Some("missing_story"))?;
            Ok(())
        });
        check!("POST judgment: story on a non-rumour is 422", {
            c.post(&judge(&t2), json!({"label": "nonrumour", "story": {"name": "x"}}))
                .await?
                .expect(StatusCode::UNPROCESSABLE_ENTITY, Some("story_on_nonrumour"))?;
            c.post(&judge(&t2), json!({"label": "unsure", "story": {"id": "s0001"}}))
                .await?
                .expect(StatusCode::UNPROCESSABLE_ENTITY, Some("story_on_nonrumour"))?;
            Ok(())
        });
        check!("POST judgment: unknown story id or blank name is 422", {
            c.post(&judge(&t2), json!({"label": "rumour", "story": {"id": "s9999"}}))
                .await?
                .expect(StatusCode::UNPROCESSABLE_ENTITY, Some("unknown_story"))?;
            c.post(&judge(&t2), json!({"label": "rumour", "story": {"name": "  "}}))
                .await?
                .expect(StatusCode::UNPROCESSABLE_ENTITY, Some("empty_name"))?;
            Ok(())
        });
        check!("POST judgment: malformed bodies are 400", {
            let before = event_count(&c).await?;
            for body in [&b"{not json"[..], br#"{"label":"maybe"}"#, br#"{"label":"rumour","story":"x","extra":1}"#, b""] {
                c.post_raw(&judge(&t2), Some("ann-1"), None, body.to_vec())
                    .await?
                    .expect(StatusCode::BAD_REQUEST, Some("malformed_body"))?;
            }
            ensure_eq!(event_count(&c).await?, before);
            Ok(())
        });
        check!("POST judgment: missing annotator token is 401", {
            c.post_raw(&judge(&t2), None, None, br#"{"label":"nonrumour"}"#.to_vec())
                .await?
                .expect(StatusCode::UNAUTHORIZED, Some("missing_token"))?;
            Ok(())
        });
        check!("read-your-writes: timeline reflects a judgment immediately", {
            for label in ["unsure", "nonrumour", "unsure"] {
                c.post(&judge(&t2), json!({"label": label})).await?.expect(StatusCode::OK, None)?;
                ensure_eq!(summary_of(&c, aug9, &t2).await?["label"], json!(label));
            }
            Ok(())
        });
        check!("idempotency: a repeated key appends one event and replays the reply", {
            let before = event_count(&c).await?;
            let body = json!({"label": "rumour", "story": {"name": "story A"}}).to_string().into_bytes();
            let first = c.post_raw(&judge(&t2), Some("ann-1"), Some("k-1"), body.clone()).await?.expect(StatusCode::OK, None)?;
            let second = c.post_raw(&judge(&t2), Some("ann-1"), Some("k-1"), body).await?.expect(StatusCode::OK, None)?;
            ensure!(first.body == second.body, "replayed body differs");
            ensure_eq!(event_count(&c).await?, before + 2);
            c.post_raw(&judge(&t2), Some("ann-1"), Some("k-1"), br#"{"label":"unsure"}"#.to_vec())
                .await?
                .expect(StatusCode::UNPROCESSABLE_ENTITY, Some("idempotency_key_reused"))?;
            ensure_eq!(event_count(&c).await?, before + 2);
            Ok(())
        });
        let story_a = async {
            c.get_ok("/api/stories")
                .await
                .ok()?
                .as_array()?
                .iter()
                .find(|s| s["name"] == "story A")?["story_id"]
                .as_str()
                .map(str::to_string)
        }
        .await
        .unwrap_or_default();
        let robbery = async {
            c.get_ok("/api/stories")
                .await
                .ok()?
                .as_array()?
                .iter()
                .find(|s| s["name"] == "robbery involvement")?["story_id"]
                .as_str()
                .map(str::to_string)
        }
        .await
        .unwrap_or_default();
        check!("POST rename: story A becomes officer name announcement with the same members", {
            let before = summary_of(&c, aug9, &t2).await?;
            ensure_eq!(before["story_id"].as_str(), Some(story_a.as_str()));
            let r = c
                .post(&format!("/api/stories/{story_a}/rename"), json!({"name": "officer name announcement"}))
                .await?
                .expect(StatusCode::OK, None)?
                .json()?;
            ensure_eq!(r["name"], json!("officer name announcement"));
            ensure_eq!(r["story_id"].as_str(), Some(story_a.as_str()));
            let after = summary_of(&c, aug9, &t2).await?;
            ensure_eq!(after["story_id"], before["story_id"]);
            ensure_eq!(after["story_name"], json!("officer name announcement"));
            Ok(())
        });
        check!("POST rename: identical name succeeds without an event", {
            let before = event_count(&c).await?;
            c.post(&format!("/api/stories/{story_a}/rename"), json!({"name": "officer name announcement"}))
                .await?
                .expect(StatusCode::OK, None)?;
            ensure_eq!(event_count(&c).await?, before);
            Ok(())
        });
        check!("POST rename: another story's name is 409", {
            c.post(&format!("/api/stories/{story_a}/rename"), json!({"name": "ROBBERY involvement"}))
                .await?
                .expect(StatusCode::CONFLICT, Some("name_collision"))?;
            Ok(())
        });
        check!("POST rename: unknown story is 404, blank name 422", {
            c.post("/api/stories/s9999/rename", json!({"name": "x"}))
                .await?
                .expect(StatusCode::NOT_FOUND, Some("unknown_story"))?;
            c.post(&format!("/api/stories/{story_a}/rename"), json!({"name": ""}))
                .await?
                .expect(StatusCode::UNPROCESSABLE_ENTITY, Some("empty_name"))?;
            Ok(())
        });
        check!("POST move: thread moves to the target story", {
            let r = c
                .post(&format!("/api/threads/{t3}/move"), json!({"story_id": story_a}))
                .await?
                .expect(StatusCode::OK, None)?
                .json()?;
            ensure_eq!(r["judgment"]["story_id"].as_str(), Some(story_a.as_str()));
            ensure_eq!(summary_of(&c, aug9, &t3).await?["story_id"].as_str(), Some(story_a.as_str()));
            let stories = c.get_ok("/api/stories").await?;
            let robbery_view = stories.as_array().unwrap().iter().find(|s| s["story_id"] == robbery.as_str()).cloned();
            ensure_eq!(robbery_view.map(|s| (s["members"].clone(), s["empty"].clone())), Some((json!(0), json!(true))));
            Ok(())
        });
        check!("POST move: non-rumour thread is 422", {
            c.post(&format!("/api/threads/{t1}/move"), json!({"story_id": story_a}))
                .await?
                .expect(StatusCode::UNPROCESSABLE_ENTITY, Some("not_a_rumour"))?;
            Ok(())
        });
        check!("POST move: unknown thread 404, unknown story 422", {
            c.post("/api/threads/no-such-thread/move", json!({"story_id": story_a}))
                .await?
                .expect(StatusCode::NOT_FOUND, Some("unknown_thread"))?;
            c.post(&format!("/api/threads/{t3}/move"), json!({"story_id": "s9999"}))
                .await?
                .expect(StatusCode::UNPROCESSABLE_ENTITY, Some("unknown_story"))?;
            Ok(())
        });
        check!("POST move: move then re-label with the first story round-trips (replay oracle)", {
            c.post(&judge(&t3), json!({"label": "rumour", "story": {"id": robbery}}))
                .await?
                .expect(StatusCode::OK, None)?;
            ensure_eq!(summary_of(&c, aug9, &t3).await?["story_id"].as_str(), Some(robbery.as_str()));
            review_matches_fold(&c).await
        });
        check!("GET /api/export: round trip after mutations", {
            schema_valid(&c.get_ok("/api/export").await?)?;
            round_trip(launcher, &c).await
        });
        (server.stop)();
    }

    checks
}

pub fn print(checks: &[Check]) {
    for c in checks {
        match &c.result {
            Ok(()) => println!("PASS  {}", c.name),
            Err(e) => println!("FAIL  {}: {e}", c.name),
        }
    }
}
