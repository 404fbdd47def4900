use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Serialize;
use serde_json::json;

use rumour_core::annostore::read_log;
use rumour_core::record::parse_timestamp_str;
use rumour_core::sampler::sample_sources;
use rumour_core::threads::{load_threads, write_threads};
use rumour_core::{
    build_all, build_report, compute_distribution, corpus_reply_provider, ingest_corpus, AnnotationState,
    CorpusStats, CorpusStore, DatasetBundle, IngestFilter, ThreadSet, TweetRecord,
};
use rumour_service::{App, ServiceConfig};

use crate::config::PipelineConfig;
use crate::Failure;

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, value).map_err(Failure::runtime)?;
    writeln!(out).map_err(Failure::runtime)
}

/// Writes through a sibling temp file so a crash never leaves half a file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let fail = |e: io::Error| Failure::Runtime(format!("cannot write {}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(fail)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(fail)?;
    fs::rename(&tmp, path).map_err(fail)
}

fn required<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, Failure> {
    value
        .as_deref()
        .ok_or_else(|| Failure::Usage(format!("{what} not set (flag, config file or --store)")))
}

fn bound(raw: &Option<String>, flag: &str) -> Result<Option<DateTime<Utc>>, Failure> {
    raw.as_deref()
        .map(|s| parse_timestamp_str(s).ok_or_else(|| Failure::Usage(format!("--{flag}: cannot parse {s:?}"))))
        .transpose()
}

pub fn ingest(cfg: &PipelineConfig, inputs: &[PathBuf]) -> Result<(), Failure> {
    let store_dir = required(&cfg.store_dir, "--store")?;
    let range = match (bound(&cfg.ingest.from, "from")?, bound(&cfg.ingest.to, "to")?) {
        (None, None) => None,
        (from, to) => Some((from.unwrap_or(DateTime::<Utc>::MIN_UTC), to.unwrap_or(DateTime::<Utc>::MAX_UTC))),
    };
    let languages = cfg
        .ingest
        .languages
        .as_ref()
        .map(|l| l.iter().cloned().collect::<BTreeSet<_>>());
    let filter = IngestFilter::new(cfg.ingest.keywords.clone(), languages, range)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let mut store = CorpusStore::open_or_create(store_dir).map_err(Failure::runtime)?;
    let mut stats = CorpusStats::default();
    for input in inputs {
        let result = if input.as_os_str() == "-" {
            ingest_corpus(io::stdin().lock(), &filter, &mut store)
        } else {
            let file = File::open(input)
                .map_err(|e| Failure::Runtime(format!("cannot open {}: {e}", input.display())))?;
            ingest_corpus(BufReader::new(file), &filter, &mut store)
        };
        match result {
            Ok(s) => stats += s,
            Err(e) => {
                stats += *e.partial_stats();
                print_json(&json!({"stats": stats, "error": e.to_string()}))?;
                return Err(Failure::Runtime(format!("{}: {e}", input.display())));
            }
        }
    }
    print_json(&json!({"stats": stats, "store_records": store.len()}))
}

pub fn distribution(cfg: &PipelineConfig, out: Option<&Path>, extra: &[u64]) -> Result<(), Failure> {
    let store = CorpusStore::open(required(&cfg.store_dir, "--store")?).map_err(Failure::runtime)?;
    let dist = compute_distribution(&store, extra).map_err(Failure::runtime)?;
    match out {
        Some(path) => {
            let mut bytes = serde_json::to_vec_pretty(&dist).map_err(Failure::runtime)?;
            bytes.push(b'\n');
            write_atomic(path, &bytes)?;
            print_json(&json!({"total": dist.total, "out": path}))
        }
        None => print_json(&dist),
    }
}

pub fn sample(cfg: &PipelineConfig, out: &Path) -> Result<(), Failure> {
    let plan = cfg.sample_plan();
    plan.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let store = CorpusStore::open(required(&cfg.store_dir, "--store")?).map_err(Failure::runtime)?;
    let sampled = sample_sources(&store, &plan).map_err(Failure::runtime)?;
    let mut bytes = Vec::new();
    for r in &sampled {
        serde_json::to_writer(&mut bytes, r).map_err(Failure::runtime)?;
        bytes.push(b'\n');
    }
    write_atomic(out, &bytes)?;
    print_json(&json!({"sampled": sampled.len(), "corpus": store.len(), "plan": plan, "out": out}))
}

fn read_sample(path: &Path) -> Result<Vec<TweetRecord>, Failure> {
    let file = File::open(path).map_err(|e| Failure::Runtime(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(Failure::runtime)?;
        if line.trim().is_empty() {
            continue;
        }
        let r: TweetRecord = serde_json::from_str(&line)
            .map_err(|e| Failure::Runtime(format!("{} line {}: {e}", path.display(), n + 1)))?;
        out.push(r);
    }
    Ok(out)
}

pub fn threads(cfg: &PipelineConfig, sample: &Path) -> Result<(), Failure> {
    let out = required(&cfg.threads_dir, "--out")?;
    let store = CorpusStore::open(required(&cfg.store_dir, "--store")?).map_err(Failure::runtime)?;
    let sources = read_sample(sample)?;
    let provider = corpus_reply_provider(&store);
    let (built, stats) = build_all(&sources, &provider, cfg.sample.max_depth);
    write_threads(out, &built).map_err(Failure::runtime)?;
    for (id, reason) in &stats.failures {
        eprintln!("skipped source {id}: {reason}");
    }
    print_json(&json!({"written": built.len(), "out": out, "stats": stats}))
}

fn load_dataset(cfg: &PipelineConfig) -> Result<(ThreadSet, AnnotationState), Failure> {
    let dir = required(&cfg.threads_dir, "--threads-dir")?;
    let log = required(&cfg.log_path, "--log")?;
    let threads = load_threads(dir).map_err(Failure::runtime)?;
    let mut state = AnnotationState::replay(read_log(log).map_err(Failure::runtime)?).map_err(Failure::runtime)?;
    if let Some(j) = state.judgments().find(|j| !threads.contains_key(&j.thread_id)) {
        return Err(Failure::Runtime(format!(
            "{} judges thread {} which is not in {}",
            log.display(),
            j.thread_id,
            dir.display()
        )));
    }
    state.set_threads(threads.keys().cloned());
    Ok((threads, state))
}

pub fn report(cfg: &PipelineConfig, out: Option<&Path>, csv: Option<&Path>) -> Result<(), Failure> {
    let (threads, state) = load_dataset(cfg)?;
    let bundle = build_report(&threads, &state, &cfg.report_params()).map_err(|e| match e {
        rumour_core::report::ReportError::BadTrim(_) | rumour_core::report::ReportError::Sample(_) => {
            Failure::Usage(e.to_string())
        }
        e => Failure::runtime(e),
    })?;
    if let Some(csv) = csv {
        write_atomic(csv, bundle.day_table.to_csv().as_bytes())?;
    }
    for line in &bundle.table_lines {
        eprintln!("{line}");
    }
    match out {
        Some(path) => {
            write_atomic(path, &bundle.to_json())?;
            print_json(&json!({"out": path, "table_lines": bundle.table_lines, "timing": bundle.timing}))
        }
        None => io::stdout().lock().write_all(&bundle.to_json()).map_err(Failure::runtime),
    }
}

pub fn export(cfg: &PipelineConfig, out: Option<&Path>) -> Result<(), Failure> {
    let (threads, state) = load_dataset(cfg)?;
    let bytes = DatasetBundle::new(&threads, &state).to_json();
    match out {
        Some(path) => {
            write_atomic(path, &bytes)?;
            print_json(&json!({"out": path, "threads": threads.len(), "events": state.history().len()}))
        }
        None => io::stdout().lock().write_all(&bytes).map_err(Failure::runtime),
    }
}

/// True when `dir` holds thread documents or `log` holds events.
fn holds_dataset(dir: &Path, log: &Path) -> Result<bool, Failure> {
    let has_threads = match fs::read_dir(dir) {
        Ok(entries) => entries
            .filter_map(Result::ok)
            .any(|e| e.path().extension().is_some_and(|x| x == "json")),
        Err(e) if e.kind() == io::ErrorKind::NotFound => false,
        Err(e) => return Err(Failure::runtime(e)),
    };
    let has_log = fs::metadata(log).map(|m| m.len() > 0).unwrap_or(false);
    Ok(has_threads || has_log)
}

pub fn import(cfg: &PipelineConfig, bundle_path: &Path) -> Result<(), Failure> {
    let dir = required(&cfg.threads_dir, "--threads-dir")?;
    let log = required(&cfg.log_path, "--log")?;
    let bytes = fs::read(bundle_path)
        .map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", bundle_path.display())))?;
    let bundle = DatasetBundle::from_json(&bytes).map_err(Failure::runtime)?;
    let (threads, state) = bundle.restore().map_err(Failure::runtime)?;
    if holds_dataset(dir, log)? {
        // Re-running an import of the same bundle is a no-op.
        let (have_threads, have_state) = load_dataset(cfg)?;
        if have_threads == threads && have_state.history() == state.history() {
            return print_json(&json!({"imported": false, "unchanged": true, "threads": threads.len()}));
        }
        return Err(Failure::Runtime(format!(
            "{} or {} already holds a different dataset; import needs empty targets",
            dir.display(),
            log.display()
        )));
    }
    bundle.install(dir, log).map_err(Failure::runtime)?;
    print_json(&json!({"imported": true, "threads": threads.len(), "events": state.history().len()}))
}

pub fn serve(cfg: &PipelineConfig) -> Result<(), Failure> {
    let config = ServiceConfig {
        threads_dir: required(&cfg.threads_dir, "--threads-dir")?.to_path_buf(),
        log_path: required(&cfg.log_path, "--log")?.to_path_buf(),
        tokens: cfg.tokens.clone(),
        report: cfg.report_params(),
    };
    let app = App::open(&config).map_err(Failure::runtime)?;
    let runtime = tokio::runtime::Runtime::new().map_err(Failure::runtime)?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((cfg.host.as_str(), cfg.port))
            .await
            .map_err(|e| Failure::Runtime(format!("cannot bind {}:{}: {e}", cfg.host, cfg.port)))?;
        let addr = listener.local_addr().map_err(Failure::runtime)?;
        eprintln!(
            "serving {} threads on http://{addr}",
            app.threads().len()
        );
        print_json(&json!({"listening": format!("http://{addr}")}))?;
        rumour_service::serve(listener, app, shutdown_signal())
            .await
            .map_err(Failure::runtime)?;
        eprintln!("stopped");
        Ok(())
    })
}

async fn shutdown_signal() {
    let interrupt = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = interrupt => {}
        _ = terminate => {}
    }
}
