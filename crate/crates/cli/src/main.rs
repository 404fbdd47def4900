//! `rumourkit`: ingest → distribution → sample → threads → serve → report → export.
//!
//! JSON results go to stdout, diagnostics to stderr. Exit status is 0 on
//! success, 1 on a runtime failure and 2 on a usage error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{FileConfig, Overrides, PipelineConfig};

#[derive(Debug, Parser)]
#[command(name = "rumourkit", version, about = "Curate and annotate rumour threads from a tweet corpus")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter JSON-lines corpora into the corpus store.
    Ingest(IngestArgs),
    /// Retweet-count histogram and CCDF of the stored corpus.
    Distribution(DistributionArgs),
    /// Select source tweets above a retweet threshold.
    Sample(SampleArgs),
    /// Rebuild the reply thread of every sampled source.
    Threads(ThreadsArgs),
    /// Serve the annotation API until interrupted.
    Serve(ServeArgs),
    /// Compute report.json from the threads and the annotation log.
    Report(ReportArgs),
    /// Write the dataset bundle (threads, events, snapshot).
    Export(ExportArgs),
    /// Install a dataset bundle into an empty threads dir and log.
    Import(ImportArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// JSON-lines files; `-` reads stdin.
    #[arg(long, num_args = 1.., required = true)]
    input: Vec<PathBuf>,
    /// Comma-separated keywords (case-insensitive substring match).
    #[arg(long, value_delimiter = ',')]
    keywords: Option<Vec<String>>,
    /// Comma-separated language codes.
    #[arg(long, value_delimiter = ',')]
    languages: Option<Vec<String>>,
    /// Earliest created_at kept (inclusive), date or timestamp.
    #[arg(long)]
    from: Option<String>,
    /// Latest created_at bound (exclusive).
    #[arg(long)]
    to: Option<String>,
    #[arg(long)]
    store: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DistributionArgs {
    #[arg(long)]
    store: Option<PathBuf>,
    /// Output file; the distribution is printed when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra CCDF thresholds besides the 1-2-5 ladder.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<u64>>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    min_retweets: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    languages: Option<Vec<String>>,
    #[arg(long, overrides_with = "include_replies")]
    exclude_replies: bool,
    #[arg(long, overrides_with = "exclude_replies")]
    include_replies: bool,
    #[arg(long, overrides_with = "include_retweets")]
    exclude_retweets: bool,
    #[arg(long, overrides_with = "exclude_retweets")]
    include_retweets: bool,
    #[arg(long, required = true)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ThreadsArgs {
    #[arg(long)]
    store: Option<PathBuf>,
    /// Sample file written by `sample`.
    #[arg(long, required = true)]
    sample: PathBuf,
    /// Thread directory (default: <store>/threads).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_depth: Option<u32>,
}

#[derive(Debug, Args)]
struct DatasetArgs {
    /// Dataset root; threads and log default to <store>/threads and
    /// <store>/annotations.log.
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    threads_dir: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// 0 picks a free port.
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    host: Option<String>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Output file; the report is printed when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fraction dropped from each tail for the timing means.
    #[arg(long)]
    trim: Option<f64>,
    /// Seconds of inactivity that start a new annotation session.
    #[arg(long)]
    session_gap: Option<i64>,
    /// Also write the day table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Comma-separated retweet thresholds for the sensitivity table.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<u64>>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Output file; the bundle is printed when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ImportArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Bundle written by `export`.
    #[arg(long, required = true)]
    bundle: PathBuf,
}

/// Why a command stopped.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    pub fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn flag(on: bool, off: bool) -> Option<bool> {
    match (on, off) {
        (true, _) => Some(true),
        (_, true) => Some(false),
        _ => None,
    }
}

fn dataset(d: DatasetArgs) -> Overrides {
    Overrides {
        store_dir: d.store,
        threads_dir: d.threads_dir,
        log_path: d.log,
        ..Overrides::default()
    }
}

fn overrides(command: &mut Command) -> Overrides {
    match command {
        Command::Ingest(a) => Overrides {
            store_dir: a.store.take(),
            keywords: a.keywords.take(),
            ingest_languages: a.languages.take(),
            from: a.from.take(),
            to: a.to.take(),
            ..Overrides::default()
        },
        Command::Distribution(a) => Overrides {
            store_dir: a.store.take(),
            ..Overrides::default()
        },
        Command::Sample(a) => Overrides {
            store_dir: a.store.take(),
            min_retweets: a.min_retweets,
            sample_languages: a.languages.take(),
            exclude_replies: flag(a.exclude_replies, a.include_replies),
            exclude_retweets: flag(a.exclude_retweets, a.include_retweets),
            ..Overrides::default()
        },
        Command::Threads(a) => Overrides {
            store_dir: a.store.take(),
            threads_dir: a.out.take(),
            max_depth: a.max_depth,
            ..Overrides::default()
        },
        Command::Serve(a) => Overrides {
            port: a.port,
            host: a.host.take(),
            ..dataset(std::mem::replace(&mut a.dataset, empty_dataset()))
        },
        Command::Report(a) => Overrides {
            trim: a.trim,
            session_gap: a.session_gap,
            thresholds: a.thresholds.take(),
            ..dataset(std::mem::replace(&mut a.dataset, empty_dataset()))
        },
        Command::Export(a) => dataset(std::mem::replace(&mut a.dataset, empty_dataset())),
        Command::Import(a) => dataset(std::mem::replace(&mut a.dataset, empty_dataset())),
    }
}

fn empty_dataset() -> DatasetArgs {
    DatasetArgs {
        store: None,
        threads_dir: None,
        log: None,
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let Cli { config, mut command } = cli;
    let file = match &config {
        Some(path) => FileConfig::load(path).map_err(Failure::Usage)?,
        None => FileConfig::default(),
    };
    let flags = overrides(&mut command);
    let cfg = PipelineConfig::resolve(config.as_deref(), file, flags);
    eprintln!(
        "effective config: {}",
        serde_json::to_string(&cfg).expect("config serialises")
    );
    match command {
        Command::Ingest(a) => commands::ingest(&cfg, &a.input),
        Command::Distribution(a) => commands::distribution(&cfg, a.out.as_deref(), &a.thresholds.unwrap_or_default()),
        Command::Sample(a) => commands::sample(&cfg, &a.out),
        Command::Threads(a) => commands::threads(&cfg, &a.sample),
        Command::Serve(_) => commands::serve(&cfg),
        Command::Report(a) => commands::report(&cfg, a.out.as_deref(), a.csv.as_deref()),
        Command::Export(a) => commands::export(&cfg, a.out.as_deref()),
        Command::Import(a) => commands::import(&cfg, &a.bundle),
    }
}

fn main() -> ExitCode {
    // clap exits 2 on usage errors and 0 for --help / --version.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `rumourkit --help` for usage");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
