//! `iva`: CPE naming, NVD feed ingestion, CPE/CVE matching, dataset audits
//! and the alert triage workflow from the command line.
//!
//! Exit codes: 0 success, 1 operational failure, 2 usage error.

mod commands;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "iva", version, about = "Inventory vulnerability assessment: CPE matching and CVE alert triage")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Global {
    /// Catalog snapshot directory (written by `feeds ingest`).
    #[arg(long, global = true)]
    pub snapshot: Option<PathBuf>,
    /// Triage store (SQLite file).
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// Service configuration file (TOML); flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    /// Maximum edit distance for vendor/product similarity.
    #[arg(long, global = true)]
    pub threshold: Option<usize>,
    /// Summary matches must have one word window similar to both vendor and product.
    #[arg(long, global = true)]
    pub strict_summary: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// CPE name conversion.
    #[command(subcommand)]
    Cpe(CpeCommand),
    /// Feed ingestion into a snapshot directory.
    #[command(subcommand)]
    Feeds(FeedsCommand),
    /// Search terms, CPE candidates and CVE matches against a snapshot.
    #[command(subcommand)]
    Match(MatchCommand),
    /// Consistency audit of a snapshot.
    Audit {
        /// Write the full JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Import an inventory file (CSV or JSON) into the store.
    Import {
        file: PathBuf,
        #[arg(long, default_value = "cli")]
        source: String,
        #[arg(long, value_enum)]
        input_format: Option<InputFormat>,
    },
    /// List inventory products.
    Products {
        #[arg(long, value_enum)]
        status: Option<StatusArg>,
    },
    /// Ranked CPE candidates for a product.
    Candidates {
        product_id: i64,
        #[arg(long, default_value_t = 10)]
        limit: usize,
    },
    /// Assign a CPE to a product and scan it.
    Assign(AssignArgs),
    /// Scan a product (or all assigned products) against the snapshot.
    Scan {
        #[arg(required_unless_present = "all", conflicts_with = "all")]
        product_id: Option<i64>,
        #[arg(long)]
        all: bool,
    },
    /// Alerts of a product under its current assignment.
    Alerts {
        product_id: i64,
        #[arg(long, value_enum)]
        state: Option<StateArg>,
        #[arg(long)]
        grouped: bool,
    },
    /// Confirm or discard alerts, all or none.
    Decide(DecideArgs),
    /// Summary report over products and alerts.
    Report {
        /// Case-insensitive substring of the inventory vendor.
        #[arg(long)]
        vendor: Option<String>,
        #[arg(long, value_enum)]
        state: Option<StateArg>,
        /// Only alerts created at or after this RFC 3339 time.
        #[arg(long)]
        since: Option<DateTime<Utc>>,
        #[arg(long, value_enum)]
        status: Option<StatusArg>,
    },
    /// Re-fetch feeds, rebuild the snapshot and rescan assigned products.
    Rescan {
        /// Dictionary source (path or URL); defaults to the config file's.
        #[arg(long, requires = "cve")]
        dictionary: Option<String>,
        #[arg(long)]
        cve: Vec<String>,
    },
    /// Run the HTTP/JSON API.
    Serve {
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        token: Option<String>,
        /// Seconds between scheduled rescans; 0 disables them.
        #[arg(long)]
        rescan_interval: Option<u64>,
    },
}

#[derive(Subcommand)]
enum CpeCommand {
    /// Convert between URI, formatted-string and WFN forms.
    Convert {
        #[arg(long, value_enum, default_value_t = Binding::Auto)]
        from: Binding,
        #[arg(long, value_enum)]
        to: Binding,
        name: String,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Binding {
    Auto,
    Uri,
    Fs,
    Wfn,
}

#[derive(Subcommand)]
enum FeedsCommand {
    /// Parse the dictionary and CVE feeds and write a snapshot directory.
    Ingest {
        #[arg(long)]
        dictionary: String,
        #[arg(long, required = true)]
        cve: Vec<String>,
        /// Output directory; defaults to --snapshot.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Snapshot time (RFC 3339); defaults to now.
        #[arg(long)]
        snapshot_time: Option<DateTime<Utc>>,
    },
}

#[derive(Subcommand)]
enum MatchCommand {
    /// Vendor and product search terms for inventory strings.
    Terms {
        #[arg(long, default_value = "")]
        vendor: String,
        #[arg(long)]
        product: String,
    },
    /// Ranked dictionary candidates for inventory strings.
    Cpe {
        #[arg(long, default_value = "")]
        vendor: String,
        #[arg(long)]
        product: String,
        #[arg(long, default_value = "")]
        version: String,
        #[arg(long, default_value_t = 10)]
        limit: usize,
    },
    /// CVEs matching an assigned CPE name (URI, formatted string or WFN).
    Cve {
        #[arg(long)]
        cpe: String,
        #[arg(long, value_enum, default_value_t = SearchMode::All)]
        mode: SearchMode,
        #[arg(long)]
        grouped: bool,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SearchMode {
    All,
    CpeList,
    Summary,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatusArg {
    Assigned,
    Unassigned,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StateArg {
    Pending,
    Confirmed,
    Discarded,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecisionArg {
    Confirmed,
    Discarded,
}

#[derive(Args)]
pub struct AssignArgs {
    /// Product to assign; with --auto-assign-top and no id, every unassigned product.
    #[arg(required_unless_present = "auto_assign_top")]
    pub product_id: Option<i64>,
    /// CPE name in any binding.
    #[arg(long, required_unless_present = "auto_assign_top", conflicts_with = "auto_assign_top")]
    pub cpe: Option<String>,
    /// Experimental: take the top-ranked candidate without review.
    #[arg(long)]
    pub auto_assign_top: bool,
    #[arg(long, default_value = "cli")]
    pub user: String,
}

#[derive(Args)]
pub struct DecideArgs {
    #[arg(long, value_enum)]
    pub decision: DecisionArg,
    /// Alert id; repeatable.
    #[arg(long = "alert")]
    pub alerts: Vec<i64>,
    /// Product owning --group.
    #[arg(long, requires = "group")]
    pub product: Option<i64>,
    #[arg(long, requires = "product")]
    pub group: Option<String>,
    #[arg(long, default_value = "cli")]
    pub user: String,
}

/// Why a command did not succeed.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Operation { code: Option<&'static str>, message: String },
}

impl Failure {
    pub fn op(message: impl std::fmt::Display) -> Self {
        Failure::Operation { code: None, message: message.to_string() }
    }
}

impl From<iva_triage::TriageError> for Failure {
    fn from(e: iva_triage::TriageError) -> Self {
        Failure::Operation { code: Some(e.code()), message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let g = &cli.global;
    let result = match cli.command {
        Command::Cpe(CpeCommand::Convert { from, to, name }) => commands::convert(g, from, to, &name),
        Command::Feeds(FeedsCommand::Ingest { dictionary, cve, out, snapshot_time }) => {
            commands::ingest(g, &dictionary, &cve, out, snapshot_time)
        }
        Command::Match(MatchCommand::Terms { vendor, product }) => commands::terms(g, &vendor, &product),
        Command::Match(MatchCommand::Cpe { vendor, product, version, limit }) => {
            commands::match_cpe(g, &vendor, &product, &version, limit)
        }
        Command::Match(MatchCommand::Cve { cpe, mode, grouped }) => commands::match_cve(g, &cpe, mode, grouped),
        Command::Audit { out } => commands::audit(g, out),
        Command::Import { file, source, input_format } => commands::import(g, &file, &source, input_format),
        Command::Products { status } => commands::products(g, status),
        Command::Candidates { product_id, limit } => commands::candidates(g, product_id, limit),
        Command::Assign(args) => commands::assign(g, &args),
        Command::Scan { product_id, all } => commands::scan(g, product_id, all),
        Command::Alerts { product_id, state, grouped } => commands::alerts(g, product_id, state, grouped),
        Command::Decide(args) => commands::decide(g, &args),
        Command::Report { vendor, state, since, status } => commands::report(g, vendor, state, since, status),
        Command::Rescan { dictionary, cve } => commands::rescan(g, dictionary, cve),
        Command::Serve { listen, token, rescan_interval } => commands::serve(g, listen, token, rescan_interval),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Operation { code, message }) => {
            match code {
                Some(code) => eprintln!("error [{code}]: {message}"),
                None => eprintln!("error: {message}"),
            }
            ExitCode::from(1)
        }
    }
}
