//! Command line front end. [`run`] parses argv, dispatches one subcommand and
//! returns the process exit code: 0 on success, 1 on a domain error, 2 on a
//! usage error.

mod commands;

use std::io::Write;
use std::path::PathBuf;

use canopy_core::metrics::EvalReport;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::CliError;

const ENV_HELP: &str = "\
Environment:
  CANOPY_LLM_BASE_URL      chat-completions endpoint base URL (llm planner)
  CANOPY_LLM_MODEL         model identifier sent with each request
  CANOPY_LLM_API_KEY       bearer token; never logged
  CANOPY_LLM_TIMEOUT_SECS  request timeout in seconds (default 30)
  RUST_LOG                 overrides the -v log level";

#[derive(Debug, Parser)]
#[command(name = "canopy", version, about = "Bi-temporal forest change analysis", after_help = ENV_HELP)]
pub struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score predictions and candidate captions against a manifest.
    Eval(EvalArgs),
    /// Detect vegetation loss between two images.
    Detect(DetectArgs),
    /// Generate the four rule captions for a change mask.
    Caption(CaptionArgs),
    /// Corpus statistics for a manifest.
    Stats(StatsArgs),
    /// Keep pairs whose captions mention trees and write a new manifest.
    Subset(SubsetArgs),
    /// Start the HTTP API.
    Serve(ServeArgs),
    /// Offline chat with the analysis agent on stdin/stdout.
    Chat(ChatArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    /// Aligned text for people.
    #[default]
    Table,
    /// Pretty JSON for scripts.
    Record,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum PlannerChoice {
    #[default]
    Det,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum DirectionChoice {
    #[default]
    Loss,
    Gain,
    Both,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("inputs").required(true).multiple(true))]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory holding `<pair_id>.png` predicted masks.
    #[arg(long, group = "inputs")]
    pub pred_dir: Option<PathBuf>,
    /// JSON object mapping pair id to one candidate caption.
    #[arg(long, group = "inputs")]
    pub captions: Option<PathBuf>,
    /// Restrict to one split (train, val, test).
    #[arg(long)]
    pub split: Option<String>,
    /// Model name for the report row; defaults to the prediction directory name.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// First-epoch image.
    #[arg(long)]
    pub a: PathBuf,
    /// Second-epoch image.
    #[arg(long)]
    pub b: PathBuf,
    /// Reference mask; enables scoring and the comparison overlay.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Directory that receives mask.png and overlay.png.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub min_area: usize,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(0..=15))]
    pub kernel_radius: u64,
    #[arg(long, value_enum, default_value_t)]
    pub direction: DirectionChoice,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct CaptionArgs {
    #[arg(long)]
    pub mask: PathBuf,
    /// Identifier attached to the captions; defaults to the file stem.
    #[arg(long)]
    pub pair_id: Option<String>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Skip mask loading; coverage figures are then omitted.
    #[arg(long)]
    pub captions_only: bool,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true))]
pub struct SubsetArgs {
    /// Source manifest.
    #[arg(long, group = "source")]
    pub manifest: Option<PathBuf>,
    /// LEVIR-CC style caption file to import instead of a manifest.
    #[arg(long, group = "source", requires = "data_root")]
    pub levir_cc: Option<PathBuf>,
    /// Image root for --levir-cc.
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    /// Comma-separated keywords; defaults to the built-in tree vocabulary.
    #[arg(long, value_delimiter = ',')]
    pub keywords: Vec<String>,
    /// Where to write the subset manifest.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    /// Server-side paths in eval requests must stay inside this directory.
    #[arg(long, default_value = ".")]
    pub data_root: PathBuf,
    /// Built web UI to serve at /.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    /// Request body cap in bytes.
    #[arg(long, default_value_t = canopy_service::DEFAULT_MAX_BODY_BYTES)]
    pub max_body_bytes: usize,
    #[arg(long, value_enum, default_value_t)]
    pub planner: PlannerChoice,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[arg(long, value_enum, default_value_t)]
    pub planner: PlannerChoice,
    /// Preload this first-epoch image.
    #[arg(long, requires = "b")]
    pub a: Option<PathBuf>,
    #[arg(long, requires = "a")]
    pub b: Option<PathBuf>,
    /// Reference mask for the preloaded pair.
    #[arg(long, requires = "a")]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub pair_id: Option<String>,
    /// Root for paths named in chat (predictions, manifests).
    #[arg(long, default_value = ".")]
    pub data_root: PathBuf,
    /// Print the session transcript on exit.
    #[arg(long)]
    pub transcript: bool,
}

/// Renders a report in the requested format. Output is deterministic.
pub fn emit_report(report: &EvalReport, format: Format) -> String {
    match format {
        Format::Table => report.to_table(),
        Format::Record => report.to_record(),
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let env = env_logger::Env::default().default_filter_or(level);
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Runs one invocation, reading stdin only for `chat`.
pub fn run<I, T>(argv: I, stdin: &mut dyn std::io::BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let sink: &mut dyn Write = if code == 0 { out } else { err };
            let _ = write!(sink, "{text}");
            return if code == 0 { 0 } else { 2 };
        }
    };
    init_logging(cli.verbose);
    match commands::dispatch(cli.command, stdin, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
