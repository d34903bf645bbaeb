//! Command-line entry point. Every invocation gets a run directory
//! `runs/<run_id>/` holding a `config.json` snapshot and the command outputs.
//!
//! A `--config FILE` (JSON object of flag names to values, or a previous
//! run's `config.json`) supplies defaults; flags on the command line win.

mod commands;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::anno::AnnoError;
use crate::eval::EvalError;
use crate::explain::ExplainError;
use crate::mixture::MixtureError;
use crate::schema::SchemaError;
use crate::verifier::VerifierError;

#[derive(Debug, Parser)]
#[command(name = "factmix", version, about = "Multimodal fact verification toolkit", args_override_self = true)]
pub struct Cli {
    /// Parent directory for run directories.
    #[arg(long, global = true, default_value = "runs")]
    pub runs_dir: PathBuf,
    /// JSON file of default flag values; command-line flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a raw dataset export into unified JSONL.
    Normalize(NormalizeArgs),
    /// Define a dataset mixture over a store.
    Mix(MixArgs),
    /// Train the verifier on a mixture.
    Train(TrainArgs),
    /// Generate explanations and optionally write an augmented store.
    Explain(ExplainArgs),
    /// Score a checkpoint on eval sets.
    Eval(EvalArgs),
    /// Aggregate human annotations.
    Anno(AnnoArgs),
    /// Tabulate eval reports against a baseline.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Normalize(_) => "normalize",
            Self::Mix(_) => "mix",
            Self::Train(_) => "train",
            Self::Explain(_) => "explain",
            Self::Eval(_) => "eval",
            Self::Anno(_) => "anno",
            Self::Report(_) => "report",
        }
    }

    fn parameters(&self) -> Value {
        match self {
            Self::Normalize(a) => serde_json::to_value(a),
            Self::Mix(a) => serde_json::to_value(a),
            Self::Train(a) => serde_json::to_value(a),
            Self::Explain(a) => serde_json::to_value(a),
            Self::Eval(a) => serde_json::to_value(a),
            Self::Anno(a) => serde_json::to_value(a),
            Self::Report(a) => serde_json::to_value(a),
        }
        .expect("arguments serialize")
    }

    fn seed(&self) -> u64 {
        match self {
            Self::Mix(a) => a.seed,
            Self::Train(a) => a.seed,
            Self::Explain(a) => a.seed,
            _ => 0,
        }
    }
}

const SUBCOMMANDS: [&str; 7] = ["normalize", "mix", "train", "explain", "eval", "anno", "report"];

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct NormalizeArgs {
    /// Dataset key (e.g. moc, ph, fak).
    #[arg(long)]
    pub dataset: String,
    /// Raw export file, or a directory holding `<split>.<ext>` files
    /// (directly or under `<dataset>/`).
    #[arg(long)]
    pub input: PathBuf,
    /// Split of a single input file.
    #[arg(long, default_value = "train")]
    pub split: String,
    /// Output JSONL; relative paths land in the run directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Require image references to resolve.
    #[arg(long)]
    pub strict_images: bool,
    #[arg(long)]
    pub image_root: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct MixArgs {
    /// Store directory of unified `<dataset>.jsonl` files.
    #[arg(long)]
    pub store: PathBuf,
    /// Comma-separated dataset keys or a mixture name like "MC + PH".
    #[arg(long)]
    pub members: String,
    /// concat or uniform.
    #[arg(long, default_value = "concat")]
    pub sampling: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the shuffled train/val/test streams.
    #[arg(long)]
    pub materialize: bool,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    /// `mixture.json` written by `mix`.
    #[arg(long, conflicts_with_all = ["store", "members"])]
    pub mixture: Option<PathBuf>,
    #[arg(long, requires = "members")]
    pub store: Option<PathBuf>,
    #[arg(long, requires = "store")]
    pub members: Option<String>,
    #[arg(long, default_value = "concat")]
    pub sampling: String,
    /// Encoder backend: toy, clip-base, clip-large, clip-large-336, llava.
    #[arg(long, default_value = "toy")]
    pub backend: String,
    #[arg(long, default_value_t = 0)]
    pub backend_seed: u64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 2048)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 256)]
    pub micro_batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// adam or adamw.
    #[arg(long, default_value = "adam")]
    pub optimizer: String,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    /// mean, max or attention.
    #[arg(long, default_value = "mean")]
    pub aggregation: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "checkpoint")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct ExplainArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Dataset whose training split is explained.
    #[arg(long)]
    pub dataset: String,
    /// oracle, opposite, random, all, always_supports, always_refutes, always_nei, guided.
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value = "gpt-4o")]
    pub generator: String,
    /// Use the offline stub client instead of the network.
    #[arg(long)]
    pub stub: bool,
    /// Cap on uncached LLM requests.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
    #[arg(long, default_value_t = 5)]
    pub max_retries: u32,
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// What Opposite does with nei claims: keep or skip.
    #[arg(long, default_value = "keep")]
    pub nei: String,
    /// Shared explanation cache; defaults to one inside the run directory.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Write an augmented copy of the store to `<run>/store`.
    #[arg(long)]
    pub augment: bool,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub store: PathBuf,
    /// `all` or comma-separated eval-set keys.
    #[arg(long, default_value = "all")]
    pub eval_sets: String,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// macro, micro or weighted.
    #[arg(long, default_value = "macro")]
    pub averaging: String,
    /// A previous `report.json` to compute deltas against.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct AnnoArgs {
    /// Annotation TSV export.
    #[arg(long)]
    pub input: PathBuf,
    /// Target Q6 kappa for annotator filtering; 0 disables it.
    #[arg(long, default_value_t = 0.0)]
    pub threshold: f64,
    /// Responses required per item and question; 0 skips the check.
    #[arg(long, default_value_t = 5)]
    pub raters: usize,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct ReportArgs {
    /// Comma-separated `report.json` files, one table row each.
    #[arg(long)]
    pub runs: String,
    #[arg(long)]
    pub baseline: Option<PathBuf>,
}

/// Failure classes with their exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Data(_) => 3,
            Self::Backend(_) => 4,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Data(_) => "data",
            Self::Backend(_) => "backend",
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Data(m) | Self::Backend(m) => m,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let one_line = self.message().replace('\n', " ");
        write!(f, "error: {}: {}", self.category(), one_line)
    }
}

impl From<SchemaError> for CliError {
    fn from(e: SchemaError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<MixtureError> for CliError {
    fn from(e: MixtureError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<AnnoError> for CliError {
    fn from(e: AnnoError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<VerifierError> for CliError {
    fn from(e: VerifierError) -> Self {
        match e {
            VerifierError::Config(m) => Self::Usage(m),
            VerifierError::Mixture(m) => Self::Data(m.to_string()),
            VerifierError::Io { .. } | VerifierError::Checkpoint(_) => Self::Data(e.to_string()),
            _ => Self::Backend(e.to_string()),
        }
    }
}

impl From<ExplainError> for CliError {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::Client { .. } | ExplainError::BudgetExceeded { .. } => Self::Backend(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

/// What a finished command produced.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub run_id: String,
    pub run_dir: PathBuf,
    pub command: String,
    pub outputs: Map<String, Value>,
}

/// A run directory plus output-path resolution.
pub struct RunContext {
    pub run_id: String,
    pub dir: PathBuf,
}

impl RunContext {
    /// Relative paths resolve inside the run directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.dir.join(path)
        }
    }
}

/// Content hash of (command, parameters, seed).
pub fn run_id(command: &str, parameters: &Value, seed: u64) -> String {
    let canonical = json!({"command": command, "parameters": parameters, "seed": seed});
    let digest = Sha256::digest(serde_json::to_vec(&canonical).expect("json"));
    hex::encode(&digest[..6])
}

fn value_to_flag_args(key: &str, value: &Value, out: &mut Vec<OsString>) -> Result<(), CliError> {
    let flag = format!("--{}", key.replace('_', "-"));
    match value {
        Value::Null => {}
        Value::Bool(true) => out.push(flag.into()),
        Value::Bool(false) => {}
        Value::Number(n) => out.extend([flag.into(), n.to_string().into()]),
        Value::String(s) => out.extend([flag.into(), s.into()]),
        Value::Array(items) => {
            let parts: Vec<String> = items
                .iter()
                .map(|v| match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect();
            out.extend([flag.into(), parts.join(",").into()]);
        }
        Value::Object(_) => return Err(CliError::Usage(format!("config key {key:?} holds an object"))),
    }
    Ok(())
}

/// Pulls `--config FILE` out of argv and splices the file's values in as
/// flags right after the subcommand, so explicit flags later in argv win.
fn apply_config(mut argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut config: Option<PathBuf> = None;
    let mut i = 1;
    while i < argv.len() {
        let arg = argv[i].to_string_lossy().to_string();
        if arg == "--config" {
            let path = argv.get(i + 1).ok_or_else(|| CliError::Usage("--config needs a path".into()))?;
            config = Some(PathBuf::from(path));
            argv.drain(i..i + 2);
        } else if let Some(p) = arg.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
            argv.remove(i);
        } else {
            i += 1;
        }
    }
    let Some(path) = config else { return Ok(argv) };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let params = match value {
        Value::Object(mut m) if m.contains_key("parameters") => m.remove("parameters").unwrap(),
        other => other,
    };
    let Value::Object(params) = params else {
        return Err(CliError::Usage(format!("{}: expected a JSON object", path.display())));
    };
    let mut extra = Vec::new();
    for (k, v) in &params {
        value_to_flag_args(k, v, &mut extra)?;
    }
    let pos = argv
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .ok_or_else(|| CliError::Usage("no subcommand given".into()))?;
    argv.splice(pos + 1..pos + 1, extra);
    Ok(argv)
}

/// Parses argv and runs the command. Help and version requests come back as
/// `Ok(None)` after printing.
pub fn run<I, T>(args: I) -> Result<Option<RunOutcome>, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv = apply_config(args.into_iter().map(Into::into).collect())?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(None);
            }
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            eprint!("{}", e.render());
            return Err(CliError::Usage(first));
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(match cli.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        })
        .format_timestamp(None)
        .try_init();

    let command = cli.command.name();
    let parameters = cli.command.parameters();
    let seed = cli.command.seed();
    let id = run_id(command, &parameters, seed);
    let dir = cli.runs_dir.join(&id);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let snapshot = json!({
        "run_id": id,
        "command": command,
        "parameters": parameters,
        "seed": seed,
        "created_at": chrono::Utc::now().to_rfc3339(),
        "version": env!("CARGO_PKG_VERSION"),
    });
    let cfg_path = dir.join("config.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&snapshot).expect("json") + "\n").map_err(io_err(&cfg_path))?;

    let ctx = RunContext { run_id: id.clone(), dir: dir.clone() };
    let outputs = commands::dispatch(&cli.command, &ctx)?;
    Ok(Some(RunOutcome { run_id: id, run_dir: dir, command: command.to_string(), outputs }))
}

/// Process entry: runs, prints a JSON summary on success or a single
/// `error: <category>: <message>` line on failure, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match run(args) {
        Ok(Some(outcome)) => {
            println!("{}", serde_json::to_string(&outcome).expect("json"));
            0
        }
        Ok(None) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
