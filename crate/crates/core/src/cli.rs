//! Command-line interface: `analyze`, `batch`, `eval`, and `fixtures`.
//!
//! Exit codes: 0 success; 1 parse, validation, I/O, or batch errors; 2 a
//! provider error in `llm` mode with no fallback possible.

use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};

use crate::classifier::ClassifierMode;
use crate::error::Error;
use crate::eval::{evaluate, DEFAULT_THRESHOLD};
use crate::fixtures::write_corpus;
use crate::pipeline::{parse_formats, OutputFormat, Pipeline, RunConfig};
use crate::provider::{ProviderConfig, StructuredClient};
use crate::taxonomy::summarize_distribution;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_PROVIDER: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "failscope", version, about = "Failure analysis for LLM coding-agent execution traces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze one trace and write its reports.
    Analyze {
        trace: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Analyze every trace in a directory and write index.json.
    Batch {
        dir: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Traces analyzed concurrently (default: available cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Compare predictions to gold labels and print metrics as JSON.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// Confidence strictly above this counts as high confidence.
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Write the 32-trace labeled corpus.
    Fixtures { dir: PathBuf },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// rule_based, llm, or hybrid.
    #[arg(long, default_value = "rule_based")]
    pub mode: ClassifierMode,
    /// JSON provider settings; the API key is read from the environment
    /// variable it names.
    #[arg(long)]
    pub provider_config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Comma-separated subset of html,json,dot,svg,png.
    #[arg(long, default_value = "html,json", value_parser = parse_formats)]
    pub formats: std::collections::BTreeSet<OutputFormat>,
    /// Reject unknown keys in trace files (default).
    #[arg(long, overrides_with = "lenient")]
    pub strict: bool,
    /// Ignore unknown keys in trace files with a warning.
    #[arg(long, overrides_with = "strict")]
    pub lenient: bool,
    /// Fixed report timestamp (RFC 3339), for reproducible output.
    #[arg(long)]
    pub pin_clock: Option<DateTime<Utc>>,
}

impl RunArgs {
    fn into_config(self, jobs: Option<usize>) -> Result<RunConfig, Error> {
        let provider = match &self.provider_config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                Some(ProviderConfig::from_json(&text)?)
            }
            None => None,
        };
        Ok(RunConfig {
            mode: self.mode,
            provider,
            output_dir: self.out,
            formats: self.formats,
            strict_parsing: !self.lenient,
            pinned_clock: self.pin_clock,
            jobs,
        })
    }
}

/// Test hooks: an injected client replaces the HTTP provider built from
/// `--provider-config`.
#[derive(Default, Clone)]
pub struct Overrides {
    pub client: Option<StructuredClient>,
    pub renderer: Option<crate::flowgraph::DotRenderer>,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Provider(_) => EXIT_PROVIDER,
        _ => EXIT_FAILURE,
    }
}

fn report_error(stderr: &mut dyn Write, err: &Error) {
    let _ = writeln!(stderr, "error [{}]: {err}", err.code());
    if let Error::InvalidTrace(violations) = err {
        for v in violations {
            let _ = writeln!(stderr, "  {v}");
        }
    }
}

fn build_pipeline(config: RunConfig, overrides: &Overrides) -> Pipeline {
    if config.mode != ClassifierMode::RuleBased
        && config.provider.is_none()
        && overrides.client.is_none()
    {
        log::warn!(
            "--mode {} without --provider-config; degrading to rule_based",
            config.mode
        );
    }
    let mut pipeline = Pipeline::new(config);
    if let Some(client) = &overrides.client {
        pipeline = pipeline.with_client(Some(client.clone()));
    }
    if let Some(renderer) = &overrides.renderer {
        pipeline = pipeline.with_renderer(renderer.clone());
    }
    pipeline
}

pub fn cmd_analyze(
    trace: &Path,
    config: RunConfig,
    overrides: &Overrides,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32 {
    let pipeline = build_pipeline(config, overrides);
    match pipeline.analyze_file(trace) {
        Ok(result) => {
            for w in &result.warnings {
                let _ = writeln!(stderr, "warning: {w}");
            }
            for path in result.written.values() {
                let _ = writeln!(stdout, "{}", path.display());
            }
            EXIT_OK
        }
        Err(err) => {
            report_error(stderr, &err);
            exit_code(&err)
        }
    }
}

pub fn cmd_batch(
    dir: &Path,
    config: RunConfig,
    overrides: &Overrides,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32 {
    let pipeline = build_pipeline(config, overrides);
    match pipeline.run_batch(dir) {
        Ok(index) => {
            let errors = index.error_count();
            for row in index.rows.iter().filter(|r| r.error.is_some()) {
                let e = row.error.as_ref().expect("filtered");
                let _ = writeln!(stderr, "error [{}] {}: {}", e.code, row.source, e.message);
            }
            let _ = writeln!(
                stdout,
                "analyzed {} traces, {errors} errors; index at {}",
                index.rows.len(),
                pipeline.config.output_dir.join("index.json").display()
            );
            if errors == 0 {
                EXIT_OK
            } else {
                EXIT_FAILURE
            }
        }
        Err(err) => {
            report_error(stderr, &err);
            EXIT_FAILURE
        }
    }
}

pub fn cmd_eval(
    gold: &Path,
    predictions: &Path,
    threshold: f64,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32 {
    match evaluate(predictions, gold, threshold) {
        Ok(metrics) => {
            let text = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
            let _ = writeln!(stdout, "{text}");
            EXIT_OK
        }
        Err(err) => {
            report_error(stderr, &err);
            EXIT_FAILURE
        }
    }
}

pub fn cmd_fixtures(dir: &Path, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    match write_corpus(dir) {
        Ok(corpus) => {
            let gold: Vec<_> = corpus
                .iter()
                .map(|c| c.gold.to_annotation().expect("generated gold labels are valid"))
                .collect();
            let dist = summarize_distribution(&gold);
            for row in &dist.rows {
                let _ = writeln!(stdout, "{:<32} {:>3}", row.category.display_name(), row.count);
            }
            let _ = writeln!(stdout, "{:<32} {:>3}", "Total", dist.total);
            EXIT_OK
        }
        Err(err) => {
            report_error(stderr, &err);
            EXIT_FAILURE
        }
    }
}

pub fn execute(
    cli: Cli,
    overrides: &Overrides,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32 {
    match cli.command {
        Command::Analyze { trace, run } => match run.into_config(None) {
            Ok(config) => cmd_analyze(&trace, config, overrides, stdout, stderr),
            Err(err) => {
                report_error(stderr, &err);
                EXIT_FAILURE
            }
        },
        Command::Batch { dir, run, jobs } => match run.into_config(jobs) {
            Ok(config) => cmd_batch(&dir, config, overrides, stdout, stderr),
            Err(err) => {
                report_error(stderr, &err);
                EXIT_FAILURE
            }
        },
        Command::Eval {
            gold,
            predictions,
            threshold,
        } => cmd_eval(&gold, &predictions, threshold, stdout, stderr),
        Command::Fixtures { dir } => cmd_fixtures(&dir, stdout, stderr),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, overrides: &Overrides, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli, overrides, stdout, stderr),
        Err(err) => {
            if err.use_stderr() {
                let _ = write!(stderr, "{}", err.render());
                EXIT_FAILURE
            } else {
                let _ = write!(stdout, "{}", err.render());
                EXIT_OK
            }
        }
    }
}
