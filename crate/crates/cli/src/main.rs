//! `typecascade` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 every model call failed in the backend.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use typecascade::baseline::BaselineVariant;

use settings::ConfigArgs;

#[derive(Debug, Parser)]
#[command(name = "typecascade", version, about = "Semantic type discovery and annotation for CSV collections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a collection and write one profile line per column.
    Profile {
        /// Directory of CSV files.
        collection: PathBuf,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run the cascade and write annotations, index, ledger and manifest.
    Discover {
        collection: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Rerun residual annotation on the results of an earlier run.
    Annotate {
        collection: PathBuf,
        /// Directory written by `discover`.
        #[arg(long)]
        run: PathBuf,
        /// Output directory; defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Annotate table by table with one prompt each.
    Baseline {
        collection: PathBuf,
        #[arg(long, value_enum)]
        variant: Variant,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Compute metrics over annotation files.
    Evaluate {
        #[command(subcommand)]
        mode: EvalMode,
    },
    /// Print a run manifest in readable form.
    Report {
        /// Directory written by `discover`.
        run: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Variant {
    Naive,
    NaiveReuse,
    Llm,
    LlmReuse,
}

impl From<Variant> for BaselineVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Naive => BaselineVariant::Naive,
            Variant::NaiveReuse => BaselineVariant::NaiveReuse,
            Variant::Llm => BaselineVariant::Llm,
            Variant::LlmReuse => BaselineVariant::LlmReuse,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum DenominatorArg {
    /// Judged annotated columns.
    Annotated,
    /// Every column of the collection.
    All,
}

#[derive(Debug, Subcommand)]
pub enum EvalMode {
    /// Grade pooled labels with the judge model; report hits, precision and coverage.
    Judge {
        #[arg(long)]
        collection: PathBuf,
        /// Annotation files, one per method.
        #[arg(long, required = true, num_args = 1..)]
        annotations: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "annotated")]
        denominator: DenominatorArg,
        /// Also write the judgments here.
        #[arg(long)]
        judgments_out: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Precision, recall and F1 against a ground-truth file.
    Manual {
        #[arg(long, required = true, num_args = 1..)]
        annotations: Vec<PathBuf>,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label agreement over join or matching pairs.
    Match {
        #[arg(long, required = true, num_args = 1..)]
        annotations: Vec<PathBuf>,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Priced token usage per 1000 annotated columns.
    Cost {
        /// Annotation files; each is paired with the ledger at the same position.
        #[arg(long, required = true, num_args = 1..)]
        annotations: Vec<PathBuf>,
        #[arg(long, required = true, num_args = 1..)]
        ledger: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Debug)]
pub struct CliError {
    code: u8,
    error: anyhow::Error,
}

impl CliError {
    pub fn usage(e: impl Into<anyhow::Error>) -> Self {
        CliError { code: 1, error: e.into() }
    }
    pub fn data(e: impl Into<anyhow::Error>) -> Self {
        CliError { code: 2, error: e.into() }
    }
    pub fn backend(e: impl Into<anyhow::Error>) -> Self {
        CliError { code: 3, error: e.into() }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Profile { collection, out, cfg } => commands::profile(&collection, out.as_deref(), &cfg),
        Command::Discover { collection, out, cfg } => commands::discover(&collection, &out, &cfg),
        Command::Annotate {
            collection,
            run,
            out,
            cfg,
        } => commands::annotate(&collection, &run, out.as_deref(), &cfg),
        Command::Baseline {
            collection,
            variant,
            out,
            cfg,
        } => commands::baseline(&collection, variant.into(), &out, &cfg),
        Command::Evaluate { mode } => commands::evaluate(mode),
        Command::Report { run } => commands::report(&run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
