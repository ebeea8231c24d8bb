//! Command-line surface over [`crate::runner`].

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::corpus::{split_folds, AsapColumns, EllipseColumns};
use crate::runner::{
    evaluate_run, extract_all, feature_table, fold_summary, load_dataset, parse_run, DatasetConfig,
    DatasetKind, Overrides, RunError, Runner,
};

#[derive(Debug, Parser)]
#[command(
    name = "essay-scorer",
    version,
    about = "Zero-shot LLM essay scoring and QWK evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Kind {
    Asap,
    Ellipse,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// ASAP TSV or ELLIPSE CSV.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Essay-set metadata TOML (required for ASAP).
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "asap")]
    pub kind: Kind,
}

impl DatasetArgs {
    fn config(&self) -> DatasetConfig {
        DatasetConfig {
            kind: match self.kind {
                Kind::Asap => DatasetKind::Asap,
                Kind::Ellipse => DatasetKind::Ellipse,
            },
            path: self.dataset.clone(),
            meta_path: self.meta.clone(),
            asap_columns: AsapColumns::default(),
            ellipse_columns: EllipseColumns::default(),
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Continue an interrupted run in the same output directory.
    #[arg(long)]
    pub resume: bool,
    /// `echo`, or a mock script (TOML or JSON), instead of the configured endpoint.
    #[arg(long)]
    pub mock: Option<String>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

impl RunArgs {
    fn runner(&self) -> Result<Runner, RunError> {
        Runner::from_file(
            &self.config,
            &Overrides {
                mock: self.mock.clone(),
                output_dir: self.output_dir.clone(),
            },
        )
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the linguistic feature table of a dataset.
    Features {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign essays to stratified folds.
    Split {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        seed: u64,
        /// Fold file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build prompts, call the model and parse the outputs.
    Score(RunArgs),
    /// Re-parse the raw outputs of a run directory.
    Parse {
        run_dir: PathBuf,
        #[arg(long)]
        mock: Option<String>,
    },
    /// Compute QWK for a run directory.
    Evaluate {
        run_dir: PathBuf,
        /// Extra copy of the JSON report.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Score, parse and evaluate.
    Run(RunArgs),
}

fn write(path: &Path, contents: &str) -> Result<(), RunError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| RunError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, contents).map_err(|e| RunError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn execute(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Features { data, out } => {
            let (outcome, _) = load_dataset(&data.config())?;
            let vectors = extract_all(&outcome.essays);
            write(&out, &feature_table(&outcome.essays, &vectors))?;
            eprintln!(
                "{} essays, {} rejected rows",
                outcome.essays.len(),
                outcome.rejects.len()
            );
        }
        Command::Split { data, k, seed, out } => {
            let (outcome, _) = load_dataset(&data.config())?;
            let folds = split_folds(&outcome.essays, k, seed)?;
            match out {
                Some(path) => write(&path, &folds.to_tsv())?,
                None => print!("{}", folds.to_tsv()),
            }
            eprint!("{}", fold_summary(&folds, &outcome.essays));
        }
        Command::Score(args) => {
            let summary = args.runner()?.score(args.resume)?;
            eprintln!(
                "selected {}, completed {} ({} cached), resumed {}, skipped {}",
                summary.selected,
                summary.completed,
                summary.cache_hits,
                summary.resumed,
                summary.skipped
            );
        }
        Command::Parse { run_dir, mock } => {
            let backend = match mock {
                Some(m) => Some(crate::runner::mock_backend(&m, &run_dir)?),
                None => None,
            };
            let summary = parse_run(&run_dir, backend)?;
            eprintln!(
                "parsed {}, failed {}, model fallback {}",
                summary.parsed, summary.failed, summary.fallback
            );
        }
        Command::Evaluate { run_dir, json } => {
            let report = evaluate_run(&run_dir)?;
            if let Some(path) = json {
                write(&path, &report.to_json())?;
            }
            print!("{}", report.to_text());
        }
        Command::Run(args) => {
            let report = args.runner()?.run(args.resume)?;
            print!("{}", report.to_text());
        }
    }
    Ok(())
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
