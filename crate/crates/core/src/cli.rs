//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when `check` raises a flag, 2 for usage,
//! configuration or data errors.

use crate::abft::{CheckThreshold, CheckerKind, Phase};
use crate::accounting::{op_count_table, phase_shares};
use crate::dataio::{load_config, parse_config, DataError, RunConfig};
use crate::fault_lab::{run_campaign, CampaignReport, LabError};
use crate::gcn::{infer_clean, GcnModel, ModelError};
use crate::matrix::Matrix;
use crate::report::{
    CheckReport, CheckRun, Format, OpCountReport, PhaseReport, ReportDocument, VerdictRow,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FLAGGED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lab(#[from] LabError),
    #[error("{path}: {message}")]
    Output { path: PathBuf, message: String },
    #[error("thread pool: {0}")]
    Threads(String),
}

#[derive(Debug, Parser)]
#[command(
    name = "gcn-abft",
    version,
    about = "Checked GCN inference, fault campaigns and operation accounting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Fault-free inference under both checkers; exits 1 on any flag.
    Check,
    /// Fault-injection campaign with per-threshold outcome rates.
    Campaign,
    /// Output and checking operation counts per checker.
    Opcount,
    /// Per-layer operation share of each multiplication step.
    Phases,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckerArg {
    Split,
    Fused,
    Both,
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    /// Run configuration (`key = value` lines). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory receiving `<command>.<format>` report files.
    #[arg(long, global = true, default_value = "reports")]
    pub out: PathBuf,
    /// Report format; all three when omitted.
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,
    /// Checker selection, overriding the configuration.
    #[arg(long, global = true, value_enum)]
    pub checker: Option<CheckerArg>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for campaigns; the rayon default when omitted.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

impl Options {
    fn formats(&self) -> Vec<Format> {
        match self.format {
            None => Format::ALL.to_vec(),
            Some(FormatArg::Json) => vec![Format::Json],
            Some(FormatArg::Csv) => vec![Format::Csv],
            Some(FormatArg::Text) => vec![Format::Text],
        }
    }
}

/// Configuration with command-line overrides applied.
pub fn resolve_config(options: &Options) -> Result<RunConfig, CliError> {
    let mut config = match &options.config {
        Some(path) => load_config(path)?,
        None => parse_config("", Path::new("."))?,
    };
    if let Some(seed) = options.seed {
        config.set_seed(seed);
    }
    if let Some(checker) = options.checker {
        config.campaign.checkers = match checker {
            CheckerArg::Split => vec![CheckerKind::Split],
            CheckerArg::Fused => vec![CheckerKind::Fused],
            CheckerArg::Both => CheckerKind::ALL.to_vec(),
        };
    }
    Ok(config)
}

fn load_model(config: &RunConfig) -> Result<(GcnModel, Matrix), CliError> {
    let bundle = config.load_dataset()?;
    let model = bundle.model()?;
    Ok((model, bundle.features))
}

/// Fault-free verification. The report passes when no verdict is flagged
/// and, with both checkers, their outputs and final predicted checksums match.
pub fn cmd_check(config: &RunConfig) -> Result<CheckReport, CliError> {
    let (model, features) = load_model(config)?;
    let tau = config.effective_check_threshold();
    check_model(
        &config.name,
        &model,
        &features,
        &config.campaign.checkers,
        tau,
    )
}

pub fn check_model(
    name: &str,
    model: &GcnModel,
    features: &Matrix,
    checkers: &[CheckerKind],
    tau: CheckThreshold,
) -> Result<CheckReport, CliError> {
    let mut runs = Vec::new();
    let mut traces = Vec::new();
    for &checker in checkers {
        let trace = infer_clean(model, features, checker, tau)?;
        let verdicts: Vec<VerdictRow> = trace
            .layers
            .iter()
            .enumerate()
            .flat_map(|(layer, t)| {
                t.verdicts.iter().map(move |v| VerdictRow {
                    layer,
                    phase: v.phase,
                    predicted: v.predicted,
                    actual: v.actual,
                    difference: v.difference,
                    flagged: v.flagged(),
                })
            })
            .collect();
        runs.push(CheckRun {
            checker,
            flagged: verdicts.iter().any(|v| v.flagged),
            verdicts,
        });
        traces.push((checker, trace));
    }
    let find = |k: CheckerKind| traces.iter().find(|(c, _)| *c == k).map(|(_, t)| t);
    let (checksums_agree, outputs_agree) =
        match (find(CheckerKind::Split), find(CheckerKind::Fused)) {
            (Some(split), Some(fused)) => {
                let final_predicted = |t: &crate::gcn::InferenceTrace, phase: Phase| -> Vec<u64> {
                    t.verdicts()
                        .filter(|v| v.phase == phase)
                        .map(|v| v.predicted.to_bits())
                        .collect()
                };
                (
                    Some(
                        final_predicted(split, Phase::Phase2)
                            == final_predicted(fused, Phase::LayerEnd),
                    ),
                    Some(split.logits.bit_eq(&fused.logits)),
                )
            }
            _ => (None, None),
        };
    let passed = runs.iter().all(|r| !r.flagged)
        && checksums_agree != Some(false)
        && outputs_agree != Some(false);
    Ok(CheckReport {
        name: name.to_string(),
        threshold: tau.value(),
        runs,
        checksums_agree,
        outputs_agree,
        passed,
    })
}

pub fn cmd_campaign(
    config: &RunConfig,
    threads: Option<usize>,
) -> Result<CampaignReport, CliError> {
    let (model, features) = load_model(config)?;
    let run = || run_campaign(&config.name, &model, &features, &config.campaign);
    let report = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Threads(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    Ok(report)
}

pub fn cmd_opcount(config: &RunConfig) -> Result<OpCountReport, CliError> {
    let (model, features) = load_model(config)?;
    Ok(OpCountReport {
        name: config.name.clone(),
        table: op_count_table(&model, &features, &config.campaign.checkers)?,
    })
}

pub fn cmd_phases(config: &RunConfig) -> Result<PhaseReport, CliError> {
    let (model, features) = load_model(config)?;
    Ok(PhaseReport {
        name: config.name.clone(),
        layers: phase_shares(&model, &features)?,
    })
}

/// Writes `<command>.<format>` for every requested format and returns the
/// paths written.
pub fn write_reports(
    doc: &ReportDocument,
    dir: &Path,
    formats: &[Format],
) -> Result<Vec<PathBuf>, CliError> {
    let io_err = |path: &Path, e: std::io::Error| CliError::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    formats
        .iter()
        .map(|&f| {
            let path = dir.join(format!("{}.{}", doc.command(), f.name()));
            fs::write(&path, doc.render(f)).map_err(|e| io_err(&path, e))?;
            Ok(path)
        })
        .collect()
}

/// Runs one command and returns the document plus its exit code.
pub fn execute(command: Command, options: &Options) -> Result<(ReportDocument, i32), CliError> {
    let config = resolve_config(options)?;
    Ok(match command {
        Command::Check => {
            let report = cmd_check(&config)?;
            let code = if report.passed { EXIT_OK } else { EXIT_FLAGGED };
            (ReportDocument::Check(report), code)
        }
        Command::Campaign => (
            ReportDocument::Campaign(cmd_campaign(&config, options.threads)?),
            EXIT_OK,
        ),
        Command::Opcount => (ReportDocument::Opcount(cmd_opcount(&config)?), EXIT_OK),
        Command::Phases => (ReportDocument::Phases(cmd_phases(&config)?), EXIT_OK),
    })
}

/// Full program: parse arguments, run, write reports, map the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let outcome = execute(cli.command, &cli.options).and_then(|(doc, code)| {
        write_reports(&doc, &cli.options.out, &cli.options.formats()).map(|_| (doc, code))
    });
    match outcome {
        Ok((doc, code)) => {
            print!("{}", doc.to_text());
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
