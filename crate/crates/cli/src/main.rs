//! `airscan`: scan model directories and emit evidence artifacts.
//!
//! Exit codes: 0 pass, 2 warnings, 1 failures (missing Must fields, Blocked or
//! Fail guard outcomes, Critical findings), 3 internal or usage errors.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use airscan_core::integrity::VerifyVerdict;
use airscan_core::scan::fixtures::{make_fixture, FixtureCase};
use airscan_core::scan::{
    render_report, run_scan, verify_directory, write_manifest, write_outputs, ExportTarget,
    ReportFormat, ScanRequest, EXIT_FAIL, EXIT_INTERNAL, EXIT_PASS,
};

const SEED_ENV: &str = "AIRSCAN_SEED";

#[derive(Parser)]
#[command(
    name = "airscan",
    version,
    about = "Evidence-producing scanner for LLM model directories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a model directory and emit an evidence artifact.
    Scan(ScanArgs),
    /// Check a model directory against a hash manifest.
    Verify {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model_dir: PathBuf,
    },
    /// Write a hash manifest for a model directory.
    Manifest {
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic fixture directories.
    Fixtures {
        #[command(subcommand)]
        action: FixturesAction,
    },
}

#[derive(Subcommand)]
enum FixturesAction {
    /// Build a fixture: guard, clean or all.
    Make {
        /// Which fixture to build
        case: FixtureCase,
        /// Destination directory; defaults to ./<case>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct ScanArgs {
    /// Model directory to scan
    #[arg(long)]
    model_dir: PathBuf,
    /// Loader policy JSON; the built-in default policy when omitted.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Earlier evidence artifact to diff against.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Reference hash manifest; a single top-level *.manifest.json is used when omitted.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Probe log (JSONL) or run-metadata (JSON). Repeatable.
    #[arg(long = "probe-log", num_args = 1..)]
    probe_logs: Vec<PathBuf>,
    /// Output directory for the artifact, report and exports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fixed timestamp (SOURCE_DATE_EPOCH or the epoch) and zeroed timings.
    #[arg(long)]
    reproducible: bool,
    /// Comma-separated export targets: spdx, cdx.
    #[arg(long, value_delimiter = ',')]
    export: Vec<ExportTarget>,
    /// Export even when Must fields are missing.
    #[arg(long)]
    force_export: bool,
    /// Report format: text or json
    #[arg(long, default_value = "text")]
    format: ReportFormat,
}

fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .with_context(|| format!("{SEED_ENV}={s:?} is not an unsigned integer")),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(e).context(SEED_ENV),
    }
}

fn scan(args: ScanArgs) -> Result<i32> {
    let request = ScanRequest {
        model_dir: args.model_dir,
        policy_path: args.policy,
        baseline_artifact: args.baseline,
        reference_manifest: args.manifest,
        probe_logs: args.probe_logs,
        output_dir: args.out,
        reproducible: args.reproducible,
        export_targets: args.export.into_iter().collect(),
        force_export: args.force_export,
        seed_override: seed_from_env()?,
    };
    let report = run_scan(&request)?;
    if let Some(out) = &request.output_dir {
        for path in write_outputs(&report, out, args.format)? {
            eprintln!("wrote {}", path.display());
        }
    }
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(&render_report(&report, args.format))?;
    if args.format == ReportFormat::Json {
        stdout.write_all(b"\n")?;
    }
    Ok(report.exit_code)
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Scan(args) => scan(args),
        Command::Verify {
            manifest,
            model_dir,
        } => {
            let report = verify_directory(&manifest, &model_dir)?;
            println!("matched: {}", report.matched.len());
            for m in &report.mismatched {
                println!(
                    "MISMATCH {}: expected {} got {}",
                    m.path, m.expected, m.actual
                );
            }
            for p in &report.missing {
                println!("MISSING  {p}");
            }
            for p in &report.extra {
                println!("EXTRA    {p}");
            }
            println!("verdict: {:?}", report.verdict);
            Ok(if report.verdict == VerifyVerdict::Match {
                EXIT_PASS
            } else {
                EXIT_FAIL
            })
        }
        Command::Manifest { model_dir, out } => {
            let manifest = write_manifest(&model_dir, &out)?;
            eprintln!("wrote {} entries to {}", manifest.len(), out.display());
            Ok(EXIT_PASS)
        }
        Command::Fixtures {
            action: FixturesAction::Make { case, out },
        } => {
            let out = out.unwrap_or_else(|| PathBuf::from(case.to_string()));
            for path in make_fixture(case, &out)? {
                println!("{}", path.display());
            }
            Ok(EXIT_PASS)
        }
    }
}

fn main() -> ExitCode {
    // Usage errors exit 3 rather than clap's default 2, which means "warnings" here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                EXIT_INTERNAL as u8
            } else {
                0
            });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("airscan: {e:#}");
            ExitCode::from(EXIT_INTERNAL as u8)
        }
    }
}
