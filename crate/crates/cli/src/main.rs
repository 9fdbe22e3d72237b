use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use pocforge::analysis::VulnClass;
use pocforge::pipeline::{
    analyze_trace, summary_line, validate_files, BackendKind, PipelineError, RunConfig,
};

/// Validate reported smart-contract vulnerabilities by generating and
/// running proof-of-concept exploits.
#[derive(Parser)]
#[command(name = "pocforge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for a working exploit and report a verdict.
    ///
    /// Exit status: 0 exploitable, 1 not exploitable, 2 needs manual
    /// review, 3 bad input, 4 bad config, 5 internal error.
    Validate {
        #[arg(long)]
        contract: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// TOML run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        backend: Option<BackendKind>,
        #[arg(long)]
        budget_secs: Option<u64>,
        /// Where to write the JSON report (stdout if neither this nor the
        /// config names a path).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify an externally recorded trace.
    AnalyzeTrace {
        /// JSONL file, one trace event per line.
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        vuln: VulnClass,
        /// JSON object of attacker balance changes per asset.
        #[arg(long)]
        deltas: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

const EXIT_INPUT: u8 = 3;
const EXIT_CONFIG: u8 = 4;
const EXIT_INTERNAL: u8 = 5;

fn load_config(path: Option<&Path>) -> Result<RunConfig, ExitCode> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => RunConfig::load(p).map_err(|e| {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }),
    }
}

fn write_output(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, format!("{text}\n")).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn validate(
    contract: &Path,
    report: &Path,
    config: Option<&Path>,
    backend: Option<BackendKind>,
    budget_secs: Option<u64>,
    out: Option<&Path>,
) -> ExitCode {
    let mut cfg = match load_config(config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Some(b) = backend {
        cfg.backend = b;
    }
    if let Some(s) = budget_secs {
        cfg.budget_secs = s;
    }
    let result = validate_files(contract, report, &cfg);
    let rep = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                PipelineError::Input(_) => EXIT_INPUT,
                PipelineError::Config(_) => EXIT_CONFIG,
                PipelineError::Internal(_) => EXIT_INTERNAL,
            };
            return ExitCode::from(code);
        }
    };
    let out = out.or(cfg.report_path.as_deref());
    if let Err(e) = write_output(&rep.to_json_pretty(), out) {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_INTERNAL);
    }
    eprintln!(
        "{}: {} PoC(s) run, {}",
        rep.input.contract,
        rep.results.len(),
        summary_line(&rep.verdict)
    );
    ExitCode::from(rep.exit_code() as u8)
}

fn analyze(trace: &Path, vuln: VulnClass, deltas: &Path, config: Option<&Path>) -> ExitCode {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let valuation = match cfg.valuation() {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match analyze_trace(trace, vuln, deltas, &valuation) {
        Ok(v) => {
            let text = serde_json::to_string_pretty(&v).expect("verdict serializes");
            println!("{text}");
            eprintln!("{}", summary_line(&v));
            ExitCode::from(v.class.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Validate {
            contract,
            report,
            config,
            backend,
            budget_secs,
            out,
        } => validate(
            contract,
            report,
            config.as_deref(),
            *backend,
            *budget_secs,
            out.as_deref(),
        ),
        Command::AnalyzeTrace {
            trace,
            vuln,
            deltas,
            config,
        } => analyze(trace, *vuln, deltas, config.as_deref()),
    }
}
