//! End-to-end validation: synthesize, execute, check, refine, classify.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{build_paths, VulnClass, VulnReport};
use crate::frontend::{parse, ArithmeticMode, ContractUnit};
use crate::num::{asset_map, parse_rate};
use crate::oracle::{
    assess_profit, check_trigger, classify, evaluate, FailureStage, PoCResult, Rationale,
    Valuation, Verdict, VerdictClass,
};
use crate::poc::{Budget, Clock, Corpus, Next, PoC, PocId, SystemClock};
use crate::refine::{
    localize_failure, refine_failed, refine_primitive, select_primitive_ops, synthesize,
    RemoteBackend, RemoteSettings, Stage, Synthesizer, TemplateBackend, API_KEY_ENV,
};
use crate::vm::{execute_poc, read_jsonl, semantic_events, EventFilter, ExecLimits, TraceIoError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Template,
    Remote,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "template" => Ok(BackendKind::Template),
            "remote" => Ok(BackendKind::Remote),
            other => Err(format!("unknown backend `{other}` (expected template or remote)")),
        }
    }
}

/// Run settings. The TOML form is flat apart from an optional
/// `[valuation]` table of asset rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub budget_secs: u64,
    pub max_generation: u32,
    pub backend: BackendKind,
    pub remote_endpoint: Option<String>,
    pub remote_model: Option<String>,
    /// Name of the environment variable holding the API key.
    pub remote_api_key_env: String,
    pub remote_timeout_secs: u64,
    pub max_call_depth: u32,
    pub max_steps: u64,
    pub max_reentry_depth: u32,
    pub report_path: Option<PathBuf>,
    /// Asset rates such as `tokenA = "1/2"`. Empty means every asset is
    /// worth one native unit.
    pub valuation: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let limits = ExecLimits::default();
        RunConfig {
            budget_secs: 1800,
            max_generation: 8,
            backend: BackendKind::Template,
            remote_endpoint: None,
            remote_model: None,
            remote_api_key_env: API_KEY_ENV.into(),
            remote_timeout_secs: 60,
            max_call_depth: limits.max_call_depth,
            max_steps: limits.max_steps,
            max_reentry_depth: limits.max_reentry_depth,
            report_path: None,
            valuation: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("config file: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Limits must be positive, and remote settings are required exactly
    /// when the remote backend is selected.
    pub fn check(&self) -> Result<(), ConfigError> {
        let positive = [
            ("budget_secs", self.budget_secs),
            ("max_generation", u64::from(self.max_generation)),
            ("remote_timeout_secs", self.remote_timeout_secs),
            ("max_call_depth", u64::from(self.max_call_depth)),
            ("max_steps", self.max_steps),
            ("max_reentry_depth", u64::from(self.max_reentry_depth)),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        let has_remote = self.remote_endpoint.is_some() || self.remote_model.is_some();
        match self.backend {
            BackendKind::Remote if self.remote_endpoint.is_none() || self.remote_model.is_none() => {
                return Err(ConfigError::Invalid(
                    "remote backend needs remote_endpoint and remote_model".into(),
                ))
            }
            BackendKind::Template if has_remote => {
                return Err(ConfigError::Invalid(
                    "remote_endpoint/remote_model are only valid with backend = \"remote\"".into(),
                ))
            }
            _ => {}
        }
        self.valuation()?;
        Ok(())
    }

    pub fn limits(&self) -> ExecLimits {
        ExecLimits {
            max_call_depth: self.max_call_depth,
            max_steps: self.max_steps,
            max_reentry_depth: self.max_reentry_depth,
        }
    }

    pub fn valuation(&self) -> Result<Valuation, ConfigError> {
        if self.valuation.is_empty() {
            return Ok(Valuation::Unit);
        }
        let mut rates: BTreeMap<String, BigRational> = BTreeMap::new();
        for (asset, text) in &self.valuation {
            let r = parse_rate(text)
                .ok_or_else(|| ConfigError::Invalid(format!("bad rate `{text}` for asset `{asset}`")))?;
            rates.insert(asset.clone(), r);
        }
        Ok(Valuation::Explicit(rates))
    }

    pub fn remote_settings(&self) -> Option<RemoteSettings> {
        let mut s = RemoteSettings::new(self.remote_endpoint.clone()?, self.remote_model.clone()?);
        s.api_key_env = self.remote_api_key_env.clone();
        s.timeout = Duration::from_secs(self.remote_timeout_secs);
        Some(s)
    }

    pub fn budget(&self) -> Budget {
        Budget {
            wall_clock: Duration::from_secs(self.budget_secs),
            max_generation: self.max_generation,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("input error: {0}")]
    Input(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl PipelineError {
    /// Process exit status; verdicts use 0 to 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Input(_) => 3,
            PipelineError::Config(_) => 4,
            PipelineError::Internal(_) => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputEcho {
    pub contract_file: String,
    pub contract: String,
    pub mode: String,
    pub function: String,
    pub vulnerability: VulnClass,
    pub backend: BackendKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultRow {
    pub id: PocId,
    pub parent: Option<PocId>,
    pub generation: u32,
    pub origin: String,
    pub path: String,
    pub executed_ok: bool,
    pub triggered: bool,
    pub profited: bool,
    pub failure_stage: Option<FailureStage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revert_message: Option<String>,
    pub evidence: Vec<u64>,
    #[serde(with = "asset_map")]
    pub profit: BTreeMap<String, BigInt>,
}

/// Wall-clock spent per stage, in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub total_us: u64,
    pub synthesis_us: u64,
    pub execution_us: u64,
    pub analysis_us: u64,
    pub refinement_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// A PoC triggered and profited.
    Confirmed,
    /// The corpus ran dry.
    Exhausted,
    BudgetExpired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub input: InputEcho,
    pub paths: Vec<String>,
    pub verdict: Verdict,
    pub termination: Termination,
    pub results: Vec<ResultRow>,
    pub timing: Timing,
    pub winning_poc: Option<PoC>,
}

impl ValidationReport {
    pub fn exit_code(&self) -> i32 {
        self.verdict.class.exit_code()
    }

    /// Zeroes the timing block so reports from different runs compare equal.
    pub fn normalized(&self) -> ValidationReport {
        ValidationReport {
            timing: Timing::default(),
            ..self.clone()
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Independent re-derivation of the verdict class from the rows.
fn check_verdict(verdict: &Verdict, rows: &[ResultRow]) -> Result<(), PipelineError> {
    let eff = |r: &ResultRow| (r.executed_ok && r.triggered, r.executed_ok && r.profited);
    let expected = if rows.iter().any(|r| eff(r) == (true, true)) {
        VerdictClass::Exploitable
    } else if rows.iter().any(|r| eff(r).0 != eff(r).1) {
        VerdictClass::NonExploitable
    } else {
        VerdictClass::ManuallyCheck
    };
    if verdict.class != expected {
        return Err(PipelineError::Internal(format!(
            "verdict {} disagrees with results ({expected})",
            verdict.class
        )));
    }
    if let Some(w) = verdict.witness_poc {
        if !rows.iter().any(|r| r.id == w) {
            return Err(PipelineError::Internal(format!("witness {w} not among results")));
        }
    }
    Ok(())
}

fn us(d: Duration) -> u64 {
    d.as_micros().try_into().unwrap_or(u64::MAX)
}

/// Runs the search loop for one parsed contract and report.
pub fn run_validation(
    unit: &ContractUnit,
    report: &VulnReport,
    config: &RunConfig,
    backend: &dyn Synthesizer,
    clock: &dyn Clock,
    echo: InputEcho,
) -> Result<ValidationReport, PipelineError> {
    let started = Instant::now();
    let mut timing = Timing::default();
    let class = report.vulnerability;
    let valuation = config.valuation()?;
    let limits = config.limits();

    let paths = build_paths(unit, report).map_err(|e| PipelineError::Input(e.to_string()))?;
    let mut corpus = Corpus::new(config.budget());

    let t = Instant::now();
    for path in &paths {
        match synthesize(unit, report, path, backend) {
            Ok(poc) => {
                corpus.enqueue(poc);
            }
            Err(e) => log::warn!("no seed for path {path}: {e}"),
        }
    }
    timing.synthesis_us += us(t.elapsed());

    let mut rows: Vec<ResultRow> = Vec::new();
    let mut results: Vec<PoCResult> = Vec::new();
    let termination = loop {
        let poc = match corpus.next(clock) {
            Next::Poc(p) => p,
            Next::Exhausted => break Termination::Exhausted,
            Next::BudgetExpired => break Termination::BudgetExpired,
        };
        let t = Instant::now();
        let outcome = execute_poc(unit, &poc, limits);
        timing.execution_us += us(t.elapsed());

        let t = Instant::now();
        let result = evaluate(poc.id(), &outcome, class, &valuation)
            .map_err(|e| PipelineError::Config(ConfigError::Invalid(e.to_string())))?;
        timing.analysis_us += us(t.elapsed());
        log::debug!(
            "poc {} gen {} ({}): ok={} trig={} profit={}",
            poc.id().short(),
            poc.meta.generation,
            poc.meta.origin,
            result.executed_ok,
            result.triggered,
            result.profited
        );
        rows.push(ResultRow {
            id: poc.id(),
            parent: poc.meta.parent_id,
            generation: poc.meta.generation,
            origin: poc.meta.origin.to_string(),
            path: poc.meta.path.to_string(),
            executed_ok: result.executed_ok,
            triggered: result.triggered,
            profited: result.profited,
            failure_stage: result.failure_stage,
            revert_message: outcome.revert_info.as_ref().map(|r| r.message.clone()),
            evidence: result.trigger_evidence.clone(),
            profit: result.profit_detail.clone(),
        });
        corpus.record(result.clone());
        results.push(result.clone());

        let t = Instant::now();
        match result.failure_stage {
            None => break Termination::Confirmed,
            Some(FailureStage::Execution) => {
                let ctx = localize_failure(&outcome, unit).unwrap_or_else(|e| e.context);
                match refine_failed(unit, report, &poc, &ctx, backend) {
                    Ok(child) => {
                        corpus.enqueue(child);
                    }
                    Err(e) => log::warn!("repair of {} failed: {e}", poc.id().short()),
                }
            }
            Some(stage @ (FailureStage::Trigger | FailureStage::Profit)) => {
                let stage = Stage::of(stage).expect("analysis stage");
                for op in select_primitive_ops(class, stage) {
                    match refine_primitive(unit, report, &poc, op, stage, backend) {
                        Ok(children) => {
                            for c in children {
                                corpus.enqueue(c);
                            }
                        }
                        Err(e) => log::warn!("{op} on {} failed: {e}", poc.id().short()),
                    }
                }
            }
        }
        timing.refinement_us += us(t.elapsed());
    };

    let verdict = classify(&results);
    check_verdict(&verdict, &rows)?;
    let winning_poc = match verdict.class {
        VerdictClass::Exploitable => verdict.witness_poc.and_then(|id| corpus.get(&id).cloned()),
        _ => None,
    };
    timing.total_us = us(started.elapsed());
    Ok(ValidationReport {
        input: echo,
        paths: paths.iter().map(|p| p.to_string()).collect(),
        verdict,
        termination,
        results: rows,
        timing,
        winning_poc,
    })
}

pub fn make_backend(config: &RunConfig) -> Box<dyn Synthesizer> {
    match config.backend {
        BackendKind::Template => Box::new(TemplateBackend),
        BackendKind::Remote => Box::new(RemoteBackend::new(
            config.remote_settings().expect("checked config"),
        )),
    }
}

/// Parses a contract and report from source text and validates them.
pub fn validate_sources(
    contract_file: &str,
    source: &str,
    report_json: &str,
    config: &RunConfig,
) -> Result<ValidationReport, PipelineError> {
    config.check()?;
    let unit = parse(source, contract_file).map_err(|e| PipelineError::Input(format!("{contract_file}: {e}")))?;
    let report = VulnReport::from_json(report_json).map_err(|e| PipelineError::Input(format!("report: {e}")))?;
    if report.contract != unit.name() {
        return Err(PipelineError::Input(format!(
            "report names contract `{}` but the source declares `{}`",
            report.contract,
            unit.name()
        )));
    }
    report.check(&unit).map_err(|e| PipelineError::Input(e.to_string()))?;
    let echo = InputEcho {
        contract_file: contract_file.to_string(),
        contract: unit.name().to_string(),
        mode: match unit.mode() {
            ArithmeticMode::Checked => "checked".into(),
            ArithmeticMode::Unchecked => "unchecked".into(),
        },
        function: report.function.clone(),
        vulnerability: report.vulnerability,
        backend: config.backend,
    };
    let backend = make_backend(config);
    let clock = SystemClock::start();
    run_validation(&unit, &report, config, backend.as_ref(), &clock, echo)
}

pub fn validate_files(
    contract_path: &Path,
    report_path: &Path,
    config: &RunConfig,
) -> Result<ValidationReport, PipelineError> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|e| PipelineError::Input(format!("{}: {e}", p.display())))
    };
    let source = read(contract_path)?;
    let report = read(report_path)?;
    validate_sources(&contract_path.display().to_string(), &source, &report, config)
}

#[derive(Debug, Error)]
pub enum AnalyzeError {
    #[error("{path}: schema error at line {line}: {message}")]
    Schema {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Valuation(String),
}

impl AnalyzeError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AnalyzeError::Schema { .. } | AnalyzeError::Io { .. } => 3,
            AnalyzeError::Valuation(_) => 4,
        }
    }
}

#[derive(Deserialize)]
#[serde(transparent)]
struct DeltasFile(#[serde(with = "asset_map")] BTreeMap<String, BigInt>);

/// Classifies an externally recorded run from its JSONL trace and the
/// attacker's per-asset deltas (`{"native": "5"}`).
pub fn analyze_trace(
    trace_path: &Path,
    class: VulnClass,
    deltas_path: &Path,
    valuation: &Valuation,
) -> Result<Verdict, AnalyzeError> {
    let tp = trace_path.display().to_string();
    let bytes = std::fs::read(trace_path).map_err(|e| AnalyzeError::Io {
        path: tp.clone(),
        message: e.to_string(),
    })?;
    let trace = read_jsonl(bytes.as_slice()).map_err(|e| match e {
        TraceIoError::Schema { line, message } => AnalyzeError::Schema {
            path: tp.clone(),
            line,
            message,
        },
        TraceIoError::Io(err) => AnalyzeError::Io {
            path: tp.clone(),
            message: err.to_string(),
        },
    })?;

    let dp = deltas_path.display().to_string();
    let text = std::fs::read_to_string(deltas_path).map_err(|e| AnalyzeError::Io {
        path: dp.clone(),
        message: e.to_string(),
    })?;
    let deltas = serde_json::from_str::<DeltasFile>(&text)
        .map_err(|e| AnalyzeError::Schema {
            path: dp.clone(),
            line: e.line(),
            message: e.to_string(),
        })?
        .0;

    let events = semantic_events(&trace, EventFilter::default());
    let trigger = check_trigger(&events, class);
    let profit = assess_profit(&deltas, valuation).map_err(|e| AnalyzeError::Valuation(e.to_string()))?;
    let result = PoCResult::new(
        PocId::of_bytes(&bytes),
        true,
        trigger,
        profit.profited,
        profit.detail,
    );
    Ok(classify(&[result]))
}

/// Human-readable one-line summary of a verdict.
pub fn summary_line(v: &Verdict) -> String {
    let why = match v.rationale {
        Rationale::TriggeredAndProfited => "triggered and profitable",
        Rationale::TriggeredWithoutProfit => "triggered without profit",
        Rationale::ProfitWithoutTrigger => "profit without trigger, worth a manual look",
        Rationale::NoEvidence => "no PoC triggered or profited",
    };
    format!("{} ({why})", v.class)
}
