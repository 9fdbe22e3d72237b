//! PoC synthesis and refinement: failure localization, primitive mutation
//! operators, and the synthesizer backends that produce candidate scripts.

mod prompt;
mod remote;
mod template;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{VulnClass, VulnPath, VulnReport};
use crate::frontend::{
    walk_statements, ContractUnit, Enclosing, EnvVar, ExprKind, NodeId, SourceSpan, StmtClass,
};
use crate::oracle::FailureStage;
use crate::poc::{validate, Origin, PoC, PocMeta};
use crate::vm::{semantic_events, EventFilter, EventKind, ExecutionOutcome, Phase, TraceEvent};

pub use prompt::{build_prompt, feature_text};
pub use remote::{RemoteBackend, RemoteSettings, API_KEY_ENV};
pub use template::TemplateBackend;

/// Number of trailing trace events carried in a failure context.
pub const TRACE_SUFFIX_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveOp {
    AddUser,
    ChangeInvoker,
    ChangeOrder,
    ModifyBlock,
    ChangeArgument,
}

/// Which analysis step a PoC failed: trigger (TA) or profit (PA).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "TA")]
    Trigger,
    #[serde(rename = "PA")]
    Profit,
}

impl Stage {
    pub fn of(failure: FailureStage) -> Option<Stage> {
        match failure {
            FailureStage::Execution => None,
            FailureStage::Trigger => Some(Stage::Trigger),
            FailureStage::Profit => Some(Stage::Profit),
        }
    }
}

impl PrimitiveOp {
    pub const ALL: [PrimitiveOp; 5] = [
        PrimitiveOp::AddUser,
        PrimitiveOp::ChangeInvoker,
        PrimitiveOp::ChangeOrder,
        PrimitiveOp::ModifyBlock,
        PrimitiveOp::ChangeArgument,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveOp::AddUser => "add_user",
            PrimitiveOp::ChangeInvoker => "change_invoker",
            PrimitiveOp::ChangeOrder => "change_order",
            PrimitiveOp::ModifyBlock => "modify_block",
            PrimitiveOp::ChangeArgument => "change_argument",
        }
    }

    /// Whether the operator may be used for this class at this stage.
    pub fn applicable(self, class: VulnClass, stage: Stage) -> bool {
        use PrimitiveOp::*;
        use VulnClass::*;
        match self {
            AddUser => stage == Stage::Profit && matches!(class, Rca | Tod | Uew),
            ChangeInvoker => stage == Stage::Trigger && matches!(class, Re | Uew | Us),
            ChangeOrder => stage == Stage::Profit && matches!(class, Tod | Uew),
            ModifyBlock => stage == Stage::Trigger && class == Rca,
            ChangeArgument => true,
        }
    }

    /// Instruction text with `{function}`, `{contract}` and
    /// `{block_attribute}` placeholders.
    pub fn instruction_template(self) -> &'static str {
        match self {
            PrimitiveOp::AddUser => {
                "Introduce extra user accounts that call {function} on {contract} before the attacker acts."
            }
            PrimitiveOp::ChangeInvoker => {
                "Make a different account the caller of {function} on {contract}."
            }
            PrimitiveOp::ChangeOrder => {
                "Reorder the transactions so the attacker's call to {function} lands before the other users' calls."
            }
            PrimitiveOp::ModifyBlock => {
                "Change {block_attribute} before calling {function} on {contract}."
            }
            PrimitiveOp::ChangeArgument => {
                "Try boundary values for the arguments and call value of {function}."
            }
        }
    }

    /// The instruction with placeholders bound: `{function}` to the
    /// function under test, `{contract}` to the contract name and
    /// `{block_attribute}` to the block fields the function reads.
    pub fn instruction(self, contract: &str, function: &str, block_attribute: &str) -> String {
        self.instruction_template()
            .replace("{function}", function)
            .replace("{contract}", contract)
            .replace("{block_attribute}", block_attribute)
    }
}

impl fmt::Display for PrimitiveOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Operators for a class and failed stage: specialised ones first,
/// `change_argument` last.
pub fn select_primitive_ops(class: VulnClass, stage: Stage) -> Vec<PrimitiveOp> {
    PrimitiveOp::ALL
        .into_iter()
        .filter(|op| op.applicable(class, stage))
        .collect()
}

/// Block attributes a function (with its modifiers) reads, in source
/// spelling: `block.timestamp`, `block.number`, `blockhash`.
pub fn block_attributes_read(unit: &ContractUnit, function: &str) -> Vec<&'static str> {
    let c = unit.contract();
    let Some(f) = c.function(function) else {
        return Vec::new();
    };
    let mut bodies: Vec<&[crate::frontend::Statement]> = vec![&f.body];
    bodies.extend(f.modifiers.iter().filter_map(|m| c.modifier(m)).map(|m| m.body.as_slice()));
    let mut out = Vec::new();
    for body in bodies {
        walk_statements(body, &mut |s| {
            for e in s.exprs() {
                e.walk(&mut |x| {
                    let attr = match x.kind {
                        ExprKind::Env(EnvVar::BlockTimestamp) => "block.timestamp",
                        ExprKind::Env(EnvVar::BlockNumber) => "block.number",
                        ExprKind::Blockhash(_) => "blockhash",
                        _ => return,
                    };
                    if !out.contains(&attr) {
                        out.push(attr);
                    }
                });
            }
        });
    }
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FailureLocation {
    pub node: NodeId,
    pub span: SourceSpan,
    pub source_text: String,
    pub stmt_class: StmtClass,
    /// Function whose execution failed. For a guard inside a modifier this
    /// is the function the modifier was applied to.
    pub enclosing_function: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ActionRef {
    pub phase: Phase,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FailureContext {
    pub revert_message: String,
    pub location: Option<FailureLocation>,
    pub failing_action: Option<ActionRef>,
    pub trace_suffix: Vec<TraceEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no check or state update explains the failure: {}", context.revert_message)]
pub struct NoLocalizableCause {
    pub context: FailureContext,
}

/// Walks the failing transaction's events backwards and reports the last
/// check or state update it reached.
pub fn localize_failure(
    outcome: &ExecutionOutcome,
    unit: &ContractUnit,
) -> Result<FailureContext, NoLocalizableCause> {
    let phase = outcome.revert_info.as_ref().map_or(Phase::Exploit, |r| r.phase);
    let events: Vec<TraceEvent> = semantic_events(
        &outcome.trace,
        EventFilter {
            exploit_only: false,
            exclude_cheatcode: true,
        },
    )
    .into_iter()
    .filter(|e| e.phase == phase)
    .collect();
    let suffix_src: &[TraceEvent] = if events.is_empty() {
        &outcome.trace
    } else {
        &events
    };
    let suffix = suffix_src[suffix_src.len().saturating_sub(TRACE_SUFFIX_LEN)..].to_vec();
    let mut ctx = FailureContext {
        revert_message: outcome
            .revert_info
            .as_ref()
            .map(|r| r.message.clone())
            .unwrap_or_default(),
        location: None,
        failing_action: outcome.revert_info.as_ref().map(|r| ActionRef {
            phase: r.phase,
            index: r.action_index,
        }),
        trace_suffix: suffix,
    };

    let tx_start = events
        .iter()
        .rposition(|e| matches!(e.kind, EventKind::CallEnter { depth: 1, .. }))
        .unwrap_or(0);
    let tx = &events[tx_start..];
    for (i, e) in tx.iter().enumerate().rev() {
        let Some(node) = e.node_id else { continue };
        let Some(stmt) = unit.statement(node) else { continue };
        let class = stmt.class();
        if !matches!(class, StmtClass::Check | StmtClass::StateUpdate) {
            continue;
        }
        let enclosing = match unit.enclosing_function(node) {
            Ok(Enclosing::Function(f)) => f.name.clone(),
            Ok(Enclosing::Constructor(_)) => "constructor".to_string(),
            Ok(Enclosing::Modifier(_)) | Err(_) => active_function(&tx[..=i]).unwrap_or_default(),
        };
        ctx.location = Some(FailureLocation {
            node,
            span: unit.span_of(node).expect("node from this unit").clone(),
            source_text: unit.text_of(node).expect("node from this unit").to_string(),
            stmt_class: class,
            enclosing_function: enclosing,
        });
        return Ok(ctx);
    }
    Err(NoLocalizableCause { context: ctx })
}

/// Innermost call frame still open at the end of `events`.
fn active_function(events: &[TraceEvent]) -> Option<String> {
    let mut stack: Vec<&str> = Vec::new();
    for e in events {
        match &e.kind {
            EventKind::CallEnter { function, depth, .. } => {
                stack.truncate((*depth as usize).saturating_sub(1));
                stack.push(function);
            }
            EventKind::CallExit { .. } => {
                stack.pop();
            }
            _ => {}
        }
    }
    stack.last().map(|s| s.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RequestMode {
    Synthesize,
    RefineFailure,
    RefinePrimitive,
}

/// Everything a backend may use to produce candidate PoCs.
#[derive(Debug, Clone, Copy)]
pub struct SynthesizerRequest<'a> {
    pub mode: RequestMode,
    pub unit: &'a ContractUnit,
    pub report: &'a VulnReport,
    pub path: &'a VulnPath,
    pub prior: Option<&'a PoC>,
    pub failure: Option<&'a FailureContext>,
    pub op: Option<PrimitiveOp>,
    pub stage: Option<Stage>,
}

impl SynthesizerRequest<'_> {
    pub fn constructor_signature(&self) -> String {
        match &self.unit.contract().constructor {
            Some(c) => c.signature(),
            None => "constructor()".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesizerResponse {
    /// Candidate scripts. Metadata on them is ignored; the engine stamps
    /// lineage itself.
    pub candidates: Vec<PoC>,
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("unusable response: {0}")]
    BadResponse(String),
    #[error("{0}")]
    Unsupported(String),
}

pub trait Synthesizer {
    fn name(&self) -> &str;
    fn respond(&self, req: &SynthesizerRequest<'_>) -> Result<SynthesizerResponse, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RefineError {
    #[error("synthesis failed: {0}")]
    SynthesisFailed(String),
    #[error("{op} does not apply to {class} at stage {stage:?}")]
    InapplicableOp {
        op: PrimitiveOp,
        class: VulnClass,
        stage: Stage,
    },
}

const ATTEMPTS: usize = 2;

/// Asks the backend up to twice and keeps the candidates that validate and
/// differ from `parent`.
fn collect(
    unit: &ContractUnit,
    backend: &dyn Synthesizer,
    req: &SynthesizerRequest<'_>,
    meta: &dyn Fn() -> PocMeta,
    parent: Option<&PoC>,
) -> Result<Vec<PoC>, RefineError> {
    let mut last_problem = String::from("no candidates");
    for attempt in 0..ATTEMPTS {
        let resp = match backend.respond(req) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("{} backend attempt {}: {e}", backend.name(), attempt + 1);
                last_problem = e.to_string();
                continue;
            }
        };
        if resp.candidates.is_empty() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for c in resp.candidates {
            let (setup, exploit, fallback) = c.parts();
            let poc = PoC::new(setup, exploit, fallback, meta());
            if parent.is_some_and(|p| p.id() == poc.id()) {
                last_problem = "candidate identical to its parent".into();
                continue;
            }
            match validate(unit, &poc) {
                Ok(()) => {
                    if !out.iter().any(|p: &PoC| p.id() == poc.id()) {
                        out.push(poc);
                    }
                }
                Err(v) => {
                    let msgs: Vec<String> = v.iter().map(|v| v.to_string()).collect();
                    last_problem = msgs.join("; ");
                    log::warn!("dropping invalid candidate: {last_problem}");
                }
            }
        }
        if !out.is_empty() {
            return Ok(out);
        }
    }
    Err(RefineError::SynthesisFailed(last_problem))
}

/// Produces the seed PoC for a path.
pub fn synthesize(
    unit: &ContractUnit,
    report: &VulnReport,
    path: &VulnPath,
    backend: &dyn Synthesizer,
) -> Result<PoC, RefineError> {
    let req = SynthesizerRequest {
        mode: RequestMode::Synthesize,
        unit,
        report,
        path,
        prior: None,
        failure: None,
        op: None,
        stage: None,
    };
    let meta = || PocMeta::seed(path.clone());
    collect(unit, backend, &req, &meta, None)?
        .into_iter()
        .next()
        .ok_or_else(|| RefineError::SynthesisFailed("backend produced no candidate".into()))
}

/// Repairs a PoC whose execution reverted.
pub fn refine_failed(
    unit: &ContractUnit,
    report: &VulnReport,
    poc: &PoC,
    ctx: &FailureContext,
    backend: &dyn Synthesizer,
) -> Result<PoC, RefineError> {
    let req = SynthesizerRequest {
        mode: RequestMode::RefineFailure,
        unit,
        report,
        path: &poc.meta.path,
        prior: Some(poc),
        failure: Some(ctx),
        op: None,
        stage: None,
    };
    let meta = || PocMeta::child_of(poc, Origin::FailureRefined);
    collect(unit, backend, &req, &meta, Some(poc))?
        .into_iter()
        .next()
        .ok_or_else(|| RefineError::SynthesisFailed("backend produced no candidate".into()))
}

/// Applies a primitive operator to a PoC that executed but failed the
/// trigger or profit check. May yield several children, or none when the
/// operator has nothing to change.
pub fn refine_primitive(
    unit: &ContractUnit,
    report: &VulnReport,
    poc: &PoC,
    op: PrimitiveOp,
    stage: Stage,
    backend: &dyn Synthesizer,
) -> Result<Vec<PoC>, RefineError> {
    let class = poc.meta.path.vuln_class;
    if !op.applicable(class, stage) {
        return Err(RefineError::InapplicableOp { op, class, stage });
    }
    let req = SynthesizerRequest {
        mode: RequestMode::RefinePrimitive,
        unit,
        report,
        path: &poc.meta.path,
        prior: Some(poc),
        failure: None,
        op: Some(op),
        stage: Some(stage),
    };
    let meta = || PocMeta::child_of(poc, Origin::PrimitiveOp(op));
    collect(unit, backend, &req, &meta, Some(poc))
}
