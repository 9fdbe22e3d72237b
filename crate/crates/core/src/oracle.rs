//! Trigger rules, profit assessment and the three-way verdict.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::VulnClass;
use crate::num::asset_map;
use crate::poc::{PocId, ATTACKER};
use crate::vm::{
    semantic_events, Address, EventFilter, EventKind, ExecutionOutcome, TraceEvent, NATIVE,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerResult {
    pub triggered: bool,
    /// Sequence numbers of the events that satisfy the rule: one for
    /// single-event rules, an ordered pair for RE and TOD.
    pub evidence: Vec<u64>,
}

impl TriggerResult {
    fn hit(evidence: Vec<u64>) -> Self {
        TriggerResult {
            triggered: true,
            evidence,
        }
    }

    fn miss() -> Self {
        TriggerResult {
            triggered: false,
            evidence: Vec::new(),
        }
    }
}

struct Tx {
    index: Option<u32>,
    origin: Option<Address>,
}

/// Tracks which transaction each event belongs to: every event after a
/// `CallEnter` belongs to that call's transaction.
fn with_tx<'a>(events: &'a [TraceEvent]) -> impl Iterator<Item = (&'a TraceEvent, Tx)> + 'a {
    let mut index = None;
    let mut origin = None;
    events.iter().map(move |e| {
        if let EventKind::CallEnter {
            tx_index, tx_origin, ..
        } = &e.kind
        {
            index = Some(*tx_index);
            origin = Some(*tx_origin);
        }
        (e, Tx { index, origin })
    })
}

/// Applies the trigger rule for `class` to an already filtered event list.
pub fn check_trigger(events: &[TraceEvent], class: VulnClass) -> TriggerResult {
    match class {
        VulnClass::Uew => {
            for (e, tx) in with_tx(events) {
                if let EventKind::ValueTransfer { to, .. } = &e.kind {
                    if tx.origin == Some(*to) {
                        return TriggerResult::hit(vec![e.seq]);
                    }
                }
            }
            TriggerResult::miss()
        }
        VulnClass::Us => events
            .iter()
            .find(|e| matches!(e.kind, EventKind::Selfdestruct { .. }))
            .map(|e| TriggerResult::hit(vec![e.seq]))
            .unwrap_or_else(TriggerResult::miss),
        VulnClass::Rca => events
            .iter()
            .find(|e| matches!(e.kind, EventKind::BlockAttrRead { .. }))
            .map(|e| TriggerResult::hit(vec![e.seq]))
            .unwrap_or_else(TriggerResult::miss),
        VulnClass::Re => {
            // Open frames as (seq, tx, target, function), indexed by depth - 1.
            let mut open: Vec<(u64, u32, Address, &str)> = Vec::new();
            for e in events {
                match &e.kind {
                    EventKind::CallEnter {
                        tx_index,
                        target,
                        function,
                        depth,
                        ..
                    } => {
                        let d = (*depth as usize).max(1);
                        open.truncate(d - 1);
                        if let Some(outer) = open
                            .iter()
                            .find(|(_, tx, t, f)| tx == tx_index && t == target && *f == function)
                        {
                            return TriggerResult::hit(vec![outer.0, e.seq]);
                        }
                        open.push((e.seq, *tx_index, *target, function));
                    }
                    EventKind::CallExit { .. } => {
                        open.pop();
                    }
                    _ => {}
                }
            }
            TriggerResult::miss()
        }
        VulnClass::Tod => {
            let mut first_write: HashMap<&str, (u32, u64)> = HashMap::new();
            for (e, tx) in with_tx(events) {
                let Some(tx) = tx.index else { continue };
                match &e.kind {
                    EventKind::StorageWrite { slot, .. } => {
                        first_write.entry(slot.as_str()).or_insert((tx, e.seq));
                    }
                    EventKind::StorageRead { slot } => {
                        if let Some((wtx, wseq)) = first_write.get(slot.as_str()) {
                            if *wtx < tx {
                                return TriggerResult::hit(vec![*wseq, e.seq]);
                            }
                        }
                    }
                    _ => {}
                }
            }
            TriggerResult::miss()
        }
    }
}

/// Exchange rates used to value the attacker's balance changes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Valuation {
    /// Every asset is worth one native unit.
    #[default]
    Unit,
    /// Only the listed assets (plus native at 1 unless overridden) are known.
    Explicit(BTreeMap<String, BigRational>),
}

impl Valuation {
    pub fn rate(&self, asset: &str) -> Option<BigRational> {
        match self {
            Valuation::Unit => Some(BigRational::one()),
            Valuation::Explicit(rates) => rates
                .get(asset)
                .cloned()
                .or_else(|| (asset == NATIVE).then(BigRational::one)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("no exchange rate for asset `{0}`")]
    UnknownAsset(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfitAssessment {
    pub profited: bool,
    pub net: BigRational,
    pub detail: BTreeMap<String, BigInt>,
}

pub fn assess_profit(
    deltas: &BTreeMap<String, BigInt>,
    valuation: &Valuation,
) -> Result<ProfitAssessment, OracleError> {
    let mut net = BigRational::zero();
    for (asset, d) in deltas {
        let rate = valuation
            .rate(asset)
            .ok_or_else(|| OracleError::UnknownAsset(asset.clone()))?;
        net += rate * BigRational::from_integer(d.clone());
    }
    Ok(ProfitAssessment {
        profited: net > BigRational::zero(),
        net,
        detail: deltas.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JudgeError {
    #[error("profit judge unavailable: {0}")]
    Unavailable(String),
}

/// An external decision-maker for profitability, such as a chat model.
pub trait ProfitJudge {
    fn judge(&self, deltas: &BTreeMap<String, BigInt>) -> Result<(bool, String), JudgeError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgeOutcome {
    pub profited: bool,
    pub explanation: String,
    /// True when the judge failed and the rule-based check was used.
    pub fallback: bool,
}

pub fn judge_profit_external(
    deltas: &BTreeMap<String, BigInt>,
    judge: &dyn ProfitJudge,
    valuation: &Valuation,
) -> Result<JudgeOutcome, OracleError> {
    match judge.judge(deltas) {
        Ok((profited, explanation)) => Ok(JudgeOutcome {
            profited,
            explanation,
            fallback: false,
        }),
        Err(e) => {
            log::warn!("{e}; using rule-based profit check");
            let rule = assess_profit(deltas, valuation)?;
            Ok(JudgeOutcome {
                profited: rule.profited,
                explanation: format!("fallback to rule-based check after: {e}"),
                fallback: true,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureStage {
    Execution,
    Trigger,
    Profit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoCResult {
    pub poc_id: PocId,
    pub executed_ok: bool,
    pub triggered: bool,
    pub trigger_evidence: Vec<u64>,
    pub profited: bool,
    #[serde(with = "asset_map")]
    pub profit_detail: BTreeMap<String, BigInt>,
    pub failure_stage: Option<FailureStage>,
}

impl PoCResult {
    /// Assembles a result from the three checks, recording the first failed
    /// one.
    pub fn new(
        poc_id: PocId,
        executed_ok: bool,
        trigger: TriggerResult,
        profited: bool,
        profit_detail: BTreeMap<String, BigInt>,
    ) -> Self {
        let failure_stage = if !executed_ok {
            Some(FailureStage::Execution)
        } else if !trigger.triggered {
            Some(FailureStage::Trigger)
        } else if !profited {
            Some(FailureStage::Profit)
        } else {
            None
        };
        PoCResult {
            poc_id,
            executed_ok,
            triggered: trigger.triggered,
            trigger_evidence: trigger.evidence,
            profited,
            profit_detail,
            failure_stage,
        }
    }

    fn effective(&self) -> (bool, bool) {
        (
            self.executed_ok && self.triggered,
            self.executed_ok && self.profited,
        )
    }
}

/// Runs the trigger and profit checks on one execution.
pub fn evaluate(
    poc_id: PocId,
    outcome: &ExecutionOutcome,
    class: VulnClass,
    valuation: &Valuation,
) -> Result<PoCResult, OracleError> {
    let events = semantic_events(&outcome.trace, EventFilter::default());
    let trigger = check_trigger(&events, class);
    let deltas = outcome.deltas_of(ATTACKER);
    let profit = assess_profit(&deltas, valuation)?;
    Ok(PoCResult::new(
        poc_id,
        outcome.executed_ok,
        trigger,
        profit.profited,
        profit.detail,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictClass {
    Exploitable,
    NonExploitable,
    ManuallyCheck,
}

impl VerdictClass {
    pub fn exit_code(self) -> i32 {
        match self {
            VerdictClass::Exploitable => 0,
            VerdictClass::NonExploitable => 1,
            VerdictClass::ManuallyCheck => 2,
        }
    }
}

impl fmt::Display for VerdictClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerdictClass::Exploitable => "Exploitable",
            VerdictClass::NonExploitable => "NonExploitable",
            VerdictClass::ManuallyCheck => "ManuallyCheck",
        })
    }
}

/// Which predicate decided the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rationale {
    TriggeredAndProfited,
    TriggeredWithoutProfit,
    /// Profit without a trigger. Classified non-exploitable but worth a
    /// human look.
    ProfitWithoutTrigger,
    NoEvidence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub class: VerdictClass,
    pub witness_poc: Option<PocId>,
    pub rationale: Rationale,
    pub evidence: Vec<u64>,
    #[serde(with = "asset_map")]
    pub profit: BTreeMap<String, BigInt>,
}

/// Exploitable if some run triggered and profited; otherwise
/// non-exploitable if some run did exactly one of the two; otherwise
/// manual review. Failed executions count as neither.
pub fn classify(results: &[PoCResult]) -> Verdict {
    let pick = |pred: &dyn Fn(bool, bool) -> bool| {
        results.iter().find(|r| {
            let (t, p) = r.effective();
            pred(t, p)
        })
    };
    let (class, rationale, witness) = if let Some(r) = pick(&|t, p| t && p) {
        (VerdictClass::Exploitable, Rationale::TriggeredAndProfited, Some(r))
    } else if let Some(r) = pick(&|t, p| t != p) {
        let rationale = if r.effective().0 {
            Rationale::TriggeredWithoutProfit
        } else {
            Rationale::ProfitWithoutTrigger
        };
        (VerdictClass::NonExploitable, rationale, Some(r))
    } else {
        (VerdictClass::ManuallyCheck, Rationale::NoEvidence, None)
    };
    Verdict {
        class,
        witness_poc: witness.map(|r| r.poc_id),
        rationale,
        evidence: witness.map(|r| r.trigger_evidence.clone()).unwrap_or_default(),
        profit: witness.map(|r| r.profit_detail.clone()).unwrap_or_default(),
    }
}
