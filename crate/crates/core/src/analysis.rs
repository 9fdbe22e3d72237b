//! State access sets, entry-function discovery and candidate exploit paths.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use primitive_types::U256;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{
    walk_statements, ContractUnit, Expr, ExprKind, FunctionDecl, Statement, StmtKind,
};
use crate::poc::ArgValue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VulnClass {
    /// Unprotected ether withdrawal.
    #[serde(rename = "UEW")]
    Uew,
    /// Unprotected selfdestruct.
    #[serde(rename = "US")]
    Us,
    /// Reentrancy.
    #[serde(rename = "RE")]
    Re,
    /// Transaction order dependence.
    #[serde(rename = "TOD")]
    Tod,
    /// Randomness from chain attributes.
    #[serde(rename = "RCA")]
    Rca,
}

impl VulnClass {
    pub const ALL: [VulnClass; 5] = [
        VulnClass::Uew,
        VulnClass::Us,
        VulnClass::Re,
        VulnClass::Tod,
        VulnClass::Rca,
    ];

    pub fn code(self) -> &'static str {
        match self {
            VulnClass::Uew => "UEW",
            VulnClass::Us => "US",
            VulnClass::Re => "RE",
            VulnClass::Tod => "TOD",
            VulnClass::Rca => "RCA",
        }
    }
}

impl fmt::Display for VulnClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for VulnClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VulnClass::ALL
            .into_iter()
            .find(|c| c.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown vulnerability class `{s}` (expected UEW, US, RE, TOD or RCA)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum KeyKind {
    None,
    AnyKey,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateRef {
    pub contract: String,
    pub variable: String,
    pub key_kind: KeyKind,
}

impl fmt::Display for StateRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.key_kind {
            KeyKind::None => write!(f, "{}.{}", self.contract, self.variable),
            KeyKind::AnyKey => write!(f, "{}.{}[*]", self.contract, self.variable),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessFlag {
    pub has_modifier_guard: bool,
    pub guard_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnPath {
    pub entry: Option<String>,
    pub target: String,
    pub vuln_class: VulnClass,
    pub shared_state: BTreeSet<StateRef>,
}

impl fmt::Display for VulnPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.entry {
            Some(e) => write!(f, "{e} -> {} ({})", self.target, self.vuln_class),
            None => write!(f, "{} ({})", self.target, self.vuln_class),
        }
    }
}

/// Free-form hints attached to a report. Known keys drive the template
/// synthesizer; anything else is passed through to prompts verbatim.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportExtra {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constructor_args: Option<Vec<ArgValue>>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "opt_u256"
    )]
    pub constructor_value: Option<U256>,
    /// Suggested arguments per function name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub arguments: BTreeMap<String, Vec<ArgValue>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_number: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
    #[serde(flatten)]
    pub other: BTreeMap<String, serde_json::Value>,
}

mod opt_u256 {
    use primitive_types::U256;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<U256>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => s.collect_str(v),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<U256>, D::Error> {
        #[derive(Deserialize)]
        struct W(#[serde(with = "crate::num::u256_dec")] U256);
        Ok(Option::<W>::deserialize(d)?.map(|w| w.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnReport {
    pub contract: String,
    pub function: String,
    pub vulnerability: VulnClass,
    #[serde(default)]
    pub extra: ReportExtra,
}

impl VulnReport {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Checks that the function under test exists in `unit`.
    pub fn check(&self, unit: &ContractUnit) -> Result<(), AnalysisError> {
        function(unit, &self.function).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
}

fn function<'a>(unit: &'a ContractUnit, name: &str) -> Result<&'a FunctionDecl, AnalysisError> {
    let c = unit.contract();
    if name == "constructor" {
        if let Some(ctor) = &c.constructor {
            return Ok(ctor);
        }
    }
    c.function(name)
        .ok_or_else(|| AnalysisError::UnknownFunction(name.to_string()))
}

/// Function body followed by the bodies of its applied modifiers.
fn bodies<'a>(unit: &'a ContractUnit, f: &'a FunctionDecl) -> Vec<&'a [Statement]> {
    let mut out = vec![f.body.as_slice()];
    for m in &f.modifiers {
        if let Some(decl) = unit.contract().modifier(m) {
            out.push(decl.body.as_slice());
        }
    }
    out
}

fn state_ref(unit: &ContractUnit, var: &str, mapped: bool) -> StateRef {
    StateRef {
        contract: unit.name().to_string(),
        variable: var.to_string(),
        key_kind: if mapped { KeyKind::AnyKey } else { KeyKind::None },
    }
}

fn expr_reads(unit: &ContractUnit, e: &Expr, out: &mut BTreeSet<StateRef>) {
    e.walk(&mut |e| match &e.kind {
        ExprKind::State(v) => {
            out.insert(state_ref(unit, v, false));
        }
        ExprKind::Index { var, .. } => {
            out.insert(state_ref(unit, var, true));
        }
        _ => {}
    });
}

pub fn read_set(unit: &ContractUnit, f: &str) -> Result<BTreeSet<StateRef>, AnalysisError> {
    let decl = function(unit, f)?;
    let mut out = BTreeSet::new();
    for body in bodies(unit, decl) {
        walk_statements(body, &mut |s| {
            for e in s.exprs() {
                expr_reads(unit, e, &mut out);
            }
            // Compound assignment reads the slot it updates.
            if let StmtKind::Assign { target, op, .. } = &s.kind {
                if *op != crate::frontend::AssignOp::Set {
                    out.insert(state_ref(unit, &target.var, target.index.is_some()));
                }
            }
        });
    }
    Ok(out)
}

pub fn write_set(unit: &ContractUnit, f: &str) -> Result<BTreeSet<StateRef>, AnalysisError> {
    let decl = function(unit, f)?;
    let mut out = BTreeSet::new();
    for body in bodies(unit, decl) {
        walk_statements(body, &mut |s| {
            if let StmtKind::Assign { target, .. } = &s.kind {
                out.insert(state_ref(unit, &target.var, target.index.is_some()));
            }
        });
    }
    Ok(out)
}

pub fn access(unit: &ContractUnit, f: &str) -> Result<AccessFlag, AnalysisError> {
    let decl = function(unit, f)?;
    Ok(AccessFlag {
        has_modifier_guard: !decl.modifiers.is_empty(),
        guard_names: decl.modifiers.clone(),
    })
}

/// Functions whose writes reach a state variable read by `f_test` and that
/// carry no modifier guard. The constructor and `f_test` itself are excluded.
pub fn entry_functions(unit: &ContractUnit, f_test: &str) -> Result<BTreeSet<String>, AnalysisError> {
    Ok(entries_in_order(unit, f_test)?
        .into_iter()
        .map(|(name, _)| name)
        .collect())
}

fn entries_in_order(
    unit: &ContractUnit,
    f_test: &str,
) -> Result<Vec<(String, BTreeSet<StateRef>)>, AnalysisError> {
    let reads = read_set(unit, f_test)?;
    let mut out = Vec::new();
    for f in &unit.contract().functions {
        if f.name == f_test || !f.modifiers.is_empty() {
            continue;
        }
        let shared: BTreeSet<StateRef> = write_set(unit, &f.name)?
            .intersection(&reads)
            .cloned()
            .collect();
        if !shared.is_empty() {
            out.push((f.name.clone(), shared));
        }
    }
    Ok(out)
}

/// One path per entry function, most shared state first, followed by the
/// direct path that calls the target with no preparation.
pub fn build_paths(unit: &ContractUnit, report: &VulnReport) -> Result<Vec<VulnPath>, AnalysisError> {
    let mut entries = entries_in_order(unit, &report.function)?;
    // Stable sort keeps declaration order among ties.
    entries.sort_by_key(|e| std::cmp::Reverse(e.1.len()));
    let mut paths: Vec<VulnPath> = entries
        .into_iter()
        .map(|(name, shared)| VulnPath {
            entry: Some(name),
            target: report.function.clone(),
            vuln_class: report.vulnerability,
            shared_state: shared,
        })
        .collect();
    paths.push(VulnPath {
        entry: None,
        target: report.function.clone(),
        vuln_class: report.vulnerability,
        shared_state: BTreeSet::new(),
    });
    Ok(paths)
}
