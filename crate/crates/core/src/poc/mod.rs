//! Proof-of-concept scripts: actions, content addressing and validation.

mod corpus;

use std::collections::BTreeSet;
use std::fmt;

use primitive_types::U256;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::analysis::VulnPath;
use crate::frontend::{ContractUnit, FunctionDecl, VarType};
use crate::num::u256_dec;
use crate::refine::PrimitiveOp;

pub use corpus::{Budget, Clock, Corpus, ManualClock, Next, SystemClock};

pub const ATTACKER: &str = "attacker";
pub const DEPLOYER: &str = "deployer";

/// True for names the account registry knows: the two fixed roles plus
/// scripted users `user1`, `user2`, ...
pub fn is_role(name: &str) -> bool {
    name == ATTACKER
        || name == DEPLOYER
        || name
            .strip_prefix("user")
            .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()) && !n.starts_with('0'))
}

/// Index of a scripted user account, if `name` is one.
pub fn user_index(name: &str) -> Option<u32> {
    if is_role(name) {
        name.strip_prefix("user")?.parse().ok()
    } else {
        None
    }
}

/// A call argument. JSON form: decimal string or number for `uint256`,
/// a boolean for `bool`, and `"@name"` for the address of a named account.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ArgValue {
    Uint(U256),
    Bool(bool),
    Account(String),
}

impl ArgValue {
    pub fn fits(&self, ty: VarType) -> bool {
        matches!(
            (self, ty),
            (ArgValue::Uint(_), VarType::Uint256)
                | (ArgValue::Bool(_), VarType::Bool)
                | (ArgValue::Account(_), VarType::Address)
        )
    }
}

impl fmt::Display for ArgValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgValue::Uint(v) => write!(f, "{v}"),
            ArgValue::Bool(b) => write!(f, "{b}"),
            ArgValue::Account(a) => write!(f, "@{a}"),
        }
    }
}

impl Serialize for ArgValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ArgValue::Bool(b) => s.serialize_bool(*b),
            other => s.collect_str(other),
        }
    }
}

impl<'de> Deserialize<'de> for ArgValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Bool(bool),
            Num(u64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Bool(b) => Ok(ArgValue::Bool(b)),
            Raw::Num(n) => Ok(ArgValue::Uint(U256::from(n))),
            Raw::Str(s) => {
                if let Some(name) = s.strip_prefix('@') {
                    if name.is_empty() {
                        return Err(D::Error::custom("empty account name"));
                    }
                    Ok(ArgValue::Account(name.to_string()))
                } else {
                    crate::num::parse_u256(&s)
                        .map(ArgValue::Uint)
                        .ok_or_else(|| D::Error::custom(format!("invalid argument `{s}`")))
                }
            }
        }
    }
}

fn is_zero(v: &U256) -> bool {
    v.is_zero()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    /// Deploys the contract from the deployer account.
    Deploy {
        contract: String,
        #[serde(default)]
        args: Vec<ArgValue>,
        #[serde(default, with = "u256_dec", skip_serializing_if = "is_zero")]
        value: U256,
    },
    Call {
        caller: String,
        target: String,
        function: String,
        #[serde(default)]
        args: Vec<ArgValue>,
        #[serde(default, with = "u256_dec", skip_serializing_if = "is_zero")]
        value: U256,
    },
    Deal {
        account: String,
        #[serde(with = "u256_dec")]
        amount: U256,
    },
    DealAsset {
        account: String,
        asset: String,
        #[serde(with = "u256_dec")]
        amount: U256,
    },
    /// Overrides `msg.sender` for the next call only.
    Prank { account: String },
    Warp { timestamp: u64 },
    Roll { block_number: u64 },
    ExpectProfitSnapshot,
}

impl Action {
    pub fn is_cheatcode(&self) -> bool {
        !matches!(self, Action::Deploy { .. } | Action::Call { .. })
    }

    pub fn call(caller: &str, target: &str, function: &str, args: Vec<ArgValue>, value: U256) -> Action {
        Action::Call {
            caller: caller.to_string(),
            target: target.to_string(),
            function: function.to_string(),
            args,
            value,
        }
    }

    pub fn caller(&self) -> Option<&str> {
        match self {
            Action::Call { caller, .. } => Some(caller),
            _ => None,
        }
    }
}

/// SHA-256 content hash of a PoC's action lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PocId(pub [u8; 32]);

impl PocId {
    pub fn of_bytes(bytes: &[u8]) -> PocId {
        PocId(Sha256::digest(bytes).into())
    }

    /// First 12 hex digits, for logs.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..6])
    }
}

impl fmt::Display for PocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl Serialize for PocId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PocId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(D::Error::custom)?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| D::Error::custom("poc id must be 32 bytes"))?;
        Ok(PocId(arr))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Synthesized,
    FailureRefined,
    PrimitiveOp(PrimitiveOp),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Synthesized => f.write_str("synthesized"),
            Origin::FailureRefined => f.write_str("failure_refined"),
            Origin::PrimitiveOp(op) => write!(f, "primitive_op:{op}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PocMeta {
    pub parent_id: Option<PocId>,
    pub generation: u32,
    pub origin: Origin,
    pub path: VulnPath,
}

impl PocMeta {
    pub fn seed(path: VulnPath) -> PocMeta {
        PocMeta {
            parent_id: None,
            generation: 0,
            origin: Origin::Synthesized,
            path,
        }
    }

    pub fn child_of(parent: &PoC, origin: Origin) -> PocMeta {
        PocMeta {
            parent_id: Some(parent.id()),
            generation: parent.meta.generation + 1,
            origin,
            path: parent.meta.path.clone(),
        }
    }
}

#[derive(Serialize)]
struct ActionsRef<'a> {
    setup: &'a [Action],
    exploit: &'a [Action],
    attacker_fallback: Option<&'a [Action]>,
}

/// A two-phase exploit script. The id hashes the actions only, so two PoCs
/// with the same actions are the same PoC whatever their history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoC {
    id: PocId,
    setup: Vec<Action>,
    exploit: Vec<Action>,
    attacker_fallback: Option<Vec<Action>>,
    pub meta: PocMeta,
}

impl PoC {
    pub fn new(
        setup: Vec<Action>,
        exploit: Vec<Action>,
        attacker_fallback: Option<Vec<Action>>,
        meta: PocMeta,
    ) -> PoC {
        let id = Self::hash(&setup, &exploit, attacker_fallback.as_deref());
        PoC {
            id,
            setup,
            exploit,
            attacker_fallback,
            meta,
        }
    }

    fn hash(setup: &[Action], exploit: &[Action], fallback: Option<&[Action]>) -> PocId {
        let canonical = serde_json::to_vec(&ActionsRef {
            setup,
            exploit,
            attacker_fallback: fallback,
        })
        .expect("actions serialize");
        PocId::of_bytes(&canonical)
    }

    pub fn id(&self) -> PocId {
        self.id
    }

    pub fn setup(&self) -> &[Action] {
        &self.setup
    }

    pub fn exploit(&self) -> &[Action] {
        &self.exploit
    }

    pub fn attacker_fallback(&self) -> Option<&[Action]> {
        self.attacker_fallback.as_deref()
    }

    /// Copies of the action lists, for building a modified child.
    pub fn parts(&self) -> (Vec<Action>, Vec<Action>, Option<Vec<Action>>) {
        (
            self.setup.clone(),
            self.exploit.clone(),
            self.attacker_fallback.clone(),
        )
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("poc serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct PocRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<PocId>,
    setup: Vec<Action>,
    exploit: Vec<Action>,
    #[serde(default)]
    attacker_fallback: Option<Vec<Action>>,
    meta: PocMeta,
}

impl Serialize for PoC {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PocRepr {
            id: Some(self.id),
            setup: self.setup.clone(),
            exploit: self.exploit.clone(),
            attacker_fallback: self.attacker_fallback.clone(),
            meta: self.meta.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PoC {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = PocRepr::deserialize(d)?;
        let poc = PoC::new(r.setup, r.exploit, r.attacker_fallback, r.meta);
        if let Some(claimed) = r.id {
            if claimed != poc.id {
                return Err(D::Error::custom(format!(
                    "poc id {claimed} does not match its actions ({})",
                    poc.id
                )));
            }
        }
        Ok(poc)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation(pub String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn check_args(
    decl: &FunctionDecl,
    args: &[ArgValue],
    unit: &ContractUnit,
    where_: &str,
    out: &mut Vec<Violation>,
) {
    if args.len() != decl.params.len() {
        out.push(Violation(format!(
            "{where_}: `{}` takes {} argument(s), got {}",
            decl.name,
            decl.params.len(),
            args.len()
        )));
        return;
    }
    for (p, a) in decl.params.iter().zip(args) {
        if !a.fits(p.ty) {
            out.push(Violation(format!(
                "{where_}: argument `{}` of `{}` expects {}, got `{a}`",
                p.name, decl.name, p.ty
            )));
        }
        if let ArgValue::Account(name) = a {
            if !is_role(name) && name != unit.name() {
                out.push(Violation(format!("{where_}: unknown account `@{name}`")));
            }
        }
    }
}

fn check_account(name: &str, where_: &str, out: &mut Vec<Violation>) {
    if !is_role(name) {
        out.push(Violation(format!("{where_}: unregistered account `{name}`")));
    }
}

/// Checks a PoC against the contract it targets. Returns every violation
/// found rather than stopping at the first.
pub fn validate(unit: &ContractUnit, poc: &PoC) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let contract = unit.contract();

    let deploys: Vec<usize> = poc
        .setup
        .iter()
        .enumerate()
        .filter(|(_, a)| matches!(a, Action::Deploy { .. }))
        .map(|(i, _)| i)
        .collect();
    match deploys.as_slice() {
        [] => out.push(Violation("no target deployment".into())),
        [i] => {
            if let Action::Deploy { contract: name, args, .. } = &poc.setup[*i] {
                if name != unit.name() {
                    out.push(Violation(format!(
                        "setup[{i}]: deploys `{name}`, expected `{}`",
                        unit.name()
                    )));
                }
                let ctor_params = contract.constructor.as_ref();
                match ctor_params {
                    Some(ctor) => check_args(ctor, args, unit, &format!("setup[{i}]"), &mut out),
                    None if !args.is_empty() => out.push(Violation(format!(
                        "setup[{i}]: contract has no constructor but got {} argument(s)",
                        args.len()
                    ))),
                    None => {}
                }
            }
            let early_call = poc.setup[..*i]
                .iter()
                .position(|a| matches!(a, Action::Call { .. }));
            if let Some(j) = early_call {
                out.push(Violation(format!("setup[{j}]: call before deployment")));
            }
        }
        _ => out.push(Violation("more than one deployment".into())),
    }

    if poc.exploit.is_empty() {
        out.push(Violation("exploit phase is empty".into()));
    }
    if poc.meta.generation == 0 && poc.meta.parent_id.is_some() {
        out.push(Violation("generation 0 cannot have a parent".into()));
    }
    if poc.meta.generation > 0 && poc.meta.parent_id.is_none() {
        out.push(Violation("refined poc has no parent".into()));
    }

    let lists: [(&str, &[Action]); 3] = [
        ("setup", &poc.setup),
        ("exploit", &poc.exploit),
        ("attacker_fallback", poc.attacker_fallback.as_deref().unwrap_or(&[])),
    ];
    for (list_name, actions) in lists {
        for (i, a) in actions.iter().enumerate() {
            let where_ = format!("{list_name}[{i}]");
            if list_name != "setup" && matches!(a, Action::Deploy { .. }) {
                out.push(Violation(format!("{where_}: deployment outside setup")));
            }
            if list_name == "attacker_fallback" && !matches!(a, Action::Call { .. }) {
                out.push(Violation(format!("{where_}: fallback may only contain calls")));
                continue;
            }
            match a {
                Action::Call {
                    caller,
                    target,
                    function,
                    args,
                    ..
                } => {
                    check_account(caller, &where_, &mut out);
                    if list_name == "attacker_fallback" && caller != ATTACKER {
                        out.push(Violation(format!(
                            "{where_}: fallback calls are made by the attacker"
                        )));
                    }
                    if target != unit.name() {
                        out.push(Violation(format!("{where_}: unknown target `{target}`")));
                    }
                    match contract.function(function) {
                        Some(decl) => check_args(decl, args, unit, &where_, &mut out),
                        None => out.push(Violation(format!(
                            "{where_}: unknown function `{function}`"
                        ))),
                    }
                }
                Action::Deal { account, .. } | Action::DealAsset { account, .. } => {
                    if account != unit.name() {
                        check_account(account, &where_, &mut out);
                    }
                }
                Action::Prank { account } => {
                    check_account(account, &where_, &mut out);
                    if !matches!(actions.get(i + 1), Some(Action::Call { .. })) {
                        out.push(Violation(format!("{where_}: prank must precede a call")));
                    }
                }
                Action::Deploy { .. }
                | Action::Warp { .. }
                | Action::Roll { .. }
                | Action::ExpectProfitSnapshot => {}
            }
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Every account name a PoC mentions, including argument references.
pub fn accounts_of(poc: &PoC) -> BTreeSet<String> {
    let mut out: BTreeSet<String> = [ATTACKER, DEPLOYER].iter().map(|s| s.to_string()).collect();
    let all = poc
        .setup
        .iter()
        .chain(poc.exploit.iter())
        .chain(poc.attacker_fallback.iter().flatten());
    for a in all {
        let (who, args): (Option<&String>, &[ArgValue]) = match a {
            Action::Call { caller, args, .. } => (Some(caller), args),
            Action::Deploy { args, .. } => (None, args),
            Action::Deal { account, .. }
            | Action::DealAsset { account, .. }
            | Action::Prank { account } => (Some(account), &[]),
            _ => (None, &[]),
        };
        if let Some(w) = who {
            if is_role(w) {
                out.insert(w.clone());
            }
        }
        for arg in args {
            if let ArgValue::Account(n) = arg {
                if is_role(n) {
                    out.insert(n.clone());
                }
            }
        }
    }
    out
}
