//! Deterministic MiniSol interpreter that runs PoC scripts and records an
//! event trace plus per-account balance changes.

mod exec;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use num_bigint::BigInt;
use primitive_types::U256;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::frontend::{ContractUnit, NodeId};
use crate::num::u256_dec;
use crate::poc::PoC;

pub use exec::{DEFAULT_BLOCK_NUMBER, DEFAULT_TIMESTAMP};

pub const NATIVE: &str = "native";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub const ZERO: Address = Address([0; 20]);

    fn derive(domain: &str, name: &str) -> Address {
        let digest = Sha256::new()
            .chain_update(domain.as_bytes())
            .chain_update([0u8])
            .chain_update(name.as_bytes())
            .finalize();
        let mut a = [0u8; 20];
        a.copy_from_slice(&digest[12..]);
        Address(a)
    }

    /// Address of an externally owned account such as `attacker`.
    pub fn of_account(name: &str) -> Address {
        Self::derive("account", name)
    }

    pub fn of_contract(name: &str) -> Address {
        Self::derive("contract", name)
    }

    pub fn to_word(self) -> [u8; 32] {
        let mut w = [0u8; 32];
        w[12..].copy_from_slice(&self.0);
        w
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl FromStr for Address {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let h = s
            .strip_prefix("0x")
            .ok_or_else(|| format!("address `{s}` must start with 0x"))?;
        let bytes = hex::decode(h).map_err(|e| format!("address `{s}`: {e}"))?;
        let arr: [u8; 20] = bytes
            .try_into()
            .map_err(|_| format!("address `{s}` must be 20 bytes"))?;
        Ok(Address(arr))
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

/// A runtime value. Serialized as a decimal string, a `0x` address or a
/// boolean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Value {
    Uint(U256),
    Addr(Address),
    Bool(bool),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Uint(v) => write!(f, "{v}"),
            Value::Addr(a) => write!(f, "{a}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Bool(b) => s.serialize_bool(*b),
            other => s.collect_str(other),
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Bool(bool),
            Num(u64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Bool(b) => Ok(Value::Bool(b)),
            Raw::Num(n) => Ok(Value::Uint(U256::from(n))),
            Raw::Str(s) if s.starts_with("0x") && s.len() == 42 => {
                s.parse().map(Value::Addr).map_err(D::Error::custom)
            }
            Raw::Str(s) => crate::num::parse_u256(&s)
                .map(Value::Uint)
                .ok_or_else(|| D::Error::custom(format!("invalid value `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StorageValue {
    Scalar(Value),
    Map(BTreeMap<Address, Value>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockEnv {
    pub number: u64,
    pub timestamp: u64,
}

/// Everything the VM mutates. Zero balances are not stored, so two states
/// compare equal exactly when every observable balance and slot agrees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WorldState {
    pub storage: BTreeMap<String, StorageValue>,
    #[serde(serialize_with = "crate::num::ser_display_map")]
    pub native: BTreeMap<Address, U256>,
    #[serde(serialize_with = "crate::num::ser_display_map2")]
    pub assets: BTreeMap<String, BTreeMap<Address, U256>>,
    pub block: BlockEnv,
    pub deployed: bool,
    pub destroyed: bool,
}

impl WorldState {
    pub fn balance(&self, a: Address) -> U256 {
        self.native.get(&a).copied().unwrap_or_default()
    }

    pub fn asset_balance(&self, asset: &str, a: Address) -> U256 {
        self.assets
            .get(asset)
            .and_then(|m| m.get(&a))
            .copied()
            .unwrap_or_default()
    }

    pub(crate) fn set_balance(&mut self, a: Address, v: U256) {
        if v.is_zero() {
            self.native.remove(&a);
        } else {
            self.native.insert(a, v);
        }
    }

    pub(crate) fn set_asset_balance(&mut self, asset: &str, a: Address, v: U256) {
        let m = self.assets.entry(asset.to_string()).or_default();
        if v.is_zero() {
            m.remove(&a);
        } else {
            m.insert(a, v);
        }
        if m.is_empty() {
            self.assets.remove(asset);
        }
    }

    /// Every (account, asset) balance, native included.
    pub fn ledger(&self) -> BTreeMap<(Address, String), U256> {
        let mut out = BTreeMap::new();
        for (a, v) in &self.native {
            out.insert((*a, NATIVE.to_string()), *v);
        }
        for (asset, m) in &self.assets {
            for (a, v) in m {
                out.insert((*a, asset.clone()), *v);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    SetUp,
    Exploit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockAttr {
    Number,
    Timestamp,
    Blockhash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CallStatus {
    Success,
    Reverted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    CallEnter {
        tx_index: u32,
        caller: Address,
        tx_origin: Address,
        target: Address,
        function: String,
        #[serde(with = "u256_dec")]
        value: U256,
        depth: u32,
    },
    CallExit {
        status: CallStatus,
    },
    StorageRead {
        slot: String,
    },
    StorageWrite {
        slot: String,
        old: Value,
        new: Value,
    },
    ValueTransfer {
        from: Address,
        to: Address,
        #[serde(with = "u256_dec")]
        amount: U256,
        asset: String,
    },
    BlockAttrRead {
        attr: BlockAttr,
    },
    Selfdestruct {
        beneficiary: Address,
    },
    Revert {
        message: String,
    },
    CheatcodeApplied {
        kind: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub phase: Phase,
    pub from_cheatcode: bool,
    pub kind: EventKind,
    pub node_id: Option<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecLimits {
    pub max_call_depth: u32,
    pub max_steps: u64,
    /// How many times the attacker fallback may re-enter within one
    /// transaction.
    pub max_reentry_depth: u32,
}

impl Default for ExecLimits {
    fn default() -> Self {
        ExecLimits {
            max_call_depth: 64,
            max_steps: 100_000,
            max_reentry_depth: 4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecOptions {
    /// Forces a revert when the statement with this id is reached. Used to
    /// test failure localization.
    pub inject_revert_at: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RevertInfo {
    pub message: String,
    pub node_id: Option<NodeId>,
    pub phase: Phase,
    /// Index of the failing action within its phase.
    pub action_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExecutionOutcome {
    pub executed_ok: bool,
    pub trace: Vec<TraceEvent>,
    pub revert_info: Option<RevertInfo>,
    /// Exploit-phase balance changes per account and asset, with cheatcode
    /// injections subtracted. Zero entries are omitted.
    #[serde(serialize_with = "crate::num::ser_display_map2")]
    pub balance_deltas: BTreeMap<Address, BTreeMap<String, BigInt>>,
    pub accounts: BTreeMap<String, Address>,
    pub final_state: WorldState,
}

impl ExecutionOutcome {
    pub fn address_of(&self, name: &str) -> Option<Address> {
        self.accounts.get(name).copied()
    }

    /// Per-asset deltas of the named account.
    pub fn deltas_of(&self, name: &str) -> BTreeMap<String, BigInt> {
        self.address_of(name)
            .and_then(|a| self.balance_deltas.get(&a).cloned())
            .unwrap_or_default()
    }
}

/// Runs the PoC's setup then exploit actions against a fresh deployment.
pub fn execute_poc(unit: &ContractUnit, poc: &PoC, limits: ExecLimits) -> ExecutionOutcome {
    exec::Vm::new(unit, poc, limits, ExecOptions::default()).run()
}

pub fn execute_poc_with(
    unit: &ContractUnit,
    poc: &PoC,
    limits: ExecLimits,
    options: ExecOptions,
) -> ExecutionOutcome {
    exec::Vm::new(unit, poc, limits, options).run()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventFilter {
    pub exploit_only: bool,
    pub exclude_cheatcode: bool,
}

impl Default for EventFilter {
    fn default() -> Self {
        EventFilter {
            exploit_only: true,
            exclude_cheatcode: true,
        }
    }
}

/// Events that count for analysis: exploit phase, not caused by cheatcodes.
pub fn semantic_events(trace: &[TraceEvent], filter: EventFilter) -> Vec<TraceEvent> {
    trace
        .iter()
        .filter(|e| !filter.exploit_only || e.phase == Phase::Exploit)
        .filter(|e| !filter.exclude_cheatcode || !e.from_cheatcode)
        .cloned()
        .collect()
}

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_jsonl(trace: &[TraceEvent], mut w: impl Write) -> std::io::Result<()> {
    for e in trace {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSONL trace. Blank lines are skipped; line numbers are 1-based.
pub fn read_jsonl(r: impl BufRead) -> Result<Vec<TraceEvent>, TraceIoError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: TraceEvent = serde_json::from_str(&line).map_err(|err| TraceIoError::Schema {
            line: i + 1,
            message: err.to_string(),
        })?;
        out.push(e);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(seq: u64, phase: Phase, cheat: bool) -> TraceEvent {
        TraceEvent {
            seq,
            phase,
            from_cheatcode: cheat,
            kind: EventKind::ValueTransfer {
                from: Address::ZERO,
                to: Address::of_account("attacker"),
                amount: U256::from(5),
                asset: NATIVE.into(),
            },
            node_id: None,
        }
    }

    #[test]
    fn filter_drops_setup_and_cheatcodes() {
        let trace = vec![
            ev(0, Phase::SetUp, false),
            ev(1, Phase::Exploit, true),
            ev(2, Phase::Exploit, false),
            ev(3, Phase::SetUp, true),
        ];
        let kept = semantic_events(&trace, EventFilter::default());
        assert_eq!(kept.iter().map(|e| e.seq).collect::<Vec<_>>(), vec![2]);
        assert!(semantic_events(&trace[..1], EventFilter::default()).is_empty());
        assert!(semantic_events(&trace[1..2], EventFilter::default()).is_empty());
    }

    #[test]
    fn jsonl_round_trip() {
        let trace = vec![ev(0, Phase::Exploit, false), ev(1, Phase::SetUp, true)];
        let mut buf = Vec::new();
        write_jsonl(&trace, &mut buf).unwrap();
        let back = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, trace);
    }

    #[test]
    fn jsonl_reports_line() {
        let text = "\n{\"seq\":0}\n";
        match read_jsonl(text.as_bytes()) {
            Err(TraceIoError::Schema { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn value_text_forms() {
        for v in [
            Value::Uint(U256::from(7)),
            Value::Bool(true),
            Value::Addr(Address::of_account("x")),
        ] {
            let s = serde_json::to_string(&v).unwrap();
            assert_eq!(serde_json::from_str::<Value>(&s).unwrap(), v);
        }
    }
}
