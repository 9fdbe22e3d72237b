//! Shared helpers for integration tests: fixture loading and random
//! contract and PoC generators.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use num_bigint::BigInt;
use primitive_types::U256;
use rand::seq::SliceRandom;
use rand::Rng;

use pocforge::analysis::{VulnClass, VulnPath, VulnReport};
use pocforge::frontend::{parse, ContractUnit, VarType};
use pocforge::poc::{Action, ArgValue, PoC, PocMeta, ATTACKER, DEPLOYER};
use pocforge::vm::{Address, EventKind, ExecutionOutcome, Phase, NATIVE};

pub const FIXTURES: [(&str, &str); 7] = [
    ("bank_unchecked.msol", "bank.report.json"),
    ("bank_checked.msol", "bank.report.json"),
    ("puzzle.msol", "puzzle.report.json"),
    ("lottery.msol", "lottery.report.json"),
    ("wallet.msol", "wallet.report.json"),
    ("guarded_wallet.msol", "guarded_wallet.report.json"),
    ("killable.msol", "killable.report.json"),
];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn load(contract: &str, report: &str) -> (ContractUnit, VulnReport) {
    let src = std::fs::read_to_string(fixture_path(contract)).unwrap();
    let unit = parse(&src, contract).unwrap();
    let report = VulnReport::from_json(&std::fs::read_to_string(fixture_path(report)).unwrap()).unwrap();
    (unit, report)
}

pub fn fixtures() -> Vec<(String, ContractUnit, VulnReport)> {
    FIXTURES
        .iter()
        .map(|(c, r)| {
            let (u, rep) = load(c, r);
            (c.to_string(), u, rep)
        })
        .collect()
}

// ---- random contracts -------------------------------------------------

/// What the generator knows about one function it wrote.
#[derive(Debug, Clone)]
pub struct GenFn {
    pub name: String,
    pub guarded: bool,
    /// State variable names read, including reads in applied modifiers.
    pub reads: BTreeSet<String>,
    pub writes: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct GenContract {
    pub source: String,
    pub functions: Vec<GenFn>,
}

impl GenContract {
    /// Brute-force entry set from the generator's own bookkeeping: every
    /// unguarded function other than `f_test` that writes a variable
    /// `f_test` touches for reading.
    pub fn entries_oracle(&self, f_test: &str) -> BTreeSet<String> {
        let reads = &self.functions.iter().find(|f| f.name == f_test).unwrap().reads;
        self.functions
            .iter()
            .filter(|g| g.name != f_test && !g.guarded)
            .filter(|g| g.writes.iter().any(|w| reads.contains(w)))
            .map(|g| g.name.clone())
            .collect()
    }
}

struct Gen<'r, R: Rng> {
    rng: &'r mut R,
    scalars: Vec<String>,
    maps: Vec<String>,
    has_owner: bool,
    params: Vec<String>,
    reads: BTreeSet<String>,
    writes: BTreeSet<String>,
}

impl<R: Rng> Gen<'_, R> {
    fn addr(&mut self) -> String {
        let n = if self.has_owner { 4 } else { 3 };
        match self.rng.gen_range(0..n) {
            0 => "msg.sender".into(),
            1 => "tx.origin".into(),
            2 => "this".into(),
            _ => {
                self.reads.insert("owner".into());
                "owner".into()
            }
        }
    }

    fn uint(&mut self, depth: u32) -> String {
        let choice = self.rng.gen_range(0..if depth > 0 { 11 } else { 8 });
        match choice {
            0 | 1 => self.rng.gen_range(0..6u32).to_string(),
            2 if !self.scalars.is_empty() => {
                let v = self.scalars.choose(self.rng).unwrap().clone();
                self.reads.insert(v.clone());
                v
            }
            3 if !self.maps.is_empty() => {
                let m = self.maps.choose(self.rng).unwrap().clone();
                self.reads.insert(m.clone());
                let k = self.addr();
                format!("{m}[{k}]")
            }
            4 if !self.params.is_empty() => self.params.choose(self.rng).unwrap().clone(),
            5 => ["msg.value", "block.number", "block.timestamp"]
                .choose(self.rng)
                .unwrap()
                .to_string(),
            6 => {
                let a = self.addr();
                format!("balance({a})")
            }
            7 => {
                let n = self.rng.gen_range(0..300u32);
                format!("blockhash({n}) % 7")
            }
            8 => {
                let a = self.uint(depth - 1);
                format!("keccak({a}) % 5")
            }
            _ if depth > 0 => {
                let op = ["+", "-", "*", "/", "%"].choose(self.rng).unwrap();
                let a = self.uint(depth - 1);
                let b = self.uint(depth - 1);
                format!("({a} {op} {b})")
            }
            _ => "1".into(),
        }
    }

    fn cond(&mut self, depth: u32) -> String {
        match self.rng.gen_range(0..if depth > 0 { 6 } else { 3 }) {
            0 | 1 => {
                let op = ["==", "!=", "<", "<=", ">", ">="].choose(self.rng).unwrap();
                let a = self.uint(1);
                let b = self.uint(1);
                format!("{a} {op} {b}")
            }
            2 => {
                let a = self.addr();
                let b = self.addr();
                format!("{a} == {b}")
            }
            3 => format!("!({})", self.cond(depth - 1)),
            4 => format!("({}) && ({})", self.cond(depth - 1), self.cond(depth - 1)),
            _ => format!("({}) || ({})", self.cond(depth - 1), self.cond(depth - 1)),
        }
    }

    fn small_amount(&mut self) -> String {
        if !self.params.is_empty() && self.rng.gen_bool(0.3) {
            self.params.choose(self.rng).unwrap().clone()
        } else {
            self.rng.gen_range(0..4u32).to_string()
        }
    }

    fn stmt(&mut self, depth: u32, out: &mut String, indent: &str) {
        let line = match self.rng.gen_range(0..14) {
            0..=2 if !self.scalars.is_empty() => {
                let v = self.scalars.choose(self.rng).unwrap().clone();
                let op = ["=", "+=", "-=", "*="].choose(self.rng).unwrap();
                if *op != "=" {
                    self.reads.insert(v.clone());
                }
                self.writes.insert(v.clone());
                let e = self.uint(2);
                format!("{v} {op} {e};")
            }
            3 | 4 if !self.maps.is_empty() => {
                let m = self.maps.choose(self.rng).unwrap().clone();
                let op = ["=", "+=", "-="].choose(self.rng).unwrap();
                if *op != "=" {
                    self.reads.insert(m.clone());
                }
                self.writes.insert(m.clone());
                let k = self.addr();
                let e = self.uint(1);
                format!("{m}[{k}] {op} {e};")
            }
            5 if self.has_owner => {
                self.writes.insert("owner".into());
                let a = self.addr();
                format!("owner = {a};")
            }
            6 => {
                let c = self.cond(2);
                format!("require({c}, \"guard\");")
            }
            7 if depth > 0 => {
                let c = self.cond(1);
                let mut s = format!("if ({c}) {{\n");
                let inner = format!("{indent}    ");
                for _ in 0..self.rng.gen_range(1..3) {
                    self.stmt(depth - 1, &mut s, &inner);
                }
                s.push_str(indent);
                s.push('}');
                if self.rng.gen_bool(0.5) {
                    s.push_str(" else {\n");
                    self.stmt(depth - 1, &mut s, &inner);
                    s.push_str(indent);
                    s.push('}');
                }
                s
            }
            8 => {
                let a = self.addr();
                let v = self.small_amount();
                format!("transfer({a}, {v});")
            }
            9 => {
                let v = self.small_amount();
                let kw = if self.rng.gen_bool(0.7) { "call" } else { "send" };
                format!("{kw}(msg.sender, {v});")
            }
            10 if self.rng.gen_bool(0.3) => {
                let a = if self.rng.gen_bool(0.5) { "this".to_string() } else { self.addr() };
                format!("selfdestruct({a});")
            }
            11 => {
                let a = self.addr();
                let v = self.uint(1);
                let kw = if self.rng.gen_bool(0.5) { "mint" } else { "token_transfer" };
                format!("{kw}(\"tok\", {a}, {v});")
            }
            12 => {
                let v = self.uint(1);
                format!("emit Note({v});")
            }
            _ => {
                let v = self.uint(1);
                format!("emit Tick({v});")
            }
        };
        out.push_str(indent);
        out.push_str(&line);
        out.push('\n');
    }
}

/// A random well-typed contract with at most `max_fns` functions.
pub fn random_contract<R: Rng>(rng: &mut R, max_fns: usize) -> GenContract {
    let n_scalars = rng.gen_range(1..4);
    let n_maps = rng.gen_range(0..3);
    let has_owner = rng.gen_bool(0.6);
    let scalars: Vec<String> = (0..n_scalars).map(|i| format!("s{i}")).collect();
    let maps: Vec<String> = (0..n_maps).map(|i| format!("m{i}")).collect();
    let mode = if rng.gen_bool(0.5) { "checked" } else { "unchecked" };

    let mut src = format!("mode {mode};\ncontract R {{\n");
    for s in &scalars {
        src.push_str(&format!("    uint256 {s};\n"));
    }
    for m in &maps {
        src.push_str(&format!("    mapping(address => uint256) {m};\n"));
    }
    if has_owner {
        src.push_str("    address owner;\n");
    }

    let mut g = Gen {
        rng,
        scalars: scalars.clone(),
        maps: maps.clone(),
        has_owner,
        params: Vec::new(),
        reads: BTreeSet::new(),
        writes: BTreeSet::new(),
    };

    if g.rng.gen_bool(0.6) {
        src.push_str("    constructor() payable {\n");
        if has_owner {
            src.push_str("        owner = msg.sender;\n");
        }
        for _ in 0..g.rng.gen_range(0..3) {
            g.stmt(1, &mut src, "        ");
        }
        src.push_str("    }\n");
        g.reads.clear();
        g.writes.clear();
    }

    let n_mods = g.rng.gen_range(0..3);
    let mut mod_reads: Vec<BTreeSet<String>> = Vec::new();
    for i in 0..n_mods {
        g.reads.clear();
        let c = g.cond(1);
        src.push_str(&format!("    modifier guard{i} {{\n        require({c}, \"denied\");\n    }}\n"));
        mod_reads.push(std::mem::take(&mut g.reads));
    }

    let n_fns = g.rng.gen_range(1..=max_fns);
    let mut functions = Vec::new();
    for i in 0..n_fns {
        g.reads.clear();
        g.writes.clear();
        let n_params = g.rng.gen_range(0..3);
        g.params = (0..n_params).map(|j| format!("p{j}")).collect();
        let params: Vec<String> = g.params.iter().map(|p| format!("uint256 {p}")).collect();
        let payable = if g.rng.gen_bool(0.4) { " payable" } else { "" };
        let mut mods = Vec::new();
        if n_mods > 0 && g.rng.gen_bool(0.25) {
            mods.push(g.rng.gen_range(0..n_mods));
        }
        let mod_text: String = mods.iter().map(|m| format!(" guard{m}")).collect();
        src.push_str(&format!("    function f{i}({}){payable}{mod_text} {{\n", params.join(", ")));
        for _ in 0..g.rng.gen_range(0..5) {
            g.stmt(2, &mut src, "        ");
        }
        src.push_str("    }\n");
        let mut reads = std::mem::take(&mut g.reads);
        for m in &mods {
            reads.extend(mod_reads[*m].iter().cloned());
        }
        functions.push(GenFn {
            name: format!("f{i}"),
            guarded: !mods.is_empty(),
            reads,
            writes: std::mem::take(&mut g.writes),
        });
    }
    src.push_str("}\n");
    GenContract {
        source: src,
        functions,
    }
}

// ---- random PoCs ------------------------------------------------------

fn random_arg<R: Rng>(rng: &mut R, ty: VarType, unit: &ContractUnit) -> ArgValue {
    match ty {
        VarType::Bool => ArgValue::Bool(rng.gen_bool(0.5)),
        VarType::Address => {
            let names = [ATTACKER, DEPLOYER, "user1", unit.name()];
            ArgValue::Account(names.choose(rng).unwrap().to_string())
        }
        VarType::Uint256 | VarType::Mapping => {
            if rng.gen_bool(0.05) {
                ArgValue::Uint(U256::MAX)
            } else {
                ArgValue::Uint(U256::from(rng.gen_range(0..6u64)))
            }
        }
    }
}

fn random_call<R: Rng>(rng: &mut R, unit: &ContractUnit, caller: &str) -> Action {
    let fns = &unit.contract().functions;
    let f = fns.choose(rng).unwrap();
    let args = f.params.iter().map(|p| random_arg(rng, p.ty, unit)).collect();
    let value = if f.payable { rng.gen_range(0..4u64) } else { 0 };
    Action::call(caller, unit.name(), &f.name, args, U256::from(value))
}

const CALLERS: [&str; 4] = [ATTACKER, DEPLOYER, "user1", "user2"];

/// A random PoC for `unit`. It need not validate; the VM runs anything.
pub fn random_poc<R: Rng>(rng: &mut R, unit: &ContractUnit) -> PoC {
    let mut setup = Vec::new();
    if rng.gen_bool(0.6) {
        setup.push(Action::Deal {
            account: DEPLOYER.into(),
            amount: U256::from(rng.gen_range(0..20u64)),
        });
    }
    let ctor_args = unit
        .contract()
        .constructor
        .as_ref()
        .map(|c| c.params.iter().map(|p| random_arg(rng, p.ty, unit)).collect())
        .unwrap_or_default();
    let ctor_payable = unit.contract().constructor.as_ref().is_some_and(|c| c.payable);
    setup.push(Action::Deploy {
        contract: unit.name().into(),
        args: ctor_args,
        value: U256::from(if ctor_payable { rng.gen_range(0..3u64) } else { 0 }),
    });
    setup.push(Action::Deal {
        account: ATTACKER.into(),
        amount: U256::from(rng.gen_range(0..50u64)),
    });
    if rng.gen_bool(0.7) {
        setup.push(Action::Deal {
            account: unit.name().into(),
            amount: U256::from(rng.gen_range(0..50u64)),
        });
    }
    if rng.gen_bool(0.3) {
        setup.push(Action::Warp {
            timestamp: rng.gen_range(1..2_000_000_000),
        });
    }

    let has_fns = !unit.contract().functions.is_empty();
    let mut exploit = Vec::new();
    for _ in 0..rng.gen_range(1..7) {
        let caller = *CALLERS.choose(rng).unwrap();
        match rng.gen_range(0..20) {
            0..=11 if has_fns => exploit.push(random_call(rng, unit, caller)),
            12 | 13 if has_fns => {
                exploit.push(Action::Prank {
                    account: CALLERS.choose(rng).unwrap().to_string(),
                });
                exploit.push(random_call(rng, unit, caller));
            }
            14 | 15 => exploit.push(Action::Deal {
                account: if rng.gen_bool(0.8) { caller.to_string() } else { unit.name().to_string() },
                amount: U256::from(rng.gen_range(0..30u64)),
            }),
            16 => exploit.push(Action::DealAsset {
                account: caller.into(),
                asset: "tok".into(),
                amount: U256::from(rng.gen_range(0..30u64)),
            }),
            17 => exploit.push(Action::Warp {
                timestamp: rng.gen_range(1..2_000_000_000),
            }),
            18 => exploit.push(Action::Roll {
                block_number: rng.gen_range(1..2_000_000),
            }),
            _ => exploit.push(Action::ExpectProfitSnapshot),
        }
    }
    let fallback = (has_fns && rng.gen_bool(0.5)).then(|| {
        (0..rng.gen_range(1..3))
            .map(|_| random_call(rng, unit, ATTACKER))
            .collect()
    });
    let target = unit
        .contract()
        .functions
        .first()
        .map(|f| f.name.clone())
        .unwrap_or_default();
    let path = VulnPath {
        entry: None,
        target,
        vuln_class: VulnClass::Re,
        shared_state: BTreeSet::new(),
    };
    PoC::new(setup, exploit, fallback, PocMeta::seed(path))
}

/// The same PoC with every action from the failing one on removed.
pub fn truncate_before_revert(poc: &PoC, outcome: &ExecutionOutcome) -> Option<PoC> {
    let info = outcome.revert_info.as_ref()?;
    let (mut setup, mut exploit, fallback) = poc.parts();
    match info.phase {
        Phase::SetUp => {
            setup.truncate(info.action_index);
            exploit.clear();
        }
        Phase::Exploit => exploit.truncate(info.action_index),
    }
    Some(PoC::new(setup, exploit, fallback, poc.meta.clone()))
}

/// Replays the native value movements recorded in a trace that ran to
/// completion. Returns the resulting balances and the amount destroyed by
/// exploit-phase self-destructs that named the contract itself.
pub fn replay_native(outcome: &ExecutionOutcome, contract: Address) -> (BTreeMap<Address, BigInt>, BigInt) {
    let mut ledger: BTreeMap<Address, BigInt> = BTreeMap::new();
    let mut burned = BigInt::from(0);
    for e in &outcome.trace {
        match &e.kind {
            EventKind::ValueTransfer {
                from,
                to,
                amount,
                asset,
            } if asset == NATIVE => {
                let amt = BigInt::from_bytes_be(num_bigint::Sign::Plus, &amount.to_big_endian());
                if !(e.from_cheatcode && *from == Address::ZERO) {
                    *ledger.entry(*from).or_default() -= &amt;
                }
                if !(e.from_cheatcode && *to == Address::ZERO) {
                    *ledger.entry(*to).or_default() += &amt;
                }
            }
            EventKind::Selfdestruct { beneficiary } if *beneficiary == contract => {
                let bal = ledger.remove(&contract).unwrap_or_default();
                if e.phase == Phase::Exploit {
                    burned += bal;
                }
            }
            _ => {}
        }
    }
    ledger.retain(|_, v| *v != BigInt::from(0));
    (ledger, burned)
}
