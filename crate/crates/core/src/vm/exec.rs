use std::collections::BTreeMap;

use num_bigint::BigInt;
use primitive_types::U256;
use sha2::{Digest, Sha256};

use super::*;
use crate::frontend::{
    ArithmeticMode, AssignOp, BinOp, EnvVar, Expr, ExprKind, FunctionDecl, NodeIx, Statement,
    StmtKind, TokenOpKind, VarType,
};
use crate::num::u256_to_bigint;
use crate::poc::{accounts_of, Action, ArgValue, DEPLOYER};

pub const DEFAULT_BLOCK_NUMBER: u64 = 1_000_000;
pub const DEFAULT_TIMESTAMP: u64 = 1_700_000_000;

/// Abnormal termination of the current transaction.
#[derive(Debug)]
struct Halt {
    message: String,
    node: Option<NodeIx>,
}

fn halt(message: impl Into<String>, node: Option<NodeIx>) -> Halt {
    Halt {
        message: message.into(),
        node,
    }
}

enum Flow {
    Next,
    /// `return` or `selfdestruct`: leave the current frame.
    Exit,
}

struct Frame<'a> {
    sender: Address,
    value: U256,
    depth: u32,
    params: Vec<(&'a str, Value)>,
}

impl Frame<'_> {
    fn param(&self, name: &str) -> Value {
        self.params
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| *v)
            .expect("resolver checked parameter names")
    }
}

pub(super) struct Vm<'a> {
    unit: &'a ContractUnit,
    poc: &'a PoC,
    limits: ExecLimits,
    options: ExecOptions,
    state: WorldState,
    trace: Vec<TraceEvent>,
    phase: Phase,
    accounts: BTreeMap<String, Address>,
    contract: Address,
    attacker: Address,
    steps: u64,
    reentry: u32,
    tx_index: u32,
    origin: Address,
    prank: Option<Address>,
    /// Net amounts injected by cheatcodes during the exploit phase.
    cheat_net: BTreeMap<(Address, String), BigInt>,
}

impl<'a> Vm<'a> {
    pub(super) fn new(unit: &'a ContractUnit, poc: &'a PoC, limits: ExecLimits, options: ExecOptions) -> Self {
        let mut accounts: BTreeMap<String, Address> = accounts_of(poc)
            .into_iter()
            .map(|n| {
                let a = Address::of_account(&n);
                (n, a)
            })
            .collect();
        let contract = Address::of_contract(unit.name());
        accounts.insert(unit.name().to_string(), contract);
        Vm {
            unit,
            poc,
            limits,
            options,
            state: WorldState {
                storage: BTreeMap::new(),
                native: BTreeMap::new(),
                assets: BTreeMap::new(),
                block: BlockEnv {
                    number: DEFAULT_BLOCK_NUMBER,
                    timestamp: DEFAULT_TIMESTAMP,
                },
                deployed: false,
                destroyed: false,
            },
            trace: Vec::new(),
            phase: Phase::SetUp,
            attacker: Address::of_account(crate::poc::ATTACKER),
            accounts,
            contract,
            steps: 0,
            reentry: 0,
            tx_index: 0,
            origin: Address::ZERO,
            prank: None,
            cheat_net: BTreeMap::new(),
        }
    }

    pub(super) fn run(mut self) -> ExecutionOutcome {
        let mut revert_info = None;
        for (i, a) in self.poc.setup().iter().enumerate() {
            if let Err(h) = self.action(a, i) {
                revert_info = Some(self.revert_info(h, i));
                break;
            }
        }
        let setup_failed = revert_info.is_some();
        let pre = self.state.ledger();
        self.phase = Phase::Exploit;
        if !setup_failed {
            for (i, a) in self.poc.exploit().iter().enumerate() {
                if let Err(h) = self.action(a, i) {
                    revert_info = Some(self.revert_info(h, i));
                    break;
                }
            }
        }
        let post = self.state.ledger();

        let mut deltas: BTreeMap<Address, BTreeMap<String, BigInt>> = BTreeMap::new();
        let keys: std::collections::BTreeSet<&(Address, String)> =
            pre.keys().chain(post.keys()).chain(self.cheat_net.keys()).collect();
        for key in keys {
            let before = u256_to_bigint(pre.get(key).copied().unwrap_or_default());
            let after = u256_to_bigint(post.get(key).copied().unwrap_or_default());
            let injected = self.cheat_net.get(key).cloned().unwrap_or_default();
            let d = after - before - injected;
            if d != BigInt::default() {
                deltas.entry(key.0).or_default().insert(key.1.clone(), d);
            }
        }

        ExecutionOutcome {
            executed_ok: revert_info.is_none(),
            trace: self.trace,
            revert_info,
            balance_deltas: deltas,
            accounts: self.accounts,
            final_state: self.state,
        }
    }

    fn revert_info(&self, h: Halt, action_index: usize) -> RevertInfo {
        RevertInfo {
            message: h.message,
            node_id: h.node.map(|n| self.unit.node_id(n)),
            phase: self.phase,
            action_index,
        }
    }

    fn emit(&mut self, kind: EventKind, node: Option<NodeIx>) {
        self.emit_flagged(kind, node, false);
    }

    fn emit_flagged(&mut self, kind: EventKind, node: Option<NodeIx>, from_cheatcode: bool) {
        let seq = self.trace.len() as u64;
        self.trace.push(TraceEvent {
            seq,
            phase: self.phase,
            from_cheatcode,
            kind,
            node_id: node.map(|n| self.unit.node_id(n)),
        });
    }

    fn account(&self, name: &str) -> Address {
        self.accounts
            .get(name)
            .copied()
            .unwrap_or_else(|| Address::of_account(name))
    }

    fn arg_value(&self, a: &ArgValue) -> Value {
        match a {
            ArgValue::Uint(v) => Value::Uint(*v),
            ArgValue::Bool(b) => Value::Bool(*b),
            ArgValue::Account(n) => Value::Addr(self.account(n)),
        }
    }

    // ---- actions ------------------------------------------------------

    fn action(&mut self, a: &Action, index: usize) -> Result<(), Halt> {
        match a {
            Action::Deploy { args, value, .. } => {
                self.tx_index = index as u32;
                let deployer = self.account(DEPLOYER);
                self.origin = deployer;
                let args: Vec<Value> = args.iter().map(|a| self.arg_value(a)).collect();
                self.transaction(|vm| vm.deploy(deployer, &args, *value))
            }
            Action::Call {
                caller,
                function,
                args,
                value,
                ..
            } => {
                self.tx_index = index as u32;
                let caller = self.account(caller);
                let sender = self.prank.take().unwrap_or(caller);
                self.origin = caller;
                let args: Vec<Value> = args.iter().map(|a| self.arg_value(a)).collect();
                self.transaction(|vm| vm.call(sender, function, &args, *value, 1, None))
            }
            Action::Deal { account, amount } => {
                let who = self.account(account);
                self.emit_flagged(EventKind::CheatcodeApplied { kind: "deal".into() }, None, true);
                let old = self.state.balance(who);
                self.state.set_balance(who, *amount);
                self.record_cheat(who, NATIVE, old, *amount);
                Ok(())
            }
            Action::DealAsset {
                account,
                asset,
                amount,
            } => {
                let who = self.account(account);
                self.emit_flagged(
                    EventKind::CheatcodeApplied {
                        kind: "deal_asset".into(),
                    },
                    None,
                    true,
                );
                let old = self.state.asset_balance(asset, who);
                self.state.set_asset_balance(asset, who, *amount);
                self.record_cheat(who, asset, old, *amount);
                Ok(())
            }
            Action::Prank { account } => {
                self.prank = Some(self.account(account));
                self.emit_flagged(EventKind::CheatcodeApplied { kind: "prank".into() }, None, true);
                Ok(())
            }
            Action::Warp { timestamp } => {
                self.state.block.timestamp = *timestamp;
                self.emit_flagged(EventKind::CheatcodeApplied { kind: "warp".into() }, None, true);
                Ok(())
            }
            Action::Roll { block_number } => {
                self.state.block.number = *block_number;
                self.emit_flagged(EventKind::CheatcodeApplied { kind: "roll".into() }, None, true);
                Ok(())
            }
            Action::ExpectProfitSnapshot => {
                self.emit_flagged(
                    EventKind::CheatcodeApplied {
                        kind: "expect_profit_snapshot".into(),
                    },
                    None,
                    true,
                );
                Ok(())
            }
        }
    }

    /// Balance overwrite by a cheatcode: traced as a flagged transfer from or
    /// to the zero address and excluded from exploit-phase deltas.
    fn record_cheat(&mut self, who: Address, asset: &str, old: U256, new: U256) {
        if old == new {
            return;
        }
        let (from, to, amount) = if new > old {
            (Address::ZERO, who, new - old)
        } else {
            (who, Address::ZERO, old - new)
        };
        self.emit_flagged(
            EventKind::ValueTransfer {
                from,
                to,
                amount,
                asset: asset.to_string(),
            },
            None,
            true,
        );
        if self.phase == Phase::Exploit {
            let d = u256_to_bigint(new) - u256_to_bigint(old);
            *self.cheat_net.entry((who, asset.to_string())).or_default() += d;
        }
    }

    /// Runs one top-level transaction, rolling back all of its effects if it
    /// halts.
    fn transaction(&mut self, body: impl FnOnce(&mut Self) -> Result<(), Halt>) -> Result<(), Halt> {
        let snapshot = self.state.clone();
        self.reentry = 0;
        match body(self) {
            Ok(()) => Ok(()),
            Err(h) => {
                self.state = snapshot;
                self.emit(
                    EventKind::Revert {
                        message: h.message.clone(),
                    },
                    h.node,
                );
                Err(h)
            }
        }
    }

    // ---- calls --------------------------------------------------------

    fn deploy(&mut self, deployer: Address, args: &[Value], value: U256) -> Result<(), Halt> {
        let unit = self.unit;
        let contract = unit.contract();
        self.emit(
            EventKind::CallEnter {
                tx_index: self.tx_index,
                caller: deployer,
                tx_origin: self.origin,
                target: self.contract,
                function: "constructor".into(),
                value,
                depth: 1,
            },
            None,
        );
        if self.state.deployed {
            return Err(halt("contract already deployed", None));
        }
        let ctor = contract.constructor.as_ref();
        if !value.is_zero() && !ctor.is_some_and(|c| c.payable) {
            return Err(halt("constructor is not payable", None));
        }
        self.move_native(deployer, self.contract, value, None)?;
        self.state.deployed = true;

        let no_params = Frame {
            sender: deployer,
            value,
            depth: 1,
            params: Vec::new(),
        };
        for v in &contract.state_vars {
            let initial = match (&v.init, v.ty) {
                (_, VarType::Mapping) => StorageValue::Map(BTreeMap::new()),
                (Some(e), _) => StorageValue::Scalar(self.eval(e, &no_params, v.id)?),
                (None, ty) => StorageValue::Scalar(zero_of(ty)),
            };
            self.state.storage.insert(v.name.clone(), initial);
        }
        if let Some(ctor) = ctor {
            let frame = Frame {
                sender: deployer,
                value,
                depth: 1,
                params: bind(ctor, args),
            };
            self.run_function(ctor, &frame)?;
        }
        self.emit(
            EventKind::CallExit {
                status: CallStatus::Success,
            },
            None,
        );
        Ok(())
    }

    fn call(
        &mut self,
        sender: Address,
        function: &str,
        args: &[Value],
        value: U256,
        depth: u32,
        node: Option<NodeIx>,
    ) -> Result<(), Halt> {
        if depth > self.limits.max_call_depth {
            return Err(halt("limit exceeded: call depth", node));
        }
        self.emit(
            EventKind::CallEnter {
                tx_index: self.tx_index,
                caller: sender,
                tx_origin: self.origin,
                target: self.contract,
                function: function.to_string(),
                value,
                depth,
            },
            node,
        );
        let r = self.call_body(sender, function, args, value, depth);
        match r {
            Ok(()) => {
                self.emit(
                    EventKind::CallExit {
                        status: CallStatus::Success,
                    },
                    node,
                );
                Ok(())
            }
            Err(h) => {
                if depth >= 2 {
                    self.emit(
                        EventKind::CallExit {
                            status: CallStatus::Reverted,
                        },
                        node,
                    );
                }
                Err(h)
            }
        }
    }

    fn call_body(
        &mut self,
        sender: Address,
        function: &str,
        args: &[Value],
        value: U256,
        depth: u32,
    ) -> Result<(), Halt> {
        if !self.state.deployed {
            return Err(halt("contract not deployed", None));
        }
        if self.state.destroyed {
            // Calls to a destroyed account succeed and do nothing.
            return self.move_native(sender, self.contract, value, None);
        }
        let unit = self.unit;
        let Some(decl) = unit.contract().function(function) else {
            return Err(halt(format!("unknown function `{function}`"), None));
        };
        if !value.is_zero() && !decl.payable {
            return Err(halt(format!("function `{function}` is not payable"), None));
        }
        self.move_native(sender, self.contract, value, None)?;
        let frame = Frame {
            sender,
            value,
            depth,
            params: bind(decl, args),
        };
        self.run_function(decl, &frame)
    }

    fn run_function(&mut self, decl: &'a FunctionDecl, frame: &Frame<'a>) -> Result<(), Halt> {
        let unit = self.unit;
        for m in &decl.modifiers {
            let body = &unit.contract().modifier(m).expect("resolved modifier").body;
            if let Flow::Exit = self.block(body, frame)? {
                return Ok(());
            }
        }
        self.block(&decl.body, frame)?;
        Ok(())
    }

    fn block(&mut self, stmts: &'a [Statement], frame: &Frame<'a>) -> Result<Flow, Halt> {
        for s in stmts {
            if let Flow::Exit = self.stmt(s, frame)? {
                return Ok(Flow::Exit);
            }
        }
        Ok(Flow::Next)
    }

    // ---- statements ---------------------------------------------------

    fn stmt(&mut self, s: &'a Statement, frame: &Frame<'a>) -> Result<Flow, Halt> {
        let node = Some(s.id);
        self.steps += 1;
        if self.steps > self.limits.max_steps {
            return Err(halt("limit exceeded: steps", node));
        }
        if self.options.inject_revert_at == Some(self.unit.node_id(s.id)) {
            return Err(halt("injected revert", node));
        }
        match &s.kind {
            StmtKind::Require { cond, message } => {
                if !self.eval_bool(cond, frame, s.id)? {
                    let msg = message.clone().unwrap_or_else(|| "require failed".into());
                    return Err(halt(msg, node));
                }
            }
            StmtKind::Assign { target, op, value } => {
                let key = match &target.index {
                    Some(k) => Some(self.eval_addr(k, frame, s.id)?),
                    None => None,
                };
                let rhs = self.eval(value, frame, s.id)?;
                let new = match op {
                    AssignOp::Set => rhs,
                    _ => {
                        let old = as_uint(self.read_var(&target.var, key, s.id));
                        let bin = match op {
                            AssignOp::Add => BinOp::Add,
                            AssignOp::Sub => BinOp::Sub,
                            AssignOp::Mul => BinOp::Mul,
                            AssignOp::Set => unreachable!(),
                        };
                        Value::Uint(self.arith(bin, old, as_uint(rhs), s.id)?)
                    }
                };
                self.write_var(&target.var, key, new, s.id);
            }
            StmtKind::Transfer { to, amount } => {
                let to = self.eval_addr(to, frame, s.id)?;
                let amount = self.eval_uint(amount, frame, s.id)?;
                self.move_native(self.contract, to, amount, node)?;
            }
            StmtKind::ExternalCall { to, value, reenter } => {
                let to = self.eval_addr(to, frame, s.id)?;
                let amount = self.eval_uint(value, frame, s.id)?;
                self.move_native(self.contract, to, amount, node)?;
                if *reenter && to == self.attacker {
                    self.run_fallback(frame.depth, s.id)?;
                }
            }
            StmtKind::Selfdestruct { beneficiary } => {
                let b = self.eval_addr(beneficiary, frame, s.id)?;
                self.emit(EventKind::Selfdestruct { beneficiary: b }, node);
                let bal = self.state.balance(self.contract);
                if b == self.contract {
                    self.state.set_balance(self.contract, U256::zero());
                } else {
                    self.move_native(self.contract, b, bal, node)?;
                }
                self.state.storage.clear();
                self.state.destroyed = true;
                return Ok(Flow::Exit);
            }
            StmtKind::TokenOp {
                asset,
                to,
                amount,
                op,
            } => {
                let to = self.eval_addr(to, frame, s.id)?;
                let amount = self.eval_uint(amount, frame, s.id)?;
                let from = match op {
                    TokenOpKind::Mint => Address::ZERO,
                    TokenOpKind::Transfer => self.contract,
                };
                self.move_asset(asset, from, to, amount, s.id)?;
            }
            StmtKind::Emit { args, .. } => {
                for a in args {
                    self.eval(a, frame, s.id)?;
                }
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let branch = if self.eval_bool(cond, frame, s.id)? {
                    then_branch
                } else {
                    else_branch
                };
                return self.block(branch, frame);
            }
            StmtKind::Return { value } => {
                if let Some(v) = value {
                    self.eval(v, frame, s.id)?;
                }
                return Ok(Flow::Exit);
            }
        }
        Ok(Flow::Next)
    }

    /// The attacker's scripted fallback, entered when the contract sends it
    /// value through a reentrant call.
    fn run_fallback(&mut self, depth: u32, node: NodeIx) -> Result<(), Halt> {
        let Some(actions) = self.poc.attacker_fallback() else {
            return Ok(());
        };
        if self.reentry >= self.limits.max_reentry_depth {
            return Ok(());
        }
        self.reentry += 1;
        let mut result = Ok(());
        for a in actions {
            if let Action::Call {
                function,
                args,
                value,
                ..
            } = a
            {
                let args: Vec<Value> = args.iter().map(|a| self.arg_value(a)).collect();
                result = self.call(self.attacker, function, &args, *value, depth + 1, Some(node));
                if result.is_err() {
                    break;
                }
            }
        }
        self.reentry -= 1;
        result
    }

    fn move_native(&mut self, from: Address, to: Address, amount: U256, node: Option<NodeIx>) -> Result<(), Halt> {
        if amount.is_zero() {
            return Ok(());
        }
        let have = self.state.balance(from);
        if have < amount {
            return Err(halt("insufficient balance", node));
        }
        self.state.set_balance(from, have - amount);
        let dest = self.state.balance(to);
        let credited = dest
            .checked_add(amount)
            .ok_or_else(|| halt("balance overflow", node))?;
        self.state.set_balance(to, credited);
        self.emit(
            EventKind::ValueTransfer {
                from,
                to,
                amount,
                asset: NATIVE.into(),
            },
            node,
        );
        Ok(())
    }

    fn move_asset(&mut self, asset: &str, from: Address, to: Address, amount: U256, node: NodeIx) -> Result<(), Halt> {
        if amount.is_zero() {
            return Ok(());
        }
        if from != Address::ZERO {
            let have = self.state.asset_balance(asset, from);
            if have < amount {
                return Err(halt(format!("insufficient {asset} balance"), Some(node)));
            }
            self.state.set_asset_balance(asset, from, have - amount);
        }
        let dest = self.state.asset_balance(asset, to);
        let credited = dest
            .checked_add(amount)
            .ok_or_else(|| halt(format!("{asset} balance overflow"), Some(node)))?;
        self.state.set_asset_balance(asset, to, credited);
        self.emit(
            EventKind::ValueTransfer {
                from,
                to,
                amount,
                asset: asset.to_string(),
            },
            Some(node),
        );
        Ok(())
    }

    // ---- storage ------------------------------------------------------

    fn slot(&self, var: &str, key: Option<Address>) -> String {
        match key {
            Some(k) => format!("{}.{}[{}]", self.unit.name(), var, k),
            None => format!("{}.{}", self.unit.name(), var),
        }
    }

    fn peek_var(&self, var: &str, key: Option<Address>) -> Value {
        match (self.state.storage.get(var), key) {
            (Some(StorageValue::Scalar(v)), None) => *v,
            (Some(StorageValue::Map(m)), Some(k)) => {
                m.get(&k).copied().unwrap_or(Value::Uint(U256::zero()))
            }
            // Storage is wiped by selfdestruct; reads see defaults.
            _ => self.default_of(var),
        }
    }

    fn default_of(&self, var: &str) -> Value {
        let ty = self
            .unit
            .contract()
            .state_var(var)
            .map(|v| v.ty)
            .unwrap_or(VarType::Uint256);
        zero_of(ty)
    }

    fn read_var(&mut self, var: &str, key: Option<Address>, node: NodeIx) -> Value {
        let slot = self.slot(var, key);
        self.emit(EventKind::StorageRead { slot }, Some(node));
        self.peek_var(var, key)
    }

    fn write_var(&mut self, var: &str, key: Option<Address>, new: Value, node: NodeIx) {
        let old = self.peek_var(var, key);
        let slot = self.slot(var, key);
        match key {
            None => {
                self.state
                    .storage
                    .insert(var.to_string(), StorageValue::Scalar(new));
            }
            Some(k) => {
                let entry = self
                    .state
                    .storage
                    .entry(var.to_string())
                    .or_insert_with(|| StorageValue::Map(BTreeMap::new()));
                if let StorageValue::Map(m) = entry {
                    if new == Value::Uint(U256::zero()) {
                        m.remove(&k);
                    } else {
                        m.insert(k, new);
                    }
                }
            }
        }
        self.emit(EventKind::StorageWrite { slot, old, new }, Some(node));
    }

    // ---- expressions --------------------------------------------------

    fn eval_uint(&mut self, e: &Expr, frame: &Frame<'_>, stmt: NodeIx) -> Result<U256, Halt> {
        self.eval(e, frame, stmt).map(as_uint)
    }

    fn eval_bool(&mut self, e: &Expr, frame: &Frame<'_>, stmt: NodeIx) -> Result<bool, Halt> {
        match self.eval(e, frame, stmt)? {
            Value::Bool(b) => Ok(b),
            other => unreachable!("resolver guarantees bool, got {other}"),
        }
    }

    fn eval_addr(&mut self, e: &Expr, frame: &Frame<'_>, stmt: NodeIx) -> Result<Address, Halt> {
        match self.eval(e, frame, stmt)? {
            Value::Addr(a) => Ok(a),
            other => unreachable!("resolver guarantees address, got {other}"),
        }
    }

    fn eval(&mut self, e: &Expr, frame: &Frame<'_>, stmt: NodeIx) -> Result<Value, Halt> {
        Ok(match &e.kind {
            ExprKind::Uint(v) => Value::Uint(*v),
            ExprKind::Bool(b) => Value::Bool(*b),
            ExprKind::Param(n) => frame.param(n),
            ExprKind::State(n) | ExprKind::Ident(n) => self.read_var(n, None, stmt),
            ExprKind::Index { var, key } => {
                let k = self.eval_addr(key, frame, stmt)?;
                self.read_var(var, Some(k), stmt)
            }
            ExprKind::Env(env) => match env {
                EnvVar::MsgSender => Value::Addr(frame.sender),
                EnvVar::MsgValue => Value::Uint(frame.value),
                EnvVar::TxOrigin => Value::Addr(self.origin),
                EnvVar::This => Value::Addr(self.contract),
                EnvVar::BlockNumber => {
                    self.emit(EventKind::BlockAttrRead { attr: BlockAttr::Number }, Some(stmt));
                    Value::Uint(U256::from(self.state.block.number))
                }
                EnvVar::BlockTimestamp => {
                    self.emit(
                        EventKind::BlockAttrRead {
                            attr: BlockAttr::Timestamp,
                        },
                        Some(stmt),
                    );
                    Value::Uint(U256::from(self.state.block.timestamp))
                }
            },
            ExprKind::Blockhash(n) => {
                let n = self.eval_uint(n, frame, stmt)?;
                self.emit(
                    EventKind::BlockAttrRead {
                        attr: BlockAttr::Blockhash,
                    },
                    Some(stmt),
                );
                let current = U256::from(self.state.block.number);
                if n < current && current - n <= U256::from(256) {
                    let h = Sha256::new()
                        .chain_update(b"blockhash")
                        .chain_update(n.to_big_endian())
                        .finalize();
                    Value::Uint(U256::from_big_endian(&h))
                } else {
                    Value::Uint(U256::zero())
                }
            }
            ExprKind::Balance(a) => {
                let a = self.eval_addr(a, frame, stmt)?;
                Value::Uint(self.state.balance(a))
            }
            ExprKind::Keccak(args) => {
                let mut h = Sha256::new();
                for a in args {
                    let word = match self.eval(a, frame, stmt)? {
                        Value::Uint(v) => v.to_big_endian(),
                        Value::Addr(a) => a.to_word(),
                        Value::Bool(b) => U256::from(b as u8).to_big_endian(),
                    };
                    h.update(word);
                }
                Value::Uint(U256::from_big_endian(&h.finalize()))
            }
            ExprKind::Not(inner) => Value::Bool(!self.eval_bool(inner, frame, stmt)?),
            ExprKind::Binary { op, lhs, rhs } => match op {
                BinOp::And => {
                    let l = self.eval_bool(lhs, frame, stmt)?;
                    Value::Bool(l && self.eval_bool(rhs, frame, stmt)?)
                }
                BinOp::Or => {
                    let l = self.eval_bool(lhs, frame, stmt)?;
                    Value::Bool(l || self.eval_bool(rhs, frame, stmt)?)
                }
                BinOp::Eq | BinOp::Ne => {
                    let l = self.eval(lhs, frame, stmt)?;
                    let r = self.eval(rhs, frame, stmt)?;
                    Value::Bool((l == r) == (*op == BinOp::Eq))
                }
                BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                    let l = self.eval_uint(lhs, frame, stmt)?;
                    let r = self.eval_uint(rhs, frame, stmt)?;
                    Value::Bool(match op {
                        BinOp::Lt => l < r,
                        BinOp::Le => l <= r,
                        BinOp::Gt => l > r,
                        _ => l >= r,
                    })
                }
                _ => {
                    let l = self.eval_uint(lhs, frame, stmt)?;
                    let r = self.eval_uint(rhs, frame, stmt)?;
                    Value::Uint(self.arith(*op, l, r, stmt)?)
                }
            },
        })
    }

    fn arith(&self, op: BinOp, l: U256, r: U256, stmt: NodeIx) -> Result<U256, Halt> {
        let checked = self.unit.mode() == ArithmeticMode::Checked;
        let node = Some(stmt);
        let (v, overflow) = match op {
            BinOp::Add => l.overflowing_add(r),
            BinOp::Sub => l.overflowing_sub(r),
            BinOp::Mul => l.overflowing_mul(r),
            BinOp::Div | BinOp::Mod => {
                if r.is_zero() {
                    return Err(halt("division by zero", node));
                }
                (if op == BinOp::Div { l / r } else { l % r }, false)
            }
            _ => unreachable!("not arithmetic: {op:?}"),
        };
        if overflow && checked {
            let what = if op == BinOp::Sub {
                "arithmetic underflow"
            } else {
                "arithmetic overflow"
            };
            return Err(halt(what, node));
        }
        Ok(v)
    }
}

fn zero_of(ty: VarType) -> Value {
    match ty {
        VarType::Uint256 | VarType::Mapping => Value::Uint(U256::zero()),
        VarType::Address => Value::Addr(Address::ZERO),
        VarType::Bool => Value::Bool(false),
    }
}

fn as_uint(v: Value) -> U256 {
    match v {
        Value::Uint(u) => u,
        other => unreachable!("resolver guarantees uint, got {other}"),
    }
}

/// Binds call arguments to parameters, falling back to zero values for any
/// the caller did not supply.
fn bind<'a>(decl: &'a FunctionDecl, args: &[Value]) -> Vec<(&'a str, Value)> {
    decl.params
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let v = args
                .get(i)
                .copied()
                .filter(|v| {
                    matches!(
                        (v, p.ty),
                        (Value::Uint(_), VarType::Uint256)
                            | (Value::Addr(_), VarType::Address)
                            | (Value::Bool(_), VarType::Bool)
                    )
                })
                .unwrap_or_else(|| zero_of(p.ty));
            (p.name.as_str(), v)
        })
        .collect()
}
