use primitive_types::U256;

use super::{
    block_attributes_read, BackendError, FailureContext, PrimitiveOp, RequestMode, Synthesizer,
    SynthesizerRequest, SynthesizerResponse,
};
use crate::analysis::VulnClass;
use crate::frontend::{
    BinOp, ContractUnit, EnvVar, Expr, ExprKind, FunctionDecl, StmtKind, VarType, AssignOp,
};
use crate::poc::{accounts_of, user_index, Action, ArgValue, PoC, PocMeta, ATTACKER, DEPLOYER};
use crate::vm::{Phase, DEFAULT_BLOCK_NUMBER, DEFAULT_TIMESTAMP};

const FUNDING: u64 = 100;

/// Rule-based synthesizer. Every output is a pure function of the request,
/// so runs are reproducible without network access.
///
/// Deployment always comes from the deployer account. Guard failures are
/// repaired by routing the guarded call through a permitted account, never
/// by making the attacker the deployer.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateBackend;

impl Synthesizer for TemplateBackend {
    fn name(&self) -> &str {
        "template"
    }

    fn respond(&self, req: &SynthesizerRequest<'_>) -> Result<SynthesizerResponse, BackendError> {
        let scripts = match req.mode {
            RequestMode::Synthesize => vec![seed(req)],
            RequestMode::RefineFailure => {
                let (prior, ctx) = req
                    .prior
                    .zip(req.failure)
                    .ok_or_else(|| BackendError::Unsupported("repair needs a prior PoC and failure".into()))?;
                vec![repair(req, prior, ctx)]
            }
            RequestMode::RefinePrimitive => {
                let (prior, op) = req
                    .prior
                    .zip(req.op)
                    .ok_or_else(|| BackendError::Unsupported("mutation needs a prior PoC and operator".into()))?;
                mutate(req, prior, op)
            }
        };
        let meta = req
            .prior
            .map(|p| p.meta.clone())
            .unwrap_or_else(|| PocMeta::seed(req.path.clone()));
        let candidates: Vec<PoC> = scripts
            .into_iter()
            .map(|(s, e, f)| PoC::new(s, e, f, meta.clone()))
            .collect();
        let raw_text = serde_json::to_string(&candidates).unwrap_or_default();
        Ok(SynthesizerResponse {
            candidates,
            raw_text,
        })
    }
}

type Script = (Vec<Action>, Vec<Action>, Option<Vec<Action>>);

fn default_args(req: &SynthesizerRequest<'_>, decl: &FunctionDecl) -> Vec<ArgValue> {
    if let Some(hint) = req.report.extra.arguments.get(&decl.name) {
        if hint.len() == decl.params.len() && hint.iter().zip(&decl.params).all(|(a, p)| a.fits(p.ty)) {
            return hint.clone();
        }
    }
    decl.params
        .iter()
        .map(|p| match p.ty {
            VarType::Address => ArgValue::Account(ATTACKER.into()),
            VarType::Bool => ArgValue::Bool(true),
            VarType::Uint256 | VarType::Mapping => ArgValue::Uint(U256::one()),
        })
        .collect()
}

fn call_of(req: &SynthesizerRequest<'_>, caller: &str, function: &str) -> Action {
    let unit = req.unit;
    let decl = unit
        .contract()
        .function(function)
        .expect("paths name declared functions");
    let value = if decl.payable { U256::one() } else { U256::zero() };
    Action::call(caller, unit.name(), function, default_args(req, decl), value)
}

fn seed(req: &SynthesizerRequest<'_>) -> Script {
    let unit = req.unit;
    let extra = &req.report.extra;
    let mut setup = Vec::new();
    let ctor_args = match (&extra.constructor_args, &unit.contract().constructor) {
        (Some(a), _) => a.clone(),
        (None, Some(c)) => default_args(req, c),
        (None, None) => Vec::new(),
    };
    let ctor_value = extra.constructor_value.unwrap_or_default();
    if !ctor_value.is_zero() {
        setup.push(Action::Deal {
            account: DEPLOYER.into(),
            amount: ctor_value,
        });
    }
    setup.push(Action::Deploy {
        contract: unit.name().into(),
        args: ctor_args,
        value: ctor_value,
    });
    setup.push(Action::Deal {
        account: ATTACKER.into(),
        amount: U256::from(FUNDING),
    });
    setup.push(Action::Deal {
        account: unit.name().into(),
        amount: U256::from(FUNDING),
    });
    if let Some(n) = extra.block_number {
        setup.push(Action::Roll { block_number: n });
    }
    if let Some(t) = extra.timestamp {
        setup.push(Action::Warp { timestamp: t });
    }

    let path = req.path;
    let mut attack = Vec::new();
    if let Some(entry) = &path.entry {
        attack.push(call_of(req, ATTACKER, entry));
    }
    let target_call = call_of(req, ATTACKER, &path.target);
    attack.push(target_call.clone());

    match path.vuln_class {
        VulnClass::Re => {
            let reenter = Action::call(
                ATTACKER,
                unit.name(),
                &path.target,
                match &target_call {
                    Action::Call { args, .. } => args.clone(),
                    _ => unreachable!(),
                },
                U256::zero(),
            );
            (setup, attack, Some(vec![reenter]))
        }
        VulnClass::Tod => {
            setup.push(Action::Deal {
                account: "user1".into(),
                amount: U256::from(FUNDING),
            });
            let mut exploit = vec![call_of(req, "user1", &path.target)];
            exploit.extend(attack);
            (setup, exploit, None)
        }
        VulnClass::Uew | VulnClass::Us | VulnClass::Rca => (setup, attack, None),
    }
}

fn scale_funding(setup: &mut Vec<Action>, exploit: &mut [Action], factor: u64) {
    let mut any = false;
    for a in setup.iter_mut().chain(exploit.iter_mut()) {
        if let Action::Deal { amount, .. } | Action::DealAsset { amount, .. } = a {
            *amount = amount.saturating_mul(U256::from(factor));
            any = true;
        }
    }
    if !any {
        setup.push(Action::Deal {
            account: ATTACKER.into(),
            amount: U256::from(FUNDING * factor),
        });
    }
}

fn mentions_env(e: &Expr, var: EnvVar) -> bool {
    let mut hit = false;
    e.walk(&mut |x| {
        if matches!(x.kind, ExprKind::Env(v) if v == var) {
            hit = true;
        }
    });
    hit
}

/// State variable compared against `msg.sender` or `tx.origin` in `cond`,
/// if the constructor assigns it from one of those.
fn owner_guard(unit: &ContractUnit, cond: &Expr) -> Option<String> {
    let ExprKind::Binary {
        op: BinOp::Eq,
        lhs,
        rhs,
    } = &cond.kind
    else {
        return None;
    };
    let is_caller = |e: &Expr| matches!(e.kind, ExprKind::Env(EnvVar::MsgSender | EnvVar::TxOrigin));
    let var = match (&lhs.kind, &rhs.kind) {
        (ExprKind::State(v), _) if is_caller(rhs) => v,
        (_, ExprKind::State(v)) if is_caller(lhs) => v,
        _ => return None,
    };
    let ctor = unit.contract().constructor.as_ref()?;
    let mut set_by_deployer = false;
    crate::frontend::walk_statements(&ctor.body, &mut |s| {
        if let StmtKind::Assign {
            target,
            op: AssignOp::Set,
            value,
        } = &s.kind
        {
            if &target.var == var && target.index.is_none() && is_caller(value) {
                set_by_deployer = true;
            }
        }
    });
    set_by_deployer.then(|| var.clone())
}

fn action_at<'a>(
    setup: &'a mut [Action],
    exploit: &'a mut [Action],
    ctx: &FailureContext,
) -> Option<&'a mut Action> {
    let at = ctx.failing_action?;
    match at.phase {
        Phase::SetUp => setup.get_mut(at.index),
        Phase::Exploit => exploit.get_mut(at.index),
    }
}

fn repair(req: &SynthesizerRequest<'_>, prior: &PoC, ctx: &FailureContext) -> Script {
    let (mut setup, mut exploit, mut fallback) = prior.parts();
    let Some(loc) = &ctx.location else {
        scale_funding(&mut setup, &mut exploit, 10);
        return (setup, exploit, fallback);
    };
    let Some(stmt) = req.unit.statement(loc.node) else {
        scale_funding(&mut setup, &mut exploit, 10);
        return (setup, exploit, fallback);
    };
    let repaired = match &stmt.kind {
        StmtKind::Require { cond, .. } if mentions_env(cond, EnvVar::MsgValue) => {
            match action_at(&mut setup, &mut exploit, ctx) {
                Some(Action::Call { value, .. }) => {
                    *value = value.saturating_add(U256::one());
                    true
                }
                _ => false,
            }
        }
        StmtKind::Require { cond, .. } if owner_guard(req.unit, cond).is_some() => {
            route_through_deployer(&mut setup, &mut exploit, ctx)
        }
        StmtKind::Assign {
            op: AssignOp::Sub, ..
        } => fix_underflow(req, &mut exploit, &mut fallback, ctx),
        _ => false,
    };
    if !repaired {
        scale_funding(&mut setup, &mut exploit, 10);
    }
    (setup, exploit, fallback)
}

fn route_through_deployer(setup: &mut [Action], exploit: &mut [Action], ctx: &FailureContext) -> bool {
    let Some(at) = ctx.failing_action else {
        return false;
    };
    let list: &mut [Action] = match at.phase {
        Phase::SetUp => setup,
        Phase::Exploit => exploit,
    };
    let mut changed = false;
    if at.index > 0 {
        if let Some(Action::Prank { account }) = list.get_mut(at.index - 1) {
            if account != DEPLOYER {
                *account = DEPLOYER.into();
                changed = true;
            }
        }
    }
    if let Some(Action::Call { caller, .. }) = list.get_mut(at.index) {
        if caller != DEPLOYER {
            *caller = DEPLOYER.into();
            changed = true;
        }
    }
    changed
}

fn first_uint(args: &[ArgValue]) -> Option<(usize, U256)> {
    args.iter().enumerate().find_map(|(i, a)| match a {
        ArgValue::Uint(v) => Some((i, *v)),
        _ => None,
    })
}

/// A subtraction underflowed: withdraw no more than was deposited, or
/// deposit more when the withdrawal already fits.
fn fix_underflow(
    req: &SynthesizerRequest<'_>,
    exploit: &mut [Action],
    fallback: &mut Option<Vec<Action>>,
    ctx: &FailureContext,
) -> bool {
    let Some(at) = ctx.failing_action.filter(|a| a.phase == Phase::Exploit) else {
        return false;
    };
    let Some(entry) = &req.path.entry else {
        return false;
    };
    let deposit_ix = exploit.iter().position(
        |a| matches!(a, Action::Call { caller, function, .. } if caller == ATTACKER && function == entry),
    );
    let Some(deposit_ix) = deposit_ix else {
        return false;
    };
    let Action::Call { value: deposited, .. } = exploit[deposit_ix] else {
        unreachable!()
    };
    let withdraw = match exploit.get(at.index) {
        Some(Action::Call { function, args, .. }) => first_uint(args).map(|(i, v)| (function.clone(), i, v)),
        _ => None,
    };
    match withdraw {
        Some((function, i, amount)) if amount > deposited && !deposited.is_zero() => {
            if let Some(Action::Call { args, .. }) = exploit.get_mut(at.index) {
                args[i] = ArgValue::Uint(deposited);
            }
            for a in fallback.iter_mut().flatten() {
                if let Action::Call { function: f, args, .. } = a {
                    if *f == function {
                        if let Some(slot) = args.get_mut(i) {
                            *slot = ArgValue::Uint(deposited);
                        }
                    }
                }
            }
            true
        }
        _ => {
            if let Action::Call { value, .. } = &mut exploit[deposit_ix] {
                *value = if value.is_zero() {
                    U256::one()
                } else {
                    value.saturating_mul(U256::from(2))
                };
            }
            true
        }
    }
}

fn mutate(req: &SynthesizerRequest<'_>, prior: &PoC, op: PrimitiveOp) -> Vec<Script> {
    match op {
        PrimitiveOp::AddUser => add_user(req, prior).into_iter().collect(),
        PrimitiveOp::ChangeInvoker => change_invoker(req, prior),
        PrimitiveOp::ChangeOrder => change_order(prior).into_iter().collect(),
        PrimitiveOp::ModifyBlock => modify_block(req, prior),
        PrimitiveOp::ChangeArgument => change_argument(req, prior),
    }
}

fn fresh_user(prior: &PoC) -> String {
    let n = accounts_of(prior)
        .iter()
        .filter_map(|a| user_index(a))
        .max()
        .unwrap_or(0);
    format!("user{}", n + 1)
}

fn fund(setup: &mut Vec<Action>, account: &str) {
    setup.push(Action::Deal {
        account: account.into(),
        amount: U256::from(FUNDING),
    });
}

/// Index where a block for `pos` starts, including cheatcodes that set up
/// the call at `pos`.
fn block_start(exploit: &[Action], pos: usize) -> usize {
    let mut s = pos;
    while s > 0 && matches!(exploit[s - 1], Action::Prank { .. } | Action::Warp { .. } | Action::Roll { .. }) {
        s -= 1;
    }
    s
}

fn add_user(req: &SynthesizerRequest<'_>, prior: &PoC) -> Option<Script> {
    let (mut setup, mut exploit, fallback) = prior.parts();
    let user = fresh_user(prior);
    let function = req.path.entry.as_deref().unwrap_or(&req.path.target);
    let pos = exploit
        .iter()
        .position(|a| a.caller() == Some(ATTACKER))
        .map_or(exploit.len(), |p| block_start(&exploit, p));
    exploit.insert(pos, call_of(req, &user, function));
    fund(&mut setup, &user);
    Some((setup, exploit, fallback))
}

fn last_target_call(exploit: &[Action], target: &str) -> Option<usize> {
    exploit
        .iter()
        .rposition(|a| matches!(a, Action::Call { function, .. } if function == target))
}

fn change_invoker(req: &SynthesizerRequest<'_>, prior: &PoC) -> Vec<Script> {
    let Some(ix) = last_target_call(prior.exploit(), &req.path.target) else {
        return Vec::new();
    };
    let current = prior.exploit()[ix].caller().unwrap_or_default().to_string();
    let user = fresh_user(prior);
    [ATTACKER.to_string(), DEPLOYER.to_string(), user.clone()]
        .into_iter()
        .filter(|c| *c != current)
        .map(|c| {
            let (mut setup, mut exploit, fallback) = prior.parts();
            if let Action::Call { caller, .. } = &mut exploit[ix] {
                *caller = c.clone();
            }
            if c == user {
                fund(&mut setup, &user);
            }
            (setup, exploit, fallback)
        })
        .collect()
}

/// Splits the exploit into blocks, each a run of cheatcodes ending in a
/// call (a trailing run of cheatcodes forms its own block).
fn blocks(exploit: &[Action]) -> Vec<Vec<Action>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for a in exploit {
        cur.push(a.clone());
        if matches!(a, Action::Call { .. }) {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn change_order(prior: &PoC) -> Option<Script> {
    let bs = blocks(prior.exploit());
    let is_attacker = |b: &Vec<Action>| b.iter().any(|a| a.caller() == Some(ATTACKER));
    let (attacker, others): (Vec<_>, Vec<_>) = bs.iter().cloned().partition(is_attacker);
    if attacker.is_empty() || others.is_empty() {
        return None;
    }
    let attacker_first = bs.first().is_some_and(is_attacker);
    let reordered: Vec<Action> = if attacker_first {
        others.into_iter().chain(attacker).flatten().collect()
    } else {
        attacker.into_iter().chain(others).flatten().collect()
    };
    let (setup, _, fallback) = prior.parts();
    Some((setup, reordered, fallback))
}

fn modify_block(req: &SynthesizerRequest<'_>, prior: &PoC) -> Vec<Script> {
    let mut read = block_attributes_read(req.unit, &req.path.target);
    if let Some(e) = &req.path.entry {
        read.extend(block_attributes_read(req.unit, e));
    }
    let ts = read.contains(&"block.timestamp");
    let num = read.contains(&"block.number") || read.contains(&"blockhash");
    let (ts, num) = if !ts && !num { (true, true) } else { (ts, num) };

    let base_ts = prior
        .setup()
        .iter()
        .rev()
        .find_map(|a| match a {
            Action::Warp { timestamp } => Some(*timestamp),
            _ => None,
        })
        .unwrap_or(DEFAULT_TIMESTAMP);
    let base_num = prior
        .setup()
        .iter()
        .rev()
        .find_map(|a| match a {
            Action::Roll { block_number } => Some(*block_number),
            _ => None,
        })
        .unwrap_or(DEFAULT_BLOCK_NUMBER);

    let mut out = Vec::new();
    if ts {
        for d in [1, 100, 86_400] {
            let (setup, mut exploit, fallback) = prior.parts();
            exploit.retain(|a| !matches!(a, Action::Warp { .. }));
            exploit.insert(0, Action::Warp { timestamp: base_ts + d });
            out.push((setup, exploit, fallback));
        }
    }
    if num {
        for d in [1, 256] {
            let (setup, mut exploit, fallback) = prior.parts();
            exploit.retain(|a| !matches!(a, Action::Roll { .. }));
            exploit.insert(0, Action::Roll { block_number: base_num + d });
            out.push((setup, exploit, fallback));
        }
    }
    out
}

fn boundary(current: U256) -> Vec<U256> {
    let mut out: Vec<U256> = Vec::new();
    for b in [U256::zero(), U256::one(), current.saturating_mul(U256::from(2)), U256::MAX] {
        if b != current && !out.contains(&b) {
            out.push(b);
        }
    }
    out
}

fn change_argument(req: &SynthesizerRequest<'_>, prior: &PoC) -> Vec<Script> {
    let Some(ix) = last_target_call(prior.exploit(), &req.path.target) else {
        return Vec::new();
    };
    let Action::Call { args, value, .. } = &prior.exploit()[ix] else {
        unreachable!()
    };
    let payable = req
        .unit
        .contract()
        .function(&req.path.target)
        .is_some_and(|f| f.payable);
    let mut edits: Vec<Box<dyn Fn(&mut Action)>> = Vec::new();
    for (i, a) in args.iter().enumerate() {
        match a {
            ArgValue::Uint(v) => {
                for b in boundary(*v) {
                    edits.push(Box::new(move |act: &mut Action| {
                        if let Action::Call { args, .. } = act {
                            args[i] = ArgValue::Uint(b);
                        }
                    }));
                }
            }
            ArgValue::Bool(v) => {
                let flipped = !*v;
                edits.push(Box::new(move |act: &mut Action| {
                    if let Action::Call { args, .. } = act {
                        args[i] = ArgValue::Bool(flipped);
                    }
                }));
            }
            ArgValue::Account(_) => {}
        }
    }
    if payable {
        for b in boundary(*value) {
            edits.push(Box::new(move |act: &mut Action| {
                if let Action::Call { value, .. } = act {
                    *value = b;
                }
            }));
        }
    }
    edits
        .into_iter()
        .map(|edit| {
            let (setup, mut exploit, fallback) = prior.parts();
            edit(&mut exploit[ix]);
            (setup, exploit, fallback)
        })
        .collect()
}
