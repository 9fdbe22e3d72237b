//! Name resolution and type checking.

use std::collections::{HashMap, HashSet};

use super::ast::*;
use super::error::ResolveError;
use super::parser::NodeInfo;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Uint,
    Addr,
    Bool,
}

impl Ty {
    fn of(v: VarType) -> Option<Ty> {
        match v {
            VarType::Uint256 => Some(Ty::Uint),
            VarType::Address => Some(Ty::Addr),
            VarType::Bool => Some(Ty::Bool),
            VarType::Mapping => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Ty::Uint => "uint256",
            Ty::Addr => "address",
            Ty::Bool => "bool",
        }
    }
}

struct Scope<'a> {
    state: &'a HashMap<String, VarType>,
    params: HashMap<String, VarType>,
    allow_params: bool,
}

pub(crate) struct Resolver<'n> {
    nodes: &'n [NodeInfo],
}

impl<'n> Resolver<'n> {
    pub(crate) fn new(nodes: &'n [NodeInfo]) -> Self {
        Resolver { nodes }
    }

    fn at(&self, id: NodeIx) -> (u32, u32) {
        let s = &self.nodes[id.0 as usize].span;
        (s.start_line, s.start_col)
    }

    fn type_err(&self, id: NodeIx, message: impl Into<String>) -> ResolveError {
        let (line, col) = self.at(id);
        ResolveError::Type {
            message: message.into(),
            line,
            col,
        }
    }

    fn dup(&self, id: NodeIx, namespace: &'static str, name: &str) -> ResolveError {
        let (line, col) = self.at(id);
        ResolveError::Duplicate {
            namespace,
            name: name.to_string(),
            line,
            col,
        }
    }

    pub(crate) fn resolve(&self, c: &mut Contract) -> Result<(), ResolveError> {
        let mut state: HashMap<String, VarType> = HashMap::new();
        // State initialisers may only see variables declared before them.
        let mut vars = std::mem::take(&mut c.state_vars);
        for v in vars.iter_mut() {
            if state.contains_key(&v.name) {
                return Err(self.dup(v.id, "state variable", &v.name));
            }
            if let Some(init) = v.init.as_mut() {
                if v.ty == VarType::Mapping {
                    return Err(self.type_err(init.id, "mappings cannot have an initializer"));
                }
                let scope = Scope {
                    state: &state,
                    params: HashMap::new(),
                    allow_params: false,
                };
                let t = self.expr(init, &scope)?;
                self.expect_ty(init.id, t, Ty::of(v.ty).expect("scalar"))?;
            }
            state.insert(v.name.clone(), v.ty);
        }
        c.state_vars = vars;

        let mut modifier_names = HashSet::new();
        for m in &c.modifiers {
            if !modifier_names.insert(m.name.clone()) {
                return Err(self.dup(m.id, "modifier", &m.name));
            }
        }
        let mut fn_names = HashSet::new();
        for f in &c.functions {
            if !fn_names.insert(f.name.clone()) {
                return Err(self.dup(f.id, "function", &f.name));
            }
        }

        for m in c.modifiers.iter_mut() {
            let scope = Scope {
                state: &state,
                params: HashMap::new(),
                allow_params: false,
            };
            for s in m.body.iter_mut() {
                if !matches!(s.kind, StmtKind::Require { .. }) {
                    let (line, col) = self.at(s.id);
                    return Err(ResolveError::ModifierBody {
                        name: m.name.clone(),
                        line,
                        col,
                    });
                }
                self.statement(s, &scope)?;
            }
        }

        let fns = c.constructor.iter_mut().chain(c.functions.iter_mut());
        for f in fns {
            for m in &f.modifiers {
                if !modifier_names.contains(m) {
                    let (line, col) = self.at(f.id);
                    return Err(ResolveError::UnknownModifier {
                        name: m.clone(),
                        line,
                        col,
                    });
                }
            }
            let mut params = HashMap::new();
            for p in &f.params {
                if state.contains_key(&p.name) || params.contains_key(&p.name) {
                    return Err(self.dup(p.id, "variable", &p.name));
                }
                params.insert(p.name.clone(), p.ty);
            }
            let scope = Scope {
                state: &state,
                params,
                allow_params: true,
            };
            for s in f.body.iter_mut() {
                self.statement(s, &scope)?;
            }
        }
        Ok(())
    }

    fn expect_ty(&self, id: NodeIx, got: Ty, want: Ty) -> Result<(), ResolveError> {
        if got == want {
            Ok(())
        } else {
            Err(self.type_err(
                id,
                format!("expected {}, found {}", want.name(), got.name()),
            ))
        }
    }

    fn statement(&self, s: &mut Statement, scope: &Scope<'_>) -> Result<(), ResolveError> {
        match &mut s.kind {
            StmtKind::Require { cond, .. } => {
                let t = self.expr(cond, scope)?;
                self.expect_ty(cond.id, t, Ty::Bool)
            }
            StmtKind::Assign { target, op, value } => {
                let var_ty = match scope.state.get(&target.var) {
                    Some(t) => *t,
                    None if scope.params.contains_key(&target.var) => {
                        return Err(self.type_err(target.id, "parameters are read-only"));
                    }
                    None => {
                        let (line, col) = self.at(target.id);
                        return Err(ResolveError::Undeclared {
                            name: target.var.clone(),
                            line,
                            col,
                        });
                    }
                };
                let slot_ty = match (&mut target.index, var_ty) {
                    (Some(key), VarType::Mapping) => {
                        let k = self.expr(key, scope)?;
                        self.expect_ty(key.id, k, Ty::Addr)?;
                        Ty::Uint
                    }
                    (None, VarType::Mapping) => {
                        return Err(self.type_err(target.id, "cannot assign a whole mapping"));
                    }
                    (Some(_), _) => {
                        return Err(self.type_err(target.id, "only mappings can be indexed"));
                    }
                    (None, t) => Ty::of(t).expect("scalar"),
                };
                let v = self.expr(value, scope)?;
                if *op != AssignOp::Set {
                    self.expect_ty(target.id, slot_ty, Ty::Uint)?;
                }
                self.expect_ty(value.id, v, slot_ty)
            }
            StmtKind::Transfer { to, amount } => {
                let t = self.expr(to, scope)?;
                self.expect_ty(to.id, t, Ty::Addr)?;
                let a = self.expr(amount, scope)?;
                self.expect_ty(amount.id, a, Ty::Uint)
            }
            StmtKind::ExternalCall { to, value, .. } => {
                let t = self.expr(to, scope)?;
                self.expect_ty(to.id, t, Ty::Addr)?;
                let a = self.expr(value, scope)?;
                self.expect_ty(value.id, a, Ty::Uint)
            }
            StmtKind::Selfdestruct { beneficiary } => {
                let t = self.expr(beneficiary, scope)?;
                self.expect_ty(beneficiary.id, t, Ty::Addr)
            }
            StmtKind::TokenOp { to, amount, .. } => {
                let t = self.expr(to, scope)?;
                self.expect_ty(to.id, t, Ty::Addr)?;
                let a = self.expr(amount, scope)?;
                self.expect_ty(amount.id, a, Ty::Uint)
            }
            StmtKind::Emit { args, .. } => {
                for a in args.iter_mut() {
                    self.expr(a, scope)?;
                }
                Ok(())
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let t = self.expr(cond, scope)?;
                self.expect_ty(cond.id, t, Ty::Bool)?;
                for s in then_branch.iter_mut().chain(else_branch.iter_mut()) {
                    self.statement(s, scope)?;
                }
                Ok(())
            }
            StmtKind::Return { value } => {
                if let Some(v) = value {
                    self.expr(v, scope)?;
                }
                Ok(())
            }
        }
    }

    fn expr(&self, e: &mut Expr, scope: &Scope<'_>) -> Result<Ty, ResolveError> {
        let id = e.id;
        match &mut e.kind {
            ExprKind::Uint(_) => Ok(Ty::Uint),
            ExprKind::Bool(_) => Ok(Ty::Bool),
            ExprKind::Ident(name) | ExprKind::State(name) | ExprKind::Param(name) => {
                let name = name.clone();
                if scope.allow_params {
                    if let Some(t) = scope.params.get(&name) {
                        e.kind = ExprKind::Param(name);
                        return Ok(Ty::of(*t).expect("params are scalar"));
                    }
                }
                match scope.state.get(&name) {
                    Some(VarType::Mapping) => {
                        Err(self.type_err(id, format!("mapping `{name}` must be indexed")))
                    }
                    Some(t) => {
                        let t = Ty::of(*t).expect("scalar");
                        e.kind = ExprKind::State(name);
                        Ok(t)
                    }
                    None => {
                        let (line, col) = self.at(id);
                        Err(ResolveError::Undeclared { name, line, col })
                    }
                }
            }
            ExprKind::Index { var, key } => {
                match scope.state.get(var.as_str()) {
                    Some(VarType::Mapping) => {}
                    Some(_) => return Err(self.type_err(id, "only mappings can be indexed")),
                    None => {
                        let (line, col) = self.at(id);
                        return Err(ResolveError::Undeclared {
                            name: var.clone(),
                            line,
                            col,
                        });
                    }
                }
                let k = self.expr(key, scope)?;
                self.expect_ty(key.id, k, Ty::Addr)?;
                Ok(Ty::Uint)
            }
            ExprKind::Env(env) => Ok(match env {
                EnvVar::MsgSender | EnvVar::TxOrigin | EnvVar::This => Ty::Addr,
                EnvVar::MsgValue | EnvVar::BlockNumber | EnvVar::BlockTimestamp => Ty::Uint,
            }),
            ExprKind::Blockhash(arg) => {
                let t = self.expr(arg, scope)?;
                self.expect_ty(arg.id, t, Ty::Uint)?;
                Ok(Ty::Uint)
            }
            ExprKind::Balance(arg) => {
                let t = self.expr(arg, scope)?;
                self.expect_ty(arg.id, t, Ty::Addr)?;
                Ok(Ty::Uint)
            }
            ExprKind::Keccak(args) => {
                for a in args.iter_mut() {
                    self.expr(a, scope)?;
                }
                Ok(Ty::Uint)
            }
            ExprKind::Not(inner) => {
                let t = self.expr(inner, scope)?;
                self.expect_ty(inner.id, t, Ty::Bool)?;
                Ok(Ty::Bool)
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let l = self.expr(lhs, scope)?;
                let r = self.expr(rhs, scope)?;
                match op {
                    BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod => {
                        self.expect_ty(lhs.id, l, Ty::Uint)?;
                        self.expect_ty(rhs.id, r, Ty::Uint)?;
                        Ok(Ty::Uint)
                    }
                    BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                        self.expect_ty(lhs.id, l, Ty::Uint)?;
                        self.expect_ty(rhs.id, r, Ty::Uint)?;
                        Ok(Ty::Bool)
                    }
                    BinOp::Eq | BinOp::Ne => {
                        self.expect_ty(rhs.id, r, l)?;
                        Ok(Ty::Bool)
                    }
                    BinOp::And | BinOp::Or => {
                        self.expect_ty(lhs.id, l, Ty::Bool)?;
                        self.expect_ty(rhs.id, r, Ty::Bool)?;
                        Ok(Ty::Bool)
                    }
                }
            }
        }
    }
}
