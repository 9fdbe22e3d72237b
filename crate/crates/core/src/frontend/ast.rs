//! MiniSol abstract syntax.
//!
//! Every node carries a [`NodeIx`], an index into the owning unit's span and
//! parent tables. Indices are assigned in source order, so two parses of
//! structurally identical programs number their nodes identically.

use std::fmt;

use primitive_types::U256;
use serde::{Deserialize, Serialize};

/// Per-unit node index. Combine with a unit tag via
/// [`ContractUnit::node_id`](super::ContractUnit::node_id) to get a global id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeIx(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArithmeticMode {
    Checked,
    Unchecked,
}

impl ArithmeticMode {
    pub fn keyword(self) -> &'static str {
        match self {
            ArithmeticMode::Checked => "checked",
            ArithmeticMode::Unchecked => "unchecked",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarType {
    Uint256,
    Address,
    Bool,
    /// `mapping(address => uint256)`
    Mapping,
}

impl fmt::Display for VarType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarType::Uint256 => "uint256",
            VarType::Address => "address",
            VarType::Bool => "bool",
            VarType::Mapping => "mapping(address => uint256)",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contract {
    pub id: NodeIx,
    pub name: String,
    pub mode: ArithmeticMode,
    pub state_vars: Vec<StateVar>,
    pub constructor: Option<FunctionDecl>,
    pub functions: Vec<FunctionDecl>,
    pub modifiers: Vec<ModifierDecl>,
    /// Declaration order of members, used by the printer.
    pub(crate) order: Vec<Member>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Member {
    StateVar(usize),
    Constructor,
    Function(usize),
    Modifier(usize),
}

impl Contract {
    pub fn function(&self, name: &str) -> Option<&FunctionDecl> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn state_var(&self, name: &str) -> Option<&StateVar> {
        self.state_vars.iter().find(|v| v.name == name)
    }

    pub fn modifier(&self, name: &str) -> Option<&ModifierDecl> {
        self.modifiers.iter().find(|m| m.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVar {
    pub id: NodeIx,
    pub name: String,
    pub ty: VarType,
    pub init: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub id: NodeIx,
    pub name: String,
    pub ty: VarType,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDecl {
    pub id: NodeIx,
    /// `"constructor"` for the constructor.
    pub name: String,
    pub params: Vec<Param>,
    pub payable: bool,
    pub modifiers: Vec<String>,
    pub body: Vec<Statement>,
    pub is_constructor: bool,
}

impl FunctionDecl {
    /// Signature text such as `Collect(uint256 _am)`.
    pub fn signature(&self) -> String {
        let params: Vec<String> = self
            .params
            .iter()
            .map(|p| format!("{} {}", p.ty, p.name))
            .collect();
        let mut s = format!("{}({})", self.name, params.join(", "));
        if self.payable {
            s.push_str(" payable");
        }
        for m in &self.modifiers {
            s.push(' ');
            s.push_str(m);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModifierDecl {
    pub id: NodeIx,
    pub name: String,
    pub body: Vec<Statement>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StmtClass {
    Check,
    StateUpdate,
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub id: NodeIx,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AssignOp {
    Set,
    Add,
    Sub,
    Mul,
}

impl AssignOp {
    pub fn symbol(self) -> &'static str {
        match self {
            AssignOp::Set => "=",
            AssignOp::Add => "+=",
            AssignOp::Sub => "-=",
            AssignOp::Mul => "*=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenOpKind {
    Mint,
    Transfer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LValue {
    pub id: NodeIx,
    pub var: String,
    pub index: Option<Box<Expr>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Require {
        cond: Expr,
        message: Option<String>,
    },
    Assign {
        target: LValue,
        op: AssignOp,
        value: Expr,
    },
    /// Plain value transfer from the contract; never runs recipient code.
    Transfer {
        to: Expr,
        amount: Expr,
    },
    /// Value-carrying call to an account; with `reenter` the recipient's
    /// fallback behaviour runs before control returns.
    ExternalCall {
        to: Expr,
        value: Expr,
        reenter: bool,
    },
    Selfdestruct {
        beneficiary: Expr,
    },
    TokenOp {
        asset: String,
        to: Expr,
        amount: Expr,
        op: TokenOpKind,
    },
    Emit {
        event: String,
        args: Vec<Expr>,
    },
    If {
        cond: Expr,
        then_branch: Vec<Statement>,
        else_branch: Vec<Statement>,
    },
    Return {
        value: Option<Expr>,
    },
}

impl Statement {
    pub fn class(&self) -> StmtClass {
        match self.kind {
            StmtKind::Require { .. } => StmtClass::Check,
            StmtKind::Assign { .. }
            | StmtKind::Transfer { .. }
            | StmtKind::TokenOp { .. }
            | StmtKind::Selfdestruct { .. } => StmtClass::StateUpdate,
            StmtKind::ExternalCall { .. }
            | StmtKind::Emit { .. }
            | StmtKind::If { .. }
            | StmtKind::Return { .. } => StmtClass::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvVar {
    MsgSender,
    MsgValue,
    TxOrigin,
    BlockNumber,
    BlockTimestamp,
    This,
}

impl EnvVar {
    pub fn text(self) -> &'static str {
        match self {
            EnvVar::MsgSender => "msg.sender",
            EnvVar::MsgValue => "msg.value",
            EnvVar::TxOrigin => "tx.origin",
            EnvVar::BlockNumber => "block.number",
            EnvVar::BlockTimestamp => "block.timestamp",
            EnvVar::This => "this",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(
            self,
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub id: NodeIx,
    pub kind: ExprKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Uint(U256),
    Bool(bool),
    /// Unresolved name; the resolver rewrites it to `State` or `Param`.
    Ident(String),
    State(String),
    Param(String),
    Index {
        var: String,
        key: Box<Expr>,
    },
    Env(EnvVar),
    Blockhash(Box<Expr>),
    Balance(Box<Expr>),
    Keccak(Vec<Expr>),
    Not(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

impl Expr {
    /// Visits this expression and every subexpression, parents first.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Index { key, .. } => key.walk(f),
            ExprKind::Blockhash(e) | ExprKind::Balance(e) | ExprKind::Not(e) => e.walk(f),
            ExprKind::Keccak(args) => args.iter().for_each(|a| a.walk(f)),
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            ExprKind::Uint(_)
            | ExprKind::Bool(_)
            | ExprKind::Ident(_)
            | ExprKind::State(_)
            | ExprKind::Param(_)
            | ExprKind::Env(_) => {}
        }
    }
}

impl Statement {
    /// Direct expression operands of this statement (not nested statements).
    pub fn exprs(&self) -> Vec<&Expr> {
        match &self.kind {
            StmtKind::Require { cond, .. } => vec![cond],
            StmtKind::Assign { target, value, .. } => {
                let mut v: Vec<&Expr> = target.index.iter().map(|b| b.as_ref()).collect();
                v.push(value);
                v
            }
            StmtKind::Transfer { to, amount } => vec![to, amount],
            StmtKind::ExternalCall { to, value, .. } => vec![to, value],
            StmtKind::Selfdestruct { beneficiary } => vec![beneficiary],
            StmtKind::TokenOp { to, amount, .. } => vec![to, amount],
            StmtKind::Emit { args, .. } => args.iter().collect(),
            StmtKind::If { cond, .. } => vec![cond],
            StmtKind::Return { value } => value.iter().collect(),
        }
    }

    /// Nested statement blocks (only `If` has any).
    pub fn children(&self) -> impl Iterator<Item = &Statement> {
        let (a, b): (&[Statement], &[Statement]) = match &self.kind {
            StmtKind::If {
                then_branch,
                else_branch,
                ..
            } => (then_branch, else_branch),
            _ => (&[], &[]),
        };
        a.iter().chain(b.iter())
    }
}

/// Depth-first, source-ordered traversal over a statement list.
pub fn walk_statements<'a>(stmts: &'a [Statement], f: &mut impl FnMut(&'a Statement)) {
    for s in stmts {
        f(s);
        for c in s.children() {
            walk_statements(std::slice::from_ref(c), f);
        }
    }
}
