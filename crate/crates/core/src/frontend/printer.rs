//! Canonical MiniSol pretty-printer. Every binary expression is fully
//! parenthesized so the output re-parses to the same tree.

use std::fmt::{self, Write};

use super::ast::*;

impl fmt::Display for Contract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode {};", self.mode.keyword())?;
        writeln!(f, "contract {} {{", self.name)?;
        for m in &self.order {
            match *m {
                Member::StateVar(i) => {
                    let v = &self.state_vars[i];
                    write!(f, "    {} {}", v.ty, v.name)?;
                    if let Some(init) = &v.init {
                        write!(f, " = {}", init)?;
                    }
                    writeln!(f, ";")?;
                }
                Member::Constructor => {
                    if let Some(c) = &self.constructor {
                        write_function(f, c)?;
                    }
                }
                Member::Function(i) => write_function(f, &self.functions[i])?,
                Member::Modifier(i) => {
                    let m = &self.modifiers[i];
                    writeln!(f, "    modifier {} {{", m.name)?;
                    write_block(f, &m.body, 2)?;
                    writeln!(f, "    }}")?;
                }
            }
        }
        writeln!(f, "}}")
    }
}

fn write_function(f: &mut fmt::Formatter<'_>, func: &FunctionDecl) -> fmt::Result {
    let params: Vec<String> = func
        .params
        .iter()
        .map(|p| format!("{} {}", p.ty, p.name))
        .collect();
    if func.is_constructor {
        write!(f, "    constructor({})", params.join(", "))?;
    } else {
        write!(f, "    function {}({})", func.name, params.join(", "))?;
    }
    if func.payable {
        write!(f, " payable")?;
    }
    for m in &func.modifiers {
        write!(f, " {m}")?;
    }
    writeln!(f, " {{")?;
    write_block(f, &func.body, 2)?;
    writeln!(f, "    }}")
}

fn indent(f: &mut fmt::Formatter<'_>, depth: usize) -> fmt::Result {
    for _ in 0..depth {
        f.write_str("    ")?;
    }
    Ok(())
}

fn write_block(f: &mut fmt::Formatter<'_>, stmts: &[Statement], depth: usize) -> fmt::Result {
    for s in stmts {
        write_stmt(f, s, depth)?;
    }
    Ok(())
}

fn write_stmt(f: &mut fmt::Formatter<'_>, s: &Statement, depth: usize) -> fmt::Result {
    indent(f, depth)?;
    match &s.kind {
        StmtKind::Require { cond, message } => match message {
            Some(m) => writeln!(f, "require({cond}, {});", quote(m)),
            None => writeln!(f, "require({cond});"),
        },
        StmtKind::Assign { target, op, value } => {
            write!(f, "{}", target.var)?;
            if let Some(k) = &target.index {
                write!(f, "[{k}]")?;
            }
            writeln!(f, " {} {};", op.symbol(), value)
        }
        StmtKind::Transfer { to, amount } => writeln!(f, "transfer({to}, {amount});"),
        StmtKind::ExternalCall { to, value, reenter } => {
            let kw = if *reenter { "call" } else { "send" };
            writeln!(f, "{kw}({to}, {value});")
        }
        StmtKind::Selfdestruct { beneficiary } => writeln!(f, "selfdestruct({beneficiary});"),
        StmtKind::TokenOp {
            asset,
            to,
            amount,
            op,
        } => {
            let kw = match op {
                TokenOpKind::Mint => "mint",
                TokenOpKind::Transfer => "token_transfer",
            };
            writeln!(f, "{kw}({}, {to}, {amount});", quote(asset))
        }
        StmtKind::Emit { event, args } => {
            writeln!(f, "emit {event}({});", join(args))
        }
        StmtKind::If {
            cond,
            then_branch,
            else_branch,
        } => {
            writeln!(f, "if ({cond}) {{")?;
            write_block(f, then_branch, depth + 1)?;
            indent(f, depth)?;
            if else_branch.is_empty() {
                writeln!(f, "}}")
            } else {
                writeln!(f, "}} else {{")?;
                write_block(f, else_branch, depth + 1)?;
                indent(f, depth)?;
                writeln!(f, "}}")
            }
        }
        StmtKind::Return { value } => match value {
            Some(v) => writeln!(f, "return {v};"),
            None => writeln!(f, "return;"),
        },
    }
}

fn join(args: &[Expr]) -> String {
    let parts: Vec<String> = args.iter().map(|a| a.to_string()).collect();
    parts.join(", ")
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Uint(v) => write!(f, "{v}"),
            ExprKind::Bool(b) => write!(f, "{b}"),
            ExprKind::Ident(n) | ExprKind::State(n) | ExprKind::Param(n) => f.write_str(n),
            ExprKind::Index { var, key } => write!(f, "{var}[{key}]"),
            ExprKind::Env(e) => f.write_str(e.text()),
            ExprKind::Blockhash(e) => write!(f, "blockhash({e})"),
            ExprKind::Balance(e) => write!(f, "balance({e})"),
            ExprKind::Keccak(args) => write!(f, "keccak({})", join(args)),
            ExprKind::Not(e) => {
                f.write_char('!')?;
                write!(f, "{e}")
            }
            ExprKind::Binary { op, lhs, rhs } => write!(f, "({lhs} {} {rhs})", op.symbol()),
        }
    }
}
