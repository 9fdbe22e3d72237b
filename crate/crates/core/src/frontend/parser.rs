use std::sync::Arc;

use primitive_types::U256;

use super::ast::*;
use super::error::ParseError;
use super::lexer::{tokenize, Token, TokenKind};
use super::span::{Position, SourceSpan};

pub(crate) const RESERVED: &[&str] = &[
    "mode",
    "checked",
    "unchecked",
    "contract",
    "function",
    "constructor",
    "modifier",
    "payable",
    "public",
    "external",
    "mapping",
    "uint256",
    "address",
    "bool",
    "require",
    "transfer",
    "send",
    "call",
    "selfdestruct",
    "mint",
    "token_transfer",
    "emit",
    "if",
    "else",
    "return",
    "true",
    "false",
    "msg",
    "tx",
    "block",
    "blockhash",
    "balance",
    "keccak",
    "this",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Contract,
    StateVar,
    Constructor,
    Function,
    Modifier,
    Param,
    Statement,
    LValue,
    Expr,
}

#[derive(Debug, Clone)]
pub(crate) struct NodeInfo {
    pub span: SourceSpan,
    pub parent: Option<NodeIx>,
    pub kind: NodeKind,
}

/// Output of the syntactic pass, before name resolution.
pub(crate) struct Parsed {
    pub contract: Contract,
    pub nodes: Vec<NodeInfo>,
    pub mode_directives: usize,
}

struct Parser {
    file: Arc<str>,
    toks: Vec<Token>,
    pos: usize,
    nodes: Vec<NodeInfo>,
    stack: Vec<NodeIx>,
}

type PResult<T> = Result<T, ParseError>;

pub(crate) fn parse_tokens(source: &str, file: Arc<str>) -> PResult<Parsed> {
    let toks = tokenize(source)?;
    let mut p = Parser {
        file,
        toks,
        pos: 0,
        nodes: Vec::new(),
        stack: Vec::new(),
    };
    p.file_unit()
}

impl Parser {
    fn peek(&self) -> &TokenKind {
        &self.toks[self.pos].kind
    }

    fn start(&self) -> Position {
        self.toks[self.pos].start
    }

    fn prev_end(&self) -> Position {
        if self.pos == 0 {
            Position::START
        } else {
            self.toks[self.pos - 1].end
        }
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        let tok = &self.toks[self.pos];
        ParseError::Syntax {
            line: tok.start.line,
            col: tok.start.col,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: tok.kind.describe(),
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), TokenKind::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(&[&format!("`{kw}`")]))
        }
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek() == kind {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: TokenKind) -> PResult<()> {
        if self.eat(&kind) {
            Ok(())
        } else {
            Err(self.error(&[&format!("`{kind}`")]))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            TokenKind::Ident(s) if !RESERVED.contains(&s.as_str()) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn string(&mut self) -> PResult<String> {
        match self.peek() {
            TokenKind::Str(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.error(&["string literal"])),
        }
    }

    /// Reserves the next node index; the span is filled in by `close`.
    fn open(&mut self, kind: NodeKind, start: Position) -> NodeIx {
        let ix = NodeIx(self.nodes.len() as u32);
        self.nodes.push(NodeInfo {
            span: SourceSpan::new(self.file.clone(), start, start),
            parent: self.stack.last().copied(),
            kind,
        });
        self.stack.push(ix);
        ix
    }

    fn close(&mut self, ix: NodeIx, start: Position) {
        let end = self.prev_end();
        self.nodes[ix.0 as usize].span = SourceSpan::new(self.file.clone(), start, end);
        let popped = self.stack.pop();
        debug_assert_eq!(popped, Some(ix));
    }

    fn reparent(&mut self, child: NodeIx, parent: NodeIx) {
        self.nodes[child.0 as usize].parent = Some(parent);
    }

    fn file_unit(&mut self) -> PResult<Parsed> {
        let mut mode = None;
        let mut directives = 0;
        while self.is_kw("mode") {
            self.bump();
            let m = if self.eat_kw("checked") {
                ArithmeticMode::Checked
            } else if self.eat_kw("unchecked") {
                ArithmeticMode::Unchecked
            } else {
                return Err(self.error(&["`checked`", "`unchecked`"]));
            };
            self.expect(TokenKind::Semi)?;
            mode.get_or_insert(m);
            directives += 1;
        }
        if !self.is_kw("contract") {
            let expected: &[&str] = if directives == 0 {
                &["`mode`", "`contract`"]
            } else {
                &["`contract`"]
            };
            return Err(self.error(expected));
        }
        let contract = self.contract(mode.unwrap_or(ArithmeticMode::Checked))?;
        if !matches!(self.peek(), TokenKind::Eof) {
            return Err(self.error(&["end of input"]));
        }
        Ok(Parsed {
            contract,
            nodes: std::mem::take(&mut self.nodes),
            mode_directives: directives,
        })
    }

    fn contract(&mut self, mode: ArithmeticMode) -> PResult<Contract> {
        let start = self.start();
        let id = self.open(NodeKind::Contract, start);
        self.expect_kw("contract")?;
        let name = self.ident()?;
        self.expect(TokenKind::LBrace)?;
        let mut c = Contract {
            id,
            name,
            mode,
            state_vars: Vec::new(),
            constructor: None,
            functions: Vec::new(),
            modifiers: Vec::new(),
            order: Vec::new(),
        };
        loop {
            match self.peek() {
                TokenKind::RBrace => break,
                TokenKind::Ident(s) => match s.as_str() {
                    "function" => {
                        let f = self.function()?;
                        c.order.push(Member::Function(c.functions.len()));
                        c.functions.push(f);
                    }
                    "constructor" => {
                        let f = self.function()?;
                        if c.constructor.is_some() {
                            // Reported by the resolver with a proper span; keep
                            // the first one here.
                            c.functions.push(f);
                            c.order.push(Member::Function(c.functions.len() - 1));
                        } else {
                            c.constructor = Some(f);
                            c.order.push(Member::Constructor);
                        }
                    }
                    "modifier" => {
                        let m = self.modifier()?;
                        c.order.push(Member::Modifier(c.modifiers.len()));
                        c.modifiers.push(m);
                    }
                    "uint256" | "address" | "bool" | "mapping" => {
                        let v = self.state_var()?;
                        c.order.push(Member::StateVar(c.state_vars.len()));
                        c.state_vars.push(v);
                    }
                    _ => {
                        return Err(self.error(&[
                            "`function`",
                            "`constructor`",
                            "`modifier`",
                            "type",
                            "`}`",
                        ]))
                    }
                },
                _ => {
                    return Err(self.error(&[
                        "`function`",
                        "`constructor`",
                        "`modifier`",
                        "type",
                        "`}`",
                    ]))
                }
            }
        }
        self.expect(TokenKind::RBrace)?;
        self.close(id, start);
        Ok(c)
    }

    fn var_type(&mut self, allow_mapping: bool) -> PResult<VarType> {
        if self.eat_kw("uint256") {
            Ok(VarType::Uint256)
        } else if self.eat_kw("address") {
            Ok(VarType::Address)
        } else if self.eat_kw("bool") {
            Ok(VarType::Bool)
        } else if allow_mapping && self.eat_kw("mapping") {
            self.expect(TokenKind::LParen)?;
            self.expect_kw("address")?;
            self.expect(TokenKind::FatArrow)?;
            self.expect_kw("uint256")?;
            self.expect(TokenKind::RParen)?;
            Ok(VarType::Mapping)
        } else if allow_mapping {
            Err(self.error(&["`uint256`", "`address`", "`bool`", "`mapping`"]))
        } else {
            Err(self.error(&["`uint256`", "`address`", "`bool`"]))
        }
    }

    fn state_var(&mut self) -> PResult<StateVar> {
        let start = self.start();
        let id = self.open(NodeKind::StateVar, start);
        let ty = self.var_type(true)?;
        let name = self.ident()?;
        let init = if self.eat(&TokenKind::Assign) {
            Some(self.expr()?)
        } else {
            None
        };
        self.expect(TokenKind::Semi)?;
        self.close(id, start);
        Ok(StateVar { id, name, ty, init })
    }

    fn params(&mut self) -> PResult<Vec<Param>> {
        self.expect(TokenKind::LParen)?;
        let mut out = Vec::new();
        if self.eat(&TokenKind::RParen) {
            return Ok(out);
        }
        loop {
            let start = self.start();
            let id = self.open(NodeKind::Param, start);
            let ty = self.var_type(false)?;
            let name = self.ident()?;
            self.close(id, start);
            out.push(Param { id, name, ty });
            if self.eat(&TokenKind::Comma) {
                continue;
            }
            if self.eat(&TokenKind::RParen) {
                return Ok(out);
            }
            return Err(self.error(&["`,`", "`)`"]));
        }
    }

    fn function(&mut self) -> PResult<FunctionDecl> {
        let start = self.start();
        let is_constructor = self.is_kw("constructor");
        let kind = if is_constructor {
            NodeKind::Constructor
        } else {
            NodeKind::Function
        };
        let id = self.open(kind, start);
        let name = if is_constructor {
            self.bump();
            "constructor".to_string()
        } else {
            self.expect_kw("function")?;
            self.ident()?
        };
        let params = self.params()?;
        let mut payable = false;
        let mut modifiers = Vec::new();
        loop {
            if self.eat_kw("payable") {
                payable = true;
            } else if self.eat_kw("public") || self.eat_kw("external") {
            } else if matches!(self.peek(), TokenKind::Ident(_)) {
                modifiers.push(self.ident()?);
            } else {
                break;
            }
        }
        let body = self.block()?;
        self.close(id, start);
        Ok(FunctionDecl {
            id,
            name,
            params,
            payable,
            modifiers,
            body,
            is_constructor,
        })
    }

    fn modifier(&mut self) -> PResult<ModifierDecl> {
        let start = self.start();
        let id = self.open(NodeKind::Modifier, start);
        self.expect_kw("modifier")?;
        let name = self.ident()?;
        if self.eat(&TokenKind::LParen) {
            self.expect(TokenKind::RParen)?;
        }
        let body = self.block()?;
        self.close(id, start);
        Ok(ModifierDecl { id, name, body })
    }

    fn block(&mut self) -> PResult<Vec<Statement>> {
        self.expect(TokenKind::LBrace)?;
        let mut out = Vec::new();
        while !matches!(self.peek(), TokenKind::RBrace) {
            if matches!(self.peek(), TokenKind::Eof) {
                return Err(self.error(&["statement", "`}`"]));
            }
            out.push(self.statement()?);
        }
        self.bump();
        Ok(out)
    }

    fn statement(&mut self) -> PResult<Statement> {
        let start = self.start();
        let id = self.open(NodeKind::Statement, start);
        let kw = match self.peek() {
            TokenKind::Ident(s) => s.clone(),
            _ => return Err(self.error(&["statement"])),
        };
        let kind = match kw.as_str() {
            "require" => {
                self.bump();
                self.expect(TokenKind::LParen)?;
                let cond = self.expr()?;
                let message = if self.eat(&TokenKind::Comma) {
                    Some(self.string()?)
                } else {
                    None
                };
                self.expect(TokenKind::RParen)?;
                self.expect(TokenKind::Semi)?;
                StmtKind::Require { cond, message }
            }
            "transfer" | "call" | "send" => {
                self.bump();
                self.expect(TokenKind::LParen)?;
                let to = self.expr()?;
                self.expect(TokenKind::Comma)?;
                let amount = self.expr()?;
                self.expect(TokenKind::RParen)?;
                self.expect(TokenKind::Semi)?;
                match kw.as_str() {
                    "transfer" => StmtKind::Transfer { to, amount },
                    other => StmtKind::ExternalCall {
                        to,
                        value: amount,
                        reenter: other == "call",
                    },
                }
            }
            "selfdestruct" => {
                self.bump();
                self.expect(TokenKind::LParen)?;
                let beneficiary = self.expr()?;
                self.expect(TokenKind::RParen)?;
                self.expect(TokenKind::Semi)?;
                StmtKind::Selfdestruct { beneficiary }
            }
            "mint" | "token_transfer" => {
                self.bump();
                self.expect(TokenKind::LParen)?;
                let asset = self.string()?;
                self.expect(TokenKind::Comma)?;
                let to = self.expr()?;
                self.expect(TokenKind::Comma)?;
                let amount = self.expr()?;
                self.expect(TokenKind::RParen)?;
                self.expect(TokenKind::Semi)?;
                let op = if kw == "mint" {
                    TokenOpKind::Mint
                } else {
                    TokenOpKind::Transfer
                };
                StmtKind::TokenOp {
                    asset,
                    to,
                    amount,
                    op,
                }
            }
            "emit" => {
                self.bump();
                let event = self.ident()?;
                let args = self.call_args()?;
                self.expect(TokenKind::Semi)?;
                StmtKind::Emit { event, args }
            }
            "if" => {
                self.bump();
                self.expect(TokenKind::LParen)?;
                let cond = self.expr()?;
                self.expect(TokenKind::RParen)?;
                let then_branch = self.block()?;
                let else_branch = if self.eat_kw("else") {
                    if self.is_kw("if") {
                        vec![self.statement()?]
                    } else {
                        self.block()?
                    }
                } else {
                    Vec::new()
                };
                StmtKind::If {
                    cond,
                    then_branch,
                    else_branch,
                }
            }
            "return" => {
                self.bump();
                let value = if matches!(self.peek(), TokenKind::Semi) {
                    None
                } else {
                    Some(self.expr()?)
                };
                self.expect(TokenKind::Semi)?;
                StmtKind::Return { value }
            }
            _ if !RESERVED.contains(&kw.as_str()) => {
                let lstart = self.start();
                let lid = self.open(NodeKind::LValue, lstart);
                let var = self.ident()?;
                let index = if self.eat(&TokenKind::LBracket) {
                    let k = self.expr()?;
                    self.expect(TokenKind::RBracket)?;
                    Some(Box::new(k))
                } else {
                    None
                };
                self.close(lid, lstart);
                let op = match self.peek() {
                    TokenKind::Assign => AssignOp::Set,
                    TokenKind::PlusAssign => AssignOp::Add,
                    TokenKind::MinusAssign => AssignOp::Sub,
                    TokenKind::StarAssign => AssignOp::Mul,
                    _ => return Err(self.error(&["`=`", "`+=`", "`-=`", "`*=`"])),
                };
                self.bump();
                let value = self.expr()?;
                self.expect(TokenKind::Semi)?;
                StmtKind::Assign {
                    target: LValue {
                        id: lid,
                        var,
                        index,
                    },
                    op,
                    value,
                }
            }
            _ => return Err(self.error(&["statement"])),
        };
        self.close(id, start);
        Ok(Statement { id, kind })
    }

    fn call_args(&mut self) -> PResult<Vec<Expr>> {
        self.expect(TokenKind::LParen)?;
        let mut args = Vec::new();
        if self.eat(&TokenKind::RParen) {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat(&TokenKind::Comma) {
                continue;
            }
            self.expect(TokenKind::RParen)?;
            return Ok(args);
        }
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        self.binary(0)
    }

    fn binop(&self) -> Option<(BinOp, u8)> {
        let op = match self.peek() {
            TokenKind::OrOr => (BinOp::Or, 1),
            TokenKind::AndAnd => (BinOp::And, 2),
            TokenKind::EqEq => (BinOp::Eq, 3),
            TokenKind::NotEq => (BinOp::Ne, 3),
            TokenKind::Lt => (BinOp::Lt, 4),
            TokenKind::Le => (BinOp::Le, 4),
            TokenKind::Gt => (BinOp::Gt, 4),
            TokenKind::Ge => (BinOp::Ge, 4),
            TokenKind::Plus => (BinOp::Add, 5),
            TokenKind::Minus => (BinOp::Sub, 5),
            TokenKind::Star => (BinOp::Mul, 6),
            TokenKind::Slash => (BinOp::Div, 6),
            TokenKind::Percent => (BinOp::Mod, 6),
            _ => return None,
        };
        Some(op)
    }

    /// Precedence climbing; all binary operators are left-associative.
    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let start = self.start();
        let mut lhs = self.unary()?;
        while let Some((op, prec)) = self.binop() {
            if prec <= min_prec {
                break;
            }
            let id = self.open(NodeKind::Expr, start);
            self.reparent(lhs.id, id);
            self.bump();
            let rhs = self.binary(prec)?;
            self.close(id, start);
            lhs = Expr {
                id,
                kind: ExprKind::Binary {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if matches!(self.peek(), TokenKind::Bang) {
            let start = self.start();
            let id = self.open(NodeKind::Expr, start);
            self.bump();
            let inner = self.unary()?;
            self.close(id, start);
            return Ok(Expr {
                id,
                kind: ExprKind::Not(Box::new(inner)),
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        if matches!(self.peek(), TokenKind::LParen) {
            self.bump();
            let e = self.expr()?;
            self.expect(TokenKind::RParen)?;
            return Ok(e);
        }
        let start = self.start();
        let tok = self.peek().clone();
        let id = self.open(NodeKind::Expr, start);
        let kind = match tok {
            TokenKind::Number(text) => {
                self.bump();
                ExprKind::Uint(parse_number(&text).ok_or(ParseError::BadLiteral {
                    line: start.line,
                    col: start.col,
                    literal: text.clone(),
                })?)
            }
            TokenKind::Ident(word) => match word.as_str() {
                "true" | "false" => {
                    self.bump();
                    ExprKind::Bool(word == "true")
                }
                "msg" | "tx" | "block" => {
                    self.bump();
                    self.expect(TokenKind::Dot)?;
                    let field = match self.peek() {
                        TokenKind::Ident(f) => f.clone(),
                        _ => return Err(self.error(&["member name"])),
                    };
                    let env = match (word.as_str(), field.as_str()) {
                        ("msg", "sender") => EnvVar::MsgSender,
                        ("msg", "value") => EnvVar::MsgValue,
                        ("tx", "origin") => EnvVar::TxOrigin,
                        ("block", "number") => EnvVar::BlockNumber,
                        ("block", "timestamp") => EnvVar::BlockTimestamp,
                        ("msg", _) => return Err(self.error(&["`sender`", "`value`"])),
                        ("tx", _) => return Err(self.error(&["`origin`"])),
                        _ => return Err(self.error(&["`number`", "`timestamp`"])),
                    };
                    self.bump();
                    ExprKind::Env(env)
                }
                "this" => {
                    self.bump();
                    ExprKind::Env(EnvVar::This)
                }
                "blockhash" | "balance" => {
                    self.bump();
                    self.expect(TokenKind::LParen)?;
                    let arg = Box::new(self.expr()?);
                    self.expect(TokenKind::RParen)?;
                    if word == "blockhash" {
                        ExprKind::Blockhash(arg)
                    } else {
                        ExprKind::Balance(arg)
                    }
                }
                "keccak" => {
                    self.bump();
                    ExprKind::Keccak(self.call_args()?)
                }
                _ if RESERVED.contains(&word.as_str()) => {
                    return Err(self.error(&["expression"]));
                }
                _ => {
                    self.bump();
                    if self.eat(&TokenKind::LBracket) {
                        let key = self.expr()?;
                        self.expect(TokenKind::RBracket)?;
                        ExprKind::Index {
                            var: word,
                            key: Box::new(key),
                        }
                    } else {
                        ExprKind::Ident(word)
                    }
                }
            },
            _ => return Err(self.error(&["expression"])),
        };
        self.close(id, start);
        Ok(Expr { id, kind })
    }
}

fn parse_number(text: &str) -> Option<U256> {
    let clean: String = text.chars().filter(|c| *c != '_').collect();
    if let Some(hex) = clean.strip_prefix("0x").or_else(|| clean.strip_prefix("0X")) {
        if hex.is_empty() || hex.len() > 64 {
            return None;
        }
        U256::from_str_radix(hex, 16).ok()
    } else {
        if !clean.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        U256::from_dec_str(&clean).ok()
    }
}
