use thiserror::Error;

use super::span::Position;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: {message}")]
    Lex {
        line: u32,
        col: u32,
        message: String,
    },
    #[error("{line}:{col}: expected {}, found {found}", expected.join(" or "))]
    Syntax {
        line: u32,
        col: u32,
        expected: Vec<String>,
        found: String,
    },
    #[error("{line}:{col}: invalid literal `{literal}`")]
    BadLiteral {
        line: u32,
        col: u32,
        literal: String,
    },
}

impl ParseError {
    pub(crate) fn lex(at: Position, message: impl Into<String>) -> Self {
        ParseError::Lex {
            line: at.line,
            col: at.col,
            message: message.into(),
        }
    }

    pub fn line(&self) -> u32 {
        match self {
            ParseError::Lex { line, .. }
            | ParseError::Syntax { line, .. }
            | ParseError::BadLiteral { line, .. } => *line,
        }
    }

    pub fn col(&self) -> u32 {
        match self {
            ParseError::Lex { col, .. }
            | ParseError::Syntax { col, .. }
            | ParseError::BadLiteral { col, .. } => *col,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("{line}:{col}: undeclared identifier `{name}`")]
    Undeclared { name: String, line: u32, col: u32 },
    #[error("{line}:{col}: duplicate {namespace} `{name}`")]
    Duplicate {
        namespace: &'static str,
        name: String,
        line: u32,
        col: u32,
    },
    #[error("{line}:{col}: unknown modifier `{name}`")]
    UnknownModifier { name: String, line: u32, col: u32 },
    #[error("{line}:{col}: type error: {message}")]
    Type { message: String, line: u32, col: u32 },
    #[error("arithmetic mode directive must appear exactly once before the contract (found {found})")]
    ModeDirective { found: usize },
    #[error("{line}:{col}: modifier `{name}` may only contain require guards")]
    ModifierBody { name: String, line: u32, col: u32 },
}

/// Any failure turning source text into a [`ContractUnit`](super::ContractUnit).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("resolve error: {0}")]
    Resolve(#[from] ResolveError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NodeError {
    #[error("node {0} does not belong to this unit")]
    UnknownNode(String),
    #[error("node {0} is not inside a function body")]
    NotInFunction(String),
}
