use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// A 1-based line/column position plus its byte offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Position {
    pub line: u32,
    pub col: u32,
    pub offset: usize,
}

impl Position {
    pub const START: Position = Position {
        line: 1,
        col: 1,
        offset: 0,
    };
}

/// Source region of one AST node. `end_*` points one character past the node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceSpan {
    pub file: Arc<str>,
    pub start_line: u32,
    pub start_col: u32,
    pub end_line: u32,
    pub end_col: u32,
    pub byte_offset: usize,
    pub byte_len: usize,
}

impl SourceSpan {
    pub fn new(file: Arc<str>, start: Position, end: Position) -> Self {
        debug_assert!(start.offset <= end.offset);
        SourceSpan {
            file,
            start_line: start.line,
            start_col: start.col,
            end_line: end.line,
            end_col: end.col,
            byte_offset: start.offset,
            byte_len: end.offset - start.offset,
        }
    }

    pub fn byte_range(&self) -> std::ops::Range<usize> {
        self.byte_offset..self.byte_offset + self.byte_len
    }

    /// True when `other` lies entirely inside this span.
    pub fn contains(&self, other: &SourceSpan) -> bool {
        self.file == other.file
            && other.byte_offset >= self.byte_offset
            && other.byte_offset + other.byte_len <= self.byte_offset + self.byte_len
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}-{}:{}",
            self.file, self.start_line, self.start_col, self.end_line, self.end_col
        )
    }
}
