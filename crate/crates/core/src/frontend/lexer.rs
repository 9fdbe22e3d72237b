use std::fmt;

use super::error::ParseError;
use super::span::Position;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Ident(String),
    /// Numeric literal kept as source text; the parser converts it.
    Number(String),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Semi,
    Comma,
    Dot,
    Assign,
    PlusAssign,
    MinusAssign,
    StarAssign,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    AndAnd,
    OrOr,
    Bang,
    FatArrow,
    Eof,
}

impl TokenKind {
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Number(n) => format!("number `{n}`"),
            TokenKind::Str(_) => "string literal".to_string(),
            TokenKind::Eof => "end of input".to_string(),
            other => format!("`{other}`"),
        }
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TokenKind::Ident(s) => return f.write_str(s),
            TokenKind::Number(n) => return f.write_str(n),
            TokenKind::Str(s) => return write!(f, "{s:?}"),
            TokenKind::LBrace => "{",
            TokenKind::RBrace => "}",
            TokenKind::LParen => "(",
            TokenKind::RParen => ")",
            TokenKind::LBracket => "[",
            TokenKind::RBracket => "]",
            TokenKind::Semi => ";",
            TokenKind::Comma => ",",
            TokenKind::Dot => ".",
            TokenKind::Assign => "=",
            TokenKind::PlusAssign => "+=",
            TokenKind::MinusAssign => "-=",
            TokenKind::StarAssign => "*=",
            TokenKind::EqEq => "==",
            TokenKind::NotEq => "!=",
            TokenKind::Lt => "<",
            TokenKind::Le => "<=",
            TokenKind::Gt => ">",
            TokenKind::Ge => ">=",
            TokenKind::Plus => "+",
            TokenKind::Minus => "-",
            TokenKind::Star => "*",
            TokenKind::Slash => "/",
            TokenKind::Percent => "%",
            TokenKind::AndAnd => "&&",
            TokenKind::OrOr => "||",
            TokenKind::Bang => "!",
            TokenKind::FatArrow => "=>",
            TokenKind::Eof => "<eof>",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub kind: TokenKind,
    pub start: Position,
    pub end: Position,
}

struct Cursor<'a> {
    src: &'a str,
    pos: Position,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos.offset..].chars().next()
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.src[self.pos.offset..].chars();
        it.next();
        it.next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos.offset += c.len_utf8();
        if c == '\n' {
            self.pos.line += 1;
            self.pos.col = 1;
        } else {
            self.pos.col += 1;
        }
        Some(c)
    }
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut cur = Cursor {
        src,
        pos: Position::START,
    };
    let mut out = Vec::new();
    loop {
        skip_trivia(&mut cur)?;
        let start = cur.pos;
        let Some(c) = cur.peek() else {
            out.push(Token {
                kind: TokenKind::Eof,
                start,
                end: start,
            });
            return Ok(out);
        };
        let kind = if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(c) = cur.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    s.push(c);
                    cur.bump();
                } else {
                    break;
                }
            }
            TokenKind::Ident(s)
        } else if c.is_ascii_digit() {
            let mut s = String::new();
            while let Some(c) = cur.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    s.push(c);
                    cur.bump();
                } else {
                    break;
                }
            }
            TokenKind::Number(s)
        } else if c == '"' {
            cur.bump();
            let mut s = String::new();
            loop {
                match cur.bump() {
                    Some('"') => break,
                    Some('\\') => match cur.bump() {
                        Some('n') => s.push('\n'),
                        Some(e @ ('"' | '\\')) => s.push(e),
                        _ => {
                            return Err(ParseError::lex(cur.pos, "invalid escape sequence"));
                        }
                    },
                    Some('\n') | None => {
                        return Err(ParseError::lex(start, "unterminated string literal"));
                    }
                    Some(c) => s.push(c),
                }
            }
            TokenKind::Str(s)
        } else {
            cur.bump();
            let next = cur.peek();
            let two = |cur: &mut Cursor<'_>, k: TokenKind| {
                cur.bump();
                k
            };
            match (c, next) {
                ('=', Some('=')) => two(&mut cur, TokenKind::EqEq),
                ('=', Some('>')) => two(&mut cur, TokenKind::FatArrow),
                ('!', Some('=')) => two(&mut cur, TokenKind::NotEq),
                ('<', Some('=')) => two(&mut cur, TokenKind::Le),
                ('>', Some('=')) => two(&mut cur, TokenKind::Ge),
                ('+', Some('=')) => two(&mut cur, TokenKind::PlusAssign),
                ('-', Some('=')) => two(&mut cur, TokenKind::MinusAssign),
                ('*', Some('=')) => two(&mut cur, TokenKind::StarAssign),
                ('&', Some('&')) => two(&mut cur, TokenKind::AndAnd),
                ('|', Some('|')) => two(&mut cur, TokenKind::OrOr),
                ('=', _) => TokenKind::Assign,
                ('!', _) => TokenKind::Bang,
                ('<', _) => TokenKind::Lt,
                ('>', _) => TokenKind::Gt,
                ('+', _) => TokenKind::Plus,
                ('-', _) => TokenKind::Minus,
                ('*', _) => TokenKind::Star,
                ('/', _) => TokenKind::Slash,
                ('%', _) => TokenKind::Percent,
                ('{', _) => TokenKind::LBrace,
                ('}', _) => TokenKind::RBrace,
                ('(', _) => TokenKind::LParen,
                (')', _) => TokenKind::RParen,
                ('[', _) => TokenKind::LBracket,
                (']', _) => TokenKind::RBracket,
                (';', _) => TokenKind::Semi,
                (',', _) => TokenKind::Comma,
                ('.', _) => TokenKind::Dot,
                (other, _) => {
                    return Err(ParseError::lex(start, format!("unexpected character {other:?}")));
                }
            }
        };
        out.push(Token {
            kind,
            start,
            end: cur.pos,
        });
    }
}

fn skip_trivia(cur: &mut Cursor<'_>) -> Result<(), ParseError> {
    loop {
        match (cur.peek(), cur.peek2()) {
            (Some(c), _) if c.is_whitespace() => {
                cur.bump();
            }
            (Some('/'), Some('/')) => {
                while let Some(c) = cur.peek() {
                    if c == '\n' {
                        break;
                    }
                    cur.bump();
                }
            }
            (Some('/'), Some('*')) => {
                let start = cur.pos;
                cur.bump();
                cur.bump();
                loop {
                    match (cur.peek(), cur.peek2()) {
                        (Some('*'), Some('/')) => {
                            cur.bump();
                            cur.bump();
                            break;
                        }
                        (Some(_), _) => {
                            cur.bump();
                        }
                        (None, _) => return Err(ParseError::lex(start, "unterminated block comment")),
                    }
                }
            }
            _ => return Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn compound_operators() {
        assert_eq!(
            kinds("a -= b >= c => d"),
            vec![
                TokenKind::Ident("a".into()),
                TokenKind::MinusAssign,
                TokenKind::Ident("b".into()),
                TokenKind::Ge,
                TokenKind::Ident("c".into()),
                TokenKind::FatArrow,
                TokenKind::Ident("d".into()),
                TokenKind::Eof,
            ]
        );
    }

    #[test]
    fn positions_track_lines() {
        let toks = tokenize("a\n  // note\n  bb").unwrap();
        assert_eq!((toks[1].start.line, toks[1].start.col), (3, 3));
        assert_eq!(toks[1].end.offset - toks[1].start.offset, 2);
    }

    #[test]
    fn unterminated_string() {
        let err = tokenize("\"abc").unwrap_err();
        assert!(err.to_string().contains("unterminated"));
    }
}
