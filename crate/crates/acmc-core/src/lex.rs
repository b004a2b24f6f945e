//! Shared tokenizer for the formula, model, and program text formats.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// A token with its source position (1-based line and column).
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Token {
    pub kind: Tok,
    pub line: usize,
    pub col: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Tok {
    /// Alphanumeric word, possibly with a trailing prime (`PO'`). Digits-only
    /// words are values or agent indices depending on context.
    Ident(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Colon,
    Dot,
    Eq,
    Ne,
    Arrow,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::LBracket => f.write_str("'['"),
            Tok::RBracket => f.write_str("']'"),
            Tok::LBrace => f.write_str("'{'"),
            Tok::RBrace => f.write_str("'}'"),
            Tok::Comma => f.write_str("','"),
            Tok::Semi => f.write_str("';'"),
            Tok::Colon => f.write_str("':'"),
            Tok::Dot => f.write_str("'.'"),
            Tok::Eq => f.write_str("'='"),
            Tok::Ne => f.write_str("'!='"),
            Tok::Arrow => f.write_str("'->'"),
        }
    }
}

fn is_word(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Tokenize; `#` starts a comment running to end of line. Returns the
/// position of the offending character on failure.
pub(crate) fn lex(text: &str) -> Result<Vec<Token>, (usize, usize, String)> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let (tline, tcol) = (line, col);
        let bump = |c: char, line: &mut usize, col: &mut usize| {
            if c == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
        };
        match c {
            '#' => {
                while let Some(&d) = chars.peek() {
                    if d == '\n' {
                        break;
                    }
                    chars.next();
                    bump(d, &mut line, &mut col);
                }
            }
            c if c.is_whitespace() => {
                chars.next();
                bump(c, &mut line, &mut col);
            }
            c if is_word(c) => {
                let mut word = String::new();
                while let Some(&d) = chars.peek() {
                    if is_word(d) {
                        word.push(d);
                        chars.next();
                        bump(d, &mut line, &mut col);
                    } else {
                        break;
                    }
                }
                if chars.peek() == Some(&'\'') {
                    word.push('\'');
                    chars.next();
                    bump('\'', &mut line, &mut col);
                }
                out.push(Token {
                    kind: Tok::Ident(word),
                    line: tline,
                    col: tcol,
                });
            }
            '-' => {
                chars.next();
                bump('-', &mut line, &mut col);
                if chars.peek() == Some(&'>') {
                    chars.next();
                    bump('>', &mut line, &mut col);
                    out.push(Token {
                        kind: Tok::Arrow,
                        line: tline,
                        col: tcol,
                    });
                } else {
                    return Err((tline, tcol, String::from("expected '->'")));
                }
            }
            '!' => {
                chars.next();
                bump('!', &mut line, &mut col);
                if chars.peek() == Some(&'=') {
                    chars.next();
                    bump('=', &mut line, &mut col);
                    out.push(Token {
                        kind: Tok::Ne,
                        line: tline,
                        col: tcol,
                    });
                } else {
                    return Err((tline, tcol, String::from("expected '!='")));
                }
            }
            _ => {
                let kind = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    ':' => Tok::Colon,
                    '.' => Tok::Dot,
                    '=' => Tok::Eq,
                    _ => {
                        let mut msg = String::from("unexpected character '");
                        msg.push(c);
                        msg.push('\'');
                        return Err((tline, tcol, msg));
                    }
                };
                chars.next();
                bump(c, &mut line, &mut col);
                out.push(Token {
                    kind,
                    line: tline,
                    col: tcol,
                });
            }
        }
    }
    Ok(out)
}
