//! Tokenizer for theory files.

use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    // keywords
    Theory,
    Type,
    Const,
    Rewrite,
    Check,
    Infer,
    Equal,
    Inhabit,
    By,
    Unit,
    Star,
    Id,
    Refl,
    Sig,
    Pi,
    Fun,
    Pair,
    Proj1,
    Proj2,
    // punctuation
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Colon,
    Dot,
    Turnstile, // |-
    EqEq,      // ==
    FatArrow,  // =>
    ColonEq,   // :=
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{}`", s),
            Tok::Theory => "`theory`".into(),
            Tok::Type => "`type`".into(),
            Tok::Const => "`const`".into(),
            Tok::Rewrite => "`rewrite`".into(),
            Tok::Check => "`check`".into(),
            Tok::Infer => "`infer`".into(),
            Tok::Equal => "`equal`".into(),
            Tok::Inhabit => "`inhabit`".into(),
            Tok::By => "`by`".into(),
            Tok::Unit => "`Unit`".into(),
            Tok::Star => "`star`".into(),
            Tok::Id => "`Id`".into(),
            Tok::Refl => "`refl`".into(),
            Tok::Sig => "`Sig`".into(),
            Tok::Pi => "`Pi`".into(),
            Tok::Fun => "`fun`".into(),
            Tok::Pair => "`pair`".into(),
            Tok::Proj1 => "`proj1`".into(),
            Tok::Proj2 => "`proj2`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Turnstile => "`|-`".into(),
            Tok::EqEq => "`==`".into(),
            Tok::FatArrow => "`=>`".into(),
            Tok::ColonEq => "`:=`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

pub fn lex(text: &str) -> Result<Vec<Token>, (Pos, String)> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let pos = Pos { line, col };
        match c {
            ' ' | '\t' | '\r' => {
                chars.next();
                col += 1;
            }
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            '/' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'/') {
                    while let Some(&d) = chars.peek() {
                        if d == '\n' {
                            break;
                        }
                        chars.next();
                        col += 1;
                    }
                } else {
                    return Err((pos, "unexpected character `/` (expected `//` comment)".into()));
                }
            }
            '{' => {
                chars.next();
                col += 1;
                out.push(Token { tok: Tok::LBrace, pos });
            }
            '}' => {
                chars.next();
                col += 1;
                out.push(Token { tok: Tok::RBrace, pos });
            }
            '(' => {
                chars.next();
                col += 1;
                out.push(Token { tok: Tok::LParen, pos });
            }
            ')' => {
                chars.next();
                col += 1;
                out.push(Token { tok: Tok::RParen, pos });
            }
            ',' => {
                chars.next();
                col += 1;
                out.push(Token { tok: Tok::Comma, pos });
            }
            ':' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'=') {
                    chars.next();
                    col += 1;
                    out.push(Token { tok: Tok::ColonEq, pos });
                } else {
                    out.push(Token { tok: Tok::Colon, pos });
                }
            }
            '.' => {
                chars.next();
                col += 1;
                out.push(Token { tok: Tok::Dot, pos });
            }
            '|' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'-') {
                    chars.next();
                    col += 1;
                    out.push(Token { tok: Tok::Turnstile, pos });
                } else {
                    return Err((pos, "unexpected character `|` (expected `|-`)".into()));
                }
            }
            '=' => {
                chars.next();
                col += 1;
                match chars.peek() {
                    Some('=') => {
                        chars.next();
                        col += 1;
                        out.push(Token { tok: Tok::EqEq, pos });
                    }
                    Some('>') => {
                        chars.next();
                        col += 1;
                        out.push(Token { tok: Tok::FatArrow, pos });
                    }
                    _ => {
                        return Err((pos, "unexpected character `=` (expected `==` or `=>`)".into()))
                    }
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' || d == '\'' {
                        s.push(d);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                let tok = match s.as_str() {
                    "theory" => Tok::Theory,
                    "type" => Tok::Type,
                    "const" => Tok::Const,
                    "rewrite" => Tok::Rewrite,
                    "check" => Tok::Check,
                    "infer" => Tok::Infer,
                    "equal" => Tok::Equal,
                    "inhabit" => Tok::Inhabit,
                    "by" => Tok::By,
                    "Unit" => Tok::Unit,
                    "star" => Tok::Star,
                    "Id" => Tok::Id,
                    "refl" => Tok::Refl,
                    "Sig" => Tok::Sig,
                    "Pi" => Tok::Pi,
                    "fun" => Tok::Fun,
                    "pair" => Tok::Pair,
                    "proj1" => Tok::Proj1,
                    "proj2" => Tok::Proj2,
                    _ => Tok::Ident(s),
                };
                out.push(Token { tok, pos });
            }
            other => {
                return Err((pos, format!("unexpected character `{}`", other)));
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        pos: Pos { line, col },
    });
    Ok(out)
}
