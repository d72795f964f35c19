//! Recursive descent parser for the textual formula syntax.
//!
//! ```text
//! state   := implies
//! implies := or ( "=>" implies )?
//! or      := and ( "|" and )*
//! and     := unary ( "&" unary )*
//! unary   := "!" unary | primary
//! primary := "true" | "false" | IDENT | "(" state ")"
//!          | "P" CMP NUMBER "[" path "]"
//! path    := "X" state | "F" bound? state | "G" bound? state
//!          | state "U" bound? state
//! bound   := "<=" INT
//! ```
//!
//! `P`, `X`, `F`, `G`, `U`, `true` and `false` are keywords only where the
//! grammar expects them. `|`, `=>` and `false` are rewritten into `!`/`&`.

use thiserror::Error;

use super::ast::{Bound, Comparator, PathFormula, StateFormula};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("at position {position}: {kind}")]
pub struct ParseError {
    /// Byte offset into the input.
    pub position: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseErrorKind {
    #[error("unexpected character `{0}`")]
    UnexpectedChar(char),
    #[error("expected {expected}, found {found}")]
    Unexpected { expected: String, found: String },
    #[error("probability threshold {0} is outside [0, 1]")]
    ThresholdOutOfRange(f64),
    #[error("step bound must be a non-negative integer, found `{0}`")]
    InvalidBound(String),
    #[error("malformed number `{0}`")]
    BadNumber(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Cmp(Comparator),
    Not,
    And,
    Or,
    Implies,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(s) => format!("number `{s}`"),
            Tok::Cmp(c) => format!("`{}`", c.symbol()),
            Tok::Not => "`!`".into(),
            Tok::And => "`&`".into(),
            Tok::Or => "`|`".into(),
            Tok::Implies => "`=>`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            '!' => {
                i += 1;
                Tok::Not
            }
            '&' => {
                i += 1;
                Tok::And
            }
            '|' => {
                i += 1;
                Tok::Or
            }
            '(' => {
                i += 1;
                Tok::LParen
            }
            ')' => {
                i += 1;
                Tok::RParen
            }
            '[' => {
                i += 1;
                Tok::LBracket
            }
            ']' => {
                i += 1;
                Tok::RBracket
            }
            '=' if bytes.get(i + 1) == Some(&b'>') => {
                i += 2;
                Tok::Implies
            }
            '<' | '>' => {
                let eq = bytes.get(i + 1) == Some(&b'=');
                i += if eq { 2 } else { 1 };
                Tok::Cmp(match (c, eq) {
                    ('<', true) => Comparator::Le,
                    ('<', false) => Comparator::Lt,
                    ('>', true) => Comparator::Ge,
                    _ => Comparator::Gt,
                })
            }
            c if c.is_ascii_digit() || c == '.' || c == '-' => {
                i += 1;
                while i < bytes.len() {
                    let d = bytes[i] as char;
                    let exp_sign =
                        (d == '-' || d == '+') && matches!(bytes[i - 1], b'e' | b'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                Tok::Number(text[start..i].to_owned())
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                i += 1;
                while i < bytes.len() {
                    let d = bytes[i] as char;
                    if d.is_ascii_alphanumeric() || d == '_' || d == '.' {
                        i += 1;
                    } else {
                        break;
                    }
                }
                Tok::Ident(text[start..i].to_owned())
            }
            other => {
                let ch = text[start..].chars().next().unwrap_or(other);
                return Err(ParseError {
                    position: start,
                    kind: ParseErrorKind::UnexpectedChar(ch),
                });
            }
        };
        out.push((tok, start));
    }
    out.push((Tok::Eof, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.pos + offset).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> ParseError {
        ParseError {
            position: self.offset(),
            kind: ParseErrorKind::Unexpected {
                expected: expected.to_owned(),
                found: self.peek().describe(),
            },
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(what))
        }
    }

    fn is_ident(&self, offset: usize, word: &str) -> bool {
        matches!(self.peek_at(offset), Tok::Ident(s) if s == word)
    }

    fn state(&mut self) -> Result<StateFormula, ParseError> {
        let lhs = self.or()?;
        if *self.peek() == Tok::Implies {
            self.bump();
            let rhs = self.state()?;
            // a => b  ==  !(a & !b)
            return Ok(StateFormula::not(StateFormula::and(
                lhs,
                StateFormula::not(rhs),
            )));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<StateFormula, ParseError> {
        let mut lhs = self.and()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let rhs = self.and()?;
            lhs = StateFormula::not(StateFormula::and(
                StateFormula::not(lhs),
                StateFormula::not(rhs),
            ));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<StateFormula, ParseError> {
        let mut lhs = self.unary()?;
        while *self.peek() == Tok::And {
            self.bump();
            let rhs = self.unary()?;
            lhs = StateFormula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<StateFormula, ParseError> {
        if *self.peek() == Tok::Not {
            self.bump();
            return Ok(StateFormula::not(self.unary()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<StateFormula, ParseError> {
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let inner = self.state()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(word) => {
                if word == "P" && matches!(self.peek_at(1), Tok::Cmp(_)) {
                    return self.prob();
                }
                self.bump();
                Ok(match word.as_str() {
                    "true" => StateFormula::True,
                    "false" => StateFormula::not(StateFormula::True),
                    _ => StateFormula::Action(word),
                })
            }
            _ => Err(self.error("a state formula")),
        }
    }

    fn prob(&mut self) -> Result<StateFormula, ParseError> {
        self.bump(); // P
        let Tok::Cmp(cmp) = self.bump() else {
            unreachable!("checked by caller")
        };
        let at = self.offset();
        let threshold = match self.bump() {
            Tok::Number(text) => text.parse::<f64>().map_err(|_| ParseError {
                position: at,
                kind: ParseErrorKind::BadNumber(text.clone()),
            })?,
            other => {
                return Err(ParseError {
                    position: at,
                    kind: ParseErrorKind::Unexpected {
                        expected: "a probability threshold".into(),
                        found: other.describe(),
                    },
                })
            }
        };
        if !(0.0..=1.0).contains(&threshold) {
            return Err(ParseError {
                position: at,
                kind: ParseErrorKind::ThresholdOutOfRange(threshold),
            });
        }
        self.expect(Tok::LBracket, "`[`")?;
        let path = self.path()?;
        self.expect(Tok::RBracket, "`]`")?;
        Ok(StateFormula::prob(cmp, threshold, path))
    }

    /// `true` when the token after the current keyword starts an operand rather
    /// than an until (`X U b` reads `X` as an atom).
    fn keyword_applies(&self) -> bool {
        !self.is_ident(1, "U")
    }

    fn path(&mut self) -> Result<PathFormula, ParseError> {
        if self.is_ident(0, "X") && self.keyword_applies() {
            self.bump();
            return Ok(PathFormula::Next(self.state()?));
        }
        if (self.is_ident(0, "F") || self.is_ident(0, "G")) && self.keyword_applies() {
            let eventually = self.is_ident(0, "F");
            self.bump();
            let bound = self.bound()?;
            let body = self.state()?;
            return Ok(if eventually {
                PathFormula::Eventually { bound, body }
            } else {
                PathFormula::Always { bound, body }
            });
        }
        let left = self.state()?;
        if !self.is_ident(0, "U") {
            return Err(self.error("`U`"));
        }
        self.bump();
        let bound = self.bound()?;
        let right = self.state()?;
        Ok(PathFormula::Until { left, bound, right })
    }

    fn bound(&mut self) -> Result<Bound, ParseError> {
        if *self.peek() != Tok::Cmp(Comparator::Le) {
            return Ok(Bound::Unbounded);
        }
        self.bump();
        let at = self.offset();
        match self.bump() {
            Tok::Number(text) => match text.parse::<u64>() {
                Ok(k) => Ok(Bound::Steps(k)),
                Err(_) => Err(ParseError {
                    position: at,
                    kind: ParseErrorKind::InvalidBound(text),
                }),
            },
            other => Err(ParseError {
                position: at,
                kind: ParseErrorKind::Unexpected {
                    expected: "a step bound".into(),
                    found: other.describe(),
                },
            }),
        }
    }
}

/// Parses a formula without removing `F`/`G` sugar.
pub fn parse_formula_raw(text: &str) -> Result<StateFormula, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let f = p.state()?;
    if *p.peek() != Tok::Eof {
        return Err(p.error("end of input"));
    }
    Ok(f)
}

/// Parses a formula and rewrites derived operators into the core syntax.
pub fn parse_formula(text: &str) -> Result<StateFormula, ParseError> {
    parse_formula_raw(text).map(|f| super::rewrite_derived(&f))
}

/// Parses a formula file: one formula per line, `#` starts a comment.
pub fn parse_formula_lines(text: &str) -> Result<Vec<StateFormula>, (usize, ParseError)> {
    text.lines()
        .enumerate()
        .filter_map(|(n, line)| {
            let code = line.split('#').next().unwrap_or("").trim();
            (!code.is_empty()).then(|| parse_formula(code).map_err(|e| (n + 1, e)))
        })
        .collect()
}
