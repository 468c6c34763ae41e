//! Recursive-descent parser for model components.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! sum      := product (('+' | '-') product)*
//! product  := unary (('*' | '/') unary)*
//! unary    := '-' unary | power
//! power    := primary ('^' exponent)?
//! exponent := '-' exponent | power
//! primary  := number | 'a'<k> | 'x'<k> | 't' | func '(' sum ')' | '(' sum ')'
//! ```

use super::ast::{BinOp, Expr, Func};
use super::ExprError;

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn tokenize(src: &str, offset: usize) -> Result<Vec<(usize, Token)>, ExprError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let pos = offset + i;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '+' => tokens.push((pos, Token::Plus)),
            '-' => tokens.push((pos, Token::Minus)),
            '*' => tokens.push((pos, Token::Star)),
            '/' => tokens.push((pos, Token::Slash)),
            '^' => tokens.push((pos, Token::Caret)),
            '(' => tokens.push((pos, Token::LParen)),
            ')' => tokens.push((pos, Token::RParen)),
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
                    position: pos,
                    message: format!("malformed number `{text}`"),
                })?;
                tokens.push((pos, Token::Num(value)));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                tokens.push((pos, Token::Ident(src[start..i].to_string())));
                continue;
            }
            other => {
                return Err(ExprError::Syntax {
                    position: pos,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
        i += 1;
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    cursor: usize,
    end: usize,
    param_count: usize,
    state_dim: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.cursor).map(|(_, t)| t)
    }

    fn position(&self) -> usize {
        self.tokens.get(self.cursor).map_or(self.end, |(p, _)| *p)
    }

    fn bump(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.cursor).map(|(_, t)| t.clone());
        self.cursor += 1;
        tok
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            position: self.position(),
            message: message.into(),
        })
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Some(Token::Plus) => BinOp::Add,
                Some(Token::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.product()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Token::Star) => BinOp::Mul,
                Some(Token::Slash) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(&Token::Minus) {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if self.peek() == Some(&Token::Caret) {
            self.bump();
            let exponent = self.exponent()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(&Token::Minus) {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.exponent()?)));
        }
        self.power()
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let position = self.position();
        match self.bump() {
            Some(Token::Num(v)) => Ok(Expr::Num(v)),
            Some(Token::LParen) => {
                let inner = self.sum()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some(Token::Ident(name)) => self.identifier(&name, position),
            Some(other) => Err(ExprError::Syntax {
                position,
                message: format!("unexpected token {other:?}"),
            }),
            None => Err(ExprError::Syntax {
                position,
                message: "unexpected end of expression".into(),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        match self.peek() {
            Some(Token::RParen) => {
                self.bump();
                Ok(())
            }
            _ => self.syntax("expected `)`"),
        }
    }

    fn identifier(&mut self, name: &str, position: usize) -> Result<Expr, ExprError> {
        if let Some(func) = Func::from_name(name) {
            if self.peek() != Some(&Token::LParen) {
                return self.syntax(format!("expected `(` after `{name}`"));
            }
            self.bump();
            let arg = self.sum()?;
            self.expect_rparen()?;
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        if name == "t" {
            return Ok(Expr::Time);
        }
        let undeclared = || ExprError::UndeclaredSymbol {
            name: name.to_string(),
            position,
        };
        let (kind, digits) = name.split_at(1);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
            return Err(undeclared());
        }
        let index: usize = digits.parse().map_err(|_| undeclared())?;
        match kind {
            "a" if index <= self.param_count => Ok(Expr::Param(index - 1)),
            "x" if index <= self.state_dim => Ok(Expr::State(index - 1)),
            _ => Err(undeclared()),
        }
    }
}

/// Parses one component that starts at byte `offset` of the full model text.
pub(crate) fn parse_component(
    src: &str,
    offset: usize,
    param_count: usize,
    state_dim: usize,
) -> Result<Expr, ExprError> {
    let tokens = tokenize(src, offset)?;
    let mut parser = Parser {
        tokens,
        cursor: 0,
        end: offset + src.len(),
        param_count,
        state_dim,
    };
    let expr = parser.sum()?;
    if parser.cursor < parser.tokens.len() {
        return parser.syntax("unexpected trailing input");
    }
    Ok(expr)
}
