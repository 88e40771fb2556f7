//! Minimal arithmetic expression grammar for template formulas.
//!
//! Supported: `+ - * /` (the unicode forms `− × ÷` are accepted as aliases),
//! integer literals, rational literals `a/b` (equivalent to exact division),
//! parenthesized subexpressions, unary minus, parameter references by name,
//! and the fraction accessors `num(x)` / `den(x)`. All evaluation is exact
//! rational arithmetic.
//!
//! Values normalize to lowest terms, so `num`/`den` read the reduced form.
//! Every fraction domain shipped with the built-in templates is already in
//! lowest terms, which makes the stored and reduced forms identical.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::space::Value;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Literal(BigRational),
    Param(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Num(Box<Expr>),
    Den(Box<Expr>),
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Int(BigInt),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let mut chars = src.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                chars.next();
            }
            '+' => {
                chars.next();
                tokens.push(Token::Plus);
            }
            '-' | '−' => {
                chars.next();
                tokens.push(Token::Minus);
            }
            '*' | '×' | '·' => {
                chars.next();
                tokens.push(Token::Star);
            }
            '/' | '÷' => {
                chars.next();
                tokens.push(Token::Slash);
            }
            '(' => {
                chars.next();
                tokens.push(Token::LParen);
            }
            ')' => {
                chars.next();
                tokens.push(Token::RParen);
            }
            '0'..='9' => {
                let mut digits = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_digit() {
                        digits.push(d);
                        chars.next();
                    } else {
                        break;
                    }
                }
                let n: BigInt = digits
                    .parse()
                    .map_err(|_| Error::Expr(format!("bad integer literal '{digits}'")))?;
                tokens.push(Token::Int(n));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut ident = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        ident.push(d);
                        chars.next();
                    } else {
                        break;
                    }
                }
                tokens.push(Token::Ident(ident));
            }
            other => {
                return Err(Error::Expr(format!("unexpected character '{other}'")));
            }
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &Token) -> Result<()> {
        match self.bump() {
            Some(ref t) if t == want => Ok(()),
            other => Err(Error::Expr(format!("expected {want:?}, found {other:?}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(Token::Slash) => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        match self.bump() {
            Some(Token::Int(n)) => Ok(Expr::Literal(BigRational::from_integer(n))),
            Some(Token::Minus) => Ok(Expr::Neg(Box::new(self.factor()?))),
            Some(Token::LParen) => {
                let inner = self.expr()?;
                self.expect(&Token::RParen)?;
                Ok(inner)
            }
            Some(Token::Ident(name)) => {
                if self.peek() == Some(&Token::LParen) {
                    self.bump();
                    let arg = self.expr()?;
                    self.expect(&Token::RParen)?;
                    match name.as_str() {
                        "num" => Ok(Expr::Num(Box::new(arg))),
                        "den" => Ok(Expr::Den(Box::new(arg))),
                        other => Err(Error::Expr(format!("unknown function '{other}'"))),
                    }
                } else {
                    Ok(Expr::Param(name))
                }
            }
            other => Err(Error::Expr(format!("unexpected token {other:?}"))),
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expr(format!(
                "trailing tokens after expression in '{src}'"
            )));
        }
        Ok(e)
    }

    pub fn eval(&self, env: &BTreeMap<String, Value>) -> Result<BigRational> {
        match self {
            Expr::Literal(r) => Ok(r.clone()),
            Expr::Param(name) => match env.get(name) {
                Some(Value::Number(r)) => Ok(r.clone()),
                Some(Value::Text(t)) => Err(Error::Expr(format!(
                    "parameter '{name}' is text ('{t}'), not numeric"
                ))),
                None => Err(Error::Expr(format!("unknown parameter '{name}'"))),
            },
            Expr::Neg(e) => Ok(-e.eval(env)?),
            Expr::Add(a, b) => Ok(a.eval(env)? + b.eval(env)?),
            Expr::Sub(a, b) => Ok(a.eval(env)? - b.eval(env)?),
            Expr::Mul(a, b) => Ok(a.eval(env)? * b.eval(env)?),
            Expr::Div(a, b) => {
                let d = b.eval(env)?;
                if d.is_zero() {
                    return Err(Error::Expr("division by zero".into()));
                }
                Ok(a.eval(env)? / d)
            }
            Expr::Num(e) => Ok(BigRational::from_integer(e.eval(env)?.numer().clone())),
            Expr::Den(e) => Ok(BigRational::from_integer(e.eval(env)?.denom().clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, env: &[(&str, Value)]) -> Result<BigRational> {
        let env: BTreeMap<String, Value> =
            env.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        Expr::parse(src)?.eval(&env)
    }

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn precedence_and_parens() {
        assert_eq!(eval("2 + 3 * 4", &[]).unwrap(), rat(14, 1));
        assert_eq!(eval("(2 + 3) * 4", &[]).unwrap(), rat(20, 1));
        assert_eq!(eval("1/2", &[]).unwrap(), rat(1, 2));
        assert_eq!(eval("100/4 - 20", &[]).unwrap(), rat(5, 1));
        assert_eq!(eval("-3 + 5", &[]).unwrap(), rat(2, 1));
        assert_eq!(eval("10 - 2 - 3", &[]).unwrap(), rat(5, 1));
    }

    #[test]
    fn unicode_operators() {
        assert_eq!(eval("3 × 4", &[]).unwrap(), rat(12, 1));
        assert_eq!(eval("12 ÷ 4", &[]).unwrap(), rat(3, 1));
        assert_eq!(eval("7 − 2", &[]).unwrap(), rat(5, 1));
    }

    #[test]
    fn params_and_fraction_accessors() {
        let frac = Value::rational(2, 7);
        assert_eq!(eval("num(f)", &[("f", frac.clone())]).unwrap(), rat(2, 1));
        assert_eq!(eval("den(f)", &[("f", frac.clone())]).unwrap(), rat(7, 1));
        assert_eq!(
            eval("k * den(f)", &[("f", frac), ("k", Value::integer(12))]).unwrap(),
            rat(84, 1)
        );
    }

    #[test]
    fn errors() {
        assert!(eval("1 / 0", &[]).is_err());
        assert!(eval("missing + 1", &[]).is_err());
        assert!(eval("name + 1", &[("name", Value::Text("Benny".into()))]).is_err());
        assert!(Expr::parse("2 +").is_err());
        assert!(Expr::parse("frob(2)").is_err());
        assert!(Expr::parse("2 3").is_err());
        assert!(Expr::parse("$x").is_err());
    }

    #[test]
    fn exact_rationals() {
        // (d - 1) / d * 100 - 25 at d = 8: 87.5 - 25 = 62.5 = 125/2.
        assert_eq!(
            eval("(d - 1) / d * 100 - 25", &[("d", Value::integer(8))]).unwrap(),
            rat(125, 2)
        );
    }
}
