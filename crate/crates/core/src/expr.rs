//! Tiny arithmetic expression language for custom kernels and weights.
//!
//! Grammar: `+ - * / ^`, `log` (natural), `exp`, `max`, `min`, numeric
//! literals, and the variables `x` and `y`. `^` binds tighter than unary
//! minus and is right-associative.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Y,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Log(Box<Expr>),
    Exp(Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0, src };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expr(format!(
                "trailing input at token {} in `{}`",
                p.pos, src
            )));
        }
        Ok(e)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X => x,
            Expr::Y => y,
            Expr::Add(a, b) => a.eval(x, y) + b.eval(x, y),
            Expr::Sub(a, b) => a.eval(x, y) - b.eval(x, y),
            Expr::Mul(a, b) => a.eval(x, y) * b.eval(x, y),
            Expr::Div(a, b) => a.eval(x, y) / b.eval(x, y),
            Expr::Pow(a, b) => a.eval(x, y).powf(b.eval(x, y)),
            Expr::Neg(a) => -a.eval(x, y),
            Expr::Log(a) => a.eval(x, y).ln(),
            Expr::Exp(a) => a.eval(x, y).exp(),
            Expr::Max(a, b) => a.eval(x, y).max(b.eval(x, y)),
            Expr::Min(a, b) => a.eval(x, y).min(b.eval(x, y)),
        }
    }

    /// True if the expression never references `y`.
    pub fn is_univariate(&self) -> bool {
        match self {
            Expr::Y => false,
            Expr::Num(_) | Expr::X => true,
            Expr::Neg(a) | Expr::Log(a) | Expr::Exp(a) => a.is_univariate(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b)
            | Expr::Max(a, b)
            | Expr::Min(a, b) => a.is_univariate() && b.is_univariate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                out.push(Tok::Minus);
                i += 1;
            }
            '*' => {
                out.push(Tok::Star);
                i += 1;
            }
            '/' => {
                out.push(Tok::Slash);
                i += 1;
            }
            '^' => {
                out.push(Tok::Caret);
                i += 1;
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            ',' => {
                out.push(Tok::Comma);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() {
                    let d = bytes[i] as char;
                    if d.is_ascii_digit() || d == '.' {
                        i += 1;
                    } else if (d == 'e' || d == 'E')
                        && i + 1 < bytes.len()
                        && ((bytes[i + 1] as char).is_ascii_digit()
                            || bytes[i + 1] == b'+'
                            || bytes[i + 1] == b'-')
                    {
                        i += 2;
                    } else {
                        break;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| Error::Expr(format!("bad number `{text}` in `{src}`")))?;
                out.push(Tok::Num(v));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push(Tok::Ident(src[start..i].to_string()));
            }
            _ => return Err(Error::Expr(format!("unexpected character `{c}` in `{src}`"))),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Tok>,
    pos: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok) -> Result<()> {
        match self.bump() {
            Some(got) if got == t => Ok(()),
            got => Err(Error::Expr(format!(
                "expected {t:?}, found {got:?} in `{}`",
                self.src
            ))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some(Tok::Minus) = self.peek() {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Tok::Caret) = self.peek() {
            self.bump();
            // right-associative, exponent may carry its own unary minus
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => match name.as_str() {
                "x" => Ok(Expr::X),
                "y" => Ok(Expr::Y),
                "log" | "ln" => Ok(Expr::Log(Box::new(self.paren_arg()?))),
                "exp" => Ok(Expr::Exp(Box::new(self.paren_arg()?))),
                "max" => {
                    let (a, b) = self.paren_args2()?;
                    Ok(Expr::Max(Box::new(a), Box::new(b)))
                }
                "min" => {
                    let (a, b) = self.paren_args2()?;
                    Ok(Expr::Min(Box::new(a), Box::new(b)))
                }
                other => Err(Error::Expr(format!(
                    "unknown identifier `{other}` in `{}`",
                    self.src
                ))),
            },
            got => Err(Error::Expr(format!(
                "unexpected token {got:?} in `{}`",
                self.src
            ))),
        }
    }

    fn paren_arg(&mut self) -> Result<Expr> {
        self.expect(Tok::LParen)?;
        let e = self.expr()?;
        self.expect(Tok::RParen)?;
        Ok(e)
    }

    fn paren_args2(&mut self) -> Result<(Expr, Expr)> {
        self.expect(Tok::LParen)?;
        let a = self.expr()?;
        self.expect(Tok::Comma)?;
        let b = self.expr()?;
        self.expect(Tok::RParen)?;
        Ok((a, b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn arithmetic_and_precedence() {
        let e = Expr::parse("x*y + x + y").unwrap();
        assert_relative_eq!(e.eval(1.0, 2.0), 5.0);
        let e = Expr::parse("2 + 3 * 4 ^ 2").unwrap();
        assert_relative_eq!(e.eval(0.0, 0.0), 50.0);
    }

    #[test]
    fn sqrt_via_pow() {
        let e = Expr::parse("(x*y)^0.5").unwrap();
        assert_relative_eq!(e.eval(4.0, 9.0), 6.0);
    }

    #[test]
    fn functions() {
        let e = Expr::parse("max(exp(-x), min(x, y)) + log(x)").unwrap();
        assert_relative_eq!(e.eval(1.0, 2.0), (-1.0f64).exp().max(1.0) + 0.0);
    }

    #[test]
    fn unary_minus_and_pow() {
        let e = Expr::parse("-x^2").unwrap();
        assert_relative_eq!(e.eval(3.0, 0.0), -9.0);
        let e = Expr::parse("x^-1").unwrap();
        assert_relative_eq!(e.eval(4.0, 0.0), 0.25);
    }

    #[test]
    fn univariate_detection() {
        assert!(Expr::parse("x/log(x+2)").unwrap().is_univariate());
        assert!(!Expr::parse("x*y").unwrap().is_univariate());
    }

    #[test]
    fn rejects_garbage() {
        assert!(Expr::parse("x +").is_err());
        assert!(Expr::parse("foo(x)").is_err());
        assert!(Expr::parse("x ) y").is_err());
        assert!(Expr::parse("1.2.3").is_err());
    }
}
