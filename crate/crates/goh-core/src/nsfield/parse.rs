//! Recursive-descent parser for the expression grammar:
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := base ('^' integer)?
//! base   := number | ident | '(' expr ')' | ('abs'|'min'|'max'|'-') '(' args ')'
//! ```
//!
//! Identifiers: `t`, `s`, `w0`, `x1..xn`, `u1..um`, `a1..aq`. `min`/`max` are
//! desugared to `abs` right here, so the rest of the crate sees one kink kind.

use super::{Dims, Expr, ParseError, Var};

#[derive(Clone, Debug, PartialEq)]
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

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut lx = Lexer {
            src: src.as_bytes(),
            pos: 0,
        };
        let mut out = Vec::new();
        while let Some((tok, at)) = lx.next_token()? {
            out.push((tok, at));
        }
        Ok(out)
    }

    fn next_token(&mut self) -> Result<Option<(Tok, usize)>, ParseError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let at = self.pos;
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'-' => {
                self.pos += 1;
                Tok::Minus
            }
            b'*' => {
                self.pos += 1;
                Tok::Star
            }
            b'/' => {
                self.pos += 1;
                Tok::Slash
            }
            b'^' => {
                self.pos += 1;
                Tok::Caret
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b',' => {
                self.pos += 1;
                Tok::Comma
            }
            b'0'..=b'9' | b'.' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
                {
                    self.pos += 1;
                }
                // Optional exponent part.
                if self.pos < self.src.len()
                    && (self.src[self.pos] == b'e' || self.src[self.pos] == b'E')
                {
                    let mut probe = self.pos + 1;
                    if probe < self.src.len()
                        && (self.src[probe] == b'+' || self.src[probe] == b'-')
                    {
                        probe += 1;
                    }
                    if probe < self.src.len() && self.src[probe].is_ascii_digit() {
                        self.pos = probe;
                        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                            self.pos += 1;
                        }
                    }
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    pos: start + 1,
                    msg: format!("malformed number `{text}`"),
                })?;
                Tok::Num(value)
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                Tok::Ident(
                    std::str::from_utf8(&self.src[start..self.pos])
                        .unwrap()
                        .to_string(),
                )
            }
            other => {
                return Err(ParseError::Syntax {
                    pos: at + 1,
                    msg: format!("unexpected character `{}`", other as char),
                })
            }
        };
        Ok(Some((tok, at)))
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    idx: usize,
    end: usize,
    dims: Dims,
}

/// Parse `text` against the declared dimensions.
pub fn parse_expr(text: &str, dims: Dims) -> Result<Expr, ParseError> {
    let toks = Lexer::tokens(text)?;
    let mut p = Parser {
        toks,
        idx: 0,
        end: text.len(),
        dims,
    };
    let e = p.expr()?;
    if let Some((_, at)) = p.peek_at() {
        return Err(ParseError::Syntax {
            pos: at + 1,
            msg: "trailing input".into(),
        });
    }
    Ok(e)
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|(t, _)| t)
    }

    fn peek_at(&self) -> Option<(&Tok, usize)> {
        self.toks.get(self.idx).map(|(t, a)| (t, *a))
    }

    /// 1-based position of the current token (or end of input).
    fn here(&self) -> usize {
        self.toks.get(self.idx).map(|(_, a)| *a).unwrap_or(self.end) + 1
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.idx).map(|(t, _)| t.clone());
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        let at = self.here();
        match self.bump() {
            Some(t) if t == want => Ok(()),
            _ => Err(ParseError::Syntax {
                pos: at,
                msg: format!("expected {what}"),
            }),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    acc = acc.add(self.term()?);
                }
                Some(Tok::Minus) => {
                    self.bump();
                    acc = acc.sub(self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    acc = acc.mul(self.factor()?);
                }
                Some(Tok::Slash) => {
                    self.bump();
                    acc = acc.div(self.factor()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.base()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.bump();
            let at = self.here();
            let negate = if matches!(self.peek(), Some(Tok::Minus)) {
                self.bump();
                true
            } else {
                false
            };
            match self.bump() {
                Some(Tok::Num(v)) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => {
                    let k = v as i32;
                    Ok(base.pow(if negate { -k } else { k }))
                }
                _ => Err(ParseError::NonIntegerExponent { pos: at }),
            }
        } else {
            Ok(base)
        }
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        let at = self.here();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::Const(v)),
            Some(Tok::Ident(name)) => match name.as_str() {
                "abs" | "min" | "max" => {
                    let args = self.args(&name)?;
                    self.call(&name, args, at)
                }
                _ => self.ident(&name, at),
            },
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Minus) => {
                let args = self.args("-")?;
                self.call("-", args, at)
            }
            _ => Err(ParseError::Syntax {
                pos: at,
                msg: "expected number, identifier, `(`, or function".into(),
            }),
        }
    }

    fn args(&mut self, name: &str) -> Result<Vec<Expr>, ParseError> {
        self.expect(Tok::LParen, &format!("`(` after `{name}`"))?;
        let mut out = vec![self.expr()?];
        while matches!(self.peek(), Some(Tok::Comma)) {
            self.bump();
            out.push(self.expr()?);
        }
        self.expect(Tok::RParen, "`)`")?;
        Ok(out)
    }

    fn call(&mut self, name: &str, mut args: Vec<Expr>, at: usize) -> Result<Expr, ParseError> {
        let expected = match name {
            "abs" | "-" => 1,
            "min" | "max" => 2,
            _ => unreachable!(),
        };
        if args.len() != expected {
            return Err(ParseError::WrongArity {
                pos: at,
                name: name.to_string(),
                expected,
                got: args.len(),
            });
        }
        Ok(match name {
            "abs" => args.remove(0).abs(),
            "-" => args.remove(0).neg(),
            // min(a,b) = (a + b - |a - b|) / 2; max dually. One kink kind.
            "min" | "max" => {
                let b = args.remove(1);
                let a = args.remove(0);
                let spread = a.clone().sub(b.clone()).abs();
                let sum = a.add(b);
                let inner = if name == "min" {
                    sum.sub(spread)
                } else {
                    sum.add(spread)
                };
                inner.div(Expr::Const(2.0))
            }
            _ => unreachable!(),
        })
    }

    fn ident(&mut self, name: &str, at: usize) -> Result<Expr, ParseError> {
        let var = match name {
            "t" => Some(Var::T),
            "s" => Some(Var::S),
            "w0" => Some(Var::W0),
            _ => {
                let (kind, rest) = name.split_at(1);
                match (kind, rest.parse::<usize>()) {
                    ("x", Ok(i)) if i >= 1 => Some(Var::X(i - 1)),
                    ("u", Ok(i)) if i >= 1 => Some(Var::U(i - 1)),
                    ("a", Ok(i)) if i >= 1 => Some(Var::A(i - 1)),
                    _ => None,
                }
            }
        };
        match var {
            Some(v) if self.dims.contains(v) => Ok(Expr::Var(v)),
            _ => Err(ParseError::UnknownVariable {
                pos: at,
                name: name.to_string(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d() -> Dims {
        Dims::new(2, 2, 1)
    }

    #[test]
    fn builds_expected_asts() {
        let e = parse_expr("x1 + abs(x2)", d()).unwrap();
        assert_eq!(e, Expr::Var(Var::X(0)).add(Expr::Var(Var::X(1)).abs()));
        assert_eq!(e.abs_count(), 1);
        // Component 3 of the worked example's first field.
        let e = parse_expr("x2 - abs(x2)", d()).unwrap();
        assert_eq!(e, Expr::Var(Var::X(1)).sub(Expr::Var(Var::X(1)).abs()));
    }

    #[test]
    fn reports_error_positions() {
        // Positions are 1-based columns.
        match parse_expr("x1 +", d()) {
            Err(ParseError::Syntax { pos, .. }) => assert_eq!(pos, 5),
            other => panic!("expected syntax error, got {other:?}"),
        }
        match parse_expr("x1 + x9", d()) {
            Err(ParseError::UnknownVariable { pos, name }) => {
                assert_eq!(pos, 6);
                assert_eq!(name, "x9");
            }
            other => panic!("expected unknown variable, got {other:?}"),
        }
        match parse_expr("x1 + y", d()) {
            Err(ParseError::UnknownVariable { name, .. }) => assert_eq!(name, "y"),
            other => panic!("expected unknown variable, got {other:?}"),
        }
        assert!(matches!(
            parse_expr("x1^x2", d()),
            Err(ParseError::NonIntegerExponent { .. })
        ));
        assert!(matches!(
            parse_expr("x1^1.5", d()),
            Err(ParseError::NonIntegerExponent { .. })
        ));
        assert!(matches!(
            parse_expr("min(x1)", d()),
            Err(ParseError::WrongArity {
                expected: 2,
                got: 1,
                ..
            })
        ));
        assert!(matches!(
            parse_expr("abs(x1, x2)", d()),
            Err(ParseError::WrongArity {
                expected: 1,
                got: 2,
                ..
            })
        ));
        assert!(matches!(
            parse_expr("x1 ) x2", d()),
            Err(ParseError::Syntax { .. })
        ));
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse_expr("x1 - x2 - 1", d()).unwrap();
        assert_eq!(
            e,
            Expr::Var(Var::X(0))
                .sub(Expr::Var(Var::X(1)))
                .sub(Expr::Const(1.0))
        );
        let e = parse_expr("x1 + x2 * x1^2", d()).unwrap();
        assert_eq!(
            e,
            Expr::Var(Var::X(0)).add(Expr::Var(Var::X(1)).mul(Expr::Var(Var::X(0)).pow(2)))
        );
    }

    #[test]
    fn negative_exponent_and_unary_neg() {
        let e = parse_expr("x1^-2", d()).unwrap();
        assert_eq!(e, Expr::Var(Var::X(0)).pow(-2));
        let e = parse_expr("-(x1 + 1)", d()).unwrap();
        assert_eq!(e, Expr::Var(Var::X(0)).add(Expr::Const(1.0)).neg());
    }

    #[test]
    fn scientific_numbers() {
        let e = parse_expr("1e-3 * x1", d()).unwrap();
        assert_eq!(e, Expr::Const(1e-3).mul(Expr::Var(Var::X(0))));
    }
}
