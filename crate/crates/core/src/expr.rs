//! Arithmetic expressions over exact rationals.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('×' | '*' | '·' | '/' | '÷') unary)*
//! unary   := '-' unary | '+' unary | power
//! power   := primary ('^' unary)?        right-associative
//! primary := number | '(' sum ')'
//! number  := digits ['.' digits] | '.' digits
//! ```
//!
//! so `-2^2` is `-(2^2)` and `2^3^2` is `2^(3^2)`. The Unicode minus sign
//! is accepted for `-`. Decimals become exact fractions; nothing is ever
//! rounded through a float.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(BigRational),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

/// Fully parenthesised rendering; re-parsing it yields the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(n) if n.is_negative() => write!(f, "(-{})", Expr::Num(-n.clone())),
            Expr::Num(n) => match decimal_digits(n) {
                Some(s) => f.write_str(&s),
                None => write!(f, "({}/{})", n.numer(), n.denom()),
            },
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
        }
    }
}

/// Terminating decimal rendering of a nonnegative rational, if it has one.
fn decimal_digits(n: &BigRational) -> Option<String> {
    let ten = BigInt::from(10u8);
    let mut scale = 0usize;
    let mut pow = BigInt::one();
    while !(&pow % n.denom()).is_zero() {
        pow *= &ten;
        scale += 1;
        if scale > 400 {
            return None;
        }
    }
    let digits = (n.numer() * (&pow / n.denom())).to_string();
    if scale == 0 {
        return Some(digits);
    }
    let padded = format!("{digits:0>width$}", width = scale + 1);
    let (int, frac) = padded.split_at(padded.len() - scale);
    Some(format!("{int}.{frac}"))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("syntax error at position {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("division by zero")]
    DivisionByZero,
    #[error("exponent {exponent} exceeds the limit of {limit}")]
    ExponentOverflow { exponent: String, limit: u32 },
    #[error("exponent {exponent} is not an integer")]
    NonIntegerExponent { exponent: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigRational),
    Op(char),
    LParen,
    RParen,
}

fn syntax(pos: usize, message: impl Into<String>) -> ExprError {
    ExprError::Syntax {
        pos,
        message: message.into(),
    }
}

/// Characters that can appear inside an arithmetic expression.
pub fn is_expr_char(c: char) -> bool {
    c.is_ascii_digit()
        || c.is_whitespace()
        || matches!(
            c,
            '.' | '+' | '-' | '−' | '×' | '*' | '·' | '⋅' | '/' | '÷' | '^' | '(' | ')'
        )
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            let mut int_part = String::new();
            while i < chars.len() && chars[i].is_ascii_digit() {
                int_part.push(chars[i]);
                i += 1;
            }
            let mut frac_part = String::new();
            if i < chars.len() && chars[i] == '.' {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    frac_part.push(chars[i]);
                    i += 1;
                }
                if frac_part.is_empty() {
                    return Err(syntax(i, "expected digits after decimal point"));
                }
            }
            if i < chars.len() && chars[i] == '.' {
                return Err(syntax(i, "unexpected second decimal point"));
            }
            let digits = format!("{int_part}{frac_part}");
            let numer: BigInt = digits.parse().map_err(|_| syntax(start, "bad number"))?;
            let denom = num_traits::pow(BigInt::from(10u8), frac_part.len());
            out.push((start, Tok::Num(BigRational::new(numer, denom))));
            continue;
        }
        let tok = match c {
            '+' => Tok::Op('+'),
            '-' | '−' => Tok::Op('-'),
            '×' | '*' | '·' | '⋅' => Tok::Op('*'),
            '/' | '÷' => Tok::Op('/'),
            '^' => Tok::Op('^'),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            other => return Err(syntax(start, format!("unexpected character `{other}`"))),
        };
        out.push((start, tok));
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        while let Some(Tok::Op(op @ ('+' | '-'))) = self.peek() {
            let op = if *op == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op @ ('*' | '/'))) = self.peek() {
            let op = if *op == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let at = self.here();
        match self.toks.get(self.pos).map(|(_, t)| t.clone()) {
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(Expr::Num(n))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.sum()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err(syntax(self.here(), "expected `)`")),
                }
            }
            Some(Tok::RParen) => Err(syntax(at, "unexpected `)`")),
            Some(Tok::Op(c)) => Err(syntax(at, format!("unexpected operator `{c}`"))),
            None => Err(syntax(at, "unexpected end of expression")),
        }
    }
}

/// Parses `text` as a complete expression. Positions in errors are
/// character offsets into `text`.
pub fn parse_expression(text: &str) -> Result<Expr, ExprError> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.chars().count(),
    };
    let e = p.sum()?;
    if p.pos != p.toks.len() {
        return Err(syntax(p.here(), "unexpected trailing input"));
    }
    Ok(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    /// Largest permitted `|exponent|`.
    pub max_exponent: u32,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { max_exponent: 64 }
    }
}

pub fn eval_expression(expr: &Expr) -> Result<BigRational, ExprError> {
    eval_with(expr, &EvalOptions::default())
}

pub fn eval_with(expr: &Expr, opts: &EvalOptions) -> Result<BigRational, ExprError> {
    match expr {
        Expr::Num(n) => Ok(n.clone()),
        Expr::Neg(e) => Ok(-eval_with(e, opts)?),
        Expr::Bin(op, l, r) => {
            let a = eval_with(l, opts)?;
            let b = eval_with(r, opts)?;
            match op {
                BinOp::Add => Ok(a + b),
                BinOp::Sub => Ok(a - b),
                BinOp::Mul => Ok(a * b),
                BinOp::Div => {
                    if b.is_zero() {
                        Err(ExprError::DivisionByZero)
                    } else {
                        Ok(a / b)
                    }
                }
                BinOp::Pow => {
                    if !b.is_integer() {
                        return Err(ExprError::NonIntegerExponent {
                            exponent: b.to_string(),
                        });
                    }
                    let exp = b.to_integer();
                    let overflow = || ExprError::ExponentOverflow {
                        exponent: exp.to_string(),
                        limit: opts.max_exponent,
                    };
                    let e = exp.to_i64().ok_or_else(overflow)?;
                    if e.unsigned_abs() > u64::from(opts.max_exponent) {
                        return Err(overflow());
                    }
                    if a.is_zero() && e < 0 {
                        return Err(ExprError::DivisionByZero);
                    }
                    if e == 0 {
                        return Ok(BigRational::one());
                    }
                    Ok(num_traits::Pow::pow(&a, e as i32))
                }
            }
        }
    }
}

/// Parse and evaluate in one step.
pub fn evaluate(text: &str, opts: &EvalOptions) -> Result<BigRational, ExprError> {
    eval_with(&parse_expression(text)?, opts)
}

/// `n` or `n/d`, the form used when rationals are written into reports.
pub fn format_rational(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn int(n: i64) -> BigRational {
        BigRational::from_integer(n.into())
    }

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn ev(s: &str) -> Result<BigRational, ExprError> {
        evaluate(s, &EvalOptions::default())
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("2 + 3 × 4"), Ok(int(14)));
        // 2^(3^2) = 2^9
        assert_eq!(ev("2 ^ 3 ^ 2"), Ok(int(512)));
        assert_eq!(ev("(2 ^ 3) ^ 2"), Ok(int(64)));
        assert_eq!(ev("-2^2"), Ok(int(-4)));
        assert_eq!(ev("10 - 4 - 3"), Ok(int(3)));
        assert_eq!(ev("12 / 3 / 2"), Ok(int(2)));
        assert_eq!(ev("2^-1"), Ok(ratio(1, 2)));
        assert_eq!(ev("3 − 5"), Ok(int(-2)));
        assert_eq!(ev("8 ÷ 2 · 3"), Ok(int(12)));
    }

    #[test]
    fn exact_rationals() {
        assert_eq!(ev("(1/3) × 3"), Ok(int(1)));
        assert_eq!(ev("1/3 + 1/6"), Ok(ratio(1, 2)));
        assert_eq!(ev("0.1 + 0.2"), Ok(ratio(3, 10)));
        assert_eq!(ev(".5 * 4"), Ok(int(2)));
        assert_eq!(ev("3×10^8"), Ok(int(300_000_000)));
    }

    #[test]
    fn errors() {
        assert_eq!(ev("1 / (2 - 2)"), Err(ExprError::DivisionByZero));
        assert_eq!(ev("0 ^ -1"), Err(ExprError::DivisionByZero));
        assert!(matches!(ev("2 ^ 65"), Err(ExprError::ExponentOverflow { .. })));
        assert!(ev("2 ^ 64").is_ok());
        assert!(matches!(ev("4 ^ (1/2)"), Err(ExprError::NonIntegerExponent { .. })));
        assert_eq!(
            ev("2 + * 3"),
            Err(ExprError::Syntax {
                pos: 4,
                message: "unexpected operator `*`".into()
            })
        );
        assert!(matches!(ev("(1 + 2"), Err(ExprError::Syntax { pos: 6, .. })));
        assert!(matches!(ev("1."), Err(ExprError::Syntax { .. })));
        assert!(matches!(ev("1 2"), Err(ExprError::Syntax { pos: 2, .. })));
        assert!(matches!(ev(""), Err(ExprError::Syntax { pos: 0, .. })));
        assert!(matches!(ev("2x"), Err(ExprError::Syntax { pos: 1, .. })));
    }

    #[test]
    fn max_exponent_is_configurable() {
        let opts = EvalOptions { max_exponent: 3 };
        assert!(evaluate("2^3", &opts).is_ok());
        assert!(matches!(
            evaluate("2^4", &opts),
            Err(ExprError::ExponentOverflow { limit: 3, .. })
        ));
    }

    #[test]
    fn display_reparses_to_same_tree() {
        for s in ["-2^2", "1/3 + 0.25 * (4 - 7)", "2^3^2", "--3", "0.05 + 12.5"] {
            let e = parse_expression(s).unwrap();
            assert_eq!(parse_expression(&e.to_string()).unwrap(), e, "{s}");
        }
    }

    #[test]
    fn formats_rationals() {
        assert_eq!(format_rational(&ratio(6, 4)), "3/2");
        assert_eq!(format_rational(&int(-7)), "-7");
    }
}
