//! Text format for expressions: recursive-descent parser and pretty-printer.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := unary (("*" | "(*)" | "(/)") unary)*
//! unary  := "-" unary | factor
//! factor := atom ("^" "-"? number)?
//! atom   := number | ident | call | "(" expr ")"
//! call   := ("sin" | "cos" | "ln" | "exp" | "max0" | "step" | "sum" | "dot")
//!           "(" expr ("," expr)? ")"
//! ```
//!
//! `*` multiplies scalars (a scalar against a vector is broadcast); `(*)`
//! and `(/)` are the element-wise vector product and quotient, with `⊗` and
//! `⊘` accepted as aliases. Precedence is `^`, then unary minus, then the
//! multiplicative operators, then `+`/`-`, all left-associative. Identifiers
//! default to scalars; vector variables are declared out of band (see
//! [`VarDecls`]). There are no vector literals and no scalar `/`; write a
//! reciprocal as `^-1`.
//!
//! Broadcasting is invisible in the text form: printing inserts nothing for
//! a `ScalarExpand` node and re-parsing re-inserts it, so print → parse is
//! the identity on parser-reachable trees.

use std::collections::BTreeMap;
use std::fmt;

use crate::expr::{BuildError, Expr, ExprKind, Shape};

/// Variable shape declarations for parsing. Undeclared names are scalars.
#[derive(Debug, Clone, Default)]
pub struct VarDecls {
    vectors: BTreeMap<String, usize>,
}

impl VarDecls {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare_vector(&mut self, name: impl Into<String>, len: usize) -> &mut Self {
        self.vectors.insert(name.into(), len);
        self
    }

    pub fn shape_of(&self, name: &str) -> Shape {
        match self.vectors.get(name) {
            Some(n) => Shape::Vector(*n),
            None => Shape::Scalar,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    UnknownFunction,
    Shape,
}

/// Parse failure with a 1-based character position into the source text.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub position: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ParseErrorKind::Syntax => "syntax error",
            ParseErrorKind::UnknownFunction => "unknown function",
            ParseErrorKind::Shape => "shape error",
        };
        write!(f, "{what} at {}: {}", self.position, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Hadamard,
    HadamardDiv,
    Caret,
    LParen,
    RParen,
    Comma,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "`{v}`"),
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Plus => write!(f, "`+`"),
            Tok::Minus => write!(f, "`-`"),
            Tok::Star => write!(f, "`*`"),
            Tok::Hadamard => write!(f, "`(*)`"),
            Tok::HadamardDiv => write!(f, "`(/)`"),
            Tok::Caret => write!(f, "`^`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

fn syntax(position: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        kind: ParseErrorKind::Syntax,
        position,
        message: message.into(),
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = i + 1;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push((Tok::Plus, pos));
                i += 1;
            }
            '-' => {
                out.push((Tok::Minus, pos));
                i += 1;
            }
            '*' => {
                out.push((Tok::Star, pos));
                i += 1;
            }
            '⊗' => {
                out.push((Tok::Hadamard, pos));
                i += 1;
            }
            '⊘' => {
                out.push((Tok::HadamardDiv, pos));
                i += 1;
            }
            '^' => {
                out.push((Tok::Caret, pos));
                i += 1;
            }
            ')' => {
                out.push((Tok::RParen, pos));
                i += 1;
            }
            ',' => {
                out.push((Tok::Comma, pos));
                i += 1;
            }
            '(' => {
                if i + 2 < chars.len() && chars[i + 2] == ')' && chars[i + 1] == '*' {
                    out.push((Tok::Hadamard, pos));
                    i += 3;
                } else if i + 2 < chars.len() && chars[i + 2] == ')' && chars[i + 1] == '/' {
                    out.push((Tok::HadamardDiv, pos));
                    i += 3;
                } else {
                    out.push((Tok::LParen, pos));
                    i += 1;
                }
            }
            '0'..='9' => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if i < chars.len() && chars[i] == '.' {
                    i += 1;
                    if i >= chars.len() || !chars[i].is_ascii_digit() {
                        return Err(syntax(i + 1, "expected digits after decimal point"));
                    }
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v = text
                    .parse::<f64>()
                    .map_err(|_| syntax(start + 1, format!("bad number `{text}`")))?;
                out.push((Tok::Num(v), start + 1));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                out.push((Tok::Ident(text), start + 1));
            }
            other => return Err(syntax(pos, format!("unexpected character `{other}`"))),
        }
    }
    out.push((Tok::Eof, chars.len() + 1));
    Ok(out)
}

const FUNCTIONS: &[&str] = &["sin", "cos", "ln", "exp", "max0", "step", "sum", "dot"];

struct Parser<'a> {
    tokens: Vec<(Tok, usize)>,
    i: usize,
    decls: &'a VarDecls,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.tokens[self.i].0
    }

    fn pos(&self) -> usize {
        self.tokens[self.i].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.i].0.clone();
        if self.i + 1 < self.tokens.len() {
            self.i += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(syntax(
                self.pos(),
                format!("expected {tok}, found {}", self.peek()),
            ))
        }
    }

    fn shape_err(&self, pos: usize, err: BuildError) -> ParseError {
        ParseError {
            kind: ParseErrorKind::Shape,
            position: pos,
            message: err.to_string(),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let pos = self.pos();
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::add(lhs, rhs).map_err(|e| self.shape_err(pos, e))?;
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::sub(lhs, rhs).map_err(|e| self.shape_err(pos, e))?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let pos = self.pos();
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Expr::mul(lhs, rhs).map_err(|e| self.shape_err(pos, e))?;
                }
                Tok::Hadamard => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Expr::hadamard(lhs, rhs).map_err(|e| self.shape_err(pos, e))?;
                }
                Tok::HadamardDiv => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Expr::hadamard_div(lhs, rhs).map_err(|e| self.shape_err(pos, e))?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::neg(inner));
        }
        self.factor()
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            let pos = self.pos();
            self.bump();
            let mut sign = 1.0;
            if *self.peek() == Tok::Minus {
                self.bump();
                sign = -1.0;
            }
            let exponent = match self.bump() {
                Tok::Num(v) => sign * v,
                other => {
                    return Err(syntax(
                        pos,
                        format!("expected number after `^`, found {other}"),
                    ))
                }
            };
            return Expr::pow(base, exponent).map_err(|e| self.shape_err(pos, e));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::constant(v)),
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    if !FUNCTIONS.contains(&name.as_str()) {
                        return Err(ParseError {
                            kind: ParseErrorKind::UnknownFunction,
                            position: pos,
                            message: format!("unknown function `{name}`"),
                        });
                    }
                    return self.call(&name, pos);
                }
                match self.decls.shape_of(&name) {
                    Shape::Scalar => Ok(Expr::scalar_var(name)),
                    Shape::Vector(n) => {
                        Expr::vector_var(name, n).map_err(|e| self.shape_err(pos, e))
                    }
                }
            }
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            other => Err(syntax(pos, format!("expected expression, found {other}"))),
        }
    }

    fn call(&mut self, name: &str, pos: usize) -> Result<Expr, ParseError> {
        self.expect(Tok::LParen)?;
        let first = self.expr()?;
        let second = if *self.peek() == Tok::Comma {
            self.bump();
            Some(self.expr()?)
        } else {
            None
        };
        self.expect(Tok::RParen)?;
        let arity_err = |want: &str| syntax(pos, format!("`{name}` expects {want}"));
        match (name, second) {
            ("dot", Some(b)) => Expr::dot(first, b).map_err(|e| self.shape_err(pos, e)),
            ("dot", None) => Err(arity_err("2 arguments")),
            (_, Some(_)) => Err(arity_err("1 argument")),
            ("sin", None) => Ok(Expr::sin(first)),
            ("cos", None) => Ok(Expr::cos(first)),
            ("ln", None) => Ok(Expr::ln(first)),
            ("exp", None) => Ok(Expr::exp(first)),
            ("max0", None) => Ok(Expr::max0(first)),
            ("step", None) => Ok(Expr::step(first)),
            ("sum", None) => Expr::sum(first).map_err(|e| self.shape_err(pos, e)),
            _ => unreachable!("function list checked"),
        }
    }
}

/// Parse `src` into an expression, resolving identifier shapes via `decls`.
pub fn parse(src: &str, decls: &VarDecls) -> Result<Expr, ParseError> {
    let tokens = lex(src)?;
    let mut parser = Parser {
        tokens,
        i: 0,
        decls,
    };
    let e = parser.expr()?;
    if *parser.peek() != Tok::Eof {
        return Err(syntax(
            parser.pos(),
            format!("unexpected {} after expression", parser.peek()),
        ));
    }
    Ok(e)
}

// Precedence levels used by the printer; higher binds tighter.
const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn fmt_f64(v: f64) -> String {
    // Shortest representation that round-trips.
    format!("{v}")
}

fn print_into(e: &Expr, min_prec: u8, out: &mut String) {
    let prec = match e.kind() {
        ExprKind::Add(..) | ExprKind::Sub(..) => PREC_ADD,
        ExprKind::MulScalar(..) | ExprKind::Hadamard(..) | ExprKind::HadamardDiv(..) => PREC_MUL,
        ExprKind::Neg(_) => PREC_NEG,
        ExprKind::Pow(..) => PREC_POW,
        ExprKind::ScalarExpand(inner, _) => {
            // Broadcasting is implicit in the text form.
            print_into(inner, min_prec, out);
            return;
        }
        _ => PREC_ATOM,
    };
    let parens = prec < min_prec;
    if parens {
        out.push('(');
    }
    match e.kind() {
        ExprKind::Var(name, _) => out.push_str(name),
        ExprKind::Const(v) => out.push_str(&fmt_f64(*v)),
        ExprKind::ConstVec(vs) => {
            // Display-only: vector literals have no source syntax.
            out.push('[');
            for (i, v) in vs.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&fmt_f64(*v));
            }
            out.push(']');
        }
        ExprKind::Add(a, b) => {
            print_into(a, PREC_ADD, out);
            out.push_str(" + ");
            print_into(b, PREC_ADD + 1, out);
        }
        ExprKind::Sub(a, b) => {
            print_into(a, PREC_ADD, out);
            out.push_str(" - ");
            print_into(b, PREC_ADD + 1, out);
        }
        ExprKind::MulScalar(a, b) => {
            print_into(a, PREC_MUL, out);
            out.push_str(" * ");
            print_into(b, PREC_MUL + 1, out);
        }
        ExprKind::Hadamard(a, b) => {
            // A broadcast scalar side prints bare, so `*` is the right
            // operator symbol whenever either side is an expansion.
            let op = if matches!(a.kind(), ExprKind::ScalarExpand(..))
                || matches!(b.kind(), ExprKind::ScalarExpand(..))
            {
                " * "
            } else {
                " (*) "
            };
            print_into(a, PREC_MUL, out);
            out.push_str(op);
            print_into(b, PREC_MUL + 1, out);
        }
        ExprKind::HadamardDiv(a, b) => {
            print_into(a, PREC_MUL, out);
            out.push_str(" (/) ");
            print_into(b, PREC_MUL + 1, out);
        }
        ExprKind::Neg(u) => {
            out.push('-');
            print_into(u, PREC_NEG + 1, out);
        }
        ExprKind::Pow(base, k) => {
            print_into(base, PREC_ATOM, out);
            out.push('^');
            out.push_str(&fmt_f64(*k));
        }
        ExprKind::Sin(u) => print_call("sin", u, out),
        ExprKind::Cos(u) => print_call("cos", u, out),
        ExprKind::Ln(u) => print_call("ln", u, out),
        ExprKind::Exp(u) => print_call("exp", u, out),
        ExprKind::Max0(u) => print_call("max0", u, out),
        ExprKind::Step(u) => print_call("step", u, out),
        ExprKind::Sum(u) => print_call("sum", u, out),
        ExprKind::Dot(a, b) => {
            out.push_str("dot(");
            print_into(a, 0, out);
            out.push_str(", ");
            print_into(b, 0, out);
            out.push(')');
        }
        ExprKind::ScalarExpand(..) => unreachable!("handled above"),
    }
    if parens {
        out.push(')');
    }
}

fn print_call(name: &str, arg: &Expr, out: &mut String) {
    out.push_str(name);
    out.push('(');
    print_into(arg, 0, out);
    out.push(')');
}

/// Render an expression with minimal parentheses. Re-parsing the output
/// (with the same vector declarations) rebuilds a structurally equal tree.
pub fn pretty_print(e: &Expr) -> String {
    let mut out = String::new();
    print_into(e, 0, &mut out);
    out
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty_print(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalars() -> VarDecls {
        VarDecls::new()
    }

    fn wx3() -> VarDecls {
        let mut d = VarDecls::new();
        d.declare_vector("w", 3).declare_vector("x", 3);
        d
    }

    #[test]
    fn structure_of_products() {
        let e = parse("3*x^2*y", &scalars()).unwrap();
        // ((3 * x^2) * y), left-associative
        match e.kind() {
            ExprKind::MulScalar(l, r) => {
                assert!(matches!(r.kind(), ExprKind::Var(n, _) if n == "y"));
                match l.kind() {
                    ExprKind::MulScalar(c, p) => {
                        assert!(c.is_const(3.0));
                        assert!(matches!(p.kind(), ExprKind::Pow(_, k) if *k == 2.0));
                    }
                    _ => panic!("expected nested product"),
                }
            }
            _ => panic!("expected product"),
        }
    }

    #[test]
    fn neuron_affine_parses() {
        let d = wx3();
        let e = parse("sum(w (*) x) + b", &d).unwrap();
        assert_eq!(e.shape(), Shape::Scalar);
        match e.kind() {
            ExprKind::Add(s, b) => {
                assert!(matches!(s.kind(), ExprKind::Sum(_)));
                assert!(matches!(b.kind(), ExprKind::Var(n, Shape::Scalar) if n == "b"));
            }
            _ => panic!("expected Add"),
        }
    }

    #[test]
    fn unbalanced_paren_reports_end_of_input() {
        let err = parse("sin(x^2", &scalars()).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Syntax);
        assert_eq!(err.position, 8);
    }

    #[test]
    fn error_positions_are_leftmost() {
        let err = parse("x + + y", &scalars()).unwrap_err();
        assert_eq!(err.position, 5);
        let err = parse("", &scalars()).unwrap_err();
        assert_eq!(err.position, 1);
    }

    #[test]
    fn unknown_function() {
        let err = parse("tan(x)", &scalars()).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownFunction);
    }

    #[test]
    fn shape_errors_propagate_from_build() {
        let mut d = VarDecls::new();
        d.declare_vector("w", 2).declare_vector("x", 3);
        let err = parse("w (*) x", &d).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Shape);
        let err = parse("dot(a, b)", &scalars()).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Shape);
    }

    #[test]
    fn unicode_aliases() {
        let d = wx3();
        let a = parse("w ⊗ x", &d).unwrap();
        let b = parse("w (*) x", &d).unwrap();
        assert_eq!(a, b);
        let a = parse("w ⊘ x", &d).unwrap();
        let b = parse("w (/) x", &d).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn power_binds_tighter_than_unary_minus() {
        let e = parse("-x^2", &scalars()).unwrap();
        assert!(matches!(e.kind(), ExprKind::Neg(inner)
            if matches!(inner.kind(), ExprKind::Pow(..))));
        let e = parse("(-x)^2", &scalars()).unwrap();
        assert!(matches!(e.kind(), ExprKind::Pow(inner, _)
            if matches!(inner.kind(), ExprKind::Neg(_))));
    }

    #[test]
    fn negative_exponents() {
        let e = parse("x^-1", &scalars()).unwrap();
        assert!(matches!(e.kind(), ExprKind::Pow(_, k) if *k == -1.0));
        assert_eq!(pretty_print(&e), "x^-1");
    }

    #[test]
    fn round_trips() {
        let cases = [
            "3 * x^2 * y",
            "-(x + y)",
            "sin(x^2)",
            "x - (y - 1)",
            "x * (y * (1 + x))",
        ];
        for src in cases {
            let e = parse(src, &scalars()).unwrap();
            assert_eq!(pretty_print(&e), src);
            assert_eq!(parse(&pretty_print(&e), &scalars()).unwrap(), e);
        }
        let d = wx3();
        for src in [
            "sum(w (*) x) + b",
            "w (/) x",
            "2 * x + dot(w, x)",
            "max0(w) (*) x",
        ] {
            let e = parse(src, &d).unwrap();
            assert_eq!(pretty_print(&e), src);
            assert_eq!(parse(&pretty_print(&e), &d).unwrap(), e);
        }
    }

    #[test]
    fn broadcast_prints_transparently() {
        let d = wx3();
        let e = parse("3 * x", &d).unwrap();
        assert!(matches!(e.kind(), ExprKind::Hadamard(a, _)
            if matches!(a.kind(), ExprKind::ScalarExpand(..))));
        assert_eq!(pretty_print(&e), "3 * x");
        assert_eq!(parse(&pretty_print(&e), &d).unwrap(), e);

        let e = parse("(1 + b) (*) x", &d).unwrap();
        assert_eq!(pretty_print(&e), "(1 + b) * x");
        assert_eq!(parse(&pretty_print(&e), &d).unwrap(), e);
    }
}
