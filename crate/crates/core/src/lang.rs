//! The user constraint language: comma-separated linear comparisons over
//! `Instance.feature` references.
//!
//! ```text
//! conj := cmp ("," cmp)*
//! cmp  := sum rel sum
//! rel  := "<=" | "<" | "=" | ">=" | ">" | "!="
//! sum  := term (("+" | "-") term)*
//! term := number | number "*" ref | ref | "-" term | "(" sum ")"
//! ref  := ident "." ident
//! number := int ["." digits] | int "/" int
//! ```
//!
//! Nominal features may only be compared with `=`/`!=` against a domain
//! value (a bare identifier or a quoted string) or against the same feature
//! of another instance. Products are accepted as long as one side is a
//! constant.

use std::fmt;

use num_traits::One;
use serde::Serialize;

use crate::features::VarLayout;
use crate::linear::{normalize, parse_rat, Conjunction, LinExpr, LinearConstraint, RawRel, Rat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LangErrorKind {
    ParseError,
    UnknownInstance,
    UnknownFeature,
    Nonlinear,
    NominalMisuse,
    ValueNotInDomain,
    NumericDisequality,
}

impl LangErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LangErrorKind::ParseError => "parse_error",
            LangErrorKind::UnknownInstance => "unknown_instance",
            LangErrorKind::UnknownFeature => "unknown_feature",
            LangErrorKind::Nonlinear => "nonlinear",
            LangErrorKind::NominalMisuse => "nominal_misuse",
            LangErrorKind::ValueNotInDomain => "value_not_in_domain",
            LangErrorKind::NumericDisequality => "numeric_disequality",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub struct LangError {
    pub kind: LangErrorKind,
    pub message: String,
    pub pos: Pos,
}

impl fmt::Display for LangError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.pos.line, self.pos.column, self.message)
    }
}

fn error(kind: LangErrorKind, pos: Pos, message: impl Into<String>) -> LangError {
    LangError {
        kind,
        message: message.into(),
        pos,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Le,
    Lt,
    Eq,
    Ge,
    Gt,
    Ne,
}

impl CmpOp {
    fn raw(self) -> Option<RawRel> {
        Some(match self {
            CmpOp::Le => RawRel::Le,
            CmpOp::Lt => RawRel::Lt,
            CmpOp::Eq => RawRel::Eq,
            CmpOp::Ge => RawRel::Ge,
            CmpOp::Gt => RawRel::Gt,
            CmpOp::Ne => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Num { value: Rat, text: String, pos: Pos },
    Ref { instance: String, feature: String, pos: Pos },
    /// Bare identifier or quoted string: a nominal value.
    Symbol { text: String, pos: Pos },
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

impl Expr {
    fn pos(&self) -> Pos {
        match self {
            Expr::Num { pos, .. } | Expr::Ref { pos, .. } | Expr::Symbol { pos, .. } => *pos,
            Expr::Neg(e) => e.pos(),
            Expr::Add(a, _) | Expr::Sub(a, _) | Expr::Mul(a, _) => a.pos(),
        }
    }

    fn has_ref(&self) -> bool {
        match self {
            Expr::Ref { .. } => true,
            Expr::Num { .. } | Expr::Symbol { .. } => false,
            Expr::Neg(e) => e.has_ref(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => a.has_ref() || b.has_ref(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Comparison {
    pub lhs: Expr,
    pub op: CmpOp,
    pub rhs: Expr,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintAst {
    pub comparisons: Vec<Comparison>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Num(String),
    Ident(String),
    Str(String),
    Dot,
    Comma,
    Plus,
    Minus,
    Star,
    LParen,
    RParen,
    Op(CmpOp),
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, LangError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column: col };
        let start = i;
        let tok = match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
                continue;
            }
            '0'..='9' => {
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if i + 1 < chars.len() && (chars[i] == '.' || chars[i] == '/') && chars[i + 1].is_ascii_digit() {
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    return Err(error(
                        LangErrorKind::ParseError,
                        pos,
                        "scientific notation is not supported",
                    ));
                }
                Tok::Num(chars[start..i].iter().collect())
            }
            c if c.is_alphabetic() || c == '_' => {
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                Tok::Ident(chars[start..i].iter().collect())
            }
            '"' | '\'' => {
                i += 1;
                while i < chars.len() && chars[i] != c {
                    i += 1;
                }
                if i >= chars.len() {
                    return Err(error(LangErrorKind::ParseError, pos, "unterminated string"));
                }
                i += 1;
                Tok::Str(chars[start + 1..i - 1].iter().collect())
            }
            _ => {
                let next = chars.get(i + 1).copied();
                let (tok, len) = match (c, next) {
                    ('<', Some('=')) => (Tok::Op(CmpOp::Le), 2),
                    ('>', Some('=')) => (Tok::Op(CmpOp::Ge), 2),
                    ('!', Some('=')) => (Tok::Op(CmpOp::Ne), 2),
                    ('<', _) => (Tok::Op(CmpOp::Lt), 1),
                    ('>', _) => (Tok::Op(CmpOp::Gt), 1),
                    ('=', _) => (Tok::Op(CmpOp::Eq), 1),
                    ('.', _) => (Tok::Dot, 1),
                    (',', _) => (Tok::Comma, 1),
                    ('+', _) => (Tok::Plus, 1),
                    ('-', _) => (Tok::Minus, 1),
                    ('*', _) => (Tok::Star, 1),
                    ('(', _) => (Tok::LParen, 1),
                    (')', _) => (Tok::RParen, 1),
                    _ => {
                        return Err(error(
                            LangErrorKind::ParseError,
                            pos,
                            format!("unexpected character `{c}`"),
                        ))
                    }
                };
                i += len;
                tok
            }
        };
        col += i - start;
        out.push((tok, pos));
    }
    out.push((Tok::End, Pos { line, column: col }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, wanted: &str) -> LangError {
        let found = match self.peek() {
            Tok::End => "end of input".to_string(),
            Tok::Num(n) => format!("`{n}`"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(s) => format!("\"{s}\""),
            t => format!("{t:?}").to_lowercase(),
        };
        error(LangErrorKind::ParseError, self.pos(), format!("expected {wanted}, found {found}"))
    }

    fn conj(&mut self) -> Result<ConstraintAst, LangError> {
        let mut comparisons = vec![self.cmp()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            comparisons.push(self.cmp()?);
        }
        if *self.peek() != Tok::End {
            return Err(self.unexpected("`,` or end of input"));
        }
        Ok(ConstraintAst { comparisons })
    }

    fn cmp(&mut self) -> Result<Comparison, LangError> {
        let pos = self.pos();
        let lhs = self.sum()?;
        let op = match self.peek() {
            Tok::Op(op) => *op,
            _ => return Err(self.unexpected("a relation (<=, <, =, >=, >, !=)")),
        };
        self.bump();
        let rhs = self.sum()?;
        Ok(Comparison { lhs, op, rhs, pos })
    }

    fn sum(&mut self) -> Result<Expr, LangError> {
        let mut acc = self.product()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    acc = Expr::Add(Box::new(acc), Box::new(self.product()?));
                }
                Tok::Minus => {
                    self.bump();
                    acc = Expr::Sub(Box::new(acc), Box::new(self.product()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn product(&mut self) -> Result<Expr, LangError> {
        let mut acc = self.unary()?;
        while *self.peek() == Tok::Star {
            let pos = self.pos();
            self.bump();
            let rhs = self.unary()?;
            if acc.has_ref() && rhs.has_ref() {
                return Err(error(
                    LangErrorKind::Nonlinear,
                    pos,
                    "product of two feature references is not linear",
                ));
            }
            acc = Expr::Mul(Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Expr, LangError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, LangError> {
        if !matches!(self.peek(), Tok::Num(_) | Tok::Ident(_) | Tok::Str(_) | Tok::LParen) {
            return Err(self.unexpected("a number, `Instance.feature` or `(`"));
        }
        let (tok, pos) = self.bump();
        match tok {
            Tok::Num(text) => {
                let value = parse_rat(&text)
                    .map_err(|e| error(LangErrorKind::ParseError, pos, e.to_string()))?;
                Ok(Expr::Num { value, text, pos })
            }
            Tok::Ident(first) => {
                if *self.peek() != Tok::Dot {
                    return Ok(Expr::Symbol { text: first, pos });
                }
                self.bump();
                match self.bump() {
                    (Tok::Ident(feature), _) => Ok(Expr::Ref {
                        instance: first,
                        feature,
                        pos,
                    }),
                    (_, p) => Err(error(LangErrorKind::ParseError, p, "expected a feature name after `.`")),
                }
            }
            Tok::Str(text) => Ok(Expr::Symbol { text, pos }),
            Tok::LParen => {
                let inner = self.sum()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.unexpected("`)`"));
                }
                self.bump();
                Ok(inner)
            }
            _ => unreachable!(),
        }
    }
}

/// Parses constraint text into comparisons; positions are 1-based.
pub fn parse(text: &str) -> Result<ConstraintAst, LangError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, at: 0 };
    p.conj()
}

enum Side<'a> {
    Nominal { inst: usize, feat: usize, pos: Pos },
    Value { text: &'a str, pos: Pos },
    Numeric(&'a Expr),
}

fn resolve(layout: &VarLayout, instance: &str, feature: &str, pos: Pos) -> Result<(usize, usize), LangError> {
    let i = layout.instance_index(instance).ok_or_else(|| {
        error(LangErrorKind::UnknownInstance, pos, format!("unknown instance `{instance}`"))
    })?;
    let f = layout.space().index_of(feature).ok_or_else(|| {
        error(LangErrorKind::UnknownFeature, pos, format!("unknown feature `{feature}`"))
    })?;
    Ok((i, f))
}

fn classify<'a>(e: &'a Expr, layout: &VarLayout) -> Result<Side<'a>, LangError> {
    match e {
        Expr::Ref { instance, feature, pos } => {
            let (i, f) = resolve(layout, instance, feature, *pos)?;
            if layout.space().features()[f].is_nominal() {
                return Ok(Side::Nominal { inst: i, feat: f, pos: *pos });
            }
            Ok(Side::Numeric(e))
        }
        Expr::Symbol { text, pos } => Ok(Side::Value { text, pos: *pos }),
        _ => Ok(Side::Numeric(e)),
    }
}

fn linearize(e: &Expr, layout: &VarLayout) -> Result<LinExpr, LangError> {
    Ok(match e {
        Expr::Num { value, .. } => LinExpr::constant(value.clone()),
        Expr::Ref { instance, feature, pos } => {
            let (i, f) = resolve(layout, instance, feature, *pos)?;
            if layout.space().features()[f].is_nominal() {
                return Err(error(
                    LangErrorKind::NominalMisuse,
                    *pos,
                    format!("nominal `{instance}.{feature}` cannot appear in arithmetic"),
                ));
            }
            LinExpr::var(layout.base(i, f))
        }
        Expr::Symbol { text, pos } => {
            return Err(error(
                LangErrorKind::NominalMisuse,
                *pos,
                format!("value `{text}` can only be compared with a nominal feature"),
            ))
        }
        Expr::Neg(a) => linearize(a, layout)?.neg(),
        Expr::Add(a, b) => linearize(a, layout)?.plus(&linearize(b, layout)?),
        Expr::Sub(a, b) => linearize(a, layout)?.minus(&linearize(b, layout)?),
        Expr::Mul(a, b) => {
            let (la, lb) = (linearize(a, layout)?, linearize(b, layout)?);
            if la.is_constant() {
                lb.scale(la.constant_term())
            } else if lb.is_constant() {
                la.scale(lb.constant_term())
            } else {
                return Err(error(LangErrorKind::Nonlinear, a.pos(), "product is not linear"));
            }
        }
    })
}

/// Compiles against `layout`: numeric comparisons become normalized linear
/// constraints, nominal comparisons become one-hot literals.
pub fn compile(ast: &ConstraintAst, layout: &VarLayout) -> Result<Conjunction, LangError> {
    let mut out = Conjunction::empty();
    for cmp in &ast.comparisons {
        compile_one(cmp, layout, &mut out)?;
    }
    Ok(out)
}

pub fn parse_and_compile(text: &str, layout: &VarLayout) -> Result<Conjunction, LangError> {
    compile(&parse(text)?, layout)
}

fn compile_one(cmp: &Comparison, layout: &VarLayout, out: &mut Conjunction) -> Result<(), LangError> {
    let lhs = classify(&cmp.lhs, layout)?;
    let rhs = classify(&cmp.rhs, layout)?;
    let one = || LinExpr::constant(Rat::one());
    let equality_only = |pos: Pos| -> Result<bool, LangError> {
        match cmp.op {
            CmpOp::Eq => Ok(true),
            CmpOp::Ne => Ok(false),
            _ => Err(error(
                LangErrorKind::NominalMisuse,
                pos,
                "nominal features only support `=` and `!=`",
            )),
        }
    };
    let single_nominal = match (&lhs, &rhs) {
        (Side::Nominal { .. }, Side::Nominal { .. }) => None,
        (Side::Nominal { inst, feat, pos }, other) | (other, Side::Nominal { inst, feat, pos }) => {
            Some((*inst, *feat, *pos, other))
        }
        _ => None,
    };
    if let Some((inst, feat, pos, other)) = single_nominal {
        let is_eq = equality_only(pos)?;
        let meta = &layout.space().features()[feat];
        let (text, vpos) = match other {
            Side::Value { text, pos } => (*text, *pos),
            Side::Numeric(Expr::Num { text, pos, .. }) => (text.as_str(), *pos),
            Side::Numeric(e) => {
                return Err(error(
                    LangErrorKind::NominalMisuse,
                    e.pos(),
                    format!("nominal `{}` must be compared with a value of its domain", meta.name),
                ))
            }
            Side::Nominal { .. } => unreachable!(),
        };
        let k = meta.value_index(text).ok_or_else(|| {
            error(
                LangErrorKind::ValueNotInDomain,
                vpos,
                format!("`{text}` is not a value of `{}`", meta.name),
            )
        })?;
        let x = LinExpr::var(layout.base(inst, feat) + k);
        out.push(LinearConstraint::eq(x, if is_eq { one() } else { LinExpr::zero() }));
        return Ok(());
    }
    match (&lhs, &rhs) {
        (Side::Nominal { .. }, Side::Numeric(_)) | (Side::Numeric(_), Side::Nominal { .. }) => {
            unreachable!("handled above")
        }
        (Side::Nominal { .. }, Side::Value { .. }) | (Side::Value { .. }, Side::Nominal { .. }) => {
            unreachable!("handled above")
        }
        (Side::Nominal { inst: a, feat: fa, pos }, Side::Nominal { inst: b, feat: fb, .. }) => {
            let is_eq = equality_only(*pos)?;
            let (ma, mb) = (&layout.space().features()[*fa], &layout.space().features()[*fb]);
            if ma.values() != mb.values() {
                return Err(error(
                    LangErrorKind::NominalMisuse,
                    *pos,
                    format!("`{}` and `{}` have different domains", ma.name, mb.name),
                ));
            }
            let (ba, bb) = (layout.base(*a, *fa), layout.base(*b, *fb));
            for j in 0..ma.width() {
                let (xa, xb) = (LinExpr::var(ba + j), LinExpr::var(bb + j));
                out.push(if is_eq {
                    LinearConstraint::eq(xa, xb)
                } else {
                    // one-hot vectors differ iff they never share a 1
                    LinearConstraint::le(xa.plus(&xb), one())
                });
            }
        }
        (Side::Value { text, pos }, _) | (_, Side::Value { text, pos }) => {
            return Err(error(
                LangErrorKind::NominalMisuse,
                *pos,
                format!("value `{text}` can only be compared with a nominal feature"),
            ));
        }
        (Side::Numeric(l), Side::Numeric(r)) => {
            let Some(rel) = cmp.op.raw() else {
                return Err(error(
                    LangErrorKind::NumericDisequality,
                    cmp.pos,
                    "`!=` is only available for nominal features",
                ));
            };
            out.push(normalize(&linearize(l, layout)?, rel, &linearize(r, layout)?));
        }
    }
    Ok(())
}
