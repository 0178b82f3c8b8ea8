//! Exact rational linear expressions, constraints, conjunctions and theories.
//!
//! Every coefficient is a [`Rat`] (an arbitrary-precision rational in lowest
//! terms). A [`LinearConstraint`] is kept in the normal form `expr rel 0` with
//! `rel` one of `<=`, `<`, `=`; `>=` and `>` are folded in by negation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::NumericError;

/// Exact rational number.
pub type Rat = BigRational;

/// Solver variable id, dense from 0 (assigned by the variable layout).
pub type VarId = usize;

/// Assignment of rational values to variables.
pub type Point = BTreeMap<VarId, Rat>;

pub fn rat(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Parses a decimal (`-12.5`) or fraction (`3/4`) literal exactly.
///
/// Scientific notation is rejected.
pub fn parse_rat(text: &str) -> Result<Rat, NumericError> {
    let bad = || NumericError::BadLiteral(text.to_string());
    let s = text.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    if body.is_empty() {
        return Err(bad());
    }
    let digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
    let value = if let Some((num, den)) = body.split_once('/') {
        if !digits(num) || !digits(den) {
            return Err(bad());
        }
        let den: BigInt = den.parse().map_err(|_| bad())?;
        if den.is_zero() {
            return Err(NumericError::ZeroDenominator(text.to_string()));
        }
        Rat::new(num.parse().map_err(|_| bad())?, den)
    } else if let Some((int, frac)) = body.split_once('.') {
        if !digits(int) || !digits(frac) {
            return Err(bad());
        }
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let whole: BigInt = format!("{int}{frac}").parse().map_err(|_| bad())?;
        Rat::new(whole, scale)
    } else {
        if !digits(body) {
            return Err(bad());
        }
        Rat::from_integer(body.parse().map_err(|_| bad())?)
    };
    Ok(if neg { -value } else { value })
}

/// Canonical text of a rational: `p` for integers, `p/q` otherwise.
pub fn fmt_rat(r: &Rat) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// `Σ coeff·var + constant`, with no zero coefficients stored.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct LinExpr {
    terms: BTreeMap<VarId, Rat>,
    constant: Rat,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: Rat) -> Self {
        LinExpr {
            terms: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn var(v: VarId) -> Self {
        Self::term(v, Rat::one())
    }

    pub fn term(v: VarId, coeff: Rat) -> Self {
        let mut e = Self::zero();
        e.add_term(v, coeff);
        e
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (VarId, Rat)>, constant: Rat) -> Self {
        let mut e = Self::constant(constant);
        for (v, c) in terms {
            e.add_term(v, c);
        }
        e
    }

    pub fn add_term(&mut self, v: VarId, coeff: Rat) {
        if coeff.is_zero() {
            return;
        }
        let entry = self.terms.entry(v).or_insert_with(Rat::zero);
        *entry += coeff;
        if entry.is_zero() {
            self.terms.remove(&v);
        }
    }

    pub fn add_constant(&mut self, c: &Rat) {
        self.constant += c;
    }

    pub fn terms(&self) -> impl Iterator<Item = (VarId, &Rat)> + '_ {
        self.terms.iter().map(|(v, c)| (*v, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, v: VarId) -> Option<&Rat> {
        self.terms.get(&v)
    }

    pub fn constant_term(&self) -> &Rat {
        &self.constant
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.terms.keys().copied()
    }

    pub fn scale(&self, k: &Rat) -> LinExpr {
        if k.is_zero() {
            return LinExpr::zero();
        }
        LinExpr {
            terms: self.terms.iter().map(|(v, c)| (*v, c * k)).collect(),
            constant: &self.constant * k,
        }
    }

    pub fn plus(&self, other: &LinExpr) -> LinExpr {
        let mut out = self.clone();
        for (v, c) in other.terms() {
            out.add_term(v, c.clone());
        }
        out.constant += &other.constant;
        out
    }

    pub fn minus(&self, other: &LinExpr) -> LinExpr {
        self.plus(&other.scale(&-Rat::one()))
    }

    pub fn neg(&self) -> LinExpr {
        self.scale(&-Rat::one())
    }

    /// Replaces `v` by `replacement` everywhere.
    pub fn substitute(&self, v: VarId, replacement: &LinExpr) -> LinExpr {
        match self.terms.get(&v) {
            None => self.clone(),
            Some(c) => {
                let mut rest = self.clone();
                rest.terms.remove(&v);
                rest.plus(&replacement.scale(c))
            }
        }
    }

    /// Exact evaluation; fails on the first unbound variable.
    pub fn eval(&self, point: &Point) -> Result<Rat, NumericError> {
        let mut acc = self.constant.clone();
        for (v, c) in &self.terms {
            let x = point.get(v).ok_or(NumericError::Unbound(*v))?;
            acc += c * x;
        }
        Ok(acc)
    }

    /// Renders with `name` for variables, e.g. `2*F.age - CE.age + 3`.
    pub fn render(&self, name: &dyn Fn(VarId) -> String) -> String {
        let mut out = String::new();
        for (v, c) in &self.terms {
            push_term(&mut out, c, &name(*v));
        }
        if !self.constant.is_zero() || out.is_empty() {
            push_term(&mut out, &self.constant, "");
        }
        out
    }
}

fn push_term(out: &mut String, c: &Rat, var: &str) {
    let mag = c.abs();
    if out.is_empty() {
        if c.is_negative() {
            out.push('-');
        }
    } else if c.is_negative() {
        out.push_str(" - ");
    } else {
        out.push_str(" + ");
    }
    if var.is_empty() {
        out.push_str(&fmt_rat(&mag));
    } else if mag.is_one() {
        out.push_str(var);
    } else {
        out.push_str(&fmt_rat(&mag));
        out.push('*');
        out.push_str(var);
    }
}

/// Relation of a normalized constraint against zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rel {
    Le,
    Lt,
    Eq,
}

impl Rel {
    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Le => "<=",
            Rel::Lt => "<",
            Rel::Eq => "=",
        }
    }

    pub fn is_strict(self) -> bool {
        self == Rel::Lt
    }
}

/// Relation as written by a user, before normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RawRel {
    Le,
    Lt,
    Eq,
    Ge,
    Gt,
}

/// `expr rel 0`.
///
/// Ground constraints collapse to the distinguished [`LinearConstraint::TRUE`]
/// (`0 <= 0`) or [`LinearConstraint::FALSE`] (`1 <= 0`) forms.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LinearConstraint {
    expr: LinExpr,
    rel: Rel,
}

impl LinearConstraint {
    pub fn truth() -> Self {
        LinearConstraint {
            expr: LinExpr::zero(),
            rel: Rel::Le,
        }
    }

    pub fn falsity() -> Self {
        LinearConstraint {
            expr: LinExpr::constant(Rat::one()),
            rel: Rel::Le,
        }
    }

    /// Builds `expr rel 0`, collapsing ground constraints.
    pub fn new(expr: LinExpr, rel: Rel) -> Self {
        if expr.is_constant() {
            let c = expr.constant_term();
            let holds = match rel {
                Rel::Le => !c.is_positive(),
                Rel::Lt => c.is_negative(),
                Rel::Eq => c.is_zero(),
            };
            return if holds { Self::truth() } else { Self::falsity() };
        }
        LinearConstraint { expr, rel }
    }

    pub fn le(lhs: LinExpr, rhs: LinExpr) -> Self {
        normalize(&lhs, RawRel::Le, &rhs)
    }

    pub fn lt(lhs: LinExpr, rhs: LinExpr) -> Self {
        normalize(&lhs, RawRel::Lt, &rhs)
    }

    pub fn eq(lhs: LinExpr, rhs: LinExpr) -> Self {
        normalize(&lhs, RawRel::Eq, &rhs)
    }

    pub fn ge(lhs: LinExpr, rhs: LinExpr) -> Self {
        normalize(&lhs, RawRel::Ge, &rhs)
    }

    pub fn gt(lhs: LinExpr, rhs: LinExpr) -> Self {
        normalize(&lhs, RawRel::Gt, &rhs)
    }

    pub fn expr(&self) -> &LinExpr {
        &self.expr
    }

    pub fn rel(&self) -> Rel {
        self.rel
    }

    pub fn is_true(&self) -> bool {
        self.expr.is_constant() && *self == Self::truth()
    }

    pub fn is_false(&self) -> bool {
        self.expr.is_constant() && *self == Self::falsity()
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.expr.vars()
    }

    pub fn mentions(&self, v: VarId) -> bool {
        self.expr.coeff(v).is_some()
    }

    pub fn holds(&self, point: &Point) -> Result<bool, NumericError> {
        let value = self.expr.eval(point)?;
        Ok(match self.rel {
            Rel::Le => !value.is_positive(),
            Rel::Lt => value.is_negative(),
            Rel::Eq => value.is_zero(),
        })
    }

    /// Holds with strict relations weakened to non-strict.
    pub fn holds_closed(&self, point: &Point) -> Result<bool, NumericError> {
        let value = self.expr.eval(point)?;
        Ok(match self.rel {
            Rel::Le | Rel::Lt => !value.is_positive(),
            Rel::Eq => value.is_zero(),
        })
    }

    /// Same constraint with `<` weakened to `<=`.
    pub fn closure(&self) -> LinearConstraint {
        match self.rel {
            Rel::Lt => LinearConstraint::new(self.expr.clone(), Rel::Le),
            _ => self.clone(),
        }
    }

    pub fn substitute(&self, v: VarId, replacement: &LinExpr) -> LinearConstraint {
        LinearConstraint::new(self.expr.substitute(v, replacement), self.rel)
    }

    /// Positive rescaling so the lowest-id coefficient has magnitude 1
    /// (and, for equalities, is positive). Solution set is unchanged.
    pub fn canonical(&self) -> LinearConstraint {
        let Some((_, lead)) = self.expr.terms().next() else {
            return self.clone();
        };
        let mut k = lead.abs().recip();
        if self.rel == Rel::Eq && lead.is_negative() {
            k = -k;
        }
        LinearConstraint::new(self.expr.scale(&k), self.rel)
    }

    /// Canonical text: positive terms on the left, negated negative terms on
    /// the right, the constant on whichever side keeps it positive.
    pub fn render(&self, name: &dyn Fn(VarId) -> String) -> String {
        if self.is_true() {
            return "true".to_string();
        }
        if self.is_false() {
            return "false".to_string();
        }
        let expr = match self.expr.terms().next() {
            Some((_, lead)) if self.rel == Rel::Eq && lead.is_negative() => self.expr.neg(),
            _ => self.expr.clone(),
        };
        let mut left = LinExpr::zero();
        let mut right = LinExpr::zero();
        for (v, c) in expr.terms() {
            if c.is_positive() {
                left.add_term(v, c.clone());
            } else {
                right.add_term(v, -c);
            }
        }
        let c = expr.constant_term();
        if c.is_positive() {
            left.add_constant(c);
        } else {
            right.add_constant(&-c);
        }
        format!(
            "{} {} {}",
            left.render(name),
            self.rel.symbol(),
            right.render(name)
        )
    }
}

/// Normal form of `lhs rel rhs`: `>=`/`>` flip by negation and the right-hand
/// side moves into the left.
pub fn normalize(lhs: &LinExpr, rel: RawRel, rhs: &LinExpr) -> LinearConstraint {
    match rel {
        RawRel::Le => LinearConstraint::new(lhs.minus(rhs), Rel::Le),
        RawRel::Lt => LinearConstraint::new(lhs.minus(rhs), Rel::Lt),
        RawRel::Eq => LinearConstraint::new(lhs.minus(rhs), Rel::Eq),
        RawRel::Ge => LinearConstraint::new(rhs.minus(lhs), Rel::Le),
        RawRel::Gt => LinearConstraint::new(rhs.minus(lhs), Rel::Lt),
    }
}

/// Complement of an inequality: `¬(e <= 0)` is `-e < 0` and `¬(e < 0)` is `-e <= 0`.
pub fn negate(c: &LinearConstraint) -> Result<LinearConstraint, NumericError> {
    match c.rel {
        Rel::Le => Ok(LinearConstraint::new(c.expr.neg(), Rel::Lt)),
        Rel::Lt => Ok(LinearConstraint::new(c.expr.neg(), Rel::Le)),
        Rel::Eq => Err(NumericError::NegateEquality),
    }
}

pub fn eval_expr(e: &LinExpr, point: &Point) -> Result<Rat, NumericError> {
    e.eval(point)
}

/// Ordered conjunction; redundancy is kept unless removed explicitly.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Conjunction {
    constraints: Vec<LinearConstraint>,
}

impl Conjunction {
    pub fn new(constraints: Vec<LinearConstraint>) -> Self {
        Conjunction { constraints }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn push(&mut self, c: LinearConstraint) {
        self.constraints.push(c);
    }

    pub fn extend(&mut self, other: &Conjunction) {
        self.constraints.extend(other.constraints.iter().cloned());
    }

    /// `self ++ other`.
    pub fn and(&self, other: &Conjunction) -> Conjunction {
        let mut out = self.clone();
        out.extend(other);
        out
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn into_constraints(self) -> Vec<LinearConstraint> {
        self.constraints
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LinearConstraint> {
        self.constraints.iter()
    }

    pub fn has_false(&self) -> bool {
        self.constraints.iter().any(LinearConstraint::is_false)
    }

    pub fn vars(&self) -> BTreeSet<VarId> {
        self.constraints.iter().flat_map(|c| c.vars()).collect()
    }

    pub fn holds(&self, point: &Point) -> Result<bool, NumericError> {
        for c in &self.constraints {
            if !c.holds(point)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn render(&self, name: &dyn Fn(VarId) -> String) -> String {
        if self.constraints.is_empty() {
            return "true".to_string();
        }
        self.constraints
            .iter()
            .map(|c| c.render(name))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl FromIterator<LinearConstraint> for Conjunction {
    fn from_iter<T: IntoIterator<Item = LinearConstraint>>(iter: T) -> Self {
        Conjunction::new(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a Conjunction {
    type Item = &'a LinearConstraint;
    type IntoIter = std::slice::Iter<'a, LinearConstraint>;

    fn into_iter(self) -> Self::IntoIter {
        self.constraints.iter()
    }
}

/// Finite disjunction of conjunctions; the empty theory is unsatisfiable.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Theory {
    members: Vec<Conjunction>,
}

impl Theory {
    pub fn new(members: Vec<Conjunction>) -> Self {
        Theory { members }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(c: Conjunction) -> Self {
        Theory { members: vec![c] }
    }

    pub fn members(&self) -> &[Conjunction] {
        &self.members
    }

    pub fn into_members(self) -> Vec<Conjunction> {
        self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// True iff some member holds at `point`.
    pub fn holds(&self, point: &Point) -> Result<bool, NumericError> {
        for m in &self.members {
            if m.holds(point)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

impl fmt::Display for Rel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}
