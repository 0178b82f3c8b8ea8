//! Distance between a factual and a contrastive instance, and its linear
//! encoding with slack variables.
//!
//! The distance is the number of nominal features that differ, plus `beta`
//! times the sum of max-min normalized absolute differences over ordinal and
//! continuous features, plus `gamma` times the largest of those differences.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::DistanceError;
use crate::features::{FeatureKind, FeatureSpace, NamedPoint, Value, VarLayout};
use crate::linear::{fmt_rat, parse_rat, ratio, Conjunction, LinExpr, LinearConstraint, Point, Rat, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Terms {
    pub matching: bool,
    pub l1: bool,
    pub linf: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceSpec {
    /// Factual instance.
    pub from: String,
    /// Contrastive instance.
    pub to: String,
    pub beta: Rat,
    pub gamma: Rat,
    pub terms: Terms,
}

impl DistanceSpec {
    /// Matching plus normalized L1 with `beta = 1`, `gamma = 0`.
    pub fn l1norm(from: &str, to: &str) -> Self {
        DistanceSpec {
            from: from.to_string(),
            to: to.to_string(),
            beta: Rat::one(),
            gamma: Rat::zero(),
            terms: Terms {
                matching: true,
                l1: true,
                linf: false,
            },
        }
    }

    /// All three terms; a zero weight drops its term.
    pub fn weighted(from: &str, to: &str, beta: Rat, gamma: Rat) -> Self {
        let terms = Terms {
            matching: true,
            l1: !beta.is_zero(),
            linf: !gamma.is_zero(),
        };
        DistanceSpec {
            from: from.to_string(),
            to: to.to_string(),
            beta,
            gamma,
            terms,
        }
    }

    /// Parses `l1norm(F, CE)` or `dist(F, CE, beta=<rat>, gamma=<rat>)`.
    pub fn parse(text: &str) -> Result<Self, DistanceError> {
        let bad = |reason: &str| DistanceError::BadSpec {
            spec: text.to_string(),
            reason: reason.to_string(),
        };
        let t = text.trim();
        let open = t.find('(').ok_or_else(|| bad("expected `name(args)`"))?;
        if !t.ends_with(')') {
            return Err(bad("missing closing `)`"));
        }
        let head = t[..open].trim();
        let args: Vec<&str> = t[open + 1..t.len() - 1].split(',').map(str::trim).collect();
        let ident = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_');
        if args.len() < 2 || !ident(args[0]) || !ident(args[1]) {
            return Err(bad("expected two instance names"));
        }
        if args[0] == args[1] {
            return Err(bad("the two instances must differ"));
        }
        match head {
            "l1norm" => {
                if args.len() != 2 {
                    return Err(bad("l1norm takes exactly two instances"));
                }
                Ok(Self::l1norm(args[0], args[1]))
            }
            "dist" => {
                let mut beta = None;
                let mut gamma = None;
                for kw in &args[2..] {
                    let (k, v) = kw.split_once('=').ok_or_else(|| bad("expected `beta=` or `gamma=`"))?;
                    let v = parse_rat(v.trim()).map_err(|e| bad(&e.to_string()))?;
                    if v.is_negative() {
                        return Err(bad("weights must be non-negative"));
                    }
                    let slot = match k.trim() {
                        "beta" => &mut beta,
                        "gamma" => &mut gamma,
                        other => return Err(bad(&format!("unknown weight `{other}`"))),
                    };
                    if slot.replace(v).is_some() {
                        return Err(bad("weight given twice"));
                    }
                }
                match (beta, gamma) {
                    (Some(b), Some(g)) => Ok(Self::weighted(args[0], args[1], b, g)),
                    _ => Err(bad("dist needs both beta and gamma")),
                }
            }
            _ => Err(bad("expected `l1norm` or `dist`")),
        }
    }

    pub fn render(&self) -> String {
        if self.terms.matching && self.terms.l1 && !self.terms.linf && self.beta.is_one() {
            format!("l1norm({}, {})", self.from, self.to)
        } else {
            format!(
                "dist({}, {}, beta={}, gamma={})",
                self.from,
                self.to,
                fmt_rat(&self.beta),
                fmt_rat(&self.gamma)
            )
        }
    }

    fn needs_bounds(&self) -> bool {
        self.terms.l1 || self.terms.linf
    }
}

/// How a slack variable is defined by its side constraints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Slack {
    /// `var >= expr` and `var >= -expr`.
    Abs { var: VarId, expr: LinExpr },
    /// `var >= 0` and `var >= v` for each listed slack.
    Max { var: VarId, of: Vec<VarId> },
}

/// Linearized objective: minimizing `objective` subject to `side` reproduces
/// the distance at any point whose one-hot blocks are integral.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectiveBuild {
    pub objective: LinExpr,
    pub side: Conjunction,
    pub slacks: Vec<Slack>,
    /// First variable id past the slacks.
    pub next_var: VarId,
}

impl ObjectiveBuild {
    /// Extends `point` with every slack at its smallest feasible value.
    pub fn at_envelope(&self, point: &Point) -> Result<Point, DistanceError> {
        let mut out = point.clone();
        for s in &self.slacks {
            let (var, value) = match s {
                Slack::Abs { var, expr } => (*var, eval(expr, &out)?.abs()),
                Slack::Max { var, of } => {
                    let m = of.iter().map(|v| out[v].clone()).fold(Rat::zero(), |a, b| a.max(b));
                    (*var, m)
                }
            };
            out.insert(var, value);
        }
        Ok(out)
    }
}

fn eval(e: &LinExpr, p: &Point) -> Result<Rat, DistanceError> {
    Ok(e.eval(p)?)
}

fn range(space: &FeatureSpace, f: usize) -> Result<Rat, DistanceError> {
    let meta = &space.features()[f];
    match meta.norm_bounds() {
        Some((lo, hi)) if hi > lo => Ok(hi - lo),
        // A single-valued ordinal never differs.
        Some(_) => Ok(Rat::one()),
        None => Err(DistanceError::MissingBounds(meta.name.clone())),
    }
}

/// Builds the objective and slack constraints; slack ids start at
/// `layout.num_vars()`.
pub fn build_objective(spec: &DistanceSpec, layout: &VarLayout) -> Result<ObjectiveBuild, DistanceError> {
    let fi = layout
        .instance_index(&spec.from)
        .ok_or_else(|| DistanceError::UnknownInstance(spec.from.clone()))?;
    let ci = layout
        .instance_index(&spec.to)
        .ok_or_else(|| DistanceError::UnknownInstance(spec.to.clone()))?;
    let space = layout.space();
    let mut next = layout.num_vars();
    let mut fresh = || {
        next += 1;
        next - 1
    };
    let mut objective = LinExpr::zero();
    let mut side = Vec::new();
    let mut slacks = Vec::new();
    let mut norm_slacks = Vec::new();
    let half = ratio(1, 2);

    for (f, meta) in space.features().iter().enumerate() {
        match meta.kind {
            FeatureKind::Nominal { .. } => {
                if !spec.terms.matching {
                    continue;
                }
                for (a, b) in layout.feature_vars(ci, f).zip(layout.feature_vars(fi, f)) {
                    let s = fresh();
                    let delta = LinExpr::var(a).minus(&LinExpr::var(b));
                    side.push(LinearConstraint::ge(LinExpr::var(s), delta.clone()));
                    side.push(LinearConstraint::ge(LinExpr::var(s), delta.neg()));
                    objective.add_term(s, half.clone());
                    slacks.push(Slack::Abs { var: s, expr: delta });
                }
            }
            _ => {
                if !spec.needs_bounds() {
                    continue;
                }
                let r = range(space, f)?;
                let t = fresh();
                let delta = LinExpr::var(layout.base(ci, f))
                    .minus(&LinExpr::var(layout.base(fi, f)))
                    .scale(&r.recip());
                side.push(LinearConstraint::ge(LinExpr::var(t), delta.clone()));
                side.push(LinearConstraint::ge(LinExpr::var(t), delta.neg()));
                if spec.terms.l1 {
                    objective.add_term(t, spec.beta.clone());
                }
                slacks.push(Slack::Abs { var: t, expr: delta });
                norm_slacks.push(t);
            }
        }
    }
    if spec.terms.linf && !norm_slacks.is_empty() {
        let z = fresh();
        side.push(LinearConstraint::ge(LinExpr::var(z), LinExpr::zero()));
        for &t in &norm_slacks {
            side.push(LinearConstraint::ge(LinExpr::var(z), LinExpr::var(t)));
        }
        objective.add_term(z, spec.gamma.clone());
        slacks.push(Slack::Max { var: z, of: norm_slacks });
    }
    Ok(ObjectiveBuild {
        objective,
        side: Conjunction::new(side),
        slacks,
        next_var: next,
    })
}

/// Direct evaluation of the distance between two named points.
pub fn eval_distance(
    spec: &DistanceSpec,
    from: &NamedPoint,
    to: &NamedPoint,
    space: &FeatureSpace,
) -> Result<Rat, DistanceError> {
    let mut matching = Rat::zero();
    let mut l1 = Rat::zero();
    let mut linf = Rat::zero();
    let get = |p: &NamedPoint, name: &str| -> Result<Value, DistanceError> {
        p.get(name)
            .cloned()
            .ok_or_else(|| DistanceError::Feature(crate::error::FeatureError::Unbound(name.to_string())))
    };
    for (f, meta) in space.features().iter().enumerate() {
        let (a, b) = (get(from, &meta.name)?, get(to, &meta.name)?);
        match (a, b) {
            (Value::Nom(a), Value::Nom(b)) => {
                if a != b {
                    matching += Rat::one();
                }
            }
            (Value::Num(a), Value::Num(b)) => {
                if !spec.needs_bounds() {
                    continue;
                }
                let d = (a - b).abs() / range(space, f)?;
                l1 += d.clone();
                linf = linf.max(d);
            }
            _ => {
                return Err(DistanceError::BadSpec {
                    spec: spec.render(),
                    reason: format!("feature `{}` has mismatched value kinds", meta.name),
                })
            }
        }
    }
    let mut total = Rat::zero();
    if spec.terms.matching {
        total += matching;
    }
    if spec.terms.l1 {
        total += spec.beta.clone() * l1;
    }
    if spec.terms.linf {
        total += spec.gamma.clone() * linf;
    }
    Ok(total)
}

/// Per-feature normalized differences, keyed by feature name.
pub fn feature_gaps(from: &NamedPoint, to: &NamedPoint, space: &FeatureSpace) -> BTreeMap<String, Rat> {
    let mut out = BTreeMap::new();
    for (f, meta) in space.features().iter().enumerate() {
        if let (Some(Value::Num(a)), Some(Value::Num(b))) = (from.get(&meta.name), to.get(&meta.name)) {
            if let Ok(r) = range(space, f) {
                out.insert(meta.name.clone(), (a - b).abs() / r);
            }
        }
    }
    out
}
