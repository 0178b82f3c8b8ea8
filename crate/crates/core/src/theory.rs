//! Theories (disjunctions of conjunctions) and the operators that combine
//! them: cross product, satisfiable subset, projection and minimization.
//!
//! Member-level work runs on the rayon pool; results are always collected in
//! member order, so output does not depend on scheduling.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;

use crate::distance::{build_objective, DistanceSpec};
use crate::error::DistanceError;
use crate::features::VarLayout;
use crate::linear::{Conjunction, Point, Rat, Theory, VarId};
use crate::lp::{LpStatus, Sense};
use crate::milp::{feasible_point, solve_milp};
use crate::projection::project;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TheoryExpr {
    Typec,
    Userc,
    Inst(String),
    Cross(Box<TheoryExpr>, Box<TheoryExpr>),
    Sat(Box<TheoryExpr>),
    Project(Box<TheoryExpr>, BTreeSet<VarId>),
    Minimize(Box<TheoryExpr>, DistanceSpec),
}

impl TheoryExpr {
    pub fn cross(a: TheoryExpr, b: TheoryExpr) -> Self {
        TheoryExpr::Cross(Box::new(a), Box::new(b))
    }

    pub fn sat(e: TheoryExpr) -> Self {
        TheoryExpr::Sat(Box::new(e))
    }

    pub fn project(e: TheoryExpr, keep: BTreeSet<VarId>) -> Self {
        TheoryExpr::Project(Box::new(e), keep)
    }

    pub fn minimize(e: TheoryExpr, spec: DistanceSpec) -> Self {
        TheoryExpr::Minimize(Box::new(e), spec)
    }

    /// Left-nested cross product of `TYPEC`, `USERC` and every `INST(name)`.
    pub fn default_query<S: AsRef<str>>(instances: &[S]) -> Self {
        let mut e = TheoryExpr::cross(TheoryExpr::Typec, TheoryExpr::Userc);
        for name in instances {
            e = TheoryExpr::cross(e, TheoryExpr::Inst(name.as_ref().to_string()));
        }
        e
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("minimize may only appear at the root of a query")]
    NestedMinimize,
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error("time budget exceeded during {stage} ({done} of {total} members done)")]
    Timeout {
        stage: &'static str,
        done: usize,
        total: usize,
    },
}

/// Inputs the leaf theories are drawn from.
#[derive(Clone, Debug)]
pub struct Context {
    pub layout: VarLayout,
    /// Compiled user constraints, in declaration order.
    pub user: Conjunction,
    /// Path theory of each instance, already filtered by label and confidence.
    pub instances: Vec<(String, Theory)>,
}

impl Context {
    pub fn typec(&self) -> Theory {
        Theory::single(self.layout.implicit_constraints())
    }

    pub fn userc(&self) -> Theory {
        Theory::single(self.user.clone())
    }

    pub fn inst(&self, name: &str) -> Result<Theory, EvalError> {
        self.instances
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.clone())
            .ok_or_else(|| EvalError::UnknownInstance(name.to_string()))
    }

    pub fn int_vars(&self) -> BTreeSet<VarId> {
        self.layout.integral_vars()
    }
}

/// Optional deadline plus progress counters for diagnostics.
#[derive(Debug, Default)]
pub struct Budget {
    deadline: Option<Instant>,
    expired: AtomicBool,
    pub solved: AtomicUsize,
}

impl Budget {
    pub fn unlimited() -> Self {
        Budget::default()
    }

    pub fn until(deadline: Instant) -> Self {
        Budget {
            deadline: Some(deadline),
            ..Budget::default()
        }
    }

    fn exhausted(&self) -> bool {
        if self.expired.load(Ordering::Relaxed) {
            return true;
        }
        let over = self.deadline.is_some_and(|d| Instant::now() >= d);
        if over {
            self.expired.store(true, Ordering::Relaxed);
        }
        over
    }

    /// Runs `f` over `items` in parallel, keeping order; stops early with a
    /// timeout error once the deadline passes.
    fn map<T, U, F>(&self, stage: &'static str, items: &[T], f: F) -> Result<Vec<U>, EvalError>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync,
    {
        let done = AtomicUsize::new(0);
        let out: Vec<Option<U>> = items
            .par_iter()
            .map(|item| {
                if self.exhausted() {
                    return None;
                }
                let r = f(item);
                done.fetch_add(1, Ordering::Relaxed);
                self.solved.fetch_add(1, Ordering::Relaxed);
                Some(r)
            })
            .collect();
        if out.iter().any(Option::is_none) {
            return Err(EvalError::Timeout {
                stage,
                done: done.load(Ordering::Relaxed),
                total: items.len(),
            });
        }
        Ok(out.into_iter().flatten().collect())
    }
}

/// Every pairwise concatenation, first operand major.
pub fn cross_product(a: &Theory, b: &Theory) -> Theory {
    let mut members = Vec::with_capacity(a.len() * b.len());
    for x in a.members() {
        for y in b.members() {
            members.push(x.and(y));
        }
    }
    Theory::new(members)
}

/// Members that have a point integral on `int_vars`, in order.
pub fn satisfiable(t: &Theory, int_vars: &BTreeSet<VarId>) -> Theory {
    satisfiable_within(t, int_vars, &Budget::unlimited()).expect("no deadline")
}

fn satisfiable_within(t: &Theory, int_vars: &BTreeSet<VarId>, budget: &Budget) -> Result<Theory, EvalError> {
    let keep = budget.map("satisfiability", t.members(), |c| {
        !c.has_false() && feasible_point(c, int_vars).is_some()
    })?;
    let members = t
        .members()
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(c, _)| c.clone())
        .collect();
    Ok(Theory::new(members))
}

/// Member-wise projection; members that become syntactically identical are
/// merged, keeping the first.
pub fn project_theory(t: &Theory, keep: &BTreeSet<VarId>) -> Theory {
    project_within(t, keep, &Budget::unlimited()).expect("no deadline")
}

fn project_within(t: &Theory, keep: &BTreeSet<VarId>, budget: &Budget) -> Result<Theory, EvalError> {
    let projected = budget.map("projection", t.members(), |c| project(c, keep))?;
    let mut members: Vec<Conjunction> = Vec::new();
    for c in projected {
        if !members.contains(&c) {
            members.push(c);
        }
    }
    Ok(Theory::new(members))
}

/// A member attaining the optimum, with its witness over layout variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimal {
    pub member: Conjunction,
    pub witness: Point,
}

/// Result of minimizing a distance over a theory.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct MinOutcome {
    /// Global optimum; `None` when no member is feasible.
    pub value: Option<Rat>,
    /// False when the optimum is only an infimum (strict boundaries).
    pub attained: bool,
    pub members: Vec<Optimal>,
    /// Optimum of every input member (`None` if infeasible), in order.
    pub per_member: Vec<Option<(Rat, bool)>>,
}

impl MinOutcome {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Minimizes the distance per member and keeps the members reaching the
/// global optimum. An attained optimum beats an unattained one of equal value.
pub fn minimize_theory(t: &Theory, spec: &DistanceSpec, layout: &VarLayout) -> Result<MinOutcome, EvalError> {
    minimize_within(t, spec, layout, &Budget::unlimited())
}

fn minimize_within(
    t: &Theory,
    spec: &DistanceSpec,
    layout: &VarLayout,
    budget: &Budget,
) -> Result<MinOutcome, EvalError> {
    let build = build_objective(spec, layout)?;
    let int_vars = layout.integral_vars();
    let n = layout.num_vars();
    let results = budget.map("minimization", t.members(), |c| {
        let r = solve_milp(&build.objective, &c.and(&build.side), &int_vars, Sense::Min);
        match (r.status, r.value, r.witness) {
            (LpStatus::Optimal, Some(v), Some(w)) => Some((v, r.attained, w)),
            _ => None,
        }
    })?;

    let best = results
        .iter()
        .flatten()
        .map(|(v, a, _)| (v.clone(), *a))
        .min_by(|(v1, a1), (v2, a2)| v1.cmp(v2).then(a2.cmp(a1)));
    let mut out = MinOutcome {
        per_member: results.iter().map(|r| r.as_ref().map(|(v, a, _)| (v.clone(), *a))).collect(),
        ..MinOutcome::default()
    };
    let Some((value, attained)) = best else {
        return Ok(out);
    };
    for (c, r) in t.members().iter().zip(results) {
        if let Some((v, a, w)) = r {
            if v == value && a == attained {
                let witness = w.into_iter().filter(|(k, _)| *k < n).collect();
                out.members.push(Optimal {
                    member: c.clone(),
                    witness,
                });
            }
        }
    }
    out.value = Some(value);
    out.attained = attained;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Evaluated {
    Theory(Theory),
    Min(MinOutcome),
}

/// Bottom-up evaluation of a query; `MINIMIZE` is only allowed at the root.
pub fn evaluate(expr: &TheoryExpr, ctx: &Context, budget: &Budget) -> Result<Evaluated, EvalError> {
    match expr {
        TheoryExpr::Minimize(inner, spec) => {
            let t = eval_theory(inner, ctx, budget)?;
            Ok(Evaluated::Min(minimize_within(&t, spec, &ctx.layout, budget)?))
        }
        other => Ok(Evaluated::Theory(eval_theory(other, ctx, budget)?)),
    }
}

fn eval_theory(expr: &TheoryExpr, ctx: &Context, budget: &Budget) -> Result<Theory, EvalError> {
    Ok(match expr {
        TheoryExpr::Typec => ctx.typec(),
        TheoryExpr::Userc => ctx.userc(),
        TheoryExpr::Inst(name) => ctx.inst(name)?,
        TheoryExpr::Cross(a, b) => cross_product(&eval_theory(a, ctx, budget)?, &eval_theory(b, ctx, budget)?),
        TheoryExpr::Sat(e) => satisfiable_within(&eval_theory(e, ctx, budget)?, &ctx.int_vars(), budget)?,
        TheoryExpr::Project(e, keep) => project_within(&eval_theory(e, ctx, budget)?, keep, budget)?,
        TheoryExpr::Minimize(..) => return Err(EvalError::NestedMinimize),
    })
}
