//! Fourier–Motzkin projection of a conjunction onto a set of kept variables.
//!
//! Integrality is ignored here: the result is the real shadow of the input.

use std::collections::BTreeSet;

use num_traits::{Signed, Zero};

use crate::linear::{Conjunction, LinearConstraint, Rel, VarId};
use crate::lp::{is_satisfiable, optimize, LpStatus, Sense};

fn falsity() -> Conjunction {
    Conjunction::new(vec![LinearConstraint::falsity()])
}

/// Drops TRUE members and syntactic duplicates (after canonical scaling).
/// Returns `None` when a FALSE member is present.
fn tidy(constraints: impl IntoIterator<Item = LinearConstraint>) -> Option<Conjunction> {
    let mut out: Vec<LinearConstraint> = Vec::new();
    for c in constraints {
        if c.is_false() {
            return None;
        }
        if c.is_true() {
            continue;
        }
        let c = c.canonical();
        if !out.contains(&c) {
            out.push(c);
        }
    }
    Some(Conjunction::new(out))
}

/// Eliminates `v` from `c`: an equality mentioning `v` is used as a pivot when
/// available, otherwise every lower/upper bound pair on `v` is combined.
pub fn eliminate_var(c: &Conjunction, v: VarId) -> Conjunction {
    if c.has_false() {
        return falsity();
    }
    if !c.iter().any(|lc| lc.mentions(v)) {
        return c.clone();
    }

    if let Some(pivot) = c.iter().position(|lc| lc.rel() == Rel::Eq && lc.mentions(v)) {
        let eq = &c.constraints()[pivot];
        let a = eq.expr().coeff(v).expect("pivot mentions v").clone();
        // a*v + rest = 0  =>  v = -rest / a
        let mut rest = eq.expr().clone();
        rest.add_term(v, -a.clone());
        let replacement = rest.scale(&(-a.recip()));
        let substituted = c
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != pivot)
            .map(|(_, lc)| lc.substitute(v, &replacement));
        return tidy(substituted).unwrap_or_else(falsity);
    }

    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut untouched = Vec::new();
    for lc in c.iter() {
        match lc.expr().coeff(v) {
            Some(a) if a.is_negative() => lower.push((lc, a.clone())),
            Some(a) => upper.push((lc, a.clone())),
            None => untouched.push(lc.clone()),
        }
    }
    let mut combined = untouched;
    for (lo, a_lo) in &lower {
        for (up, a_up) in &upper {
            let expr = lo.expr().scale(a_up).plus(&up.expr().scale(&-a_lo));
            debug_assert!(expr.coeff(v).is_none());
            let rel = if lo.rel() == Rel::Lt || up.rel() == Rel::Lt {
                Rel::Lt
            } else {
                Rel::Le
            };
            combined.push(LinearConstraint::new(expr, rel));
        }
    }
    tidy(combined).unwrap_or_else(falsity)
}

/// True iff every point of `rest` satisfies `candidate`. `rest` must be
/// satisfiable.
pub fn entails(rest: &Conjunction, candidate: &LinearConstraint) -> bool {
    let e = candidate.expr();
    let below = |strict: bool, r: &crate::lp::LpResult| -> bool {
        if r.status != LpStatus::Optimal {
            return false;
        }
        let value = r.value.as_ref().expect("optimal value");
        if value.is_negative() {
            return true;
        }
        if !value.is_zero() {
            return false;
        }
        !strict || !r.attained
    };
    match candidate.rel() {
        Rel::Le => below(false, &optimize(e, rest, Sense::Max)),
        Rel::Lt => below(true, &optimize(e, rest, Sense::Max)),
        Rel::Eq => {
            below(false, &optimize(e, rest, Sense::Max))
                && below(false, &optimize(&e.neg(), rest, Sense::Max))
        }
    }
}

/// Removes constraints entailed by the remaining ones, scanning in order.
/// An unsatisfiable input yields the single FALSE constraint.
pub fn remove_redundant(c: &Conjunction) -> Conjunction {
    let Some(tidied) = tidy(c.iter().cloned()) else {
        return falsity();
    };
    if !is_satisfiable(&tidied).0 {
        return falsity();
    }
    let mut kept: Vec<LinearConstraint> = tidied.into_constraints();
    let mut i = 0;
    while i < kept.len() {
        let rest: Conjunction = kept
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, lc)| lc.clone())
            .collect();
        if entails(&rest, &kept[i]) {
            kept.remove(i);
        } else {
            i += 1;
        }
    }
    Conjunction::new(kept)
}

/// Shadow of `c` on `keep`: eliminates every other variable, lowest id first,
/// pruning redundant constraints after each step.
pub fn project(c: &Conjunction, keep: &BTreeSet<VarId>) -> Conjunction {
    let mut cur = remove_redundant(c);
    let doomed: Vec<VarId> = cur.vars().into_iter().filter(|v| !keep.contains(v)).collect();
    for v in doomed {
        if cur.has_false() {
            break;
        }
        cur = remove_redundant(&eliminate_var(&cur, v));
    }
    cur
}

/// Solution-set equality, checked by mutual entailment.
pub fn equivalent(a: &Conjunction, b: &Conjunction) -> bool {
    let sa = !a.has_false() && is_satisfiable(a).0;
    let sb = !b.has_false() && is_satisfiable(b).0;
    if !sa || !sb {
        return sa == sb;
    }
    a.iter().all(|lc| entails(b, lc)) && b.iter().all(|lc| entails(a, lc))
}
