//! Branch-and-bound over the exact LP for variables that must be integral.
//!
//! Nodes are explored depth first, floor branch first, branching on the most
//! fractional variable (lowest id on ties). A node whose closed optimum is
//! already integral has its integer part fixed and the remaining continuous
//! problem solved with strictness; if that does not settle the node, it is
//! split three ways (`x <= k-1`, `x = k`, `x >= k+1`) on its lowest unfixed
//! integral variable, so strict boundaries never hide a better assignment.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_traits::{One, Signed};

use crate::linear::{Conjunction, LinExpr, LinearConstraint, Point, Rat, VarId};
use crate::lp::{self, Closed, LpStatus, Sense};

#[derive(Clone, Debug, PartialEq)]
pub struct MilpResult {
    pub status: LpStatus,
    /// Optimum, or the infimum/supremum when `attained` is false.
    pub value: Option<Rat>,
    pub attained: bool,
    /// Integral on the integer variables; attains `value` when `attained`.
    pub witness: Option<Point>,
    pub nodes: usize,
}

#[derive(Clone, Debug, Default)]
struct Bounds {
    lo: Option<BigInt>,
    hi: Option<BigInt>,
}

impl Bounds {
    fn fixed(&self) -> bool {
        matches!((&self.lo, &self.hi), (Some(a), Some(b)) if a == b)
    }
}

#[derive(Clone, Debug, Default)]
struct Node {
    bounds: BTreeMap<VarId, Bounds>,
}

impl Node {
    fn with_lo(&self, v: VarId, k: BigInt) -> Node {
        let mut n = self.clone();
        n.bounds.entry(v).or_default().lo = Some(k);
        n
    }

    fn with_hi(&self, v: VarId, k: BigInt) -> Node {
        let mut n = self.clone();
        n.bounds.entry(v).or_default().hi = Some(k);
        n
    }

    fn constraints(&self, base: &Conjunction) -> Conjunction {
        let mut c = base.clone();
        for (v, b) in &self.bounds {
            let x = LinExpr::var(*v);
            if b.fixed() {
                let k = Rat::from_integer(b.lo.clone().unwrap());
                c.push(LinearConstraint::eq(x, LinExpr::constant(k)));
                continue;
            }
            if let Some(lo) = &b.lo {
                c.push(LinearConstraint::ge(x.clone(), LinExpr::constant(Rat::from_integer(lo.clone()))));
            }
            if let Some(hi) = &b.hi {
                c.push(LinearConstraint::le(x, LinExpr::constant(Rat::from_integer(hi.clone()))));
            }
        }
        c
    }

    fn is_fixed(&self, v: VarId) -> bool {
        self.bounds.get(&v).is_some_and(Bounds::fixed)
    }
}

struct Incumbent {
    value: Rat,
    attained: bool,
    witness: Point,
}

impl Incumbent {
    /// A node with closed bound `v` cannot improve on this incumbent.
    fn prunes(&self, v: &Rat) -> bool {
        *v > self.value || (*v == self.value && self.attained)
    }
}

fn offer(best: &mut Option<Incumbent>, value: Rat, attained: bool, witness: Point) {
    let better = match best {
        None => true,
        Some(b) => value < b.value || (value == b.value && attained && !b.attained),
    };
    if better {
        *best = Some(Incumbent {
            value,
            attained,
            witness,
        });
    }
}

/// Exact optimum over points integral on `int_vars` and rational elsewhere.
pub fn solve_milp(objective: &LinExpr, c: &Conjunction, int_vars: &BTreeSet<VarId>, sense: Sense) -> MilpResult {
    let obj = match sense {
        Sense::Min => objective.clone(),
        Sense::Max => objective.neg(),
    };
    let mut r = minimize(&obj, c, int_vars, false);
    if sense == Sense::Max {
        r.value = r.value.map(|v| -v);
    }
    r
}

/// Integral-aware feasibility; returns a witness when one exists.
pub fn feasible_point(c: &Conjunction, int_vars: &BTreeSet<VarId>) -> Option<Point> {
    let r = minimize(&LinExpr::zero(), c, int_vars, true);
    r.witness.filter(|_| r.status == LpStatus::Optimal)
}

fn minimize(obj: &LinExpr, base: &Conjunction, int_vars: &BTreeSet<VarId>, first_feasible: bool) -> MilpResult {
    let mut nodes = 0;
    let mut best: Option<Incumbent> = None;
    let mut stack = vec![Node::default()];
    let relevant: BTreeSet<VarId> = {
        let mut vs = base.vars();
        vs.extend(obj.vars());
        vs.intersection(int_vars).copied().collect()
    };

    while let Some(node) = stack.pop() {
        nodes += 1;
        let conj = node.constraints(base);
        let (v, vertex) = match lp::minimize_closed(obj, &conj) {
            Closed::Infeasible => continue,
            Closed::Unbounded { .. } => {
                if let Some(w) = feasible_point(&conj, int_vars) {
                    return MilpResult {
                        status: LpStatus::Unbounded,
                        value: None,
                        attained: false,
                        witness: Some(w),
                        nodes,
                    };
                }
                continue;
            }
            Closed::Optimal { value, point } => (value, point),
        };
        if best.as_ref().is_some_and(|b| b.prunes(&v)) {
            continue;
        }

        if let Some(j) = most_fractional(&vertex, &relevant) {
            let x = &vertex[&j];
            let fl = x.floor().to_integer();
            stack.push(node.with_lo(j, &fl + 1));
            stack.push(node.with_hi(j, fl));
            continue;
        }

        let unfixed = relevant.iter().copied().find(|&j| !node.is_fixed(j));
        let Some(j) = unfixed else {
            // integer part fully fixed: the continuous remainder decides the node
            let r = lp::optimize(obj, &conj, Sense::Min);
            if r.status == LpStatus::Optimal {
                offer(&mut best, r.value.unwrap(), r.attained, r.witness.unwrap());
            }
            if first_feasible && best.is_some() {
                break;
            }
            continue;
        };

        let mut fixed = conj.clone();
        for &i in &relevant {
            fixed.push(LinearConstraint::eq(LinExpr::var(i), LinExpr::constant(vertex[&i].clone())));
        }
        let r = lp::optimize(obj, &fixed, Sense::Min);
        if r.status == LpStatus::Optimal {
            let value = r.value.unwrap();
            let settled = r.attained && value == v;
            offer(&mut best, value, r.attained, r.witness.unwrap());
            if settled || (first_feasible && best.is_some()) {
                if first_feasible {
                    break;
                }
                continue;
            }
        }
        let k = vertex[&j].to_integer();
        stack.push(node.with_lo(j, &k + 1));
        stack.push(node.with_hi(j, &k - 1));
        stack.push(node.with_lo(j, k.clone()).with_hi(j, k));
    }

    match best {
        Some(b) => MilpResult {
            status: LpStatus::Optimal,
            value: Some(b.value),
            attained: b.attained,
            witness: Some(b.witness),
            nodes,
        },
        None => MilpResult {
            status: LpStatus::Infeasible,
            value: None,
            attained: false,
            witness: None,
            nodes,
        },
    }
}

/// Variable whose fractional part is closest to 1/2; lowest id on ties.
fn most_fractional(point: &Point, int_vars: &BTreeSet<VarId>) -> Option<VarId> {
    let half = Rat::new(BigInt::one(), BigInt::from(2));
    let mut best: Option<(VarId, Rat)> = None;
    for &v in int_vars {
        let Some(x) = point.get(&v) else { continue };
        if x.is_integer() {
            continue;
        }
        let frac = x - x.floor();
        let dist = (&frac - &half).abs();
        if best.as_ref().is_none_or(|(_, d)| dist < *d) {
            best = Some((v, dist));
        }
    }
    best.map(|(v, _)| v)
}

/// Independent re-check of a MILP witness: every constraint holds exactly
/// and every integral variable has an integer value.
pub fn verify_witness(c: &Conjunction, int_vars: &BTreeSet<VarId>, w: &Point) -> bool {
    let integral = int_vars
        .iter()
        .filter_map(|v| w.get(v))
        .all(|x| x.is_integer());
    integral && c.holds(w).unwrap_or(false)
}
