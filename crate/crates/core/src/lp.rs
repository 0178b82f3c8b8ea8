//! Exact-rational linear programming over a single [`Conjunction`].
//!
//! A dense two-phase tableau simplex with Bland's rule does the work on the
//! closed relaxation. Strict inequalities are handled on top of it: strict
//! satisfiability maximizes the smallest slack `t` of the strict constraints
//! (capped at 1) and succeeds iff `t > 0`; an optimum is attained iff the
//! strict system stays satisfiable with the objective pinned to the closed
//! optimum.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Signed, Zero};

use crate::linear::{Conjunction, LinExpr, LinearConstraint, Point, Rat, Rel, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Infeasible,
    Optimal,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpResult {
    pub status: LpStatus,
    /// Optimum (or infimum/supremum when not attained); `None` unless `Optimal`.
    pub value: Option<Rat>,
    pub attained: bool,
    /// A point satisfying every constraint, strict ones strictly. It attains
    /// `value` when `attained`.
    pub witness: Option<Point>,
    /// Optimal vertex of the closed relaxation.
    pub vertex: Option<Point>,
    /// Recession direction improving the objective, when `Unbounded`.
    pub ray: Option<Point>,
}

impl LpResult {
    fn infeasible() -> Self {
        LpResult {
            status: LpStatus::Infeasible,
            value: None,
            attained: false,
            witness: None,
            vertex: None,
            ray: None,
        }
    }
}

/// Outcome of the closed (non-strict) relaxation.
#[derive(Clone, Debug, PartialEq)]
pub enum Closed {
    Infeasible,
    Optimal { value: Rat, point: Point },
    Unbounded { point: Point, ray: Point },
}

/// True iff `c` has a rational solution honoring strict relations strictly.
pub fn is_satisfiable(c: &Conjunction) -> (bool, Option<Point>) {
    match strict_witness(c, &BTreeSet::new()) {
        Some(p) => (true, Some(p)),
        None => (false, None),
    }
}

/// Optimum of `objective` over `c` with strictness bookkeeping.
pub fn optimize(objective: &LinExpr, c: &Conjunction, sense: Sense) -> LpResult {
    let obj = match sense {
        Sense::Min => objective.clone(),
        Sense::Max => objective.neg(),
    };
    let flip = |v: Rat| match sense {
        Sense::Min => v,
        Sense::Max => -v,
    };
    let extra: BTreeSet<VarId> = objective.vars().collect();
    let has_strict = c.iter().any(|lc| lc.rel() == Rel::Lt);

    let interior = if has_strict {
        match strict_witness(c, &extra) {
            Some(p) => Some(p),
            None => return LpResult::infeasible(),
        }
    } else {
        None
    };

    match minimize_closed(&obj, c) {
        Closed::Infeasible => LpResult::infeasible(),
        Closed::Unbounded { point, ray } => LpResult {
            status: LpStatus::Unbounded,
            value: None,
            attained: false,
            witness: Some(interior.unwrap_or(point)),
            vertex: None,
            ray: Some(ray),
        },
        Closed::Optimal { value, point } => {
            if !has_strict {
                return LpResult {
                    status: LpStatus::Optimal,
                    value: Some(flip(value)),
                    attained: true,
                    witness: Some(point.clone()),
                    vertex: Some(point),
                    ray: None,
                };
            }
            let mut pinned = c.clone();
            pinned.push(LinearConstraint::eq(obj.clone(), LinExpr::constant(value.clone())));
            let (attained, witness) = match strict_witness(&pinned, &extra) {
                Some(p) => (true, p),
                None => (false, interior.expect("strict system is satisfiable")),
            };
            LpResult {
                status: LpStatus::Optimal,
                value: Some(flip(value)),
                attained,
                witness: Some(witness),
                vertex: Some(point),
                ray: None,
            }
        }
    }
}

/// Minimizes `objective` over the closure of `c` (strict relations weakened).
pub fn minimize_closed(objective: &LinExpr, c: &Conjunction) -> Closed {
    if c.has_false() {
        return Closed::Infeasible;
    }
    let rows: Vec<(LinExpr, bool)> = c
        .iter()
        .filter(|lc| !lc.is_true())
        .map(|lc| (lc.expr().clone(), lc.rel() == Rel::Eq))
        .collect();
    let mut vars: BTreeSet<VarId> = c.vars();
    vars.extend(objective.vars());
    solve_closed(&rows, objective, &vars)
}

/// Maximizes the smallest strict slack; returns a strictly feasible point
/// (restricted to variables of `c` plus `extra`) when one exists.
fn strict_witness(c: &Conjunction, extra: &BTreeSet<VarId>) -> Option<Point> {
    if c.has_false() {
        return None;
    }
    let mut vars: BTreeSet<VarId> = c.vars();
    vars.extend(extra.iter().copied());
    let has_strict = c.iter().any(|lc| lc.rel() == Rel::Lt);
    if !has_strict {
        let rows: Vec<(LinExpr, bool)> = c
            .iter()
            .filter(|lc| !lc.is_true())
            .map(|lc| (lc.expr().clone(), lc.rel() == Rel::Eq))
            .collect();
        return match solve_closed(&rows, &LinExpr::zero(), &vars) {
            Closed::Optimal { point, .. } => Some(point),
            _ => None,
        };
    }
    let t = vars.iter().next_back().map_or(0, |v| v + 1);
    let mut rows: Vec<(LinExpr, bool)> = Vec::with_capacity(c.len() + 1);
    for lc in c.iter().filter(|lc| !lc.is_true()) {
        match lc.rel() {
            Rel::Lt => {
                let mut e = lc.expr().clone();
                e.add_term(t, Rat::one());
                rows.push((e, false));
            }
            Rel::Le => rows.push((lc.expr().clone(), false)),
            Rel::Eq => rows.push((lc.expr().clone(), true)),
        }
    }
    rows.push((LinExpr::from_terms([(t, Rat::one())], -Rat::one()), false));
    let mut all = vars.clone();
    all.insert(t);
    match solve_closed(&rows, &LinExpr::term(t, -Rat::one()), &all) {
        Closed::Optimal { value, mut point } if value.is_negative() => {
            point.remove(&t);
            Some(point)
        }
        _ => None,
    }
}

/// Minimizes over `{e <= 0 | e = 0}` rows with free variables `vars`.
fn solve_closed(rows: &[(LinExpr, bool)], objective: &LinExpr, vars: &BTreeSet<VarId>) -> Closed {
    let index: BTreeMap<VarId, usize> = vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let n = vars.len();
    let m = rows.len();
    let n_slack = rows.iter().filter(|(_, eq)| !eq).count();
    // columns: [x+ , x-] per variable, slacks, artificials
    let structural = 2 * n;
    let slack_start = structural;
    let art_start = slack_start + n_slack;

    let mut tab: Vec<Vec<Rat>> = Vec::with_capacity(m);
    let mut rhs: Vec<Rat> = Vec::with_capacity(m);
    let mut basis: Vec<usize> = Vec::with_capacity(m);
    let mut needs_art: Vec<bool> = Vec::with_capacity(m);
    let mut slack = slack_start;
    for (e, is_eq) in rows {
        let mut row = vec![Rat::zero(); art_start];
        for (v, c) in e.terms() {
            let j = index[&v];
            row[2 * j] = c.clone();
            row[2 * j + 1] = -c.clone();
        }
        let mut b = -e.constant_term().clone();
        let mut slack_col = None;
        if !is_eq {
            row[slack] = Rat::one();
            slack_col = Some(slack);
            slack += 1;
        }
        if b.is_negative() {
            for x in row.iter_mut() {
                *x = -x.clone();
            }
            b = -b;
        }
        let basic_slack = slack_col.filter(|&s| row[s].is_positive());
        needs_art.push(basic_slack.is_none());
        basis.push(basic_slack.unwrap_or(usize::MAX));
        tab.push(row);
        rhs.push(b);
    }
    let n_art = needs_art.iter().filter(|b| **b).count();
    let total = art_start + n_art;
    let mut art = art_start;
    for (r, row) in tab.iter_mut().enumerate() {
        row.resize(total, Rat::zero());
        if needs_art[r] {
            row[art] = Rat::one();
            basis[r] = art;
            art += 1;
        }
    }
    let mut t = Tableau {
        rows: tab,
        rhs,
        basis,
        obj: vec![Rat::zero(); total],
        obj_rhs: Rat::zero(),
        allowed: total,
    };

    if n_art > 0 {
        // phase 1: minimize Σ artificials
        let mut cost = vec![Rat::zero(); total];
        for c in cost.iter_mut().skip(art_start) {
            *c = Rat::one();
        }
        t.set_cost(&cost);
        if t.run().is_err() {
            unreachable!("phase 1 is bounded below by zero");
        }
        if !t.obj_rhs.is_zero() {
            return Closed::Infeasible;
        }
        t.drive_out_artificials(art_start);
        t.allowed = art_start;
    }

    let mut cost = vec![Rat::zero(); total];
    for (v, c) in objective.terms() {
        let j = index[&v];
        cost[2 * j] = c.clone();
        cost[2 * j + 1] = -c.clone();
    }
    t.set_cost(&cost);
    let to_point = |cols: &[Rat]| -> Point {
        vars.iter()
            .enumerate()
            .map(|(j, v)| (*v, &cols[2 * j] - &cols[2 * j + 1]))
            .collect()
    };
    match t.run() {
        Ok(()) => {
            let cols = t.column_values();
            let value = objective.constant_term() + &t.obj_rhs;
            Closed::Optimal {
                value,
                point: to_point(&cols),
            }
        }
        Err(entering) => {
            let cols = t.column_values();
            let mut dir = vec![Rat::zero(); total];
            dir[entering] = Rat::one();
            for (r, &b) in t.basis.iter().enumerate() {
                dir[b] = -t.rows[r][entering].clone();
            }
            Closed::Unbounded {
                point: to_point(&cols),
                ray: to_point(&dir),
            }
        }
    }
}

struct Tableau {
    rows: Vec<Vec<Rat>>,
    rhs: Vec<Rat>,
    basis: Vec<usize>,
    /// Reduced costs.
    obj: Vec<Rat>,
    /// Objective value `c_B·x_B` at the current basis.
    obj_rhs: Rat,
    /// Columns with index >= `allowed` never enter.
    allowed: usize,
}

impl Tableau {
    fn set_cost(&mut self, cost: &[Rat]) {
        self.obj = cost.to_vec();
        self.obj_rhs = Rat::zero();
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = &cost[b];
            if cb.is_zero() {
                continue;
            }
            for (o, a) in self.obj.iter_mut().zip(&self.rows[r]) {
                if !a.is_zero() {
                    *o -= cb * a;
                }
            }
            self.obj_rhs += cb * &self.rhs[r];
        }
    }

    /// Bland's rule to optimality; `Err(col)` when `col` improves without bound.
    fn run(&mut self) -> Result<(), usize> {
        loop {
            let Some(enter) = (0..self.allowed)
                .find(|&j| self.obj[j].is_negative() && !self.basis.contains(&j))
            else {
                return Ok(());
            };
            let mut leave: Option<(usize, Rat)> = None;
            for r in 0..self.rows.len() {
                let a = &self.rows[r][enter];
                if !a.is_positive() {
                    continue;
                }
                let ratio = &self.rhs[r] / a;
                let better = match &leave {
                    None => true,
                    Some((lr, best)) => {
                        ratio < *best || (ratio == *best && self.basis[r] < self.basis[*lr])
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
            match leave {
                None => return Err(enter),
                Some((r, _)) => self.pivot(r, enter),
            }
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c].clone();
        if !p.is_one() {
            let inv = p.recip();
            for x in self.rows[r].iter_mut() {
                if !x.is_zero() {
                    *x *= &inv;
                }
            }
            self.rhs[r] *= &inv;
        }
        let nz: Vec<usize> = (0..self.rows[r].len())
            .filter(|&j| !self.rows[r][j].is_zero())
            .collect();
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r].clone();
        for i in 0..self.rows.len() {
            if i == r || self.rows[i][c].is_zero() {
                continue;
            }
            let f = self.rows[i][c].clone();
            for &j in &nz {
                let d = &f * &pivot_row[j];
                self.rows[i][j] -= d;
            }
            let d = &f * &pivot_rhs;
            self.rhs[i] -= d;
        }
        if !self.obj[c].is_zero() {
            let f = self.obj[c].clone();
            for &j in &nz {
                let d = &f * &pivot_row[j];
                self.obj[j] -= d;
            }
            self.obj_rhs += &f * &pivot_rhs;
        }
        self.basis[r] = c;
    }

    /// After phase 1: pivot zero-level artificials out, dropping redundant rows.
    fn drive_out_artificials(&mut self, art_start: usize) {
        let mut r = 0;
        while r < self.rows.len() {
            if self.basis[r] < art_start {
                r += 1;
                continue;
            }
            match (0..art_start).find(|&j| !self.rows[r][j].is_zero()) {
                Some(j) => {
                    self.pivot(r, j);
                    r += 1;
                }
                None => {
                    self.rows.remove(r);
                    self.rhs.remove(r);
                    self.basis.remove(r);
                }
            }
        }
    }

    fn column_values(&self) -> Vec<Rat> {
        let mut cols = vec![Rat::zero(); self.obj.len()];
        for (r, &b) in self.basis.iter().enumerate() {
            cols[b] = self.rhs[r].clone();
        }
        cols
    }
}
