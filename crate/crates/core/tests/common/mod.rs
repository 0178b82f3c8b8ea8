//! Random generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_traits::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use dtreason_core::features::{build_layout, FeatureKind, FeatureMeta, FeatureSpace, NamedPoint, Value, VarLayout};
use dtreason_core::linear::{ratio, Conjunction, LinExpr, LinearConstraint, Point, Rat, Rel, VarId};
use dtreason_core::tree::{DecisionTree, SplitOp, SplitTest, TreeNode};

pub use rand::SeedableRng;

pub type Rng8 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng8 {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn small_rat(r: &mut Rng8, lo: i64, hi: i64, den: i64) -> Rat {
    let d = r.gen_range(1..=den);
    ratio(r.gen_range(lo * d..=hi * d), d)
}

/// Random metadata: every kind appears with some probability; continuous
/// features always get normalization bounds.
pub fn random_space(r: &mut Rng8, discrete_only: bool) -> FeatureSpace {
    let n = r.gen_range(2..=4);
    let mut metas = Vec::new();
    for i in 0..n {
        let name = format!("f{i}");
        let pick = if discrete_only { r.gen_range(0..2) } else { r.gen_range(0..3) };
        let meta = match pick {
            0 => {
                let lo = r.gen_range(-2..=3);
                let width = if discrete_only { r.gen_range(1..=5) } else { r.gen_range(1..=8) };
                FeatureMeta::ordinal(&name, lo, lo + width)
            }
            1 => {
                let k = r.gen_range(2..=if discrete_only { 4 } else { 3 });
                let values: Vec<String> = (0..k).map(|j| format!("v{j}")).collect();
                let refs: Vec<&str> = values.iter().map(String::as_str).collect();
                FeatureMeta::nominal(&name, &refs)
            }
            _ => {
                let lo = r.gen_range(-4..=2);
                let hi = lo + r.gen_range(2..=8);
                FeatureMeta::continuous(&name, Some((Rat::from_integer(lo.into()), Rat::from_integer(hi.into()))))
            }
        };
        metas.push(meta);
    }
    FeatureSpace::new(metas).unwrap()
}

fn numeric_features(space: &FeatureSpace) -> Vec<usize> {
    (0..space.len()).filter(|&f| !space.features()[f].is_nominal()).collect()
}

fn bounds_of(meta: &FeatureMeta) -> (Rat, Rat) {
    meta.norm_bounds().expect("generated features are bounded")
}

fn random_test(r: &mut Rng8, space: &FeatureSpace) -> SplitTest {
    let f = r.gen_range(0..space.len());
    let meta = &space.features()[f];
    if let Some(values) = meta.values() {
        return SplitTest::NominalEq {
            feature: f,
            value: r.gen_range(0..values.len()),
        };
    }
    let op = if r.gen_bool(0.7) { SplitOp::Le } else { SplitOp::Lt };
    let numeric = numeric_features(space);
    let continuous: Vec<usize> = numeric
        .iter()
        .copied()
        .filter(|&g| matches!(space.features()[g].kind, FeatureKind::Continuous { .. }))
        .collect();
    if continuous.len() >= 2 && r.gen_bool(0.3) {
        let mut picked = continuous.clone();
        picked.shuffle(r);
        let terms: Vec<(usize, Rat)> = picked[..2]
            .iter()
            .map(|&g| {
                let mut c = r.gen_range(-3..=3);
                if c == 0 {
                    c = 1;
                }
                (g, Rat::from_integer(c.into()))
            })
            .collect();
        let threshold = small_rat(r, -6, 6, 2);
        return SplitTest::Linear { terms, op, threshold };
    }
    let (lo, hi) = bounds_of(meta);
    let span = (&hi - &lo) * Rat::from_integer(2.into());
    let steps = span.to_integer().to_string().parse::<i64>().unwrap().max(1);
    let threshold = lo + ratio(r.gen_range(0..=steps), 2);
    SplitTest::Linear {
        terms: vec![(f, Rat::one())],
        op,
        threshold,
    }
}

fn random_node(r: &mut Rng8, space: &FeatureSpace, depth: usize, max_depth: usize, classes: &[&str]) -> TreeNode {
    if depth == max_depth || (depth > 0 && r.gen_bool(0.25)) {
        let class = classes[r.gen_range(0..classes.len())];
        return TreeNode::leaf(class, ratio(r.gen_range(5..=10), 10));
    }
    let test = random_test(r, space);
    TreeNode::split(
        test,
        random_node(r, space, depth + 1, max_depth, classes),
        random_node(r, space, depth + 1, max_depth, classes),
    )
}

pub fn random_tree(r: &mut Rng8, space: Arc<FeatureSpace>, max_depth: usize) -> DecisionTree {
    let classes: &[&str] = if r.gen_bool(0.5) { &["a", "b"] } else { &["a", "b", "c"] };
    let root = random_node(r, &space, 0, max_depth, classes);
    DecisionTree::new("m", root, space).unwrap()
}

/// In-domain point; continuous values use denominators up to 4 so split
/// thresholds are hit exactly now and then.
pub fn random_point(r: &mut Rng8, space: &FeatureSpace) -> NamedPoint {
    let mut p = NamedPoint::new();
    for meta in space.features() {
        let v = match &meta.kind {
            FeatureKind::Ordinal { min, max } => {
                let lo: i64 = min.to_string().parse().unwrap();
                let hi: i64 = max.to_string().parse().unwrap();
                Value::Num(Rat::from_integer(r.gen_range(lo..=hi).into()))
            }
            FeatureKind::Nominal { values } => Value::Nom(values[r.gen_range(0..values.len())].clone()),
            FeatureKind::Continuous { .. } => {
                let (lo, hi) = bounds_of(meta);
                let d = *[1i64, 2, 4].choose(r).unwrap();
                let steps = ((&hi - &lo) * Rat::from_integer(d.into())).to_integer();
                let steps: i64 = steps.to_string().parse().unwrap();
                Value::Num(lo + ratio(r.gen_range(0..=steps), d))
            }
        };
        p.insert(meta.name.clone(), v);
    }
    p
}

/// Every point of an all-discrete space.
pub fn grid(space: &FeatureSpace) -> Vec<NamedPoint> {
    let mut out = vec![NamedPoint::new()];
    for meta in space.features() {
        let choices: Vec<Value> = match &meta.kind {
            FeatureKind::Ordinal { min, max } => {
                let lo: i64 = min.to_string().parse().unwrap();
                let hi: i64 = max.to_string().parse().unwrap();
                (lo..=hi).map(|k| Value::Num(Rat::from_integer(k.into()))).collect()
            }
            FeatureKind::Nominal { values } => values.iter().map(|v| Value::Nom(v.clone())).collect(),
            FeatureKind::Continuous { .. } => panic!("grid over a continuous feature"),
        };
        out = out
            .into_iter()
            .flat_map(|p| {
                choices.iter().map(move |v| {
                    let mut q = p.clone();
                    q.insert(meta.name.clone(), v.clone());
                    q
                })
            })
            .collect();
    }
    out
}

pub fn layout_for(space: Arc<FeatureSpace>, names: &[&str]) -> VarLayout {
    let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    build_layout(space, &names).unwrap()
}

/// Equalities pinning `instance` to `point`.
pub fn pin(layout: &VarLayout, instance: &str, point: &NamedPoint) -> Conjunction {
    layout
        .encode_point(instance, point)
        .unwrap()
        .into_iter()
        .map(|(v, x)| LinearConstraint::eq(LinExpr::var(v), LinExpr::constant(x)))
        .collect()
}

/// Random linear constraint over `nvars` variables.
pub fn random_constraint(r: &mut Rng8, nvars: usize, allow_eq: bool) -> LinearConstraint {
    let mut e = LinExpr::zero();
    let k = r.gen_range(1..=nvars.min(3));
    let mut vars: Vec<usize> = (0..nvars).collect();
    vars.shuffle(r);
    for &v in &vars[..k] {
        let mut c = r.gen_range(-3..=3);
        if c == 0 {
            c = 1;
        }
        e.add_term(v, Rat::from_integer(c.into()));
    }
    e.add_constant(&Rat::from_integer(r.gen_range(-6..=6).into()));
    let rel = match r.gen_range(0..10) {
        0 if allow_eq => Rel::Eq,
        0..=2 => Rel::Lt,
        _ => Rel::Le,
    };
    LinearConstraint::new(e, rel)
}

pub fn random_conjunction(r: &mut Rng8, nvars: usize, ncons: usize, allow_eq: bool) -> Conjunction {
    (0..ncons).map(|_| random_constraint(r, nvars, allow_eq)).collect()
}

/// Independent witness check: exact evaluation plus integrality.
pub fn check_witness(c: &Conjunction, ints: &BTreeSet<VarId>, w: &Point) -> bool {
    for lc in c.iter() {
        let mut acc = lc.expr().constant_term().clone();
        for (v, a) in lc.expr().terms() {
            match w.get(&v) {
                Some(x) => acc += a * x,
                None => return false,
            }
        }
        let ok = match lc.rel() {
            Rel::Le => !acc.is_positive(),
            Rel::Lt => acc.is_negative(),
            Rel::Eq => acc.is_zero(),
        };
        if !ok {
            return false;
        }
    }
    ints.iter().all(|v| w.get(v).is_none_or(|x| x.is_integer()))
}

/// Exact Gaussian elimination; `None` when singular.
#[allow(clippy::needless_range_loop)]
pub fn solve_square(mut a: Vec<Vec<Rat>>, mut b: Vec<Rat>) -> Option<Vec<Rat>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = &a[r][col] / &a[col][col];
                for c in col..n {
                    let t = &f * &a[col][c];
                    a[r][c] -= t;
                }
                let t = &f * &b[col];
                b[r] -= t;
            }
        }
    }
    Some((0..n).map(|i| &b[i] / &a[i][i]).collect())
}

/// Minimum of `obj` over the vertices of the closed polytope `c` in
/// `nvars` variables, by enumerating every basic solution. `None` when no
/// vertex is feasible.
pub fn vertex_min(obj: &LinExpr, c: &Conjunction, nvars: usize) -> Option<Rat> {
    let rows: Vec<&LinearConstraint> = c.iter().collect();
    let mut best: Option<Rat> = None;
    let mut idx: Vec<usize> = (0..nvars).collect();
    if rows.len() < nvars {
        return None;
    }
    loop {
        let a: Vec<Vec<Rat>> = idx
            .iter()
            .map(|&i| (0..nvars).map(|v| rows[i].expr().coeff(v).cloned().unwrap_or_else(Rat::zero)).collect())
            .collect();
        let b: Vec<Rat> = idx.iter().map(|&i| -rows[i].expr().constant_term().clone()).collect();
        if let Some(x) = solve_square(a, b) {
            let p: Point = x.into_iter().enumerate().collect();
            if c.iter().all(|lc| lc.holds_closed(&p).unwrap()) {
                let v = obj.eval(&p).unwrap();
                if best.as_ref().is_none_or(|b| v < *b) {
                    best = Some(v);
                }
            }
        }
        // next combination
        let mut i = nvars;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < rows.len() - nvars + i {
                idx[i] += 1;
                for j in i + 1..nvars {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Box `lo <= x_v <= hi` for every variable.
pub fn boxed(nvars: usize, lo: i64, hi: i64) -> Conjunction {
    let mut c = Conjunction::empty();
    for v in 0..nvars {
        c.push(LinearConstraint::le(
            LinExpr::constant(Rat::from_integer(lo.into())),
            LinExpr::var(v),
        ));
        c.push(LinearConstraint::le(LinExpr::var(v), LinExpr::constant(Rat::from_integer(hi.into()))));
    }
    c
}

/// Pins `vars` to `q` as equalities.
pub fn fix(vars: &BTreeMap<VarId, Rat>) -> Conjunction {
    vars.iter()
        .map(|(v, x)| LinearConstraint::eq(LinExpr::var(*v), LinExpr::constant(x.clone())))
        .collect()
}
