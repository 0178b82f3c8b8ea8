//! Decision trees: the JSON interchange format, root-to-leaf path facts, and
//! direct prediction.
//!
//! A linear split `Σ aᵢ·xᵢ <= b` sends points satisfying it left and all
//! others right (`> b`, strict). With `"op":"lt"` the left branch is `< b` and
//! the right `>= b`. A nominal split `f = v` sends matches left.

use std::collections::BTreeSet;
use std::sync::Arc;

use num_traits::{Signed, Zero};
use serde_json::{json, Map, Value as Json};

use crate::error::TreeError;
use crate::features::{FeatureSpace, NamedPoint, Value, VarLayout};
use crate::linear::{fmt_rat, negate, parse_rat, Conjunction, LinExpr, LinearConstraint, Rat, Rel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitOp {
    /// left: `expr <= threshold`, right: `expr > threshold`
    Le,
    /// left: `expr < threshold`, right: `expr >= threshold`
    Lt,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SplitTest {
    /// Axis-parallel (one term) or oblique split over continuous/ordinal features.
    Linear {
        terms: Vec<(usize, Rat)>,
        op: SplitOp,
        threshold: Rat,
    },
    /// `feature = values[value]` goes left.
    NominalEq { feature: usize, value: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TreeNode {
    Leaf {
        class: String,
        confidence: Rat,
    },
    Split {
        test: SplitTest,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn leaf(class: &str, confidence: Rat) -> Self {
        TreeNode::Leaf {
            class: class.to_string(),
            confidence,
        }
    }

    pub fn split(test: SplitTest, left: TreeNode, right: TreeNode) -> Self {
        TreeNode::Split {
            test,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecisionTree {
    pub model_id: String,
    pub root: TreeNode,
    space: Arc<FeatureSpace>,
}

/// One root-to-leaf path of a tree instantiated on one instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathFact {
    pub model_id: String,
    pub constraints: Conjunction,
    pub class: String,
    pub confidence: Rat,
}

impl DecisionTree {
    /// Validates `root` against `space` (feature kinds, value domains, confidences).
    pub fn new(model_id: &str, root: TreeNode, space: Arc<FeatureSpace>) -> Result<Self, TreeError> {
        validate(&root, &space, "root")?;
        Ok(DecisionTree {
            model_id: model_id.to_string(),
            root,
            space,
        })
    }

    pub fn space(&self) -> &FeatureSpace {
        &self.space
    }

    pub fn num_nodes(&self) -> usize {
        fn count(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { .. } => 1,
                TreeNode::Split { left, right, .. } => 1 + count(left) + count(right),
            }
        }
        count(&self.root)
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves().len()
    }

    pub fn depth(&self) -> usize {
        fn depth(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + depth(left).max(depth(right)),
            }
        }
        depth(&self.root)
    }

    /// `(class, confidence, depth)` of every leaf, depth-first left-first.
    pub fn leaves(&self) -> Vec<(&str, &Rat, usize)> {
        fn walk<'a>(n: &'a TreeNode, d: usize, out: &mut Vec<(&'a str, &'a Rat, usize)>) {
            match n {
                TreeNode::Leaf { class, confidence } => out.push((class, confidence, d)),
                TreeNode::Split { left, right, .. } => {
                    walk(left, d + 1, out);
                    walk(right, d + 1, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, 0, &mut out);
        out
    }

    pub fn classes(&self) -> BTreeSet<String> {
        self.leaves().into_iter().map(|(c, _, _)| c.to_string()).collect()
    }

    /// Parses the interchange document against the shared feature space.
    pub fn from_json(text: &str, space: Arc<FeatureSpace>) -> Result<Self, TreeError> {
        let doc: Json = serde_json::from_str(text).map_err(|e| TreeError::Document(e.to_string()))?;
        parse_tree(&doc, space)
    }

    pub fn to_json(&self) -> Json {
        json!({"model_id": self.model_id, "node": node_json(&self.root, &self.space)})
    }

    /// Leaf reached by `point`; all features on the way must be bound.
    pub fn predict(&self, point: &NamedPoint) -> Result<(String, Rat), TreeError> {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { class, confidence } => return Ok((class.clone(), confidence.clone())),
                TreeNode::Split { test, left, right } => {
                    let go_left = match test {
                        SplitTest::Linear { terms, op, threshold } => {
                            let mut acc = Rat::zero();
                            for (f, a) in terms {
                                acc += a * self.numeric(point, *f)?;
                            }
                            match op {
                                SplitOp::Le => acc <= *threshold,
                                SplitOp::Lt => acc < *threshold,
                            }
                        }
                        SplitTest::NominalEq { feature, value } => {
                            let meta = &self.space.features()[*feature];
                            match point.get(&meta.name) {
                                Some(Value::Nom(v)) => meta.values().unwrap()[*value] == *v,
                                _ => return Err(TreeError::Predict(unbound(&meta.name))),
                            }
                        }
                    };
                    node = if go_left { left } else { right };
                }
            }
        }
    }

    fn numeric<'a>(&self, point: &'a NamedPoint, f: usize) -> Result<&'a Rat, TreeError> {
        let name = &self.space.features()[f].name;
        match point.get(name) {
            Some(Value::Num(r)) => Ok(r),
            _ => Err(TreeError::Predict(unbound(name))),
        }
    }
}

fn unbound(name: &str) -> crate::error::FeatureError {
    crate::error::FeatureError::Unbound(name.to_string())
}

fn validate(n: &TreeNode, space: &FeatureSpace, path: &str) -> Result<(), TreeError> {
    let err = |reason: String| TreeError::Node {
        path: path.to_string(),
        reason,
    };
    match n {
        TreeNode::Leaf { confidence, .. } => {
            if confidence.is_negative() || *confidence > Rat::from_integer(1.into()) {
                return Err(err(format!("confidence {} outside [0, 1]", fmt_rat(confidence))));
            }
            Ok(())
        }
        TreeNode::Split { test, left, right } => {
            match test {
                SplitTest::Linear { terms, .. } => {
                    if terms.is_empty() {
                        return Err(err("split has no terms".into()));
                    }
                    for (f, _) in terms {
                        let meta = space.features().get(*f).ok_or_else(|| err(format!("feature #{f}")))?;
                        if meta.is_nominal() {
                            return Err(err(format!("linear split on nominal feature `{}`", meta.name)));
                        }
                    }
                }
                SplitTest::NominalEq { feature, value } => {
                    let meta = space.features().get(*feature).ok_or_else(|| err(format!("feature #{feature}")))?;
                    match meta.values() {
                        Some(vals) if *value < vals.len() => {}
                        Some(_) => return Err(err("value index out of range".into())),
                        None => return Err(err(format!("equality split on non-nominal `{}`", meta.name))),
                    }
                }
            }
            validate(left, space, &format!("{path}.left"))?;
            validate(right, space, &format!("{path}.right"))
        }
    }
}

fn rat_field(v: Option<&Json>, path: &str, field: &str) -> Result<Rat, TreeError> {
    let err = |reason: String| TreeError::Node {
        path: path.to_string(),
        reason,
    };
    let text = match v {
        Some(Json::String(s)) => s.clone(),
        Some(Json::Number(n)) => n.to_string(),
        _ => return Err(err(format!("missing or non-numeric `{field}`"))),
    };
    parse_rat(&text).map_err(|e| err(e.to_string()))
}

fn str_field<'a>(obj: &'a Map<String, Json>, key: &str, path: &str) -> Result<&'a str, TreeError> {
    obj.get(key).and_then(Json::as_str).ok_or_else(|| TreeError::Node {
        path: path.to_string(),
        reason: format!("missing string `{key}`"),
    })
}

/// Parses `{"model_id": .., "node": ..}`.
pub fn parse_tree(doc: &Json, space: Arc<FeatureSpace>) -> Result<DecisionTree, TreeError> {
    let obj = doc
        .as_object()
        .ok_or_else(|| TreeError::Document("expected a JSON object".into()))?;
    let model_id = obj
        .get("model_id")
        .and_then(Json::as_str)
        .ok_or_else(|| TreeError::Document("missing string `model_id`".into()))?;
    let node = obj
        .get("node")
        .ok_or_else(|| TreeError::Document("missing `node`".into()))?;
    let root = parse_node(node, &space, "root")?;
    DecisionTree::new(model_id, root, space)
}

fn parse_node(v: &Json, space: &FeatureSpace, path: &str) -> Result<TreeNode, TreeError> {
    let node_err = |reason: &str| TreeError::Node {
        path: path.to_string(),
        reason: reason.to_string(),
    };
    let obj = v.as_object().ok_or_else(|| node_err("expected an object"))?;
    if let Some(leaf) = obj.get("leaf") {
        let leaf = leaf.as_object().ok_or_else(|| node_err("`leaf` must be an object"))?;
        let class = str_field(leaf, "class", path)?.to_string();
        let confidence = match leaf.get("confidence") {
            None => Rat::from_integer(1.into()),
            c => rat_field(c, path, "confidence")?,
        };
        return Ok(TreeNode::Leaf { class, confidence });
    }
    let test = if let Some(split) = obj.get("split") {
        let split = split.as_object().ok_or_else(|| node_err("`split` must be an object"))?;
        let terms_json = split
            .get("terms")
            .and_then(Json::as_array)
            .ok_or_else(|| node_err("split needs `terms`"))?;
        let mut terms = Vec::new();
        for t in terms_json {
            let t = t.as_object().ok_or_else(|| node_err("term must be an object"))?;
            let name = str_field(t, "feature", path)?;
            let f = space.index_of(name).ok_or_else(|| TreeError::UnknownFeature {
                path: path.to_string(),
                feature: name.to_string(),
            })?;
            let coef = match t.get("coef") {
                None => Rat::from_integer(1.into()),
                c => rat_field(c, path, "coef")?,
            };
            terms.push((f, coef));
        }
        let op = match split.get("op").and_then(Json::as_str).unwrap_or("le") {
            "le" => SplitOp::Le,
            "lt" => SplitOp::Lt,
            other => return Err(node_err(&format!("unknown split op `{other}`"))),
        };
        let threshold = rat_field(split.get("threshold"), path, "threshold")?;
        SplitTest::Linear { terms, op, threshold }
    } else if let Some(split) = obj.get("split_eq") {
        let split = split.as_object().ok_or_else(|| node_err("`split_eq` must be an object"))?;
        let name = str_field(split, "feature", path)?;
        let f = space.index_of(name).ok_or_else(|| TreeError::UnknownFeature {
            path: path.to_string(),
            feature: name.to_string(),
        })?;
        let value = str_field(split, "value", path)?;
        let k = space.features()[f]
            .value_index(value)
            .ok_or_else(|| TreeError::UnknownValue {
                path: path.to_string(),
                feature: name.to_string(),
                value: value.to_string(),
            })?;
        SplitTest::NominalEq { feature: f, value: k }
    } else {
        return Err(node_err("node needs `leaf`, `split` or `split_eq`"));
    };
    let left = obj.get("left").ok_or_else(|| node_err("missing `left`"))?;
    let right = obj.get("right").ok_or_else(|| node_err("missing `right`"))?;
    Ok(TreeNode::split(
        test,
        parse_node(left, space, &format!("{path}.left"))?,
        parse_node(right, space, &format!("{path}.right"))?,
    ))
}

fn node_json(n: &TreeNode, space: &FeatureSpace) -> Json {
    match n {
        TreeNode::Leaf { class, confidence } => {
            json!({"leaf": {"class": class, "confidence": fmt_rat(confidence)}})
        }
        TreeNode::Split { test, left, right } => {
            let mut obj = Map::new();
            match test {
                SplitTest::Linear { terms, op, threshold } => {
                    let terms: Vec<Json> = terms
                        .iter()
                        .map(|(f, a)| json!({"feature": space.features()[*f].name, "coef": fmt_rat(a)}))
                        .collect();
                    let op = match op {
                        SplitOp::Le => "le",
                        SplitOp::Lt => "lt",
                    };
                    obj.insert(
                        "split".into(),
                        json!({"terms": terms, "op": op, "threshold": fmt_rat(threshold)}),
                    );
                }
                SplitTest::NominalEq { feature, value } => {
                    let meta = &space.features()[*feature];
                    obj.insert(
                        "split_eq".into(),
                        json!({"feature": meta.name, "value": meta.values().unwrap()[*value]}),
                    );
                }
            }
            obj.insert("left".into(), node_json(left, space));
            obj.insert("right".into(), node_json(right, space));
            Json::Object(obj)
        }
    }
}

/// Left-branch constraint of a split, instantiated on `instance`.
fn split_constraint(test: &SplitTest, layout: &VarLayout, instance: usize) -> LinearConstraint {
    match test {
        SplitTest::Linear { terms, op, threshold } => {
            let expr = LinExpr::from_terms(
                terms.iter().map(|(f, a)| (layout.base(instance, *f), a.clone())),
                -threshold.clone(),
            );
            let rel = match op {
                SplitOp::Le => Rel::Le,
                SplitOp::Lt => Rel::Lt,
            };
            LinearConstraint::new(expr, rel)
        }
        SplitTest::NominalEq { feature, value } => LinearConstraint::eq(
            LinExpr::var(layout.base(instance, *feature) + value),
            LinExpr::constant(Rat::from_integer(1.into())),
        ),
    }
}

fn right_constraint(test: &SplitTest, layout: &VarLayout, instance: usize) -> LinearConstraint {
    match test {
        SplitTest::Linear { .. } => {
            negate(&split_constraint(test, layout, instance)).expect("linear splits are inequalities")
        }
        SplitTest::NominalEq { feature, value } => LinearConstraint::eq(
            LinExpr::var(layout.base(instance, *feature) + value),
            LinExpr::zero(),
        ),
    }
}

/// One [`PathFact`] per leaf, depth-first left-first, over `instance`'s variables.
pub fn enumerate_paths(tree: &DecisionTree, layout: &VarLayout, instance: &str) -> Result<Vec<PathFact>, TreeError> {
    let i = layout
        .instance_index(instance)
        .ok_or_else(|| TreeError::Predict(crate::error::FeatureError::UnknownInstance(instance.to_string())))?;
    if layout.space() != tree.space() {
        return Err(TreeError::Document("tree and layout use different feature spaces".into()));
    }
    let mut out = Vec::new();
    let mut prefix = Vec::new();
    walk_paths(&tree.root, layout, i, &tree.model_id, &mut prefix, &mut out);
    Ok(out)
}

fn walk_paths(
    n: &TreeNode,
    layout: &VarLayout,
    inst: usize,
    model_id: &str,
    prefix: &mut Vec<LinearConstraint>,
    out: &mut Vec<PathFact>,
) {
    match n {
        TreeNode::Leaf { class, confidence } => out.push(PathFact {
            model_id: model_id.to_string(),
            constraints: Conjunction::new(prefix.clone()),
            class: class.clone(),
            confidence: confidence.clone(),
        }),
        TreeNode::Split { test, left, right } => {
            prefix.push(split_constraint(test, layout, inst));
            walk_paths(left, layout, inst, model_id, prefix, out);
            prefix.pop();
            prefix.push(right_constraint(test, layout, inst));
            walk_paths(right, layout, inst, model_id, prefix, out);
            prefix.pop();
        }
    }
}
