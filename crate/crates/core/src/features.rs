//! Feature metadata, the positional variable layout of declared instances, the
//! implicit datatype constraints, and decoding of answers back to named form.
//!
//! Nominal features are always one-hot encoded: a feature with values
//! `v1..vk` owns `k` consecutive 0/1 variables per instance, summing to one.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::FeatureError;
use crate::linear::{fmt_rat, parse_rat, Conjunction, LinExpr, LinearConstraint, Rat, Rel, VarId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    /// Real valued; optional `(min, max)` used only to normalize distances.
    Continuous { bounds: Option<(Rat, Rat)> },
    /// Consecutive integers `min..=max`.
    Ordinal { min: BigInt, max: BigInt },
    /// Distinct values, one-hot encoded.
    Nominal { values: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureMeta {
    pub name: String,
    pub kind: FeatureKind,
}

impl FeatureMeta {
    pub fn continuous(name: &str, bounds: Option<(Rat, Rat)>) -> Self {
        FeatureMeta {
            name: name.to_string(),
            kind: FeatureKind::Continuous { bounds },
        }
    }

    pub fn ordinal(name: &str, min: i64, max: i64) -> Self {
        FeatureMeta {
            name: name.to_string(),
            kind: FeatureKind::Ordinal {
                min: min.into(),
                max: max.into(),
            },
        }
    }

    pub fn nominal(name: &str, values: &[&str]) -> Self {
        FeatureMeta {
            name: name.to_string(),
            kind: FeatureKind::Nominal {
                values: values.iter().map(|v| v.to_string()).collect(),
            },
        }
    }

    /// Number of solver variables per instance.
    pub fn width(&self) -> usize {
        match &self.kind {
            FeatureKind::Nominal { values } => values.len(),
            _ => 1,
        }
    }

    pub fn is_nominal(&self) -> bool {
        matches!(self.kind, FeatureKind::Nominal { .. })
    }

    pub fn values(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Nominal { values } => Some(values),
            _ => None,
        }
    }

    pub fn value_index(&self, value: &str) -> Option<usize> {
        self.values()?.iter().position(|v| v == value)
    }

    /// `(min, max)` used for max-min normalization, if known.
    pub fn norm_bounds(&self) -> Option<(Rat, Rat)> {
        match &self.kind {
            FeatureKind::Continuous { bounds } => bounds.clone(),
            FeatureKind::Ordinal { min, max } => {
                Some((Rat::from_integer(min.clone()), Rat::from_integer(max.clone())))
            }
            FeatureKind::Nominal { .. } => None,
        }
    }

    fn validate(&self) -> Result<(), FeatureError> {
        let invalid = |reason: &str| FeatureError::InvalidMeta {
            feature: self.name.clone(),
            reason: reason.to_string(),
        };
        match &self.kind {
            FeatureKind::Continuous { bounds: Some((lo, hi)) } if lo >= hi => {
                Err(invalid("continuous bounds need min < max"))
            }
            FeatureKind::Ordinal { min, max } if min > max => Err(invalid("ordinal needs min <= max")),
            FeatureKind::Nominal { values } => {
                if values.len() < 2 {
                    return Err(invalid("nominal features need at least two values"));
                }
                let distinct: BTreeSet<_> = values.iter().collect();
                if distinct.len() != values.len() {
                    return Err(invalid("nominal values must be distinct"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Ordered, validated feature list shared by every instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureSpace {
    features: Vec<FeatureMeta>,
}

impl FeatureSpace {
    pub fn new(features: Vec<FeatureMeta>) -> Result<Self, FeatureError> {
        let mut seen = BTreeSet::new();
        for f in &features {
            if !seen.insert(f.name.as_str()) {
                return Err(FeatureError::DuplicateFeature(f.name.clone()));
            }
            f.validate()?;
        }
        Ok(FeatureSpace { features })
    }

    pub fn from_json(text: &str) -> Result<Self, FeatureError> {
        let doc: MetaDocument =
            serde_json::from_str(text).map_err(|e| FeatureError::Document(e.to_string()))?;
        doc.into_space()
    }

    pub fn features(&self) -> &[FeatureMeta] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&FeatureMeta> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn to_document(&self) -> MetaDocument {
        MetaDocument {
            features: self.features.iter().map(FeatureDoc::from).collect(),
        }
    }
}

/// `{"features":[...]}` metadata interchange document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetaDocument {
    pub features: Vec<FeatureDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureDoc {
    pub name: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "de_opt_num")]
    pub min: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "de_opt_num")]
    pub max: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
}

/// Accepts a JSON number or string and keeps its literal text.
fn de_opt_num<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    let v = Option::<serde_json::Value>::deserialize(d)?;
    match v {
        None | Some(serde_json::Value::Null) => Ok(None),
        Some(serde_json::Value::Number(n)) => Ok(Some(n.to_string())),
        Some(serde_json::Value::String(s)) => Ok(Some(s)),
        Some(other) => Err(serde::de::Error::custom(format!("expected number, got {other}"))),
    }
}

impl MetaDocument {
    pub fn into_space(self) -> Result<FeatureSpace, FeatureError> {
        let metas = self
            .features
            .into_iter()
            .map(FeatureDoc::into_meta)
            .collect::<Result<Vec<_>, _>>()?;
        FeatureSpace::new(metas)
    }
}

impl FeatureDoc {
    fn into_meta(self) -> Result<FeatureMeta, FeatureError> {
        let invalid = |reason: String| FeatureError::InvalidMeta {
            feature: self.name.clone(),
            reason,
        };
        let num = |s: &Option<String>| -> Result<Option<Rat>, FeatureError> {
            s.as_deref()
                .map(|t| parse_rat(t).map_err(|e| invalid(e.to_string())))
                .transpose()
        };
        let kind = match self.kind.as_str() {
            "continuous" => {
                let bounds = match (num(&self.min)?, num(&self.max)?) {
                    (Some(lo), Some(hi)) => Some((lo, hi)),
                    (None, None) => None,
                    _ => return Err(invalid("continuous bounds need both min and max".into())),
                };
                FeatureKind::Continuous { bounds }
            }
            "ordinal" => {
                let (Some(lo), Some(hi)) = (num(&self.min)?, num(&self.max)?) else {
                    return Err(invalid("ordinal features need min and max".into()));
                };
                if !lo.is_integer() || !hi.is_integer() {
                    return Err(invalid("ordinal bounds must be integers".into()));
                }
                FeatureKind::Ordinal {
                    min: lo.to_integer(),
                    max: hi.to_integer(),
                }
            }
            "nominal" => FeatureKind::Nominal {
                values: self
                    .values
                    .clone()
                    .ok_or_else(|| invalid("nominal features need values".into()))?,
            },
            other => return Err(invalid(format!("unknown kind `{other}`"))),
        };
        Ok(FeatureMeta {
            name: self.name.clone(),
            kind,
        })
    }
}

impl From<&FeatureMeta> for FeatureDoc {
    fn from(f: &FeatureMeta) -> Self {
        let (kind, min, max, values) = match &f.kind {
            FeatureKind::Continuous { bounds } => (
                "continuous",
                bounds.as_ref().map(|b| fmt_rat(&b.0)),
                bounds.as_ref().map(|b| fmt_rat(&b.1)),
                None,
            ),
            FeatureKind::Ordinal { min, max } => {
                ("ordinal", Some(min.to_string()), Some(max.to_string()), None)
            }
            FeatureKind::Nominal { values } => ("nominal", None, None, Some(values.clone())),
        };
        FeatureDoc {
            name: f.name.clone(),
            kind: kind.to_string(),
            min,
            max,
            values,
        }
    }
}

/// A concrete feature value of a named instance.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Value {
    Num(Rat),
    Nom(String),
}

impl Value {
    pub fn render(&self) -> String {
        match self {
            Value::Num(r) => fmt_rat(r),
            Value::Nom(s) => s.clone(),
        }
    }
}

/// Named feature values of one instance.
pub type NamedPoint = BTreeMap<String, Value>;

/// What a solver variable stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarInfo {
    pub instance: usize,
    pub feature: usize,
    /// One-hot position for nominal features.
    pub value: Option<usize>,
}

/// Positional mapping from `(instance, feature[, value])` to solver variables.
///
/// Instance `i` owns the contiguous id block `i*stride .. (i+1)*stride`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarLayout {
    space: Arc<FeatureSpace>,
    instances: Vec<String>,
    offsets: Vec<usize>,
    stride: usize,
}

impl VarLayout {
    pub fn space(&self) -> &FeatureSpace {
        &self.space
    }

    pub fn shared_space(&self) -> Arc<FeatureSpace> {
        Arc::clone(&self.space)
    }

    pub fn instances(&self) -> &[String] {
        &self.instances
    }

    pub fn instance_index(&self, name: &str) -> Option<usize> {
        self.instances.iter().position(|n| n == name)
    }

    pub fn num_vars(&self) -> usize {
        self.stride * self.instances.len()
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// First variable of `feature` for instance `instance`.
    pub fn base(&self, instance: usize, feature: usize) -> VarId {
        instance * self.stride + self.offsets[feature]
    }

    /// Variable of a continuous/ordinal feature.
    pub fn scalar_var(&self, instance: &str, feature: &str) -> Result<VarId, FeatureError> {
        let (i, f) = self.locate(instance, feature)?;
        Ok(self.base(i, f))
    }

    /// One-hot variable of `feature = value`.
    pub fn onehot_var(&self, instance: &str, feature: &str, value: &str) -> Result<VarId, FeatureError> {
        let (i, f) = self.locate(instance, feature)?;
        let meta = &self.space.features[f];
        let k = meta.value_index(value).ok_or_else(|| FeatureError::OutOfDomain {
            feature: feature.to_string(),
            value: value.to_string(),
        })?;
        Ok(self.base(i, f) + k)
    }

    pub fn locate(&self, instance: &str, feature: &str) -> Result<(usize, usize), FeatureError> {
        let i = self
            .instance_index(instance)
            .ok_or_else(|| FeatureError::UnknownInstance(instance.to_string()))?;
        let f = self
            .space
            .index_of(feature)
            .ok_or_else(|| FeatureError::UnknownFeature(feature.to_string()))?;
        Ok((i, f))
    }

    pub fn describe(&self, v: VarId) -> Option<VarInfo> {
        if v >= self.num_vars() {
            return None;
        }
        let instance = v / self.stride;
        let off = v % self.stride;
        let feature = self.offsets.partition_point(|&o| o <= off) - 1;
        let value = self.space.features[feature]
            .is_nominal()
            .then(|| off - self.offsets[feature]);
        Some(VarInfo {
            instance,
            feature,
            value,
        })
    }

    pub fn is_integral(&self, v: VarId) -> bool {
        self.describe(v).is_some_and(|info| {
            !matches!(
                self.space.features[info.feature].kind,
                FeatureKind::Continuous { .. }
            )
        })
    }

    /// Ordinal and one-hot variables.
    pub fn integral_vars(&self) -> BTreeSet<VarId> {
        (0..self.num_vars()).filter(|&v| self.is_integral(v)).collect()
    }

    pub fn instance_vars(&self, instance: usize) -> std::ops::Range<VarId> {
        instance * self.stride..(instance + 1) * self.stride
    }

    /// Variables of one feature of one instance (k ids for a nominal).
    pub fn feature_vars(&self, instance: usize, feature: usize) -> std::ops::Range<VarId> {
        let b = self.base(instance, feature);
        b..b + self.space.features[feature].width()
    }

    /// `Instance.feature` name; one-hot variables render as `[I.f = v]`.
    pub fn var_name(&self, v: VarId) -> String {
        match self.describe(v) {
            None => format!("_s{v}"),
            Some(info) => {
                let meta = &self.space.features[info.feature];
                let base = format!("{}.{}", self.instances[info.instance], meta.name);
                match (info.value, meta.values()) {
                    (Some(k), Some(vals)) => format!("[{base} = {}]", vals[k]),
                    _ => base,
                }
            }
        }
    }

    /// Maps a named point of one instance to solver variables.
    pub fn encode_point(&self, instance: &str, named: &NamedPoint) -> Result<BTreeMap<VarId, Rat>, FeatureError> {
        let i = self
            .instance_index(instance)
            .ok_or_else(|| FeatureError::UnknownInstance(instance.to_string()))?;
        let mut out = BTreeMap::new();
        for (name, value) in named {
            let f = self
                .space
                .index_of(name)
                .ok_or_else(|| FeatureError::UnknownFeature(name.clone()))?;
            let meta = &self.space.features[f];
            let out_of_domain = || FeatureError::OutOfDomain {
                feature: name.clone(),
                value: value.render(),
            };
            let base = self.base(i, f);
            match (&meta.kind, value) {
                (FeatureKind::Continuous { .. }, Value::Num(r)) => {
                    out.insert(base, r.clone());
                }
                (FeatureKind::Ordinal { min, max }, Value::Num(r)) => {
                    if !r.is_integer() || r.numer() < min || r.numer() > max {
                        return Err(out_of_domain());
                    }
                    out.insert(base, r.clone());
                }
                (FeatureKind::Nominal { values }, Value::Nom(s)) => {
                    let k = values.iter().position(|v| v == s).ok_or_else(out_of_domain)?;
                    for j in 0..values.len() {
                        let bit = if j == k { Rat::one() } else { Rat::zero() };
                        out.insert(base + j, bit);
                    }
                }
                _ => return Err(out_of_domain()),
            }
        }
        Ok(out)
    }

    /// Inverse of [`VarLayout::encode_point`] for every feature bound in `point`.
    ///
    /// A nominal block decodes only when exactly one of its variables is 1 and the
    /// rest are 0.
    pub fn decode_point(&self, instance: &str, point: &BTreeMap<VarId, Rat>) -> Result<NamedPoint, FeatureError> {
        let i = self
            .instance_index(instance)
            .ok_or_else(|| FeatureError::UnknownInstance(instance.to_string()))?;
        let mut out = NamedPoint::new();
        for (f, meta) in self.space.features.iter().enumerate() {
            let base = self.base(i, f);
            match meta.values() {
                None => {
                    if let Some(r) = point.get(&base) {
                        out.insert(meta.name.clone(), Value::Num(r.clone()));
                    }
                }
                Some(values) => {
                    let bits: Vec<_> = (0..values.len()).map(|j| point.get(&(base + j))).collect();
                    if bits.iter().all(Option::is_none) {
                        continue;
                    }
                    let ones: Vec<usize> = (0..values.len())
                        .filter(|&j| bits[j].is_some_and(|b| b.is_one()))
                        .collect();
                    let clean = bits.iter().all(|b| b.is_some_and(|b| b.is_one() || b.is_zero()));
                    if ones.len() != 1 || !clean {
                        return Err(FeatureError::OutOfDomain {
                            feature: meta.name.clone(),
                            value: "non one-hot assignment".into(),
                        });
                    }
                    out.insert(meta.name.clone(), Value::Nom(values[ones[0]].clone()));
                }
            }
        }
        Ok(out)
    }

    /// Ψ: ordinal bounds plus one-hot `0 <= x <= 1` and `Σ x = 1` per nominal
    /// block. Continuous features contribute nothing; integrality lives in the
    /// layout, not in constraints.
    pub fn implicit_constraints(&self) -> Conjunction {
        let mut out = Conjunction::empty();
        for i in 0..self.instances.len() {
            for (f, meta) in self.space.features.iter().enumerate() {
                let base = self.base(i, f);
                match &meta.kind {
                    FeatureKind::Continuous { .. } => {}
                    FeatureKind::Ordinal { min, max } => {
                        let x = LinExpr::var(base);
                        out.push(LinearConstraint::le(
                            LinExpr::constant(Rat::from_integer(min.clone())),
                            x.clone(),
                        ));
                        out.push(LinearConstraint::le(x, LinExpr::constant(Rat::from_integer(max.clone()))));
                    }
                    FeatureKind::Nominal { values } => {
                        let mut sum = LinExpr::zero();
                        for j in 0..values.len() {
                            let x = LinExpr::var(base + j);
                            out.push(LinearConstraint::le(LinExpr::zero(), x.clone()));
                            out.push(LinearConstraint::le(x.clone(), LinExpr::constant(Rat::one())));
                            sum = sum.plus(&x);
                        }
                        out.push(LinearConstraint::eq(sum, LinExpr::constant(Rat::one())));
                    }
                }
            }
        }
        out
    }
}

/// Assigns variables for `instances × features`, one-hot expanding nominals.
pub fn build_layout(space: Arc<FeatureSpace>, instances: &[String]) -> Result<VarLayout, FeatureError> {
    let mut seen = BTreeSet::new();
    for name in instances {
        if !seen.insert(name.as_str()) {
            return Err(FeatureError::DuplicateInstance(name.clone()));
        }
    }
    let mut offsets = Vec::with_capacity(space.len());
    let mut stride = 0;
    for f in space.features() {
        offsets.push(stride);
        stride += f.width();
    }
    Ok(VarLayout {
        space,
        instances: instances.to_vec(),
        offsets,
        stride,
    })
}

/// Decoded answer text for one member, with one-hot literals folded back into
/// `I.f = v` / `I.f != v` and `I.f = J.f` forms.
pub fn decode_answer(c: &Conjunction, layout: &VarLayout) -> Vec<String> {
    // Key of a nominal block: (instance, feature).
    let block_of = |v: VarId| -> Option<(usize, usize)> {
        let info = layout.describe(v)?;
        info.value.map(|_| (info.instance, info.feature))
    };
    let local_block = |lc: &LinearConstraint| -> Option<(usize, usize)> {
        let mut blocks = lc.vars().map(block_of);
        let first = blocks.next()??;
        blocks.all(|b| b == Some(first)).then_some(first)
    };

    // Block-local constraints are summarized by the set of values they allow.
    let mut local: BTreeMap<(usize, usize), Vec<&LinearConstraint>> = BTreeMap::new();
    for lc in c {
        if let Some(b) = local_block(lc) {
            local.entry(b).or_default().push(lc);
        }
    }
    let equal_pairs = nominal_equalities(c, layout);

    let name = |v: VarId| layout.var_name(v);
    let mut out = Vec::new();
    let mut emitted_blocks = BTreeSet::new();
    let mut emitted_pairs = BTreeSet::new();
    for lc in c {
        if lc.is_true() {
            continue;
        }
        if let Some(b) = local_block(lc) {
            if emitted_blocks.insert(b) {
                out.extend(render_block(b, &local[&b], layout));
            }
            continue;
        }
        if let Some(pair) = equal_pairs.iter().find(|p| p.covers(lc)) {
            if emitted_pairs.insert((pair.a, pair.b, pair.feature)) {
                let meta = &layout.space().features()[pair.feature];
                out.push(format!(
                    "{}.{} = {}.{}",
                    layout.instances()[pair.a],
                    meta.name,
                    layout.instances()[pair.b],
                    meta.name
                ));
            }
            continue;
        }
        out.push(lc.render(&name));
    }
    out
}

fn render_block(b: (usize, usize), cs: &[&LinearConstraint], layout: &VarLayout) -> Vec<String> {
    let (inst, feat) = b;
    let meta = &layout.space().features()[feat];
    let values = meta.values().expect("nominal block");
    let base = layout.base(inst, feat);
    let allowed: Vec<usize> = (0..values.len())
        .filter(|&k| {
            let point: BTreeMap<VarId, Rat> = (0..values.len())
                .map(|j| (base + j, if j == k { Rat::one() } else { Rat::zero() }))
                .collect();
            cs.iter().all(|c| c.holds(&point).unwrap_or(false))
        })
        .collect();
    let prefix = format!("{}.{}", layout.instances()[inst], meta.name);
    match allowed.len() {
        1 => vec![format!("{prefix} = {}", values[allowed[0]])],
        n if n == values.len() => Vec::new(),
        0 => vec!["false".to_string()],
        _ => (0..values.len())
            .filter(|k| !allowed.contains(k))
            .map(|k| format!("{prefix} != {}", values[k]))
            .collect(),
    }
}

struct NominalPair {
    a: usize,
    b: usize,
    feature: usize,
    base_a: VarId,
    base_b: VarId,
    width: usize,
}

impl NominalPair {
    fn covers(&self, lc: &LinearConstraint) -> bool {
        is_pair_equality(lc, self.base_a, self.base_b, self.width).is_some()
    }
}

/// `x_a^j - x_b^j = 0` with both variables at the same one-hot position `j`.
fn is_pair_equality(lc: &LinearConstraint, base_a: VarId, base_b: VarId, width: usize) -> Option<usize> {
    if lc.rel() != Rel::Eq || lc.expr().num_terms() != 2 || !lc.expr().constant_term().is_zero() {
        return None;
    }
    let terms: Vec<_> = lc.expr().terms().collect();
    let (v0, c0) = terms[0];
    let (v1, c1) = terms[1];
    if *c0 != -c1.clone() {
        return None;
    }
    let (lo, hi) = (base_a.min(base_b), base_a.max(base_b));
    (v0 >= lo && v0 < lo + width && v1 >= hi && v1 < hi + width && v0 - lo == v1 - hi).then(|| v0 - lo)
}

/// Nominal features whose one-hot vectors are pinned equal between two
/// instances by a full set of positionwise equalities.
fn nominal_equalities(c: &Conjunction, layout: &VarLayout) -> Vec<NominalPair> {
    let mut out = Vec::new();
    let n = layout.instances().len();
    for (f, meta) in layout.space().features().iter().enumerate() {
        if !meta.is_nominal() {
            continue;
        }
        let width = meta.width();
        for a in 0..n {
            for b in a + 1..n {
                let (base_a, base_b) = (layout.base(a, f), layout.base(b, f));
                let covered: BTreeSet<usize> = c
                    .iter()
                    .filter_map(|lc| is_pair_equality(lc, base_a, base_b, width))
                    .collect();
                if covered.len() == width {
                    out.push(NominalPair {
                        a,
                        b,
                        feature: f,
                        base_a,
                        base_b,
                        width,
                    });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::rat;

    fn layout(metas: Vec<FeatureMeta>, insts: &[&str]) -> VarLayout {
        let names: Vec<String> = insts.iter().map(|s| s.to_string()).collect();
        build_layout(Arc::new(FeatureSpace::new(metas).unwrap()), &names).unwrap()
    }

    #[test]
    fn layout_counts_and_integrality() {
        let l = layout(vec![FeatureMeta::ordinal("age", 18, 90)], &["F", "CE"]);
        assert_eq!(l.num_vars(), 2);
        assert_eq!(l.integral_vars().len(), 2);

        let l = layout(vec![FeatureMeta::nominal("job", &["a", "b", "c"])], &["F"]);
        assert_eq!(l.num_vars(), 3);
        assert_eq!(l.integral_vars().len(), 3);

        let l = layout(vec![FeatureMeta::continuous("income", None)], &["F", "CE"]);
        assert_eq!(l.num_vars(), 2);
        assert!(l.integral_vars().is_empty());
    }

    #[test]
    fn duplicate_names_rejected() {
        let err = FeatureSpace::new(vec![
            FeatureMeta::ordinal("age", 0, 1),
            FeatureMeta::ordinal("age", 0, 1),
        ])
        .unwrap_err();
        assert_eq!(err, FeatureError::DuplicateFeature("age".into()));
        let space = Arc::new(FeatureSpace::new(vec![FeatureMeta::ordinal("age", 0, 1)]).unwrap());
        let err = build_layout(space, &["F".into(), "F".into()]).unwrap_err();
        assert_eq!(err, FeatureError::DuplicateInstance("F".into()));
    }

    #[test]
    fn invalid_meta_rejected() {
        assert!(FeatureSpace::new(vec![FeatureMeta::ordinal("a", 5, 1)]).is_err());
        assert!(FeatureSpace::new(vec![FeatureMeta::nominal("j", &["x"])]).is_err());
        assert!(FeatureSpace::new(vec![FeatureMeta::nominal("j", &["x", "x"])]).is_err());
        assert!(FeatureSpace::new(vec![FeatureMeta::continuous("i", Some((rat(3), rat(3))))]).is_err());
    }

    #[test]
    fn layout_is_positional_and_bijective() {
        let l = layout(
            vec![
                FeatureMeta::ordinal("age", 18, 90),
                FeatureMeta::nominal("job", &["a", "b", "c"]),
                FeatureMeta::continuous("income", None),
            ],
            &["F", "CE"],
        );
        assert_eq!(l.num_vars(), 10);
        let mut seen = BTreeSet::new();
        for v in 0..l.num_vars() {
            let info = l.describe(v).unwrap();
            assert!(seen.insert((info.instance, info.feature, info.value)));
            assert_eq!(l.base(info.instance, info.feature) + info.value.unwrap_or(0), v);
        }
        assert_eq!(l.scalar_var("CE", "age").unwrap(), 5);
        assert_eq!(l.onehot_var("CE", "job", "b").unwrap(), 7);
        assert_eq!(l.var_name(7), "[CE.job = b]");
        assert_eq!(l.var_name(9), "CE.income");
    }

    #[test]
    fn implicit_constraint_examples() {
        let l = layout(vec![FeatureMeta::ordinal("age", 18, 90)], &["F"]);
        let psi = l.implicit_constraints();
        assert_eq!(psi.render(&|v| l.var_name(v)), "18 <= F.age, F.age <= 90");

        let l = layout(vec![FeatureMeta::nominal("j", &["a", "b"])], &["F"]);
        let psi = l.implicit_constraints();
        assert_eq!(psi.len(), 5);
        assert_eq!(
            psi.render(&|v| l.var_name(v)),
            "0 <= [F.j = a], [F.j = a] <= 1, 0 <= [F.j = b], [F.j = b] <= 1, [F.j = a] + [F.j = b] = 1"
        );

        let l = layout(vec![FeatureMeta::continuous("x", None)], &["F", "CE"]);
        assert!(l.implicit_constraints().is_empty());
    }

    #[test]
    fn encode_decode_examples() {
        let l = layout(
            vec![
                FeatureMeta::ordinal("age", 18, 90),
                FeatureMeta::nominal("job", &["a", "b", "c"]),
            ],
            &["F"],
        );
        let p: NamedPoint = [("job".to_string(), Value::Nom("b".into()))].into();
        let enc = l.encode_point("F", &p).unwrap();
        assert_eq!(enc.values().cloned().collect::<Vec<_>>(), vec![rat(0), rat(1), rat(0)]);
        let p: NamedPoint = [
            ("age".to_string(), Value::Num(rat(35))),
            ("job".to_string(), Value::Nom("b".into())),
        ]
        .into();
        let enc = l.encode_point("F", &p).unwrap();
        assert_eq!(enc[&0], rat(35));
        assert_eq!(l.decode_point("F", &enc).unwrap(), p);
        assert!(l.implicit_constraints().holds(&enc).unwrap());

        let bad: NamedPoint = [("age".to_string(), Value::Num(rat(91)))].into();
        assert!(l.encode_point("F", &bad).is_err());
        let bad: NamedPoint = [("job".to_string(), Value::Nom("z".into()))].into();
        assert!(l.encode_point("F", &bad).is_err());
    }

    #[test]
    fn onehot_block_has_single_hot_integral_point() {
        // brute force: every 0/1 assignment of a k=4 block satisfying Ψ has exactly one 1
        let l = layout(vec![FeatureMeta::nominal("j", &["a", "b", "c", "d"])], &["F"]);
        let psi = l.implicit_constraints();
        for mask in 0u32..16 {
            let p: BTreeMap<VarId, Rat> = (0..4).map(|j| (j, rat(((mask >> j) & 1) as i64))).collect();
            assert_eq!(psi.holds(&p).unwrap(), mask.count_ones() == 1);
        }
    }

    #[test]
    fn decode_answer_examples() {
        let l = layout(
            vec![
                FeatureMeta::ordinal("age", 18, 90),
                FeatureMeta::nominal("job", &["a", "b", "c"]),
            ],
            &["F", "CE"],
        );
        let b = LinExpr::var(l.onehot_var("F", "job", "b").unwrap());
        let one = LinExpr::constant(rat(1));
        let c = Conjunction::new(vec![LinearConstraint::eq(b.clone(), one.clone())]);
        assert_eq!(decode_answer(&c, &l), vec!["F.job = b"]);
        let c = Conjunction::new(vec![LinearConstraint::eq(b.clone(), LinExpr::zero())]);
        assert_eq!(decode_answer(&c, &l), vec!["F.job != b"]);
        let age = LinExpr::var(l.scalar_var("CE", "age").unwrap());
        let c = Conjunction::new(vec![LinearConstraint::ge(age, LinExpr::constant(rat(30)))]);
        assert_eq!(decode_answer(&c, &l), vec!["30 <= CE.age"]);

        // pinned block with Ψ: bounds and Σ=1 suppressed
        let mut c = l.implicit_constraints();
        c.push(LinearConstraint::eq(b, one));
        let decoded = decode_answer(&c, &l);
        assert_eq!(
            decoded,
            vec!["18 <= F.age", "F.age <= 90", "F.job = b", "18 <= CE.age", "CE.age <= 90"]
        );
        assert!(decoded.iter().all(|s| !s.contains('[')));
    }

    #[test]
    fn decode_answer_folds_nominal_equality() {
        let l = layout(vec![FeatureMeta::nominal("job", &["a", "b"])], &["F", "CE"]);
        let c: Conjunction = (0..2)
            .map(|j| LinearConstraint::eq(LinExpr::var(j), LinExpr::var(2 + j)))
            .collect();
        assert_eq!(decode_answer(&c, &l), vec!["F.job = CE.job"]);
    }

    #[test]
    fn metadata_document_round_trip() {
        let text = r#"{"features":[{"name":"age","kind":"ordinal","min":18,"max":90},{"name":"job","kind":"nominal","values":["a","b","c"]},{"name":"income","kind":"continuous","min":0,"max":200000}]}"#;
        let space = FeatureSpace::from_json(text).unwrap();
        assert_eq!(space.len(), 3);
        assert_eq!(space.get("income").unwrap().norm_bounds(), Some((rat(0), rat(200000))));
        let back = serde_json::to_string(&space.to_document()).unwrap();
        assert_eq!(FeatureSpace::from_json(&back).unwrap(), space);
        assert!(FeatureSpace::from_json(r#"{"features":[{"name":"x","kind":"weird"}]}"#).is_err());
    }
}
