//! Interactive session: models, instances, user constraints and queries.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use indexmap::IndexMap;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::distance::DistanceSpec;
use crate::error::{DistanceError, FeatureError, TreeError};
use crate::features::{build_layout, decode_answer, FeatureSpace, VarLayout};
use crate::lang::{parse_and_compile, LangError, Pos};
use crate::linear::{fmt_rat, parse_rat, Conjunction, Rat, Theory, VarId};
use crate::theory::{evaluate, project_theory, Budget, Context, EvalError, Evaluated, TheoryExpr};
use crate::tree::{enumerate_paths, DecisionTree};

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Lang(#[from] LangError),
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("model `{0}` is already registered")]
    DuplicateModel(String),
    #[error("instance `{0}` is already declared")]
    DuplicateInstance(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("model `{model}` has no class `{label}`; available: {}", available.join(", "))]
    UnknownLabel {
        model: String,
        label: String,
        available: Vec<String>,
    },
    #[error("no constraint with id {0}")]
    UnknownConstraint(u64),
    #[error("minconf must lie in [0, 1], got `{0}`")]
    BadMinconf(String),
    #[error("cannot project on `{0}`")]
    BadProject(String),
    #[error("metadata can only be replaced before models or instances are added")]
    MetadataLocked,
    #[error("`{0}` is not a valid instance name")]
    InvalidName(String),
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("line {line}: {message}")]
    Script { line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl SessionError {
    /// Machine-readable kind used by the service and the CLI's JSON output.
    pub fn kind(&self) -> &'static str {
        match self {
            SessionError::Lang(e) => e.kind.as_str(),
            SessionError::Feature(FeatureError::UnknownInstance(_)) | SessionError::UnknownInstance(_) => {
                "unknown_instance"
            }
            SessionError::Feature(FeatureError::UnknownFeature(_)) => "unknown_feature",
            SessionError::Feature(_) => "invalid_metadata",
            SessionError::Tree(_) => "invalid_model",
            SessionError::Distance(DistanceError::MissingBounds(_)) => "missing_bounds",
            SessionError::Distance(DistanceError::UnknownInstance(_)) => "unknown_instance",
            SessionError::Distance(_) => "invalid_minimize",
            SessionError::Eval(EvalError::UnknownInstance(_)) => "unknown_instance",
            SessionError::Eval(EvalError::Timeout { .. }) => "timeout",
            SessionError::Eval(_) => "invalid_query",
            SessionError::DuplicateModel(_) => "duplicate_model",
            SessionError::DuplicateInstance(_) => "duplicate_instance",
            SessionError::UnknownModel(_) => "unknown_model",
            SessionError::UnknownLabel { .. } => "unknown_label",
            SessionError::UnknownConstraint(_) => "unknown_constraint",
            SessionError::BadMinconf(_) => "invalid_minconf",
            SessionError::BadProject(_) => "invalid_project",
            SessionError::MetadataLocked => "metadata_locked",
            SessionError::InvalidName(_) => "invalid_name",
            SessionError::NothingToUndo => "nothing_to_undo",
            SessionError::Script { .. } => "parse_error",
            SessionError::Io { .. } => "io_error",
        }
    }

    /// Position inside constraint text, when the error comes from the parser.
    pub fn pos(&self) -> Option<Pos> {
        match self {
            SessionError::Lang(e) => Some(e.pos),
            _ => None,
        }
    }

    pub fn is_conflict(&self) -> bool {
        matches!(self, SessionError::DuplicateModel(_) | SessionError::DuplicateInstance(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InstanceDecl {
    pub name: String,
    pub model_id: String,
    pub label: String,
    #[serde(serialize_with = "ser_rat")]
    pub minconf: Rat,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConstraintEntry {
    pub id: u64,
    pub text: String,
    #[serde(skip)]
    pub compiled: Conjunction,
}

fn ser_rat<S: serde::Serializer>(r: &Rat, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&fmt_rat(r))
}

/// Query options of `solve`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SolveOptions {
    /// Instance names (`CE`) and/or feature references (`CE.age`).
    pub project: Option<Vec<String>>,
    /// `l1norm(F, CE)` or `dist(F, CE, beta=.., gamma=..)`.
    pub minimize: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AnswerConstraint {
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostics {
    pub stage: String,
    pub done: usize,
    pub total: usize,
    pub members_solved: usize,
}

/// Decoded answer of one query; also the JSON answer document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Answer {
    pub status: String,
    pub members: Vec<Vec<AnswerConstraint>>,
    pub min: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attained: Option<bool>,
    pub witnesses: Option<IndexMap<String, IndexMap<String, String>>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
}

impl Answer {
    fn timeout(d: Diagnostics) -> Self {
        Answer {
            status: "timeout".into(),
            members: Vec::new(),
            min: None,
            attained: None,
            witnesses: None,
            notes: Vec::new(),
            diagnostics: Some(d),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Canonical text: one `Answer:` line per member (or `no solution`), then
    /// the optimum and witnesses when present.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        if let Some(d) = &self.diagnostics {
            let _ = writeln!(
                out,
                "timeout during {} ({} of {} members done)",
                d.stage, d.done, d.total
            );
            return out;
        }
        if self.members.is_empty() {
            out.push_str("no solution\n");
        }
        for m in &self.members {
            let body = if m.is_empty() {
                "true".to_string()
            } else {
                m.iter().map(|c| c.text.as_str()).collect::<Vec<_>>().join(", ")
            };
            let _ = writeln!(out, "Answer: {body}");
        }
        if let Some(min) = &self.min {
            let suffix = if self.attained == Some(false) { " (not attained)" } else { "" };
            let _ = writeln!(out, "min = {min}{suffix}");
        }
        if let Some(ws) = &self.witnesses {
            for (inst, values) in ws {
                let body = values
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(", ");
                let _ = writeln!(out, "witness {inst}: {body}");
            }
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("answer serializes")
    }
}

const SHADOW_NOTE: &str = "projection treats eliminated integer variables as real-valued";

/// Session state. Cloning is cheap enough to take snapshots for solving.
#[derive(Clone, Debug)]
pub struct Session {
    space: Arc<FeatureSpace>,
    models: IndexMap<String, Arc<DecisionTree>>,
    instances: Vec<InstanceDecl>,
    constraints: Vec<ConstraintEntry>,
    layout: VarLayout,
    next_constraint: u64,
}

impl Default for Session {
    fn default() -> Self {
        Session::new(FeatureSpace::new(Vec::new()).expect("empty space"))
    }
}

impl Session {
    pub fn new(space: FeatureSpace) -> Self {
        let space = Arc::new(space);
        let layout = build_layout(Arc::clone(&space), &[]).expect("no instances");
        Session {
            space,
            models: IndexMap::new(),
            instances: Vec::new(),
            constraints: Vec::new(),
            layout,
            next_constraint: 1,
        }
    }

    pub fn from_metadata_json(text: &str) -> Result<Self, SessionError> {
        Ok(Session::new(FeatureSpace::from_json(text)?))
    }

    pub fn space(&self) -> &FeatureSpace {
        &self.space
    }

    pub fn layout(&self) -> &VarLayout {
        &self.layout
    }

    pub fn models(&self) -> impl Iterator<Item = &DecisionTree> {
        self.models.values().map(|m| m.as_ref())
    }

    pub fn model(&self, id: &str) -> Option<&DecisionTree> {
        self.models.get(id).map(|m| m.as_ref())
    }

    pub fn instances(&self) -> &[InstanceDecl] {
        &self.instances
    }

    pub fn constraints(&self) -> &[ConstraintEntry] {
        &self.constraints
    }

    /// Replaces the feature metadata; only allowed on a fresh session.
    pub fn set_metadata(&mut self, space: FeatureSpace) -> Result<(), SessionError> {
        if !self.models.is_empty() || !self.instances.is_empty() {
            return Err(SessionError::MetadataLocked);
        }
        *self = Session::new(space);
        Ok(())
    }

    pub fn declare_model_json(&mut self, text: &str) -> Result<String, SessionError> {
        let tree = DecisionTree::from_json(text, Arc::clone(&self.space))?;
        self.declare_model(tree)
    }

    pub fn declare_model(&mut self, tree: DecisionTree) -> Result<String, SessionError> {
        if tree.space() != self.space.as_ref() {
            return Err(TreeError::Document("tree uses a different feature space".into()).into());
        }
        if self.models.contains_key(&tree.model_id) {
            return Err(SessionError::DuplicateModel(tree.model_id.clone()));
        }
        let id = tree.model_id.clone();
        log::debug!("model `{id}`: {} leaves, depth {}", tree.num_leaves(), tree.depth());
        self.models.insert(id.clone(), Arc::new(tree));
        Ok(id)
    }

    pub fn declare_instance(
        &mut self,
        name: &str,
        model_id: &str,
        label: &str,
        minconf: Option<Rat>,
    ) -> Result<(), SessionError> {
        let valid_name = !name.is_empty()
            && name.chars().all(|c| c.is_alphanumeric() || c == '_')
            && !name.starts_with(|c: char| c.is_ascii_digit());
        if !valid_name {
            return Err(SessionError::InvalidName(name.to_string()));
        }
        if self.instances.iter().any(|i| i.name == name) {
            return Err(SessionError::DuplicateInstance(name.to_string()));
        }
        let model = self
            .models
            .get(model_id)
            .ok_or_else(|| SessionError::UnknownModel(model_id.to_string()))?;
        let classes = model.classes();
        if !classes.contains(label) {
            return Err(SessionError::UnknownLabel {
                model: model_id.to_string(),
                label: label.to_string(),
                available: classes.into_iter().collect(),
            });
        }
        let minconf = minconf.unwrap_or_else(Rat::zero);
        if minconf.is_negative() || minconf > Rat::one() {
            return Err(SessionError::BadMinconf(fmt_rat(&minconf)));
        }
        let mut names: Vec<String> = self.instances.iter().map(|i| i.name.clone()).collect();
        names.push(name.to_string());
        // Appending an instance leaves every existing variable id in place, so
        // compiled constraints stay valid.
        self.layout = build_layout(Arc::clone(&self.space), &names)?;
        self.instances.push(InstanceDecl {
            name: name.to_string(),
            model_id: model_id.to_string(),
            label: label.to_string(),
            minconf,
        });
        Ok(())
    }

    /// Compiles and stores a constraint; returns its id.
    pub fn add_constraint(&mut self, text: &str) -> Result<u64, SessionError> {
        let compiled = parse_and_compile(text, &self.layout)?;
        let id = self.next_constraint;
        self.next_constraint += 1;
        self.constraints.push(ConstraintEntry {
            id,
            text: text.trim().to_string(),
            compiled,
        });
        Ok(id)
    }

    pub fn retract_constraint(&mut self, id: u64) -> Result<ConstraintEntry, SessionError> {
        let at = self
            .constraints
            .iter()
            .position(|c| c.id == id)
            .ok_or(SessionError::UnknownConstraint(id))?;
        Ok(self.constraints.remove(at))
    }

    /// Drops the most recent constraint.
    pub fn undo(&mut self) -> Result<ConstraintEntry, SessionError> {
        self.constraints.pop().ok_or(SessionError::NothingToUndo)
    }

    /// Forgets instances and constraints; metadata and models stay.
    pub fn reset(&mut self) {
        self.instances.clear();
        self.constraints.clear();
        self.layout = build_layout(Arc::clone(&self.space), &[]).expect("no instances");
    }

    /// All user constraints as one conjunction, in declaration order.
    pub fn user_constraints(&self) -> Conjunction {
        let mut c = Conjunction::empty();
        for e in &self.constraints {
            c.extend(&e.compiled);
        }
        c
    }

    /// Paths of the instance's model carrying its label with enough confidence.
    pub fn instance_theory(&self, name: &str) -> Result<Theory, SessionError> {
        let decl = self
            .instances
            .iter()
            .find(|i| i.name == name)
            .ok_or_else(|| SessionError::UnknownInstance(name.to_string()))?;
        let model = &self.models[&decl.model_id];
        let members = enumerate_paths(model, &self.layout, name)?
            .into_iter()
            .filter(|p| p.class == decl.label && p.confidence >= decl.minconf)
            .map(|p| p.constraints)
            .collect();
        Ok(Theory::new(members))
    }

    pub fn context(&self) -> Result<Context, SessionError> {
        let mut instances = Vec::new();
        for d in &self.instances {
            instances.push((d.name.clone(), self.instance_theory(&d.name)?));
        }
        Ok(Context {
            layout: self.layout.clone(),
            user: self.user_constraints(),
            instances,
        })
    }

    /// Variables named by `project` items: whole instances or `I.f` features.
    pub fn proj_vars(&self, items: &[String]) -> Result<BTreeSet<VarId>, SessionError> {
        let mut keep = BTreeSet::new();
        for item in items {
            let item = item.trim();
            match item.split_once('.') {
                None => {
                    let i = self
                        .layout
                        .instance_index(item)
                        .ok_or_else(|| SessionError::UnknownInstance(item.to_string()))?;
                    keep.extend(self.layout.instance_vars(i));
                }
                Some((inst, feat)) => {
                    let (i, f) = self.layout.locate(inst, feat).map_err(|e| match e {
                        FeatureError::UnknownInstance(n) => SessionError::UnknownInstance(n),
                        _ => SessionError::BadProject(item.to_string()),
                    })?;
                    keep.extend(self.layout.feature_vars(i, f));
                }
            }
        }
        Ok(keep)
    }

    pub fn solve(&self, opts: &SolveOptions) -> Result<Answer, SessionError> {
        self.solve_within(opts, None)
    }

    /// Runs the query `SAT(TYPEC × USERC × INST(I1) × …)`, then minimizes and/or
    /// projects as requested. With a deadline, running out of time yields a
    /// `timeout` answer carrying progress counters.
    pub fn solve_within(&self, opts: &SolveOptions, deadline: Option<Instant>) -> Result<Answer, SessionError> {
        let keep = match &opts.project {
            Some(items) => Some(self.proj_vars(items)?),
            None => None,
        };
        let spec = match &opts.minimize {
            Some(text) => Some(DistanceSpec::parse(text)?),
            None => None,
        };
        let ctx = self.context()?;
        let names: Vec<&str> = self.instances.iter().map(|i| i.name.as_str()).collect();
        let base = TheoryExpr::sat(TheoryExpr::default_query(&names));
        let budget = deadline.map(Budget::until).unwrap_or_default();
        let started = Instant::now();

        let result = match &spec {
            Some(spec) => evaluate(&TheoryExpr::minimize(base, spec.clone()), &ctx, &budget),
            None => {
                let expr = match &keep {
                    Some(k) => TheoryExpr::project(base, k.clone()),
                    None => base,
                };
                evaluate(&expr, &ctx, &budget)
            }
        };
        let result = match result {
            Err(EvalError::Timeout { stage, done, total }) => {
                return Ok(Answer::timeout(Diagnostics {
                    stage: stage.to_string(),
                    done,
                    total,
                    members_solved: budget.solved.load(std::sync::atomic::Ordering::Relaxed),
                }))
            }
            other => other?,
        };

        let mut answer = Answer {
            status: "ok".into(),
            members: Vec::new(),
            min: None,
            attained: None,
            witnesses: None,
            notes: Vec::new(),
            diagnostics: None,
        };
        let members: Vec<Conjunction> = match result {
            Evaluated::Theory(t) => t.into_members(),
            Evaluated::Min(out) => {
                if let Some(value) = &out.value {
                    answer.min = Some(fmt_rat(value));
                    answer.attained = Some(out.attained);
                    if let Some(first) = out.members.first() {
                        answer.witnesses = Some(self.decode_witness(&first.witness)?);
                    }
                }
                let t = Theory::new(out.members.into_iter().map(|m| m.member).collect());
                match &keep {
                    Some(k) => project_theory(&t, k).into_members(),
                    None => t.into_members(),
                }
            }
        };
        if let Some(k) = &keep {
            let relaxed = self.layout.integral_vars().iter().any(|v| !k.contains(v));
            if relaxed && !members.is_empty() {
                answer.notes.push(SHADOW_NOTE.to_string());
            }
        }
        answer.members = members
            .iter()
            .map(|m| {
                decode_answer(m, &self.layout)
                    .into_iter()
                    .map(|text| AnswerConstraint { text })
                    .collect()
            })
            .collect();
        log::debug!(
            "solve: {} members in {:?}",
            answer.members.len(),
            started.elapsed()
        );
        Ok(answer)
    }

    /// Witness values per instance, in feature order.
    fn decode_witness(
        &self,
        w: &std::collections::BTreeMap<VarId, Rat>,
    ) -> Result<IndexMap<String, IndexMap<String, String>>, SessionError> {
        let mut out = IndexMap::new();
        for d in &self.instances {
            let named = self.layout.decode_point(&d.name, w)?;
            let mut values = IndexMap::new();
            for meta in self.space.features() {
                if let Some(v) = named.get(&meta.name) {
                    values.insert(meta.name.clone(), v.render());
                }
            }
            out.insert(d.name.clone(), values);
        }
        Ok(out)
    }

    /// Human-readable state listing.
    pub fn show(&self) -> String {
        let mut out = String::new();
        let models: Vec<&str> = self.models.keys().map(String::as_str).collect();
        let _ = writeln!(out, "features: {}", self.space.len());
        let _ = writeln!(out, "models: {}", if models.is_empty() { "-".into() } else { models.join(", ") });
        for d in &self.instances {
            let _ = writeln!(out, "{}", instance_line(d));
        }
        for c in &self.constraints {
            let _ = writeln!(out, "constraint #{}: {}", c.id, c.text);
        }
        out
    }

    /// JSON state dump.
    pub fn state_json(&self) -> serde_json::Value {
        serde_json::json!({
            "metadata": self.space.to_document(),
            "models": self.models.keys().collect::<Vec<_>>(),
            "instances": self.instances,
            "constraints": self.constraints,
        })
    }

    /// Script that rebuilds the current state when replayed (models and
    /// metadata are inlined).
    pub fn export_script(&self) -> String {
        let mut out = String::new();
        let meta = serde_json::to_string(&self.space.to_document()).expect("metadata serializes");
        let _ = writeln!(out, "meta {meta}");
        for m in self.models.values() {
            let _ = writeln!(out, "model {}", m.to_json());
        }
        for d in &self.instances {
            let _ = writeln!(out, "{}", instance_line(d));
        }
        for c in &self.constraints {
            let _ = writeln!(out, "constraint {}", c.text);
        }
        out
    }
}

fn instance_line(d: &InstanceDecl) -> String {
    let mut s = format!("instance {} {} label={}", d.name, d.model_id, d.label);
    if !d.minconf.is_zero() {
        let _ = write!(s, " minconf={}", fmt_rat(&d.minconf));
    }
    s
}

/// Parses a `minconf=` style rational.
pub fn parse_minconf(text: &str) -> Result<Rat, SessionError> {
    parse_rat(text).map_err(|_| SessionError::BadMinconf(text.to_string()))
}
