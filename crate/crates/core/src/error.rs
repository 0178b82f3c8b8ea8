use thiserror::Error;

use crate::linear::VarId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NumericError {
    #[error("variable v{0} is unbound")]
    Unbound(VarId),
    #[error("equality constraints have no linear complement")]
    NegateEquality,
    #[error("invalid rational literal `{0}`")]
    BadLiteral(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("duplicate feature name `{0}`")]
    DuplicateFeature(String),
    #[error("duplicate instance name `{0}`")]
    DuplicateInstance(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("invalid metadata for feature `{feature}`: {reason}")]
    InvalidMeta { feature: String, reason: String },
    #[error("value `{value}` is outside the domain of `{feature}`")]
    OutOfDomain { feature: String, value: String },
    #[error("feature `{0}` is not bound")]
    Unbound(String),
    #[error("malformed metadata document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("malformed tree document: {0}")]
    Document(String),
    #[error("at {path}: {reason}")]
    Node { path: String, reason: String },
    #[error("at {path}: unknown feature `{feature}`")]
    UnknownFeature { path: String, feature: String },
    #[error("at {path}: value `{value}` is not in the domain of `{feature}`")]
    UnknownValue {
        path: String,
        feature: String,
        value: String,
    },
    #[error("cannot predict: {0}")]
    Predict(#[from] FeatureError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DistanceError {
    #[error("feature `{0}` needs min/max normalization bounds for distance terms")]
    MissingBounds(String),
    #[error("unknown instance `{0}` in distance")]
    UnknownInstance(String),
    #[error("invalid minimize spec `{spec}`: {reason}")]
    BadSpec { spec: String, reason: String },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}
