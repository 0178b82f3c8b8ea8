//! Constraint reasoning over decision-tree classifiers.
//!
//! Tree paths become exact linear constraint theories; combined with feature
//! datatype constraints and user background knowledge they answer
//! satisfiability, projection and closest-contrastive-instance queries.

pub mod error;
pub mod features;
pub mod linear;
pub mod lp;
pub mod milp;
pub mod tree;
pub mod lang;
pub mod projection;
pub mod distance;
pub mod theory;
pub mod session;
pub mod script;
