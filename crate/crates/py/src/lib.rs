//! Python bindings: `dtreason.Session`, `dtreason.Answer`, `dtreason.run_script`.
//!
//! Failures raise `dtreason.DtreasonError` whose args are
//! `(message, kind, line, column)`.

use std::time::{Duration, Instant};

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dtreason_core::script::{LineError, Output, Runner};
use dtreason_core::session::{self, parse_minconf, SessionError, SolveOptions};

create_exception!(dtreason, DtreasonError, PyException, "Invalid input or a failed session command.");

fn session_err(e: SessionError) -> PyErr {
    let pos = e.pos();
    DtreasonError::new_err((e.to_string(), e.kind(), pos.map(|p| p.line), pos.map(|p| p.column)))
}

fn line_err(e: LineError) -> PyErr {
    let pos = e.pos();
    DtreasonError::new_err((
        e.to_string(),
        e.error.kind(),
        Some(pos.map(|p| p.line).unwrap_or(e.line)),
        pos.map(|p| p.column),
    ))
}

/// Result of one query.
#[pyclass(frozen, module = "dtreason")]
struct Answer {
    inner: session::Answer,
}

#[pymethods]
impl Answer {
    /// `"ok"` or `"timeout"`.
    #[getter]
    fn status(&self) -> &str {
        &self.inner.status
    }

    /// Disjuncts, each a list of constraint strings; empty when unsatisfiable.
    #[getter]
    fn members(&self) -> Vec<Vec<String>> {
        self.inner
            .members
            .iter()
            .map(|m| m.iter().map(|c| c.text.clone()).collect())
            .collect()
    }

    /// Optimal distance as an exact rational string.
    #[getter]
    fn min(&self) -> Option<&str> {
        self.inner.min.as_deref()
    }

    #[getter]
    fn attained(&self) -> Option<bool> {
        self.inner.attained
    }

    #[getter]
    fn notes(&self) -> Vec<String> {
        self.inner.notes.clone()
    }

    /// `{instance: {feature: value}}` for minimization queries.
    #[getter]
    fn witnesses<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyDict>>> {
        let Some(ws) = &self.inner.witnesses else {
            return Ok(None);
        };
        let out = PyDict::new(py);
        for (inst, values) in ws {
            let d = PyDict::new(py);
            for (k, v) in values {
                d.set_item(k, v)?;
            }
            out.set_item(inst, d)?;
        }
        Ok(Some(out))
    }

    fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }

    fn text(&self) -> String {
        self.inner.render_text()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __repr__(&self) -> String {
        format!("<Answer {} members={}>", self.inner.status, self.inner.members.len())
    }

    fn __str__(&self) -> String {
        self.inner.render_text()
    }
}

/// A reasoning session over feature metadata, models, instances and user
/// constraints.
#[pyclass(module = "dtreason")]
struct Session {
    inner: session::Session,
}

#[pymethods]
impl Session {
    /// `metadata` is the feature metadata JSON document.
    #[new]
    #[pyo3(signature = (metadata=None))]
    fn new(metadata: Option<&str>) -> PyResult<Self> {
        let inner = match metadata {
            Some(text) => session::Session::from_metadata_json(text).map_err(session_err)?,
            None => session::Session::default(),
        };
        Ok(Session { inner })
    }

    /// Registers a decision tree JSON document; returns its model id.
    fn add_model(&mut self, tree: &str) -> PyResult<String> {
        self.inner.declare_model_json(tree).map_err(session_err)
    }

    #[pyo3(signature = (name, model_id, label, minconf=None))]
    fn declare_instance(&mut self, name: &str, model_id: &str, label: &str, minconf: Option<&str>) -> PyResult<()> {
        let minconf = minconf.map(parse_minconf).transpose().map_err(session_err)?;
        self.inner
            .declare_instance(name, model_id, label, minconf)
            .map_err(session_err)
    }

    /// Adds user constraints; returns the id used by `retract`.
    fn add_constraint(&mut self, text: &str) -> PyResult<u64> {
        self.inner.add_constraint(text).map_err(session_err)
    }

    fn retract(&mut self, constraint_id: u64) -> PyResult<String> {
        self.inner
            .retract_constraint(constraint_id)
            .map(|c| c.text)
            .map_err(session_err)
    }

    /// Removes the most recent constraint and returns its text.
    fn undo(&mut self) -> PyResult<String> {
        self.inner.undo().map(|c| c.text).map_err(session_err)
    }

    /// Drops instances and constraints; models and metadata stay.
    fn reset(&mut self) {
        self.inner.reset();
    }

    /// Runs the session query. `budget` is a time limit in seconds.
    #[pyo3(signature = (project=None, minimize=None, budget=None))]
    fn solve(
        &self,
        py: Python<'_>,
        project: Option<Vec<String>>,
        minimize: Option<String>,
        budget: Option<f64>,
    ) -> PyResult<Answer> {
        let deadline = budget
            .map(Duration::try_from_secs_f64)
            .transpose()?
            .map(|b| Instant::now() + b);
        let opts = SolveOptions { project, minimize };
        let inner = &self.inner;
        let answer = py.detach(|| inner.solve_within(&opts, deadline)).map_err(session_err)?;
        Ok(Answer { inner: answer })
    }

    fn constraints(&self) -> Vec<(u64, String)> {
        self.inner.constraints().iter().map(|c| (c.id, c.text.clone())).collect()
    }

    fn show(&self) -> String {
        self.inner.show()
    }

    fn state_json(&self) -> String {
        self.inner.state_json().to_string()
    }

    /// Script that rebuilds this session.
    fn export_script(&self) -> String {
        self.inner.export_script()
    }

    fn __repr__(&self) -> String {
        format!(
            "<Session models={} instances={} constraints={}>",
            self.inner.models().count(),
            self.inner.instances().len(),
            self.inner.constraints().len()
        )
    }
}

/// Runs a session script; relative paths resolve against `base_dir`.
/// Returns the final session and the answers of its `solve` lines.
#[pyfunction]
#[pyo3(signature = (text, base_dir="."))]
fn run_script(py: Python<'_>, text: &str, base_dir: &str) -> PyResult<(Session, Vec<Answer>)> {
    let mut runner = Runner::new(session::Session::default(), base_dir);
    let mut answers = Vec::new();
    py.detach(|| {
        runner.run_script(text, |o| {
            if let Output::Answer(a) = o {
                answers.push(a)
            }
        })
    })
    .map_err(line_err)?;
    Ok((
        Session { inner: runner.session },
        answers.into_iter().map(|inner| Answer { inner }).collect(),
    ))
}

#[pymodule]
fn dtreason(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Session>()?;
    m.add_class::<Answer>()?;
    m.add("DtreasonError", m.py().get_type::<DtreasonError>())?;
    m.add_function(wrap_pyfunction!(run_script, m)?)?;
    Ok(())
}
