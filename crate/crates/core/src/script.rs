//! Session scripts: one command per line.
//!
//! ```text
//! meta <path | inline json>
//! model <path | inline json>
//! instance <name> <model-id> label=<class> [minconf=<rat>]
//! constraint <text>
//! solve [project=<list>] [minimize=<spec>]
//! undo | reset | show
//! ```
//!
//! Blank lines and lines starting with `#` are skipped. A project list is
//! either one item or a bracketed comma-separated list: `project=[CE, F.age]`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::features::FeatureSpace;
use crate::lang::Pos;
use crate::session::{parse_minconf, Answer, Session, SessionError, SolveOptions};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Source {
    Path(String),
    Inline(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Command {
    Meta(Source),
    Model(Source),
    Instance {
        name: String,
        model: String,
        label: String,
        minconf: Option<String>,
    },
    Constraint(String),
    Solve(SolveOptions),
    Undo,
    Reset,
    Show,
}

fn source(arg: &str) -> Source {
    if arg.starts_with('{') {
        Source::Inline(arg.to_string())
    } else {
        Source::Path(arg.to_string())
    }
}

/// Parses one script line; `Ok(None)` for blank and comment lines.
pub fn parse_command(line: &str) -> Result<Option<Command>, String> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let (verb, rest) = match line.split_once(char::is_whitespace) {
        Some((v, r)) => (v, r.trim()),
        None => (line, ""),
    };
    let need_arg = |what: &str| -> Result<(), String> {
        if rest.is_empty() {
            Err(format!("`{verb}` needs {what}"))
        } else {
            Ok(())
        }
    };
    let no_arg = || -> Result<(), String> {
        if rest.is_empty() {
            Ok(())
        } else {
            Err(format!("`{verb}` takes no arguments"))
        }
    };
    let cmd = match verb {
        "meta" => {
            need_arg("a path or inline JSON")?;
            Command::Meta(source(rest))
        }
        "model" => {
            need_arg("a path or inline JSON")?;
            Command::Model(source(rest))
        }
        "instance" => parse_instance(rest)?,
        "constraint" => {
            need_arg("constraint text")?;
            Command::Constraint(rest.to_string())
        }
        "solve" => Command::Solve(parse_solve(rest)?),
        "undo" => {
            no_arg()?;
            Command::Undo
        }
        "reset" => {
            no_arg()?;
            Command::Reset
        }
        "show" => {
            no_arg()?;
            Command::Show
        }
        other => return Err(format!("unknown command `{other}`")),
    };
    Ok(Some(cmd))
}

fn parse_instance(rest: &str) -> Result<Command, String> {
    let words: Vec<&str> = rest.split_whitespace().collect();
    let usage = "usage: instance <name> <model-id> label=<class> [minconf=<rat>]";
    if words.len() < 3 || words.len() > 4 {
        return Err(usage.to_string());
    }
    let mut label = None;
    let mut minconf = None;
    for w in &words[2..] {
        match w.split_once('=') {
            Some(("label", v)) if label.is_none() => label = Some(v.to_string()),
            Some(("minconf", v)) if minconf.is_none() => minconf = Some(v.to_string()),
            _ => return Err(usage.to_string()),
        }
    }
    let label = label.ok_or_else(|| usage.to_string())?;
    Ok(Command::Instance {
        name: words[0].to_string(),
        model: words[1].to_string(),
        label,
        minconf,
    })
}

/// Splits `project=..` and `minimize=..` options; values may contain spaces
/// inside brackets or parentheses.
fn parse_solve(rest: &str) -> Result<SolveOptions, String> {
    let mut opts = SolveOptions::default();
    let chars: Vec<char> = rest.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let key_start = i;
        while i < chars.len() && chars[i] != '=' && !chars[i].is_whitespace() {
            i += 1;
        }
        let key: String = chars[key_start..i].iter().collect();
        if i >= chars.len() || chars[i] != '=' {
            return Err(format!("expected `{key}=<value>`"));
        }
        i += 1;
        let value_start = i;
        let mut depth = 0i32;
        while i < chars.len() {
            match chars[i] {
                '(' | '[' => depth += 1,
                ')' | ']' => depth -= 1,
                c if c.is_whitespace() && depth == 0 => break,
                _ => {}
            }
            i += 1;
        }
        if depth != 0 {
            return Err(format!("unbalanced brackets in `{key}`"));
        }
        let value: String = chars[value_start..i].iter().collect();
        if value.is_empty() {
            return Err(format!("`{key}` needs a value"));
        }
        match key.as_str() {
            "project" if opts.project.is_none() => {
                let inner = value
                    .strip_prefix('[')
                    .and_then(|v| v.strip_suffix(']'))
                    .unwrap_or(&value);
                let items: Vec<String> = inner
                    .split(',')
                    .map(|s| s.trim().trim_matches(|c| c == '\'' || c == '"').to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                opts.project = Some(items);
            }
            "minimize" if opts.minimize.is_none() => {
                opts.minimize = Some(value.trim_matches(|c| c == '\'' || c == '"').to_string());
            }
            "project" | "minimize" => return Err(format!("`{key}` given twice")),
            other => return Err(format!("unknown solve option `{other}`")),
        }
    }
    Ok(opts)
}

/// What a command produced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Output {
    Answer(Answer),
    Text(String),
    Nothing,
}

/// A failed script line.
#[derive(Debug)]
pub struct LineError {
    pub line: usize,
    /// Column offset of the constraint text inside the line, for parser errors.
    pub offset: usize,
    pub error: SessionError,
}

impl LineError {
    /// Position of the error within the script line, when known.
    pub fn pos(&self) -> Option<Pos> {
        self.error.pos().map(|p| Pos {
            line: self.line + p.line - 1,
            column: if p.line == 1 { p.column + self.offset } else { p.column },
        })
    }
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pos() {
            Some(p) => write!(f, "line {}, column {}: {}", p.line, p.column, self.error),
            None => write!(f, "line {}: {}", self.line, self.error),
        }
    }
}

impl std::error::Error for LineError {}

/// Executes commands against a session; relative paths resolve against
/// `base_dir`.
#[derive(Clone, Debug, Default)]
pub struct Runner {
    pub session: Session,
    pub base_dir: PathBuf,
    /// Wall-clock limit of each `solve`.
    pub budget: Option<Duration>,
}

impl Runner {
    pub fn new(session: Session, base_dir: impl Into<PathBuf>) -> Self {
        Runner {
            session,
            base_dir: base_dir.into(),
            budget: None,
        }
    }

    fn load(&self, src: &Source) -> Result<String, SessionError> {
        match src {
            Source::Inline(text) => Ok(text.clone()),
            Source::Path(p) => read_file(&self.base_dir.join(p)),
        }
    }

    pub fn execute(&mut self, cmd: &Command) -> Result<Output, SessionError> {
        match cmd {
            Command::Meta(src) => {
                let space = FeatureSpace::from_json(&self.load(src)?)?;
                self.session.set_metadata(space)?;
                Ok(Output::Nothing)
            }
            Command::Model(src) => {
                let text = self.load(src)?;
                self.session.declare_model_json(&text)?;
                Ok(Output::Nothing)
            }
            Command::Instance {
                name,
                model,
                label,
                minconf,
            } => {
                let minconf = minconf.as_deref().map(parse_minconf).transpose()?;
                self.session.declare_instance(name, model, label, minconf)?;
                Ok(Output::Nothing)
            }
            Command::Constraint(text) => {
                self.session.add_constraint(text)?;
                Ok(Output::Nothing)
            }
            Command::Solve(opts) => {
                let deadline = self.budget.map(|b| Instant::now() + b);
                Ok(Output::Answer(self.session.solve_within(opts, deadline)?))
            }
            Command::Undo => {
                self.session.undo()?;
                Ok(Output::Nothing)
            }
            Command::Reset => {
                self.session.reset();
                Ok(Output::Nothing)
            }
            Command::Show => Ok(Output::Text(self.session.show())),
        }
    }

    /// Parses and runs one line numbered `line_no`.
    pub fn execute_line(&mut self, line: &str, line_no: usize) -> Result<Output, LineError> {
        let fail = |error: SessionError, offset: usize| LineError {
            line: line_no,
            offset,
            error,
        };
        let cmd = match parse_command(line) {
            Ok(Some(c)) => c,
            Ok(None) => return Ok(Output::Nothing),
            Err(message) => {
                return Err(fail(
                    SessionError::Script {
                        line: line_no,
                        message,
                    },
                    0,
                ))
            }
        };
        let offset = match &cmd {
            Command::Constraint(text) => line.find(text.as_str()).unwrap_or(0),
            _ => 0,
        };
        self.execute(&cmd).map_err(|e| fail(e, offset))
    }

    /// Runs a whole script, handing each output to `sink`; stops at the first
    /// failing line.
    pub fn run_script(&mut self, text: &str, mut sink: impl FnMut(Output)) -> Result<(), LineError> {
        for (i, line) in text.lines().enumerate() {
            let out = self.execute_line(line, i + 1)?;
            if out != Output::Nothing {
                sink(out);
            }
        }
        Ok(())
    }
}

pub fn read_file(path: &Path) -> Result<String, SessionError> {
    std::fs::read_to_string(path).map_err(|e| SessionError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_options() {
        let c = parse_command("solve project=[CE] minimize=l1norm(F, CE)").unwrap().unwrap();
        assert_eq!(
            c,
            Command::Solve(SolveOptions {
                project: Some(vec!["CE".into()]),
                minimize: Some("l1norm(F, CE)".into()),
            })
        );
        let c = parse_command("solve project=['CE', F.age]").unwrap().unwrap();
        let Command::Solve(o) = c else { panic!() };
        assert_eq!(o.project, Some(vec!["CE".to_string(), "F.age".to_string()]));
        assert_eq!(parse_command("solve").unwrap(), Some(Command::Solve(SolveOptions::default())));
        assert!(parse_command("solve project=[CE").is_err());
        assert!(parse_command("solve limit=3").is_err());
    }

    #[test]
    fn other_verbs() {
        assert_eq!(parse_command("  # note").unwrap(), None);
        assert_eq!(parse_command("").unwrap(), None);
        let c = parse_command("instance CE credit label=approve minconf=0.9").unwrap().unwrap();
        assert_eq!(
            c,
            Command::Instance {
                name: "CE".into(),
                model: "credit".into(),
                label: "approve".into(),
                minconf: Some("0.9".into()),
            }
        );
        assert!(parse_command("instance CE credit").is_err());
        assert!(parse_command("undo now").is_err());
        assert!(parse_command("frobnicate").is_err());
        assert_eq!(
            parse_command("model {\"model_id\":\"m\"}").unwrap(),
            Some(Command::Model(Source::Inline("{\"model_id\":\"m\"}".into())))
        );
    }
}
