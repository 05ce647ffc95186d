//! Command failures, their exit codes and machine-readable records.

use std::fmt;

use serde_json::{json, Value};

/// Exit status when selected checks fail.
pub const EXIT_CHECKS_FAILED: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_UNKNOWN: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug)]
pub enum Failure {
    /// Malformed scenario text or override.
    Parse { line: Option<usize>, message: String },
    /// Well-formed but out-of-range settings or inconsistent inputs.
    Invalid(String),
    Unknown { kind: String, name: String, known: Vec<String> },
    Solver(nlfp::Error),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Parse { .. } | Failure::Invalid(_) => EXIT_PARSE,
            Failure::Unknown { .. } => EXIT_UNKNOWN,
            Failure::Solver(_) => EXIT_SOLVER,
            Failure::Io(_) => EXIT_IO,
        }
    }

    pub fn record(&self) -> Value {
        let mut v = match self {
            Failure::Parse { line, message } => json!({
                "error": "parse",
                "line": line,
                "message": message,
            }),
            Failure::Invalid(m) => json!({ "error": "invalid", "message": m }),
            Failure::Unknown { kind, name, known } => json!({
                "error": format!("unknown {kind}"),
                "name": name,
                "known": known,
            }),
            Failure::Solver(e) => {
                let mut v = json!({ "error": "solver", "message": e.to_string() });
                match e {
                    nlfp::Error::NonConvergence { step, residual, iterations }
                    | nlfp::Error::LinearSolveFailure { step, residual, iterations } => {
                        v["step"] = json!(step);
                        v["residual"] = json!(residual);
                        v["iterations"] = json!(iterations);
                    }
                    nlfp::Error::DegenerateDensity { particle, value } => {
                        v["particle"] = json!(particle);
                        v["value"] = json!(value);
                    }
                    _ => {}
                }
                v
            }
            Failure::Io(m) => json!({ "error": "io", "message": m }),
        };
        v["status"] = json!(self.exit_code());
        v
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Parse { line: Some(l), message } => write!(f, "scenario line {l}: {message}"),
            Failure::Parse { line: None, message } => write!(f, "{message}"),
            Failure::Invalid(m) => write!(f, "invalid scenario: {m}"),
            Failure::Unknown { kind, name, known } => {
                write!(f, "unknown {kind} `{name}`; known: {}", known.join(", "))
            }
            Failure::Solver(e) => write!(f, "solver failure: {e}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<nlfp::Error> for Failure {
    fn from(e: nlfp::Error) -> Self {
        match e {
            nlfp::Error::Unknown { kind, name, known } => Failure::Unknown {
                kind: kind.to_string(),
                name,
                known: known.split(", ").map(String::from).collect(),
            },
            nlfp::Error::InvalidArgument(m) | nlfp::Error::Mismatch(m) | nlfp::Error::Format(m) => {
                Failure::Invalid(m)
            }
            nlfp::Error::Io(e) => Failure::Io(e.to_string()),
            other => Failure::Solver(other),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Io(e.to_string())
    }
}
