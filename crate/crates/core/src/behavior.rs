use std::fmt;

use crate::coreir::Value;

/// How a run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Terminated(Value),
    Errored(String),
    StepCapReached,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Terminated(v) => write!(f, "Terminated {v}"),
            Status::Errored(m) => write!(f, "Errored {m}"),
            Status::StepCapReached => f.write_str("StepCapReached"),
        }
    }
}

/// Observable outcome of a run: the printed values, in order, and the status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Behavior {
    pub trace: Vec<Value>,
    pub status: Status,
}

impl Behavior {
    /// The stdout rendering used by the command-line tool.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for v in &self.trace {
            s.push_str(&v.to_string());
            s.push('\n');
        }
        s.push_str(&format!("status: {}\n", self.status));
        s
    }

    /// Whether `self` (an engine run) is an acceptable behavior for a
    /// program whose reference behavior is `reference`.
    ///
    /// Terminating references must be matched exactly. An erring reference
    /// requires the run to err too, with the reference trace as a prefix.
    /// When the reference hit its step cap, the two traces must agree on
    /// their common prefix.
    pub fn refines(&self, reference: &Behavior) -> bool {
        match &reference.status {
            Status::Terminated(_) => self == reference,
            Status::Errored(_) => {
                matches!(self.status, Status::Errored(_)) && self.trace.starts_with(&reference.trace)
            }
            Status::StepCapReached => match self.status {
                Status::StepCapReached => {
                    self.trace.starts_with(&reference.trace) || reference.trace.starts_with(&self.trace)
                }
                _ => self.trace.starts_with(&reference.trace),
            },
        }
    }
}
