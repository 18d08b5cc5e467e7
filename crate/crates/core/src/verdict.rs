//! Per-condition pass/fail reports.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Status {
    Pass,
    /// `evidence` holds indices into the run history that locate the failure.
    Fail { evidence: Vec<usize>, detail: String },
    /// The condition's premise does not apply to this run.
    Vacuous,
    /// The run ended at its step bound before the condition could be decided.
    Inconclusive { detail: String },
}

impl Status {
    pub fn fail(evidence: Vec<usize>, detail: impl Into<String>) -> Self {
        Status::Fail {
            evidence,
            detail: detail.into(),
        }
    }

    pub fn inconclusive(detail: impl Into<String>) -> Self {
        Status::Inconclusive { detail: detail.into() }
    }

    pub fn is_fail(&self) -> bool {
        matches!(self, Status::Fail { .. })
    }

    pub fn is_pass(&self) -> bool {
        matches!(self, Status::Pass)
    }

    fn label(&self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail { .. } => "FAIL",
            Status::Vacuous => "VACUOUS",
            Status::Inconclusive { .. } => "INCONCLUSIVE",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Fail { evidence, detail } => write!(f, "FAIL {detail} (events {evidence:?})"),
            Status::Inconclusive { detail } => write!(f, "INCONCLUSIVE {detail}"),
            other => f.write_str(other.label()),
        }
    }
}

/// Aggregate outcome of a [`Verdict`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Overall {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Overall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Overall::Pass => "PASS",
            Overall::Fail => "FAIL",
            Overall::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    #[serde(flatten)]
    pub status: Status,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub checks: Vec<Check>,
}

impl Verdict {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, status: Status) {
        self.checks.push(Check {
            name: name.into(),
            status,
        });
    }

    /// Appends every check of `other` with its name prefixed by `scope`.
    pub fn absorb(&mut self, scope: &str, other: Verdict) {
        for c in other.checks {
            self.checks.push(Check {
                name: format!("{scope}.{}", c.name),
                status: c.status,
            });
        }
    }

    pub fn get(&self, name: &str) -> Option<&Status> {
        self.checks.iter().find(|c| c.name == name).map(|c| &c.status)
    }

    /// Any FAIL wins, then any INCONCLUSIVE; VACUOUS counts as passing.
    pub fn overall(&self) -> Overall {
        if self.checks.iter().any(|c| c.status.is_fail()) {
            Overall::Fail
        } else if self.checks.iter().any(|c| matches!(c.status, Status::Inconclusive { .. })) {
            Overall::Inconclusive
        } else {
            Overall::Pass
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status.is_fail())
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{:<28} {}", c.name, c.status)?;
        }
        write!(f, "overall: {}", self.overall())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overall_precedence() {
        let mut v = Verdict::new();
        v.push("a", Status::Pass);
        v.push("b", Status::Vacuous);
        assert_eq!(v.overall(), Overall::Pass);
        v.push("c", Status::inconclusive("bound"));
        assert_eq!(v.overall(), Overall::Inconclusive);
        v.push("d", Status::fail(vec![3], "x"));
        assert_eq!(v.overall(), Overall::Fail);
        assert_eq!(v.failures().count(), 1);
    }

    #[test]
    fn serializes_flat() {
        let mut v = Verdict::new();
        v.push("agreement", Status::fail(vec![1, 2], "split"));
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(
            s,
            r#"{"checks":[{"name":"agreement","status":"fail","evidence":[1,2],"detail":"split"}]}"#
        );
        let back: Verdict = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}
