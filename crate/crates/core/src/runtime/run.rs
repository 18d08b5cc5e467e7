//! Runs: a header describing the setup plus the event history.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::oracles::OracleSpec;
use crate::runtime::event::Event;
use crate::tasks::{Bit, FailurePattern, InputVector, ProcessId, TaskSpec, Time};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scheduler {
    /// Rotating process queue; each process takes its first enabled move,
    /// receiving the earliest sent message first.
    FairRr,
    /// Uniform over processes with an enabled move, then over that
    /// process's moves.
    Random { seed: u64 },
    /// Explicit process order; each listed process takes its first enabled
    /// move.
    Script { order: Vec<ProcessId> },
    /// Assembled from pieces of other runs.
    Composite { parts: Vec<String> },
}

impl fmt::Display for Scheduler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheduler::FairRr => f.write_str("fair_rr"),
            Scheduler::Random { seed } => write!(f, "random({seed})"),
            Scheduler::Script { order } => write!(f, "script({} steps)", order.len()),
            Scheduler::Composite { parts } => write!(f, "composite({})", parts.join("+")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// No process had an enabled move and no crash was pending.
    Quiescent,
    /// Every correct process decided, then the grace steps ran out or the
    /// run quiesced.
    Settled,
    StepBound,
    ScriptEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Crash {
    pub pid: ProcessId,
    pub time: Time,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunHeader {
    pub n: usize,
    pub f: usize,
    pub k: Option<usize>,
    pub task: TaskSpec,
    pub protocol: Value,
    pub oracles: Vec<OracleSpec>,
    pub scheduler: Scheduler,
    pub inputs: InputVector,
    pub crashes: Vec<Crash>,
    pub step_bound: u64,
    pub start_time: Time,
    pub stop: StopReason,
}

impl RunHeader {
    pub fn pattern(&self) -> FailurePattern {
        FailurePattern::from_crashes(self.n, self.crashes.iter().map(|c| (c.pid, c.time)))
    }
}

pub fn crashes_of(pattern: &FailurePattern) -> Vec<Crash> {
    crate::tasks::processes(pattern.n())
        .filter_map(|p| pattern.crash_time(p).map(|time| Crash { pid: p, time }))
        .collect()
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{pid} has events in the history and cannot have its input changed")]
    FlipActive { pid: ProcessId },
    #[error("{pid} is outside 1..={n}")]
    UnknownProcess { pid: ProcessId, n: usize },
    #[error("trace line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("empty trace")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    pub header: RunHeader,
    pub events: Vec<Event>,
}

impl Run {
    pub fn pattern(&self) -> FailurePattern {
        self.header.pattern()
    }

    /// First decision of each process, indexed by `pid.index()`.
    pub fn decisions(&self) -> Vec<Option<Bit>> {
        let mut out = vec![None; self.header.n];
        for e in &self.events {
            if let (Some(v), Some(slot)) = (e.decision(), out.get_mut(e.pid.index())) {
                slot.get_or_insert(v);
            }
        }
        out
    }

    /// Indices of decide events.
    pub fn decide_events(&self) -> impl Iterator<Item = (usize, &Event)> {
        self.events.iter().enumerate().filter(|(_, e)| e.decision().is_some())
    }

    /// Time of the last decide event, if any.
    pub fn last_decision_time(&self) -> Option<Time> {
        self.decide_events().map(|(_, e)| e.time).last()
    }

    pub fn end_time(&self) -> Time {
        self.events.last().map_or(self.header.start_time, |e| e.time)
    }

    /// `H[0,t]`: the events at or before `t`.
    pub fn prefix(&self, t: Time) -> Run {
        Run {
            header: self.header.clone(),
            events: self.events.iter().take_while(|e| e.time <= t).cloned().collect(),
        }
    }

    pub fn active_processes(&self) -> BTreeSet<ProcessId> {
        self.events.iter().map(|e| e.pid).collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(self.to_jsonl().as_bytes())
    }

    pub fn from_jsonl(text: &str) -> Result<Run, RunError> {
        Self::read_jsonl(text.as_bytes())
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Run, RunError> {
        let mut header = None;
        let mut events = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse = |e: serde_json::Error| RunError::Parse {
                line: i + 1,
                detail: e.to_string(),
            };
            if header.is_none() {
                header = Some(serde_json::from_str::<RunHeader>(&line).map_err(parse)?);
            } else {
                events.push(serde_json::from_str::<Event>(&line).map_err(parse)?);
            }
        }
        Ok(Run {
            header: header.ok_or(RunError::Empty)?,
            events,
        })
    }
}

/// Replaces the inputs of `flip` by `bit`. Only processes without any event
/// in the history may be flipped, so the history stays a legal run.
pub fn flip_inputs(run: &Run, flip: &BTreeSet<ProcessId>, bit: Bit) -> Result<Run, RunError> {
    let active = run.active_processes();
    let mut out = run.clone();
    for &p in flip {
        if p.0 == 0 || p.0 > run.header.n {
            return Err(RunError::UnknownProcess { pid: p, n: run.header.n });
        }
        if active.contains(&p) {
            return Err(RunError::FlipActive { pid: p });
        }
        out.header.inputs.set(p, bit);
    }
    Ok(out)
}
