//! The process-side interface the engine drives.

use serde_json::Value;

use crate::oracles::OracleSpec;
use crate::runtime::event::Message;
use crate::tasks::{Bit, ProcessId, TaskSpec};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Send { msg: Message, to: Vec<ProcessId> },
    Query { sanctuary: String, value: Bit },
    Decide(Bit),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stimulus {
    Deliver { from: ProcessId, msg: Message },
    Answer { sanctuary: String, value: Bit },
}

/// A deterministic process. The engine calls `start` once, then `step` for
/// every stimulus, and executes returned actions in order, one event each.
pub trait Automaton: Send {
    fn start(&mut self) -> Vec<Action>;
    fn step(&mut self, stimulus: Stimulus) -> Vec<Action>;
}

/// An algorithm together with its oracle wiring.
pub trait Protocol: Send + Sync {
    /// Number of simulated processes.
    fn n(&self) -> usize;
    fn automaton(&self, pid: ProcessId, input: Bit) -> Box<dyn Automaton>;
    fn oracles(&self) -> Vec<OracleSpec>;
    /// The task runs of this protocol are judged against by default.
    fn task(&self) -> TaskSpec;
    /// Serializable description stored in run headers.
    fn descriptor(&self) -> Value;
}

/// Broadcast destination list `1..=n`.
pub fn everyone(n: usize) -> Vec<ProcessId> {
    crate::tasks::processes(n).collect()
}
