//! Threshold agreement tasks, distributed oracles and a deterministic
//! crash-fault simulator.
//!
//! * [`tasks`]: decision sets, admissible oracle answers, generalization.
//! * [`oracles`]: oracle state machines and their history validator.
//! * [`runtime`]: the event engine, runs and their JSONL form.
//! * [`protocols`]: reduction algorithms wired to their oracles.
//! * [`checker`]: task conditions and full run verdicts.
//! * [`adversary`]: counterexample schedules against candidates.
//! * [`sweep`]: randomized batches with aggregated verdicts.

pub mod adversary;
pub mod checker;
pub mod oracles;
pub mod protocols;
pub mod runtime;
pub mod sweep;
pub mod tasks;
pub mod verdict;

pub use checker::{check_all, check_recorded, check_task_conditions};
pub use oracles::{AnswerPolicy, AnswerRule, OracleError, OracleInstance, OracleSpec, PowerMode};
pub use protocols::{OracleChoice, ProtocolError, ProtocolSpec};
pub use runtime::{simulate, Protocol, Run, Scheduler, Setup};
pub use tasks::{Bit, DecisionSet, FailurePattern, InputVector, PartialVector, ProblemKind, ProblemSpec, ProcessId, TaskSpec, Time};
pub use verdict::{Check, Overall, Status, Verdict};
