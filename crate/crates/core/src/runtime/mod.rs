//! Discrete-time simulation of crash-prone processes with oracles.

pub mod automaton;
pub mod engine;
pub mod event;
pub mod run;
pub mod structure;

pub use automaton::{everyone, Action, Automaton, Protocol, Stimulus};
pub use engine::{fair_extension, simulate, Engine, Move, Setup, SimError, DEFAULT_STEP_BOUND};
pub use event::{Event, EventKind, Location, Message, Phase};
pub use run::{crashes_of, flip_inputs, Crash, Run, RunError, RunHeader, Scheduler, StopReason};
pub use structure::validate_run_structure;
