//! The discrete-time engine.
//!
//! One event per tick. A process's move is, in order of preference: emit the
//! head of its action queue; take a ready oracle answer; receive a buffered
//! message (earliest sent first). A process crashed by the current time has
//! no move. When nobody can move but a crash is still ahead, time jumps to
//! that crash so that oracles waiting on it can answer.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::oracles::{AnswerRule, OracleError, OracleInstance, OracleSpec};
use crate::runtime::automaton::{Action, Automaton, Protocol, Stimulus};
use crate::runtime::event::{Event, EventKind, Location, Message};
use crate::runtime::run::{crashes_of, Run, RunHeader, Scheduler, StopReason};
use crate::tasks::{processes, Bit, FailurePattern, InputVector, ProcessId, Time};

pub const DEFAULT_STEP_BOUND: u64 = 10_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{pid} at t={time}: {detail}")]
    Protocol { pid: ProcessId, time: Time, detail: String },
    #[error("event {index} (t={time}) cannot be replayed: {detail}")]
    Replay { index: usize, time: Time, detail: String },
    #[error("script step {step}: {pid} has no enabled move")]
    ScriptStuck { step: usize, pid: ProcessId },
    #[error("invalid setup: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Emit(ProcessId),
    Answer(ProcessId),
    /// Receive the buffered copy with this sequence number.
    Receive(ProcessId, u64),
}

impl Move {
    pub fn pid(self) -> ProcessId {
        match self {
            Move::Emit(p) | Move::Answer(p) | Move::Receive(p, _) => p,
        }
    }
}

/// Everything [`simulate`] needs besides the protocol.
#[derive(Debug, Clone)]
pub struct Setup {
    pub inputs: InputVector,
    pub pattern: FailurePattern,
    pub scheduler: Scheduler,
    pub step_bound: u64,
    /// Extra steps taken after every correct process has decided.
    pub settle: u64,
    pub start_time: Time,
    /// Replaces the protocol's own oracle wiring.
    pub oracles: Option<Vec<OracleSpec>>,
}

impl Setup {
    pub fn new(inputs: InputVector, pattern: FailurePattern) -> Self {
        let n = inputs.n() as u64;
        Setup {
            inputs,
            pattern,
            scheduler: Scheduler::FairRr,
            step_bound: DEFAULT_STEP_BOUND,
            settle: 4 * n * n,
            start_time: 0,
            oracles: None,
        }
    }

    pub fn scheduler(mut self, s: Scheduler) -> Self {
        self.scheduler = s;
        self
    }

    pub fn step_bound(mut self, bound: u64) -> Self {
        self.step_bound = bound;
        self
    }

    pub fn settle(mut self, steps: u64) -> Self {
        self.settle = steps;
        self
    }

    pub fn start_time(mut self, t: Time) -> Self {
        self.start_time = t;
        self
    }

    pub fn oracles(mut self, specs: Vec<OracleSpec>) -> Self {
        self.oracles = Some(specs);
        self
    }
}

#[derive(Debug, Clone)]
struct InFlight {
    seq: u64,
    from: ProcessId,
    to: ProcessId,
    sent_at: Time,
    msg: Message,
}

struct ProcState {
    automaton: Box<dyn Automaton>,
    outbox: VecDeque<Action>,
    awaiting: Option<usize>,
    decided: Option<Bit>,
}

pub struct Engine<'a> {
    protocol: &'a dyn Protocol,
    n: usize,
    inputs: InputVector,
    pattern: FailurePattern,
    procs: Vec<ProcState>,
    oracles: Vec<OracleInstance>,
    buffer: Vec<InFlight>,
    next_seq: u64,
    start_time: Time,
    /// Time of the next event.
    now: Time,
    events: Vec<Event>,
    rr_next: usize,
}

impl<'a> Engine<'a> {
    pub fn new(protocol: &'a dyn Protocol, inputs: &InputVector, pattern: FailurePattern, oracles: Vec<OracleSpec>, start_time: Time) -> Result<Self, SimError> {
        let n = protocol.n();
        if inputs.n() != n || pattern.n() != n {
            return Err(SimError::Setup(format!(
                "protocol has {n} processes, inputs {} and failure pattern {}",
                inputs.n(),
                pattern.n()
            )));
        }
        let oracles = oracles.into_iter().map(OracleInstance::new).collect::<Result<Vec<_>, _>>()?;
        let procs = processes(n)
            .map(|p| {
                let mut automaton = protocol.automaton(p, inputs.get(p));
                let outbox = automaton.start().into();
                ProcState {
                    automaton,
                    outbox,
                    awaiting: None,
                    decided: None,
                }
            })
            .collect();
        Ok(Engine {
            protocol,
            n,
            inputs: inputs.clone(),
            pattern,
            procs,
            oracles,
            buffer: Vec::new(),
            next_seq: 0,
            start_time,
            now: start_time,
            events: Vec::new(),
            rr_next: 0,
        })
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn pattern(&self) -> &FailurePattern {
        &self.pattern
    }

    pub fn oracles(&self) -> &[OracleInstance] {
        &self.oracles
    }

    pub fn decisions(&self) -> Vec<Option<Bit>> {
        self.procs.iter().map(|s| s.decided).collect()
    }

    pub fn all_correct_decided(&self) -> bool {
        processes(self.n).all(|p| self.pattern.is_faulty(p) || self.procs[p.index()].decided.is_some())
    }

    fn oracle_index(&self, label: &str) -> Option<usize> {
        self.oracles.iter().position(|o| o.label() == label)
    }

    /// Moves available to `p` at the current time, preferred move first.
    pub fn enabled(&self, p: ProcessId) -> Vec<Move> {
        if self.pattern.crashed_by(p, self.now) {
            return Vec::new();
        }
        let st = &self.procs[p.index()];
        if !st.outbox.is_empty() {
            return vec![Move::Emit(p)];
        }
        let mut moves = Vec::new();
        if let Some(i) = st.awaiting {
            if self.oracles[i].answer_ready(p).is_some() {
                moves.push(Move::Answer(p));
            }
        }
        moves.extend(self.buffer.iter().filter(|m| m.to == p).map(|m| Move::Receive(p, m.seq)));
        moves
    }

    pub fn has_enabled(&self, p: ProcessId) -> bool {
        if self.pattern.crashed_by(p, self.now) {
            return false;
        }
        let st = &self.procs[p.index()];
        !st.outbox.is_empty()
            || st.awaiting.is_some_and(|i| self.oracles[i].answer_ready(p).is_some())
            || self.buffer.iter().any(|m| m.to == p)
    }

    fn preferred(&self, p: ProcessId) -> Option<Move> {
        if !self.has_enabled(p) {
            return None;
        }
        self.enabled(p).into_iter().next()
    }

    /// Lets every oracle commit what it can under the view at the current time.
    pub fn poll(&mut self) -> Result<(), SimError> {
        for o in &mut self.oracles {
            o.poll_answers(&self.pattern, self.now)?;
        }
        Ok(())
    }

    /// Last-resort poll once nothing else can happen; true if an answer
    /// became ready.
    fn poll_stalled(&mut self) -> Result<bool, SimError> {
        let mut any = false;
        for o in &mut self.oracles {
            any |= !o.poll_stalled(&self.pattern, self.now)?.is_empty();
        }
        Ok(any)
    }

    fn push(&mut self, pid: ProcessId, loc: Location, kind: EventKind) {
        self.events.push(Event {
            time: self.now,
            pid,
            loc,
            kind,
        });
        self.now += 1;
    }

    fn violation(&self, pid: ProcessId, detail: impl Into<String>) -> SimError {
        SimError::Protocol {
            pid,
            time: self.now,
            detail: detail.into(),
        }
    }

    /// Executes one move as one event.
    pub fn step(&mut self, mv: Move) -> Result<(), SimError> {
        let p = mv.pid();
        if p.0 == 0 || p.0 > self.n {
            return Err(SimError::Setup(format!("{p} is not a process")));
        }
        if self.pattern.crashed_by(p, self.now) {
            return Err(self.violation(p, "process has crashed"));
        }
        match mv {
            Move::Emit(_) => {
                let action = self.procs[p.index()]
                    .outbox
                    .pop_front()
                    .ok_or_else(|| self.violation(p, "nothing to emit"))?;
                self.emit(p, action)
            }
            Move::Answer(_) => {
                let i = self.procs[p.index()]
                    .awaiting
                    .ok_or_else(|| self.violation(p, "no pending query"))?;
                let value = self.oracles[i].deliver_answer(p, self.now)?;
                self.answered(p, i, value);
                Ok(())
            }
            Move::Receive(_, seq) => {
                let pos = self
                    .buffer
                    .iter()
                    .position(|m| m.seq == seq && m.to == p)
                    .ok_or_else(|| self.violation(p, format!("no buffered message {seq}")))?;
                let m = self.buffer.remove(pos);
                self.push(
                    p,
                    Location::Buffer,
                    EventKind::Receive {
                        from: m.from,
                        sent_at: m.sent_at,
                        msg: m.msg.clone(),
                    },
                );
                let actions = self.procs[p.index()].automaton.step(Stimulus::Deliver { from: m.from, msg: m.msg });
                self.procs[p.index()].outbox.extend(actions);
                Ok(())
            }
        }
    }

    fn emit(&mut self, p: ProcessId, action: Action) -> Result<(), SimError> {
        match action {
            Action::Send { msg, to } => {
                if to.is_empty() || to.iter().any(|q| q.0 == 0 || q.0 > self.n) {
                    return Err(self.violation(p, format!("bad destinations {to:?}")));
                }
                for &q in &to {
                    self.buffer.push(InFlight {
                        seq: self.next_seq,
                        from: p,
                        to: q,
                        sent_at: self.now,
                        msg: msg.clone(),
                    });
                    self.next_seq += 1;
                }
                self.push(p, Location::Buffer, EventKind::Send { msg, to });
            }
            Action::Query { sanctuary, value } => {
                let i = self
                    .oracle_index(&sanctuary)
                    .ok_or_else(|| self.violation(p, format!("unknown sanctuary {sanctuary}")))?;
                if self.procs[p.index()].awaiting.is_some() {
                    return Err(self.violation(p, "query while another query is pending"));
                }
                self.oracles[i].submit_query(p, value, self.now)?;
                self.procs[p.index()].awaiting = Some(i);
                self.push(p, Location::Sanctuary(sanctuary), EventKind::Query { value });
            }
            Action::Decide(value) => {
                self.procs[p.index()].decided.get_or_insert(value);
                self.push(p, Location::Local, EventKind::Decide { value });
            }
        }
        Ok(())
    }

    fn answered(&mut self, p: ProcessId, oracle: usize, value: Bit) {
        let sanctuary = self.oracles[oracle].label().to_string();
        self.procs[p.index()].awaiting = None;
        self.push(p, Location::Sanctuary(sanctuary.clone()), EventKind::Answer { value });
        let actions = self.procs[p.index()].automaton.step(Stimulus::Answer { sanctuary, value });
        self.procs[p.index()].outbox.extend(actions);
    }

    /// Reproduces a recorded event. Answers not yet committed by the oracle
    /// are committed to the recorded value; legality is the oracle
    /// validator's business.
    pub fn apply(&mut self, index: usize, e: &Event) -> Result<(), SimError> {
        let fail = |detail: String| SimError::Replay {
            index,
            time: e.time,
            detail,
        };
        if e.time < self.now {
            return Err(fail(format!("time goes back from {}", self.now)));
        }
        if e.pid.0 == 0 || e.pid.0 > self.n {
            return Err(fail(format!("{} is not a process", e.pid)));
        }
        if self.pattern.crashed_by(e.pid, e.time) {
            return Err(fail(format!("{} has crashed", e.pid)));
        }
        self.now = e.time;
        let p = e.pid;
        match &e.kind {
            EventKind::Send { .. } | EventKind::Query { .. } | EventKind::Decide { .. } => {
                let expected = match self.procs[p.index()].outbox.front() {
                    Some(Action::Send { msg, to }) => Some((Location::Buffer, EventKind::Send { msg: msg.clone(), to: to.clone() })),
                    Some(Action::Query { sanctuary, value }) => Some((Location::Sanctuary(sanctuary.clone()), EventKind::Query { value: *value })),
                    Some(Action::Decide(value)) => Some((Location::Local, EventKind::Decide { value: *value })),
                    None => None,
                };
                match expected {
                    Some((loc, kind)) if loc == e.loc && kind == e.kind => self.step(Move::Emit(p)).map_err(|err| fail(err.to_string())),
                    Some((loc, kind)) => Err(fail(format!("automaton would emit {} at {}", kind.code(), loc.as_str()))),
                    None => Err(fail("automaton has nothing to emit".into())),
                }
            }
            EventKind::Receive { from, sent_at, msg } => {
                if !self.procs[p.index()].outbox.is_empty() {
                    return Err(fail("automaton has pending actions".into()));
                }
                let seq = self
                    .buffer
                    .iter()
                    .find(|m| m.to == p && m.from == *from && m.sent_at == *sent_at && &m.msg == msg)
                    .map(|m| m.seq)
                    .ok_or_else(|| fail("no matching message in the buffer".into()))?;
                self.step(Move::Receive(p, seq)).map_err(|err| fail(err.to_string()))
            }
            EventKind::Answer { value } => {
                if !self.procs[p.index()].outbox.is_empty() {
                    return Err(fail("automaton has pending actions".into()));
                }
                let i = self.procs[p.index()].awaiting.ok_or_else(|| fail("no pending query".into()))?;
                if e.sanctuary() != Some(self.oracles[i].label()) {
                    return Err(fail(format!("pending query is at {}", self.oracles[i].label())));
                }
                self.oracles[i].record_answer(p, *value, e.time).map_err(|err| fail(err.to_string()))?;
                self.answered(p, i, *value);
                Ok(())
            }
        }
    }

    /// Replays a whole history; the error carries the failing event index.
    pub fn replay(&mut self, events: &[Event]) -> Result<(), SimError> {
        for (i, e) in events.iter().enumerate() {
            self.apply(i, e)?;
        }
        Ok(())
    }

    fn pending_crash(&self) -> Option<Time> {
        processes(self.n).filter_map(|p| self.pattern.crash_time(p)).filter(|&c| c > self.now).min()
    }

    /// Drives the engine until a stop condition. `step_bound` counts events
    /// taken by this call.
    pub fn run(&mut self, scheduler: &Scheduler, step_bound: u64, settle: u64) -> Result<StopReason, SimError> {
        let mut rng = match scheduler {
            Scheduler::Random { seed } => Some(ChaCha8Rng::seed_from_u64(*seed)),
            _ => None,
        };
        let mut script_pos = 0usize;
        let mut steps = 0u64;
        let mut settled_at = None;
        loop {
            if self.all_correct_decided() {
                let since = *settled_at.get_or_insert(steps);
                if steps - since >= settle {
                    return Ok(StopReason::Settled);
                }
            }
            if steps >= step_bound {
                return Ok(if self.all_correct_decided() { StopReason::Settled } else { StopReason::StepBound });
            }
            self.poll()?;
            let mv = match scheduler {
                Scheduler::FairRr | Scheduler::Composite { .. } => {
                    let pick = (0..self.n)
                        .map(|off| ProcessId::from_index((self.rr_next + off) % self.n))
                        .find_map(|p| self.preferred(p));
                    if let Some(mv) = pick {
                        self.rr_next = (mv.pid().index() + 1) % self.n;
                    }
                    pick
                }
                Scheduler::Random { .. } => {
                    let rng = rng.as_mut().expect("seeded");
                    let ready: Vec<ProcessId> = processes(self.n).filter(|&p| self.has_enabled(p)).collect();
                    if ready.is_empty() {
                        None
                    } else {
                        let p = ready[rng.gen_range(0..ready.len())];
                        let moves = self.enabled(p);
                        Some(moves[rng.gen_range(0..moves.len())])
                    }
                }
                Scheduler::Script { order } => {
                    let Some(&p) = order.get(script_pos) else {
                        return Ok(StopReason::ScriptEnd);
                    };
                    let mv = self.preferred(p).ok_or(SimError::ScriptStuck { step: script_pos, pid: p })?;
                    script_pos += 1;
                    Some(mv)
                }
            };
            match mv {
                Some(mv) => {
                    self.step(mv)?;
                    steps += 1;
                }
                None => match self.pending_crash() {
                    Some(c) => self.now = c,
                    None if self.poll_stalled()? => {}
                    None => {
                        return Ok(if self.all_correct_decided() { StopReason::Settled } else { StopReason::Quiescent });
                    }
                },
            }
        }
    }

    /// Whether any correct process still has a move.
    pub fn correct_can_move(&self) -> bool {
        processes(self.n).any(|p| !self.pattern.is_faulty(p) && self.has_enabled(p))
    }

    pub fn header(&self, scheduler: Scheduler, step_bound: u64, stop: StopReason) -> RunHeader {
        let task = self.protocol.task();
        RunHeader {
            n: self.n,
            f: task.f,
            k: task.problem.threshold_value(),
            task,
            protocol: self.protocol.descriptor(),
            oracles: self.oracles.iter().map(|o| o.spec().clone()).collect(),
            scheduler,
            inputs: self.inputs.clone(),
            crashes: crashes_of(&self.pattern),
            step_bound,
            start_time: self.start_time,
            stop,
        }
    }

    pub fn into_run(self, scheduler: Scheduler, step_bound: u64, stop: StopReason) -> Run {
        let header = self.header(scheduler, step_bound, stop);
        Run { header, events: self.events }
    }
}

/// Runs `protocol` from its initial states under `setup`.
pub fn simulate(protocol: &dyn Protocol, setup: &Setup) -> Result<Run, SimError> {
    if setup.step_bound == 0 {
        return Err(SimError::Setup("step bound must be positive".into()));
    }
    let oracles = setup.oracles.clone().unwrap_or_else(|| protocol.oracles());
    let mut engine = Engine::new(protocol, &setup.inputs, setup.pattern.clone(), oracles, setup.start_time)?;
    let stop = engine.run(&setup.scheduler, setup.step_bound, setup.settle)?;
    Ok(engine.into_run(setup.scheduler.clone(), setup.step_bound, stop))
}

/// Extends `prefix` without failures: processes taken round robin, earliest
/// message first, and every oracle answers the committed value of the
/// consultation or else the value of its first query.
pub fn fair_extension(prefix: &Run, protocol: &dyn Protocol, step_bound: u64) -> Result<Run, SimError> {
    let n = prefix.header.n;
    let oracles = prefix.header.oracles.iter().map(|s| s.clone().with_rule(AnswerRule::Echo)).collect();
    let mut engine = Engine::new(protocol, &prefix.header.inputs, FailurePattern::failure_free(n), oracles, prefix.header.start_time)?;
    engine.replay(&prefix.events)?;
    let stop = engine.run(&Scheduler::FairRr, step_bound, 0)?;
    let scheduler = Scheduler::Composite {
        parts: vec!["replay".into(), "fair_rr".into()],
    };
    Ok(engine.into_run(scheduler, step_bound, stop))
}
