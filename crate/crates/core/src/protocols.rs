//! Reduction algorithms as automaton factories with their oracle wiring.
//!
//! | id         | processes | oracles                                   | solves                  |
//! |------------|-----------|-------------------------------------------|-------------------------|
//! | `direct`   | n         | one (k+1)-TAg over Π ∪ {n+1}, f+1         | k-TAg(n, f)             |
//! | `fig1`     | n         | one Cons(Π, f)                            | (f+1)-TAg(n, f)         |
//! | `fig2`     | n > 2f    | one f-TAg(Π, f), consistent               | (f+1)-TAg(n, f)         |
//! | `fig3max`  | n+1       | k-TAg(Π∖{l}, f) for each l                | (k+1)-TAg(n+1, f)       |
//! | `fig3min`  | n+1       | same                                      | k-TAg(n+1, f)           |
//! | `fig4`     | n         | one f-TAg(Π, f), sham                     | (f+1)-TAg(n, f)         |
//! | `noop`     | n         | one oracle for the generalizing task      | the generalized task    |
//!
//! Two candidates exist only to be refuted: `query_decide` queries a
//! wait-free consensus oracle with its input and decides the answer, and
//! `constant` decides a fixed value without communicating.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::oracles::{AnswerPolicy, OracleSpec, PowerMode};
use crate::runtime::{everyone, Action, Automaton, Message, Phase, Protocol, Stimulus};
use crate::tasks::{is_generalization, Bit, GeneralizationWitness, ProblemKind, ProcessId, TaskError, TaskSpec};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("{via} is not a generalization of {task}: {witness}")]
    NotGeneralization { task: TaskSpec, via: TaskSpec, witness: GeneralizationWitness },
}

/// Power mode and answer policy of a protocol's oracles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleChoice {
    pub mode: PowerMode,
    pub policy: AnswerPolicy,
}

impl OracleChoice {
    pub fn new(mode: PowerMode, policy: AnswerPolicy) -> Self {
        OracleChoice { mode, policy }
    }

    pub fn general() -> Self {
        Self::new(PowerMode::General, AnswerPolicy::Prefer0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum ProtocolSpec {
    Direct { n: usize, f: usize, k: usize, oracle: OracleChoice },
    Fig1 { n: usize, f: usize, oracle: OracleChoice },
    Fig2 { n: usize, f: usize, oracle: OracleChoice },
    /// `n` is the oracle size; the system has `n + 1` processes.
    Fig3Max { n: usize, f: usize, k: usize, oracle: OracleChoice },
    Fig3Min { n: usize, f: usize, k: usize, oracle: OracleChoice },
    Fig4 { n: usize, f: usize, oracle: OracleChoice },
    Noop { task: TaskSpec, via: TaskSpec, oracle: OracleChoice },
    QueryDecide { n: usize, f: usize, k: usize, oracle: OracleChoice },
    Constant { n: usize, f: usize, k: usize, value: Bit },
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<(), ProtocolError> {
    if cond {
        Ok(())
    } else {
        Err(ProtocolError::Precondition(msg()))
    }
}

fn resilient(n: usize, f: usize) -> Result<(), ProtocolError> {
    require(f >= 1 && f < n, || format!("need 1 <= f <= n-1, got n={n}, f={f}"))
}

fn threshold_in(k: usize, n: usize) -> Result<(), ProtocolError> {
    require(k >= 1 && k <= n, || format!("need 1 <= k <= n, got n={n}, k={k}"))
}

impl ProtocolSpec {
    pub fn direct(n: usize, f: usize, k: usize) -> Result<Self, ProtocolError> {
        Self::Direct { n, f, k, oracle: OracleChoice::general() }.checked()
    }

    pub fn fig1(n: usize, f: usize) -> Result<Self, ProtocolError> {
        Self::Fig1 { n, f, oracle: OracleChoice::general() }.checked()
    }

    pub fn fig2(n: usize, f: usize) -> Result<Self, ProtocolError> {
        let oracle = OracleChoice::new(PowerMode::Consistent, AnswerPolicy::Prefer0);
        Self::Fig2 { n, f, oracle }.checked()
    }

    pub fn fig3_max(n: usize, f: usize, k: usize) -> Result<Self, ProtocolError> {
        Self::Fig3Max { n, f, k, oracle: OracleChoice::general() }.checked()
    }

    pub fn fig3_min(n: usize, f: usize, k: usize) -> Result<Self, ProtocolError> {
        Self::Fig3Min { n, f, k, oracle: OracleChoice::general() }.checked()
    }

    pub fn fig4(n: usize, f: usize) -> Result<Self, ProtocolError> {
        let oracle = OracleChoice::new(PowerMode::Sham, AnswerPolicy::Prefer0);
        Self::Fig4 { n, f, oracle }.checked()
    }

    pub fn noop(task: TaskSpec, via: TaskSpec) -> Result<Self, ProtocolError> {
        Self::Noop { task, via, oracle: OracleChoice::general() }.checked()
    }

    pub fn query_decide(n: usize, f: usize, k: usize) -> Result<Self, ProtocolError> {
        Self::QueryDecide { n, f, k, oracle: OracleChoice::general() }.checked()
    }

    pub fn constant(n: usize, f: usize, k: usize, value: Bit) -> Result<Self, ProtocolError> {
        Self::Constant { n, f, k, value }.checked()
    }

    fn checked(self) -> Result<Self, ProtocolError> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        match *self {
            Self::Direct { n, f, k, .. } | Self::Fig3Max { n, f, k, .. } | Self::Fig3Min { n, f, k, .. } => {
                resilient(n, f)?;
                threshold_in(k, n)?;
            }
            Self::Fig1 { n, f, .. } | Self::Fig4 { n, f, .. } => resilient(n, f)?,
            Self::Fig2 { n, f, .. } => {
                resilient(n, f)?;
                require(n > 2 * f, || format!("fig2 needs n > 2f, got n={n}, f={f}"))?;
            }
            Self::Noop { task, via, .. } => {
                let g = is_generalization(&task, &via)?;
                if let Some(witness) = g.witness {
                    return Err(ProtocolError::NotGeneralization { task, via, witness });
                }
            }
            Self::QueryDecide { n, f, k, .. } | Self::Constant { n, f, k, .. } => {
                resilient(n, f)?;
                threshold_in(k, n)?;
            }
        }
        for spec in self.oracles() {
            spec.validate().map_err(|e| ProtocolError::Precondition(e.to_string()))?;
        }
        Ok(())
    }

    pub fn oracle_choice(&self) -> Option<OracleChoice> {
        match *self {
            Self::Direct { oracle, .. }
            | Self::Fig1 { oracle, .. }
            | Self::Fig2 { oracle, .. }
            | Self::Fig3Max { oracle, .. }
            | Self::Fig3Min { oracle, .. }
            | Self::Fig4 { oracle, .. }
            | Self::Noop { oracle, .. }
            | Self::QueryDecide { oracle, .. } => Some(oracle),
            Self::Constant { .. } => None,
        }
    }

    /// Same protocol with other oracle powers.
    pub fn with_oracle(mut self, choice: OracleChoice) -> Self {
        match &mut self {
            Self::Direct { oracle, .. }
            | Self::Fig1 { oracle, .. }
            | Self::Fig2 { oracle, .. }
            | Self::Fig3Max { oracle, .. }
            | Self::Fig3Min { oracle, .. }
            | Self::Fig4 { oracle, .. }
            | Self::Noop { oracle, .. }
            | Self::QueryDecide { oracle, .. } => *oracle = choice,
            Self::Constant { .. } => {}
        }
        self
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Direct { .. } => "direct",
            Self::Fig1 { .. } => "fig1",
            Self::Fig2 { .. } => "fig2",
            Self::Fig3Max { .. } => "fig3max",
            Self::Fig3Min { .. } => "fig3min",
            Self::Fig4 { .. } => "fig4",
            Self::Noop { .. } => "noop",
            Self::QueryDecide { .. } => "query_decide",
            Self::Constant { .. } => "constant",
        }
    }

    pub fn from_descriptor(v: &Value) -> Result<Self, String> {
        let spec: Self = serde_json::from_value(v.clone()).map_err(|e| e.to_string())?;
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }

    fn size(&self) -> usize {
        match *self {
            Self::Fig3Max { n, .. } | Self::Fig3Min { n, .. } => n + 1,
            Self::Noop { task, .. } => task.n(),
            Self::Direct { n, .. }
            | Self::Fig1 { n, .. }
            | Self::Fig2 { n, .. }
            | Self::Fig4 { n, .. }
            | Self::QueryDecide { n, .. }
            | Self::Constant { n, .. } => n,
        }
    }

    fn solved(&self) -> TaskSpec {
        let t = |k, n, f| TaskSpec::threshold(k, n, f).expect("validated parameters");
        match *self {
            Self::Direct { n, f, k, .. } | Self::QueryDecide { n, f, k, .. } | Self::Constant { n, f, k, .. } => t(k, n, f),
            Self::Fig1 { n, f, .. } | Self::Fig2 { n, f, .. } | Self::Fig4 { n, f, .. } => t(f + 1, n, f),
            Self::Fig3Max { n, f, k, .. } => t(k + 1, n + 1, f),
            Self::Fig3Min { n, f, k, .. } => t(k, n + 1, f),
            Self::Noop { task, .. } => task,
        }
    }
}

fn ids(range: impl Iterator<Item = usize>) -> Vec<ProcessId> {
    range.map(ProcessId).collect()
}

fn oracle(label: &str, consultants: Vec<ProcessId>, k: usize, f: usize, c: OracleChoice) -> OracleSpec {
    OracleSpec::new(label, consultants, ProblemKind::Threshold { k }, f, c.mode, c.policy)
}

pub const SIGMA: &str = "sigma";
pub const CONS: &str = "cons";

pub fn fig3_label(l: usize) -> String {
    format!("sigma{l}")
}

impl Protocol for ProtocolSpec {
    fn n(&self) -> usize {
        self.size()
    }

    fn automaton(&self, pid: ProcessId, input: Bit) -> Box<dyn Automaton> {
        let n = self.size();
        match *self {
            Self::Direct { .. } | Self::Noop { .. } => Box::new(QueryDecide::new(SIGMA, input)),
            Self::QueryDecide { .. } => Box::new(QueryDecide::new(CONS, input)),
            Self::Constant { value, .. } => Box::new(Constant(value)),
            Self::Fig1 { f, .. } => Box::new(Fig1::new(n, f, input)),
            Self::Fig2 { f, .. } => Box::new(Fig2::new(n, f, input)),
            Self::Fig3Max { .. } => Box::new(Fig3::new(n, pid, input, Bit::max)),
            Self::Fig3Min { .. } => Box::new(Fig3::new(n, pid, input, Bit::min)),
            Self::Fig4 { f, .. } => Box::new(Fig4::new(n, f, input)),
        }
    }

    fn oracles(&self) -> Vec<OracleSpec> {
        match *self {
            Self::Direct { n, f, k, oracle: c } => vec![oracle(SIGMA, ids(1..=n + 1), k + 1, f + 1, c)],
            Self::Fig1 { n, f, oracle: c } => vec![oracle(CONS, ids(1..=n), n, f, c)],
            Self::Fig2 { n, f, oracle: c } | Self::Fig4 { n, f, oracle: c } => vec![oracle(SIGMA, ids(1..=n), f, f, c)],
            Self::Fig3Max { n, f, k, oracle: c } | Self::Fig3Min { n, f, k, oracle: c } => (1..=n + 1)
                .map(|l| oracle(&fig3_label(l), ids((1..=n + 1).filter(|&q| q != l)), k, f, c))
                .collect(),
            Self::Noop { via, oracle: c, .. } => vec![OracleSpec::new(SIGMA, ids(1..=via.n()), via.problem.kind, via.f, c.mode, c.policy)],
            Self::QueryDecide { n, oracle: c, .. } => vec![oracle(CONS, ids(1..=n), n, n - 1, c)],
            Self::Constant { n, .. } => vec![oracle(CONS, ids(1..=n), n, n - 1, OracleChoice::general())],
        }
    }

    fn task(&self) -> TaskSpec {
        self.solved()
    }

    fn descriptor(&self) -> Value {
        serde_json::to_value(self).expect("protocol spec serializes")
    }
}

/// Queries one oracle with the input and decides the answer.
struct QueryDecide {
    sanctuary: &'static str,
    input: Bit,
}

impl QueryDecide {
    fn new(sanctuary: &'static str, input: Bit) -> Self {
        QueryDecide { sanctuary, input }
    }
}

impl Automaton for QueryDecide {
    fn start(&mut self) -> Vec<Action> {
        vec![Action::Query {
            sanctuary: self.sanctuary.into(),
            value: self.input,
        }]
    }

    fn step(&mut self, s: Stimulus) -> Vec<Action> {
        match s {
            Stimulus::Answer { value, .. } => vec![Action::Decide(value)],
            Stimulus::Deliver { .. } => Vec::new(),
        }
    }
}

struct Constant(Bit);

impl Automaton for Constant {
    fn start(&mut self) -> Vec<Action> {
        vec![Action::Decide(self.0)]
    }

    fn step(&mut self, _: Stimulus) -> Vec<Action> {
        Vec::new()
    }
}

/// Broadcast the input, take the minimum of the first n-f values, ask
/// consensus with it.
struct Fig1 {
    n: usize,
    f: usize,
    input: Bit,
    received: usize,
    min: Bit,
    queried: bool,
}

impl Fig1 {
    fn new(n: usize, f: usize, input: Bit) -> Self {
        Fig1 {
            n,
            f,
            input,
            received: 0,
            min: Bit::One,
            queried: false,
        }
    }
}

impl Automaton for Fig1 {
    fn start(&mut self) -> Vec<Action> {
        vec![Action::Send {
            msg: Message::Input { value: self.input },
            to: everyone(self.n),
        }]
    }

    fn step(&mut self, s: Stimulus) -> Vec<Action> {
        match s {
            Stimulus::Deliver { msg: Message::Input { value }, .. } if !self.queried => {
                self.received += 1;
                self.min = self.min.min(value);
                if self.received < self.n - self.f {
                    return Vec::new();
                }
                self.queried = true;
                vec![Action::Query {
                    sanctuary: CONS.into(),
                    value: self.min,
                }]
            }
            Stimulus::Answer { value, .. } => vec![Action::Decide(value)],
            Stimulus::Deliver { .. } => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fig2Stage {
    First,
    Second { v: Bit },
    Done,
    Await { phase: Phase, round: u32 },
}

/// Two oracle queries, then rounds of estimate exchange and proposals.
struct Fig2 {
    n: usize,
    f: usize,
    input: Bit,
    x: Bit,
    stage: Fig2Stage,
    /// Values received per (phase, round), in arrival order.
    inbox: BTreeMap<(Phase, u32), Vec<Option<Bit>>>,
}

impl Fig2 {
    fn new(n: usize, f: usize, input: Bit) -> Self {
        Fig2 {
            n,
            f,
            input,
            x: input,
            stage: Fig2Stage::First,
            inbox: BTreeMap::new(),
        }
    }

    fn broadcast(&self, phase: Phase, round: u32, value: Option<Bit>) -> Action {
        Action::Send {
            msg: Message::Round { phase, round, value },
            to: everyone(self.n),
        }
    }

    fn advance(&mut self) -> Vec<Action> {
        let quorum = self.n - self.f;
        let mut out = Vec::new();
        while let Fig2Stage::Await { phase, round } = self.stage {
            let Some(got) = self.inbox.get(&(phase, round)).filter(|v| v.len() >= quorum) else {
                break;
            };
            let got = &got[..quorum];
            let count = |b: Bit| got.iter().filter(|&&w| w == Some(b)).count();
            match phase {
                Phase::R => {
                    let proposal = if count(Bit::Zero) > self.f {
                        Some(Bit::Zero)
                    } else if count(Bit::One) == quorum {
                        Some(Bit::One)
                    } else {
                        None
                    };
                    out.push(self.broadcast(Phase::P, round, proposal));
                    self.stage = Fig2Stage::Await { phase: Phase::P, round };
                }
                Phase::P => {
                    let (zeros, ones) = (count(Bit::Zero), count(Bit::One));
                    assert!(zeros == 0 || ones == 0, "both 0 and 1 proposed in round {round}");
                    if zeros > self.f || ones > self.f {
                        self.x = if zeros > 0 { Bit::Zero } else { Bit::One };
                        out.push(Action::Decide(self.x));
                    } else if ones > 0 {
                        self.x = Bit::One;
                    } else {
                        self.x = Bit::Zero;
                    }
                    self.inbox.retain(|&(_, r), _| r > round);
                    out.push(self.broadcast(Phase::R, round + 1, Some(self.x)));
                    self.stage = Fig2Stage::Await { phase: Phase::R, round: round + 1 };
                }
            }
        }
        out
    }
}

impl Automaton for Fig2 {
    fn start(&mut self) -> Vec<Action> {
        vec![Action::Query {
            sanctuary: SIGMA.into(),
            value: self.input,
        }]
    }

    fn step(&mut self, s: Stimulus) -> Vec<Action> {
        match s {
            Stimulus::Answer { value, .. } => match self.stage {
                Fig2Stage::First => {
                    self.stage = Fig2Stage::Second { v: value };
                    vec![Action::Query {
                        sanctuary: SIGMA.into(),
                        value: Bit::One,
                    }]
                }
                Fig2Stage::Second { v } if value == Bit::One => {
                    self.stage = Fig2Stage::Done;
                    vec![Action::Decide(v)]
                }
                Fig2Stage::Second { .. } => {
                    self.stage = Fig2Stage::Await { phase: Phase::R, round: 1 };
                    let mut out = vec![self.broadcast(Phase::R, 1, Some(self.x))];
                    out.extend(self.advance());
                    out
                }
                _ => Vec::new(),
            },
            Stimulus::Deliver {
                msg: Message::Round { phase, round, value },
                ..
            } => {
                let stale = matches!(self.stage, Fig2Stage::Await { round: r, .. } if round < r);
                if stale || self.stage == Fig2Stage::Done {
                    return Vec::new();
                }
                self.inbox.entry((phase, round)).or_default().push(value);
                self.advance()
            }
            Stimulus::Deliver { .. } => Vec::new(),
        }
    }
}

/// Queries every oracle but its own in order, shares each answer, decides
/// `pick` over all answers once every one is known.
struct Fig3 {
    size: usize,
    me: ProcessId,
    input: Bit,
    known: Vec<Option<Bit>>,
    next: usize,
    pick: fn(Bit, Bit) -> Bit,
    decided: bool,
}

impl Fig3 {
    fn new(size: usize, me: ProcessId, input: Bit, pick: fn(Bit, Bit) -> Bit) -> Self {
        Fig3 {
            size,
            me,
            input,
            known: vec![None; size],
            next: 1,
            pick,
            decided: false,
        }
    }

    fn query_next(&mut self) -> Option<Action> {
        if self.next == self.me.0 {
            self.next += 1;
        }
        (self.next <= self.size).then(|| Action::Query {
            sanctuary: fig3_label(self.next),
            value: self.input,
        })
    }

    fn maybe_decide(&mut self) -> Option<Action> {
        if self.decided || self.known.iter().any(Option::is_none) {
            return None;
        }
        self.decided = true;
        let v = self.known.iter().flatten().copied().reduce(self.pick).expect("at least two oracles");
        Some(Action::Decide(v))
    }
}

impl Automaton for Fig3 {
    fn start(&mut self) -> Vec<Action> {
        self.query_next().into_iter().collect()
    }

    fn step(&mut self, s: Stimulus) -> Vec<Action> {
        let mut out = Vec::new();
        match s {
            Stimulus::Answer { value, .. } => {
                let l = self.next;
                self.known[l - 1].get_or_insert(value);
                out.push(Action::Send {
                    msg: Message::Report { oracle: l, value },
                    to: everyone(self.size),
                });
                self.next += 1;
                out.extend(self.query_next());
            }
            Stimulus::Deliver {
                msg: Message::Report { oracle, value },
                ..
            } => {
                if let Some(slot) = self.known.get_mut(oracle.wrapping_sub(1)) {
                    slot.get_or_insert(value);
                }
            }
            Stimulus::Deliver { .. } => {}
        }
        out.extend(self.maybe_decide());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fig4Stage {
    First,
    Second { v: Bit },
    Collect,
    Done,
}

/// Two oracle queries; on a 0 second answer, wait for n-f inputs and decide
/// 0 iff one of them is 0.
struct Fig4 {
    n: usize,
    f: usize,
    input: Bit,
    stage: Fig4Stage,
    received: usize,
    saw_zero: bool,
}

impl Fig4 {
    fn new(n: usize, f: usize, input: Bit) -> Self {
        Fig4 {
            n,
            f,
            input,
            stage: Fig4Stage::First,
            received: 0,
            saw_zero: false,
        }
    }

    fn try_decide(&mut self) -> Vec<Action> {
        if self.stage == Fig4Stage::Collect && self.received >= self.n - self.f {
            self.stage = Fig4Stage::Done;
            return vec![Action::Decide(if self.saw_zero { Bit::Zero } else { Bit::One })];
        }
        Vec::new()
    }
}

impl Automaton for Fig4 {
    fn start(&mut self) -> Vec<Action> {
        vec![Action::Query {
            sanctuary: SIGMA.into(),
            value: self.input,
        }]
    }

    fn step(&mut self, s: Stimulus) -> Vec<Action> {
        match s {
            Stimulus::Answer { value, .. } => match self.stage {
                Fig4Stage::First => {
                    self.stage = Fig4Stage::Second { v: value };
                    vec![Action::Query {
                        sanctuary: SIGMA.into(),
                        value: Bit::One,
                    }]
                }
                Fig4Stage::Second { v } if value == Bit::One => {
                    self.stage = Fig4Stage::Done;
                    vec![Action::Decide(v)]
                }
                Fig4Stage::Second { .. } => {
                    self.stage = Fig4Stage::Collect;
                    let mut out = vec![Action::Send {
                        msg: Message::Input { value: self.input },
                        to: everyone(self.n),
                    }];
                    out.extend(self.try_decide());
                    out
                }
                _ => Vec::new(),
            },
            Stimulus::Deliver {
                msg: Message::Input { value },
                ..
            } => {
                self.received += 1;
                self.saw_zero |= value == Bit::Zero;
                self.try_decide()
            }
            Stimulus::Deliver { .. } => Vec::new(),
        }
    }
}
