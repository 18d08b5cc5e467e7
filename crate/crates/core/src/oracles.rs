//! Oracle state machines and a validator for oracle histories.
//!
//! An oracle lives at a sanctuary with a fixed consultant set `Γ`. Each
//! consultant alternates query and answer; its n-th query belongs to the
//! n-th consultation. All answers of one consultation carry the same value,
//! chosen from [`oracle_allowed`] under the failure view of the oracle's
//! power mode:
//!
//! * `General` and `Consistent` count every consultant that is faulty
//!   anywhere in the failure pattern, future crashes included.
//! * `Sham` counts only consultants crashed by the answer time.
//!
//! Consultants that are not processes of the simulated system count as
//! crashed from time 0.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tasks::{oracle_allowed, Bit, DecisionSet, FailurePattern, PartialVector, ProblemKind, ProblemSpec, ProcessId, TaskError, Time};
use crate::verdict::{Status, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerMode {
    General,
    Consistent,
    Sham,
}

impl fmt::Display for PowerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PowerMode::General => "general",
            PowerMode::Consistent => "consistent",
            PowerMode::Sham => "sham",
        })
    }
}

/// How an oracle picks among several admissible answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerPolicy {
    Prefer0,
    Prefer1,
    Seeded(u64),
}

impl fmt::Display for AnswerPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnswerPolicy::Prefer0 => f.write_str("prefer0"),
            AnswerPolicy::Prefer1 => f.write_str("prefer1"),
            AnswerPolicy::Seeded(s) => write!(f, "seeded({s})"),
        }
    }
}

/// Who decides the answer value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerRule {
    /// The oracle's own policy, after the `|Γ| - f` quorum is met.
    Policy,
    /// A driver-imposed value, answered as soon as someone queries. Must be
    /// admissible; otherwise polling fails.
    Forced(Bit),
    /// Answer the value of the consultation's first query, as soon as it
    /// arrives.
    Echo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub label: String,
    /// Sorted, distinct.
    pub consultants: Vec<ProcessId>,
    pub problem: ProblemKind,
    pub f: usize,
    pub mode: PowerMode,
    pub policy: AnswerPolicy,
    pub rule: AnswerRule,
}

impl OracleSpec {
    pub fn new(label: impl Into<String>, consultants: Vec<ProcessId>, problem: ProblemKind, f: usize, mode: PowerMode, policy: AnswerPolicy) -> Self {
        OracleSpec {
            label: label.into(),
            consultants,
            problem,
            f,
            mode,
            policy,
            rule: AnswerRule::Policy,
        }
    }

    pub fn with_rule(mut self, rule: AnswerRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn with_mode(mut self, mode: PowerMode) -> Self {
        self.mode = mode;
        self
    }

    /// The problem over `Γ`, with consultants renamed to `1..=|Γ|` in
    /// ascending order.
    pub fn problem_spec(&self) -> ProblemSpec {
        ProblemSpec {
            kind: self.problem,
            n: self.consultants.len(),
        }
    }

    pub fn quorum(&self) -> usize {
        self.consultants.len().saturating_sub(self.f)
    }

    pub fn position(&self, p: ProcessId) -> Option<usize> {
        self.consultants.binary_search(&p).ok()
    }

    pub fn is_consultant(&self, p: ProcessId) -> bool {
        self.position(p).is_some()
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if !self.consultants.windows(2).all(|w| w[0] < w[1]) {
            return Err(OracleError::InvalidSpec(format!("{}: consultants must be sorted and distinct", self.label)));
        }
        self.problem_spec().validate()?;
        if self.f >= self.consultants.len() {
            return Err(OracleError::InvalidSpec(format!(
                "{}: resiliency {} with {} consultants",
                self.label,
                self.f,
                self.consultants.len()
            )));
        }
        if self.mode == PowerMode::Consistent && !matches!(self.problem, ProblemKind::Threshold { .. }) {
            return Err(OracleError::InvalidSpec(format!(
                "{}: consistent mode is restricted to threshold agreement",
                self.label
            )));
        }
        Ok(())
    }

    /// Number of consultants counted as faulty. `at = None` sees the whole
    /// pattern; `Some(t)` sees crashes up to time `t` only.
    pub fn faulty_view(&self, pattern: &FailurePattern, at: Option<Time>) -> usize {
        self.consultants
            .iter()
            .filter(|&&p| match at {
                None => pattern.is_faulty(p),
                Some(t) => pattern.crashed_by(p, t),
            })
            .count()
    }

    /// The failure view this oracle's mode uses for an answer at `now`.
    pub fn mode_view(&self, pattern: &FailurePattern, now: Time) -> usize {
        match self.mode {
            PowerMode::General | PowerMode::Consistent => self.faulty_view(pattern, None),
            PowerMode::Sham => self.faulty_view(pattern, Some(now)),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("invalid oracle: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("{pid} is not a consultant of {label}")]
    NotConsultant { label: String, pid: ProcessId },
    #[error("{pid} queried {label} again in consultation {consultation} before being answered")]
    DuplicateQuery { label: String, pid: ProcessId, consultation: usize },
    #[error("{pid} has no pending query at {label}")]
    NoPendingQuery { label: String, pid: ProcessId },
    #[error("consultation {consultation} of {label} has not committed an answer")]
    AnswerNotReady { label: String, consultation: usize },
    #[error("consultation {consultation} of {label} committed {committed}, answer carries {got}")]
    AnswerMismatch { label: String, consultation: usize, committed: Bit, got: Bit },
    #[error("{label} cannot answer {value} in consultation {consultation}: allowed {allowed} under faulty view {view}")]
    IllegalAnswer { label: String, consultation: usize, value: Bit, allowed: DecisionSet, view: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub pid: ProcessId,
    pub value: Bit,
    pub time: Time,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Consultation {
    /// 1-based.
    pub index: usize,
    pub queries: Vec<Query>,
    pub answers: BTreeMap<ProcessId, (Bit, Time)>,
    pub committed: Option<Bit>,
}

impl Consultation {
    fn new(index: usize) -> Self {
        Consultation {
            index,
            queries: Vec::new(),
            answers: BTreeMap::new(),
            committed: None,
        }
    }

    /// The query vector over `Γ`.
    pub fn vector(&self, spec: &OracleSpec) -> PartialVector {
        let mut w = PartialVector::empty(spec.consultants.len());
        for q in &self.queries {
            if let Some(pos) = spec.position(q.pid) {
                w.set(ProcessId::from_index(pos), Some(q.value));
            }
        }
        w
    }

    pub fn unanswered(&self) -> impl Iterator<Item = &Query> {
        self.queries.iter().filter(|q| !self.answers.contains_key(&q.pid))
    }
}

/// One oracle at one sanctuary.
#[derive(Debug, Clone)]
pub struct OracleInstance {
    spec: OracleSpec,
    consultations: Vec<Consultation>,
    /// Answers received, per consultant position.
    answered: Vec<usize>,
    /// Consultation index of the outstanding query, per consultant position.
    pending: Vec<Option<usize>>,
    rng: ChaCha8Rng,
    preference: Option<Bit>,
}

impl OracleInstance {
    pub fn new(spec: OracleSpec) -> Result<Self, OracleError> {
        spec.validate()?;
        let seed = match spec.policy {
            AnswerPolicy::Seeded(s) => s,
            _ => 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Per-consultation coin flips can wedge the consistency filter; a
        // consistent oracle draws one preference for its whole life.
        let preference = match (spec.mode, spec.policy) {
            (PowerMode::Consistent, AnswerPolicy::Seeded(_)) => Some(Bit::from(rng.gen_bool(0.5))),
            _ => None,
        };
        let m = spec.consultants.len();
        Ok(OracleInstance {
            spec,
            consultations: Vec::new(),
            answered: vec![0; m],
            pending: vec![None; m],
            rng,
            preference,
        })
    }

    pub fn spec(&self) -> &OracleSpec {
        &self.spec
    }

    pub fn label(&self) -> &str {
        &self.spec.label
    }

    pub fn consultations(&self) -> &[Consultation] {
        &self.consultations
    }

    fn position(&self, p: ProcessId) -> Result<usize, OracleError> {
        self.spec.position(p).ok_or_else(|| OracleError::NotConsultant {
            label: self.spec.label.clone(),
            pid: p,
        })
    }

    /// Records `p`'s query; returns the consultation index it joins.
    pub fn submit_query(&mut self, p: ProcessId, v: Bit, t: Time) -> Result<usize, OracleError> {
        let pos = self.position(p)?;
        let index = self.answered[pos] + 1;
        if self.pending[pos].is_some() {
            return Err(OracleError::DuplicateQuery {
                label: self.spec.label.clone(),
                pid: p,
                consultation: index,
            });
        }
        while self.consultations.len() < index {
            let next = self.consultations.len() + 1;
            self.consultations.push(Consultation::new(next));
        }
        self.consultations[index - 1].queries.push(Query { pid: p, value: v, time: t });
        self.pending[pos] = Some(index);
        Ok(index)
    }

    pub fn is_pending(&self, p: ProcessId) -> bool {
        self.spec.position(p).is_some_and(|pos| self.pending[pos].is_some())
    }

    /// The value `p` would receive now, if its consultation has committed.
    pub fn answer_ready(&self, p: ProcessId) -> Option<Bit> {
        let pos = self.spec.position(p)?;
        let index = self.pending[pos]?;
        self.consultations[index - 1].committed
    }

    /// Hands the committed answer to `p` at time `t`.
    pub fn deliver_answer(&mut self, p: ProcessId, t: Time) -> Result<Bit, OracleError> {
        let pos = self.position(p)?;
        let index = self.pending[pos].ok_or_else(|| OracleError::NoPendingQuery {
            label: self.spec.label.clone(),
            pid: p,
        })?;
        let c = &mut self.consultations[index - 1];
        let value = c.committed.ok_or_else(|| OracleError::AnswerNotReady {
            label: self.spec.label.clone(),
            consultation: index,
        })?;
        c.answers.insert(p, (value, t));
        self.pending[pos] = None;
        self.answered[pos] += 1;
        Ok(value)
    }

    /// Records an answer taken from an existing history. Commits the
    /// consultation to `value` if it has not committed yet; legality is left
    /// to [`validate_oracle_history`].
    pub fn record_answer(&mut self, p: ProcessId, value: Bit, t: Time) -> Result<(), OracleError> {
        let pos = self.position(p)?;
        let index = self.pending[pos].ok_or_else(|| OracleError::NoPendingQuery {
            label: self.spec.label.clone(),
            pid: p,
        })?;
        let c = &mut self.consultations[index - 1];
        match c.committed {
            Some(committed) if committed != value => {
                return Err(OracleError::AnswerMismatch {
                    label: self.spec.label.clone(),
                    consultation: index,
                    committed,
                    got: value,
                })
            }
            _ => c.committed = Some(value),
        }
        self.deliver_answer(p, t).map(|_| ())
    }

    /// Admissible answers for consultation `index` at time `now`, including
    /// the consistency filter in consistent mode.
    pub fn allowed(&self, index: usize, pattern: &FailurePattern, now: Time) -> Result<DecisionSet, OracleError> {
        let view = self.spec.mode_view(pattern, now);
        let w = self.consultations[index - 1].vector(&self.spec);
        let mut allowed = oracle_allowed(&self.spec.problem_spec(), view, &w)?;
        if self.spec.mode == PowerMode::Consistent {
            for other in self.consultations.iter().filter(|c| c.index != index) {
                if let Some(d) = other.committed {
                    if other.vector(&self.spec).comparable(&w) {
                        allowed = allowed.intersect(DecisionSet::only(d));
                    }
                }
            }
        }
        Ok(allowed)
    }

    /// Commits every consultation that can be answered at `now` and returns
    /// the answers now owed to its queriers. Consultations whose admissible
    /// set is empty, or that lack the quorum under the policy rule, wait.
    pub fn poll_answers(&mut self, pattern: &FailurePattern, now: Time) -> Result<Vec<(ProcessId, Bit)>, OracleError> {
        self.poll_with(pattern, now, true)
    }

    /// [`poll_answers`](Self::poll_answers) for when no further query can
    /// arrive: a consistent oracle stops holding out for a durable answer.
    pub fn poll_stalled(&mut self, pattern: &FailurePattern, now: Time) -> Result<Vec<(ProcessId, Bit)>, OracleError> {
        self.poll_with(pattern, now, false)
    }

    fn poll_with(&mut self, pattern: &FailurePattern, now: Time, patient: bool) -> Result<Vec<(ProcessId, Bit)>, OracleError> {
        let mut owed = Vec::new();
        for i in 0..self.consultations.len() {
            let c = &self.consultations[i];
            if c.committed.is_some() || c.queries.is_empty() {
                continue;
            }
            let quorum = match self.spec.rule {
                AnswerRule::Policy => self.spec.quorum(),
                AnswerRule::Forced(_) | AnswerRule::Echo => 1,
            };
            if c.queries.len() < quorum {
                continue;
            }
            let index = c.index;
            let allowed = self.allowed(index, pattern, now)?;
            let value = match self.spec.rule {
                AnswerRule::Policy => {
                    if allowed.is_empty() {
                        continue;
                    }
                    let durable = match self.spec.mode {
                        PowerMode::Consistent => self.durable(index, pattern, now)?.intersect(allowed),
                        _ => DecisionSet::EMPTY,
                    };
                    if durable.is_empty() {
                        if self.spec.mode == PowerMode::Consistent && patient && self.awaits_correct(index, pattern) {
                            continue;
                        }
                        self.choose(allowed)
                    } else {
                        self.choose(durable)
                    }
                }
                AnswerRule::Forced(v) => v,
                AnswerRule::Echo => self.consultations[i].queries[0].value,
            };
            if !allowed.contains(value) {
                return Err(OracleError::IllegalAnswer {
                    label: self.spec.label.clone(),
                    consultation: index,
                    value,
                    allowed,
                    view: self.spec.mode_view(pattern, now),
                });
            }
            let c = &mut self.consultations[i];
            c.committed = Some(value);
            owed.extend(c.unanswered().map(|q| (q.pid, value)));
        }
        Ok(owed)
    }

    /// Answers that stay admissible for the correct consultants' part of the
    /// query vector. Later comparable consultations reach at least that part,
    /// so committing one of these never leaves a consistent oracle without
    /// an admissible answer later. Without one, a consistent oracle holds
    /// out until every correct consultant has queried.
    fn durable(&self, index: usize, pattern: &FailurePattern, now: Time) -> Result<DecisionSet, OracleError> {
        let mut w = self.consultations[index - 1].vector(&self.spec);
        for (pos, &p) in self.spec.consultants.iter().enumerate() {
            if p.0 > pattern.n() || pattern.is_faulty(p) {
                w.set(ProcessId::from_index(pos), None);
            }
        }
        Ok(oracle_allowed(&self.spec.problem_spec(), self.spec.mode_view(pattern, now), &w)?)
    }

    fn awaits_correct(&self, index: usize, pattern: &FailurePattern) -> bool {
        let c = &self.consultations[index - 1];
        self.spec
            .consultants
            .iter()
            .any(|&p| p.0 <= pattern.n() && !pattern.is_faulty(p) && !c.queries.iter().any(|q| q.pid == p))
    }

    fn choose(&mut self, allowed: DecisionSet) -> Bit {
        let preferred = match (self.preference, self.spec.policy) {
            (Some(b), _) => b,
            (None, AnswerPolicy::Prefer0) => Bit::Zero,
            (None, AnswerPolicy::Prefer1) => Bit::One,
            (None, AnswerPolicy::Seeded(_)) => {
                if allowed == DecisionSet::BOTH {
                    return Bit::from(self.rng.gen_bool(0.5));
                }
                Bit::Zero
            }
        };
        if allowed.contains(preferred) {
            preferred
        } else {
            preferred.flip()
        }
    }
}

/// A query or answer at one sanctuary, as seen in a run history.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleEvent {
    /// Position of the event in the enclosing history.
    pub index: usize,
    pub time: Time,
    pub pid: ProcessId,
    pub kind: OracleEventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleEventKind {
    Query(Bit),
    Answer(Bit),
}

#[derive(Debug, Default)]
struct Reconstructed {
    queries: Vec<(OracleEvent, Bit)>,
    answers: Vec<(OracleEvent, Bit)>,
}

impl Reconstructed {
    fn vector_before(&self, spec: &OracleSpec, index: usize) -> PartialVector {
        let mut w = PartialVector::empty(spec.consultants.len());
        for (e, v) in self.queries.iter().filter(|(e, _)| e.index < index) {
            if let Some(pos) = spec.position(e.pid) {
                w.set(ProcessId::from_index(pos), Some(*v));
            }
        }
        w
    }

    fn vector(&self, spec: &OracleSpec) -> PartialVector {
        self.vector_before(spec, usize::MAX)
    }
}

/// Judges the history of one sanctuary against `spec` under `pattern`.
///
/// `complete` says whether the enclosing run ended with nothing left to do;
/// a missing answer is then a failure rather than inconclusive.
///
/// Checks, in order: `well_formed` (membership, query/answer alternation),
/// `agreement` (one value per consultation), `suitability` (every answer is
/// admissible under the full failure pattern for the queries received so
/// far), `resiliency` (quorate consultations answer every correct querier),
/// `consistency` (consistent mode: comparable query vectors get equal
/// answers) and `sham` (sham mode: every answer is admissible under the
/// crashes that happened by its time).
pub fn validate_oracle_history(events: &[OracleEvent], pattern: &FailurePattern, spec: &OracleSpec, complete: bool) -> Verdict {
    let mut verdict = Verdict::new();
    let problem = spec.problem_spec();
    let m = spec.consultants.len();
    let mut answered = vec![0usize; m];
    let mut pending: Vec<Option<usize>> = vec![None; m];
    let mut consultations: Vec<Reconstructed> = Vec::new();
    let mut malformed: Vec<(usize, String)> = Vec::new();

    for e in events {
        let Some(pos) = spec.position(e.pid) else {
            malformed.push((e.index, format!("{} is not a consultant", e.pid)));
            continue;
        };
        match e.kind {
            OracleEventKind::Query(v) => {
                if pending[pos].is_some() {
                    malformed.push((e.index, format!("{} queried twice without an answer", e.pid)));
                    continue;
                }
                let c = answered[pos] + 1;
                if consultations.len() < c {
                    consultations.resize_with(c, Reconstructed::default);
                }
                consultations[c - 1].queries.push((*e, v));
                pending[pos] = Some(c);
            }
            OracleEventKind::Answer(v) => {
                let Some(c) = pending[pos].take() else {
                    malformed.push((e.index, format!("{} answered without a pending query", e.pid)));
                    continue;
                };
                answered[pos] += 1;
                consultations[c - 1].answers.push((*e, v));
            }
        }
    }

    verdict.push(
        "well_formed",
        if malformed.is_empty() {
            Status::Pass
        } else {
            let detail = malformed.iter().map(|(_, s)| s.as_str()).collect::<Vec<_>>().join("; ");
            Status::fail(malformed.iter().map(|(i, _)| *i).collect(), detail)
        },
    );

    let mut split = Vec::new();
    for (ci, c) in consultations.iter().enumerate() {
        if let Some((first, v0)) = c.answers.first() {
            if let Some((other, _)) = c.answers.iter().find(|(_, v)| v != v0) {
                split.push((ci + 1, first.index, other.index));
            }
        }
    }
    verdict.push(
        "agreement",
        match split.first() {
            None => Status::Pass,
            Some(&(c, a, b)) => Status::fail(vec![a, b], format!("consultation {c} answered both values")),
        },
    );

    let judge = |view_at: &dyn Fn(Time) -> usize| -> Status {
        for c in &consultations {
            for (e, v) in &c.answers {
                let view = view_at(e.time);
                let w = c.vector_before(spec, e.index);
                match oracle_allowed(&problem, view.min(problem.n), &w) {
                    Ok(allowed) if allowed.contains(*v) => {}
                    Ok(allowed) => {
                        return Status::fail(
                            vec![e.index],
                            format!("answer {v} to query vector {w} outside {allowed} (faulty view {view})"),
                        )
                    }
                    Err(err) => return Status::fail(vec![e.index], err.to_string()),
                }
            }
        }
        Status::Pass
    };

    let full_view = spec.faulty_view(pattern, None);
    verdict.push("suitability", judge(&|_| full_view));

    let mut starved = Vec::new();
    for c in &consultations {
        if c.queries.len() < spec.quorum() {
            continue;
        }
        for (q, _) in &c.queries {
            let served = c.answers.iter().any(|(a, _)| a.pid == q.pid);
            if !served && !pattern.is_faulty(q.pid) {
                starved.push(q.index);
            }
        }
    }
    verdict.push(
        "resiliency",
        match (starved.is_empty(), complete) {
            (true, _) => Status::Pass,
            (false, true) => Status::fail(starved, "quorate consultation left a correct querier unanswered"),
            (false, false) => Status::inconclusive(format!("{} correct queriers unanswered at end of history", starved.len())),
        },
    );

    verdict.push(
        "consistency",
        if spec.mode == PowerMode::Consistent {
            let mut status = Status::Pass;
            'outer: for (i, a) in consultations.iter().enumerate() {
                for b in consultations.iter().skip(i + 1) {
                    let (Some((ea, va)), Some((eb, vb))) = (a.answers.first(), b.answers.first()) else {
                        continue;
                    };
                    if va != vb && a.vector(spec).comparable(&b.vector(spec)) {
                        status = Status::fail(vec![ea.index, eb.index], "comparable query vectors answered differently");
                        break 'outer;
                    }
                }
            }
            status
        } else {
            Status::Vacuous
        },
    );

    verdict.push(
        "sham",
        if spec.mode == PowerMode::Sham {
            judge(&|t| spec.faulty_view(pattern, Some(t)))
        } else {
            Status::Vacuous
        },
    );

    verdict
}
