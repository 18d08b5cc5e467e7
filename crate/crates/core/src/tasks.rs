//! Agreement problems over binary inputs: the k-threshold family and weak
//! agreement, their decision-set mappings, the response sets an oracle
//! suitable for a problem may use, and the generalization relation between
//! tasks.
//!
//! Every validity clause here depends on a failure pattern only through the
//! number of faulty processes, so the functions take a faulty *count*.
//! [`FailurePattern::faulty_count`] bridges from a full pattern.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Discrete global time. Time 0 precedes every event.
pub type Time = u64;

/// Largest process count [`oracle_allowed_bruteforce`] will enumerate.
pub const BRUTEFORCE_MAX_N: usize = 20;

/// Largest process count [`is_generalization`] will enumerate.
pub const GENERALIZATION_MAX_N: usize = 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaskError {
    #[error("threshold k={k} outside 1..={n}")]
    ThresholdOutOfRange { k: usize, n: usize },
    #[error("resiliency f={f} outside 0..={max}")]
    ResiliencyOutOfRange { f: usize, max: usize },
    #[error("faulty count {faulty} exceeds process count {n}")]
    FaultyCountOutOfRange { faulty: usize, n: usize },
    #[error("vector has {got} entries, process set has {n}")]
    LengthMismatch { got: usize, n: usize },
    #[error("enumeration over {n} processes exceeds the bound of {max}")]
    EnumerationBound { n: usize, max: usize },
    #[error("tasks are defined over different process sets ({n1} vs {n2})")]
    ProcessSetMismatch { n1: usize, n2: usize },
    #[error("empty process set")]
    EmptyProcessSet,
}

/// A process name in `1..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessId(pub usize);

impl ProcessId {
    /// Zero-based slot for vectors indexed by process.
    pub fn index(self) -> usize {
        self.0 - 1
    }

    pub fn from_index(i: usize) -> Self {
        ProcessId(i + 1)
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// All process ids of a system of size `n`.
pub fn processes(n: usize) -> impl Iterator<Item = ProcessId> {
    (1..=n).map(ProcessId)
}

/// A binary value. Serializes as the integer 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    pub fn as_u8(self) -> u8 {
        match self {
            Bit::Zero => 0,
            Bit::One => 1,
        }
    }

    pub fn flip(self) -> Bit {
        match self {
            Bit::Zero => Bit::One,
            Bit::One => Bit::Zero,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Bit::Zero => '0',
            Bit::One => '1',
        }
    }
}

impl From<Bit> for u8 {
    fn from(b: Bit) -> u8 {
        b.as_u8()
    }
}

impl TryFrom<u8> for Bit {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Bit::Zero),
            1 => Ok(Bit::One),
            other => Err(format!("not a binary value: {other}")),
        }
    }
}

impl From<bool> for Bit {
    fn from(b: bool) -> Bit {
        if b {
            Bit::One
        } else {
            Bit::Zero
        }
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// Crash times of every process of a system; `None` means the process never
/// crashes. A process whose crash time is `t` takes no step at any time `>= t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailurePattern {
    crash_time: Vec<Option<Time>>,
}

impl FailurePattern {
    /// The failure-free pattern over `n` processes.
    pub fn failure_free(n: usize) -> Self {
        FailurePattern {
            crash_time: vec![None; n],
        }
    }

    pub fn from_crashes(n: usize, crashes: impl IntoIterator<Item = (ProcessId, Time)>) -> Self {
        let mut pattern = Self::failure_free(n);
        for (p, t) in crashes {
            let slot = &mut pattern.crash_time[p.index()];
            *slot = Some(slot.map_or(t, |old| old.min(t)));
        }
        pattern
    }

    pub fn n(&self) -> usize {
        self.crash_time.len()
    }

    /// Crash time of `p`. Ids outside `1..=n` are reported as crashed from
    /// the start: they never take a step in this system.
    pub fn crash_time(&self, p: ProcessId) -> Option<Time> {
        if p.0 == 0 || p.0 > self.n() {
            Some(0)
        } else {
            self.crash_time[p.index()]
        }
    }

    pub fn is_faulty(&self, p: ProcessId) -> bool {
        self.crash_time(p).is_some()
    }

    /// `p ∈ F(t)`.
    pub fn crashed_by(&self, p: ProcessId, t: Time) -> bool {
        self.crash_time(p).is_some_and(|c| c <= t)
    }

    /// `p` may take a step at time `t`.
    pub fn alive_at(&self, p: ProcessId, t: Time) -> bool {
        !self.crashed_by(p, t)
    }

    /// `F(t)`.
    pub fn crashed_at(&self, t: Time) -> BTreeSet<ProcessId> {
        processes(self.n()).filter(|&p| self.crashed_by(p, t)).collect()
    }

    pub fn faulty(&self) -> BTreeSet<ProcessId> {
        processes(self.n()).filter(|&p| self.is_faulty(p)).collect()
    }

    pub fn correct(&self) -> BTreeSet<ProcessId> {
        processes(self.n()).filter(|&p| !self.is_faulty(p)).collect()
    }

    pub fn faulty_count(&self) -> usize {
        self.crash_time.iter().filter(|c| c.is_some()).count()
    }

    /// `F_θ`: crashes after `theta` are dropped.
    pub fn truncate(&self, theta: Time) -> Self {
        FailurePattern {
            crash_time: self
                .crash_time
                .iter()
                .map(|c| c.filter(|&t| t <= theta))
                .collect(),
        }
    }

    /// Crash times that fall strictly after `t`, ascending.
    pub fn crash_times_after(&self, t: Time) -> impl Iterator<Item = Time> + '_ {
        let mut times: Vec<Time> = self.crash_time.iter().flatten().copied().filter(|&c| c > t).collect();
        times.sort_unstable();
        times.dedup();
        times.into_iter()
    }
}

/// A total assignment of binary inputs to `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InputVector(Vec<Bit>);

impl InputVector {
    pub fn new(values: Vec<Bit>) -> Self {
        InputVector(values)
    }

    pub fn uniform(n: usize, b: Bit) -> Self {
        InputVector(vec![b; n])
    }

    /// Input vector whose bits are the low `n` bits of `mask`, p1 first.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        InputVector((0..n).map(|i| Bit::from(mask >> i & 1 == 1)).collect())
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, p: ProcessId) -> Bit {
        self.0[p.index()]
    }

    pub fn set(&mut self, p: ProcessId, b: Bit) {
        self.0[p.index()] = b;
    }

    pub fn values(&self) -> &[Bit] {
        &self.0
    }

    pub fn zeros(&self) -> usize {
        self.0.iter().filter(|&&b| b == Bit::Zero).count()
    }

    pub fn all(&self, b: Bit) -> bool {
        self.0.iter().all(|&x| x == b)
    }

    pub fn to_partial(&self) -> PartialVector {
        PartialVector(self.0.iter().copied().map(Some).collect())
    }
}

impl fmt::Display for InputVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{}", b.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for InputVector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(Bit::Zero),
                '1' => Ok(Bit::One),
                other => Err(format!("invalid input bit {other:?}")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(InputVector)
    }
}

impl Serialize for InputVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for InputVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A partial assignment of binary values; `None` marks a missing entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PartialVector(Vec<Option<Bit>>);

impl PartialVector {
    pub fn empty(n: usize) -> Self {
        PartialVector(vec![None; n])
    }

    pub fn new(values: Vec<Option<Bit>>) -> Self {
        PartialVector(values)
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, p: ProcessId) -> Option<Bit> {
        self.0[p.index()]
    }

    pub fn set(&mut self, p: ProcessId, b: Option<Bit>) {
        self.0[p.index()] = b;
    }

    pub fn values(&self) -> &[Option<Bit>] {
        &self.0
    }

    pub fn present(&self) -> usize {
        self.0.iter().filter(|v| v.is_some()).count()
    }

    pub fn missing(&self) -> usize {
        self.n() - self.present()
    }

    pub fn is_total(&self) -> bool {
        self.missing() == 0
    }

    /// `|{p : W(p) = 0 or p ∉ dom(W)}|`.
    pub fn zeros_plus_missing(&self) -> usize {
        self.0.iter().filter(|v| **v != Some(Bit::One)).count()
    }

    pub fn all_present_are(&self, b: Bit) -> bool {
        self.0.iter().flatten().all(|&x| x == b)
    }

    /// `self ≥ other` in the extension order.
    pub fn extends(&self, other: &PartialVector) -> bool {
        self.n() == other.n()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(mine, theirs)| theirs.is_none() || mine == theirs)
    }

    pub fn comparable(&self, other: &PartialVector) -> bool {
        self.extends(other) || other.extends(self)
    }

    pub fn to_total(&self) -> Option<InputVector> {
        self.0.iter().copied().collect::<Option<Vec<_>>>().map(InputVector)
    }

    /// Every total vector extending `self`, in lexicographic order of the
    /// missing slots.
    pub fn total_extensions(&self) -> impl Iterator<Item = InputVector> + '_ {
        let holes: Vec<usize> = (0..self.n()).filter(|&i| self.0[i].is_none()).collect();
        let count = 1u64 << holes.len();
        (0..count).map(move |mask| {
            let mut values: Vec<Bit> = self.0.iter().map(|v| v.unwrap_or(Bit::Zero)).collect();
            for (j, &slot) in holes.iter().enumerate() {
                values[slot] = Bit::from(mask >> j & 1 == 1);
            }
            InputVector(values)
        })
    }
}

impl fmt::Display for PartialVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.0 {
            let c = match v {
                Some(b) => b.as_char(),
                None => '?',
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for PartialVector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(Some(Bit::Zero)),
                '1' => Ok(Some(Bit::One)),
                '?' => Ok(None),
                other => Err(format!("invalid pattern character {other:?}")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(PartialVector)
    }
}

/// A subset of `{0, 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct DecisionSet {
    pub zero: bool,
    pub one: bool,
}

impl DecisionSet {
    pub const EMPTY: DecisionSet = DecisionSet { zero: false, one: false };
    pub const ZERO: DecisionSet = DecisionSet { zero: true, one: false };
    pub const ONE: DecisionSet = DecisionSet { zero: false, one: true };
    pub const BOTH: DecisionSet = DecisionSet { zero: true, one: true };

    pub fn contains(self, b: Bit) -> bool {
        match b {
            Bit::Zero => self.zero,
            Bit::One => self.one,
        }
    }

    pub fn is_empty(self) -> bool {
        !self.zero && !self.one
    }

    pub fn intersect(self, other: DecisionSet) -> DecisionSet {
        DecisionSet {
            zero: self.zero && other.zero,
            one: self.one && other.one,
        }
    }

    pub fn is_subset(self, other: DecisionSet) -> bool {
        (!self.zero || other.zero) && (!self.one || other.one)
    }

    pub fn iter(self) -> impl Iterator<Item = Bit> {
        [(self.zero, Bit::Zero), (self.one, Bit::One)]
            .into_iter()
            .filter_map(|(keep, b)| keep.then_some(b))
    }

    pub fn only(b: Bit) -> DecisionSet {
        match b {
            Bit::Zero => Self::ZERO,
            Bit::One => Self::ONE,
        }
    }
}

impl fmt::Display for DecisionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.iter().map(|b| b.to_string()).collect();
        write!(f, "{{{}}}", items.join(","))
    }
}

/// Which agreement problem, independent of the process set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ProblemKind {
    /// k-threshold agreement.
    Threshold { k: usize },
    /// Weak agreement.
    Weak,
}

/// An agreement problem for the process set `1..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProblemSpec {
    #[serde(flatten)]
    pub kind: ProblemKind,
    pub n: usize,
}

impl ProblemSpec {
    pub fn threshold(k: usize, n: usize) -> Result<Self, TaskError> {
        let spec = ProblemSpec {
            kind: ProblemKind::Threshold { k },
            n,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Atomic commitment, `1-TAg`.
    pub fn atomic_commitment(n: usize) -> Result<Self, TaskError> {
        Self::threshold(1, n)
    }

    /// Binary consensus, `n-TAg`.
    pub fn consensus(n: usize) -> Result<Self, TaskError> {
        Self::threshold(n, n)
    }

    pub fn weak_agreement(n: usize) -> Result<Self, TaskError> {
        let spec = ProblemSpec {
            kind: ProblemKind::Weak,
            n,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        if self.n == 0 {
            return Err(TaskError::EmptyProcessSet);
        }
        if let ProblemKind::Threshold { k } = self.kind {
            if k == 0 || k > self.n {
                return Err(TaskError::ThresholdOutOfRange { k, n: self.n });
            }
        }
        Ok(())
    }

    pub fn threshold_value(&self) -> Option<usize> {
        match self.kind {
            ProblemKind::Threshold { k } => Some(k),
            ProblemKind::Weak => None,
        }
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ProblemKind::Threshold { k } if k == self.n => write!(f, "Cons[{}]", self.n),
            ProblemKind::Threshold { k: 1 } => write!(f, "AC[{}]", self.n),
            ProblemKind::Threshold { k } => write!(f, "{k}-TAg[{}]", self.n),
            ProblemKind::Weak => write!(f, "WAg[{}]", self.n),
        }
    }
}

/// A problem together with the number of crash failures it must tolerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSpec {
    pub problem: ProblemSpec,
    pub f: usize,
}

impl TaskSpec {
    pub fn new(problem: ProblemSpec, f: usize) -> Result<Self, TaskError> {
        problem.validate()?;
        if f >= problem.n {
            return Err(TaskError::ResiliencyOutOfRange { f, max: problem.n - 1 });
        }
        Ok(TaskSpec { problem, f })
    }

    /// `k-TAg(n, f)`.
    pub fn threshold(k: usize, n: usize, f: usize) -> Result<Self, TaskError> {
        Self::new(ProblemSpec::threshold(k, n)?, f)
    }

    pub fn n(&self) -> usize {
        self.problem.n
    }
}

impl fmt::Display for TaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(f={})", self.problem, self.f)
    }
}

fn check_faulty(problem: &ProblemSpec, faulty_count: usize) -> Result<(), TaskError> {
    problem.validate()?;
    if faulty_count > problem.n {
        return Err(TaskError::FaultyCountOutOfRange {
            faulty: faulty_count,
            n: problem.n,
        });
    }
    Ok(())
}

fn check_len(problem: &ProblemSpec, got: usize) -> Result<(), TaskError> {
    if got != problem.n {
        return Err(TaskError::LengthMismatch { got, n: problem.n });
    }
    Ok(())
}

/// The set of admissible decisions for a total input vector when
/// `faulty_count` processes are faulty.
pub fn decision_set(problem: &ProblemSpec, faulty_count: usize, v: &InputVector) -> Result<DecisionSet, TaskError> {
    check_faulty(problem, faulty_count)?;
    check_len(problem, v.n())?;
    Ok(decision_set_unchecked(problem.kind, faulty_count, v))
}

fn decision_set_unchecked(kind: ProblemKind, faulty_count: usize, v: &InputVector) -> DecisionSet {
    match kind {
        ProblemKind::Threshold { k } => {
            if v.zeros() >= k {
                DecisionSet::ZERO
            } else if v.all(Bit::One) && faulty_count < k {
                DecisionSet::ONE
            } else {
                DecisionSet::BOTH
            }
        }
        ProblemKind::Weak => {
            if faulty_count == 0 && v.all(Bit::Zero) {
                DecisionSet::ZERO
            } else if faulty_count == 0 && v.all(Bit::One) {
                DecisionSet::ONE
            } else {
                DecisionSet::BOTH
            }
        }
    }
}

/// [`decision_set`] with the faulty count read off a failure pattern.
pub fn decision_set_for_pattern(problem: &ProblemSpec, pattern: &FailurePattern, v: &InputVector) -> Result<DecisionSet, TaskError> {
    decision_set(problem, pattern.faulty_count(), v)
}

/// Values an oracle suitable for `problem` may answer in a consultation whose
/// query vector is `w`: the intersection of the decision sets of every total
/// extension of `w`. An empty result means no answer is admissible yet.
pub fn oracle_allowed(problem: &ProblemSpec, faulty_count: usize, w: &PartialVector) -> Result<DecisionSet, TaskError> {
    check_faulty(problem, faulty_count)?;
    check_len(problem, w.n())?;
    let set = match problem.kind {
        ProblemKind::Threshold { k } => DecisionSet {
            one: w.zeros_plus_missing() < k,
            zero: !(w.all_present_are(Bit::One) && faulty_count < k),
        },
        // An all-zero (all-one) extension exists iff every present value is
        // 0 (1); it pins the decision only in failure-free patterns.
        ProblemKind::Weak => DecisionSet {
            zero: !(faulty_count == 0 && w.all_present_are(Bit::One)),
            one: !(faulty_count == 0 && w.all_present_are(Bit::Zero)),
        },
    };
    Ok(set)
}

/// Literal enumeration of every total extension of `w`, intersecting their
/// decision sets. Independent check on [`oracle_allowed`].
pub fn oracle_allowed_bruteforce(problem: &ProblemSpec, faulty_count: usize, w: &PartialVector) -> Result<DecisionSet, TaskError> {
    check_faulty(problem, faulty_count)?;
    check_len(problem, w.n())?;
    if problem.n > BRUTEFORCE_MAX_N {
        return Err(TaskError::EnumerationBound {
            n: problem.n,
            max: BRUTEFORCE_MAX_N,
        });
    }
    Ok(w
        .total_extensions()
        .map(|v| decision_set_unchecked(problem.kind, faulty_count, &v))
        .fold(DecisionSet::BOTH, DecisionSet::intersect))
}

/// Why a generalization check failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneralizationWitness {
    /// `t2` tolerates fewer failures than `t1` requires.
    Resiliency { f1: usize, f2: usize },
    /// For this input and faulty count, `t2` admits a decision `t1` forbids.
    Decision {
        faulty_count: usize,
        inputs: InputVector,
        decision: Bit,
    },
}

impl fmt::Display for GeneralizationWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneralizationWitness::Resiliency { f1, f2 } => write!(f, "resiliency {f2} below required {f1}"),
            GeneralizationWitness::Decision {
                faulty_count,
                inputs,
                decision,
            } => write!(f, "decision {decision} on inputs {inputs} with {faulty_count} faulty"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generalization {
    pub holds: bool,
    pub witness: Option<GeneralizationWitness>,
}

/// Whether `t2` is a generalization of `t1`: every solution of `t2` also
/// solves `t1`, so `t1` reduces to `t2` by doing nothing.
///
/// Holds iff `f1 <= f2` and, for every faulty count up to `f1` and every
/// total input, the decisions `t2` admits are a subset of those `t1` admits.
/// The first counterexample in enumeration order is returned as witness.
pub fn is_generalization(t1: &TaskSpec, t2: &TaskSpec) -> Result<Generalization, TaskError> {
    let n = t1.n();
    if n != t2.n() {
        return Err(TaskError::ProcessSetMismatch { n1: n, n2: t2.n() });
    }
    if n > GENERALIZATION_MAX_N {
        return Err(TaskError::EnumerationBound {
            n,
            max: GENERALIZATION_MAX_N,
        });
    }
    if t1.f > t2.f {
        return Ok(Generalization {
            holds: false,
            witness: Some(GeneralizationWitness::Resiliency { f1: t1.f, f2: t2.f }),
        });
    }
    for faulty_count in 0..=t1.f {
        for mask in 0..(1u64 << n) {
            let v = InputVector::from_mask(n, mask);
            let p1 = decision_set_unchecked(t1.problem.kind, faulty_count, &v);
            let p2 = decision_set_unchecked(t2.problem.kind, faulty_count, &v);
            if let Some(decision) = p2.iter().find(|&b| !p1.contains(b)) {
                return Ok(Generalization {
                    holds: false,
                    witness: Some(GeneralizationWitness::Decision {
                        faulty_count,
                        inputs: v,
                        decision,
                    }),
                });
            }
        }
    }
    Ok(Generalization {
        holds: true,
        witness: None,
    })
}
