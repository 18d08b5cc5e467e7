//! Counterexample schedules against candidate reductions.
//!
//! `build_ir1` targets candidates that solve k-TAg(n, f) with one wait-free
//! consensus oracle: it runs the candidate with `k` initially crashed
//! processes and all-ones inputs, then (a) flips the silent processes'
//! inputs to 0 and (b) extends the run without failures. A correct
//! reduction would pass all three runs.
//!
//! `build_ir3` targets candidates that solve (f+1)-TAg(n, f) with one
//! f-TAg(Π, f) oracle when `n <= 2f`. Two groups run in isolation, each
//! believing the other crashed, with the oracle answering 0 throughout; the
//! histories are then spliced into one run where only the first group
//! crashes, after both have decided. With a sham oracle the splice needs
//! an answer that is illegal at its time, and the builder reports it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::checker::check_all;
use crate::oracles::{AnswerPolicy, AnswerRule, OracleSpec, PowerMode};
use crate::runtime::{fair_extension, flip_inputs, simulate, Engine, EventKind, Protocol, Run, RunError, Scheduler, Setup, SimError};
use crate::tasks::{oracle_allowed, Bit, DecisionSet, FailurePattern, InputVector, PartialVector, ProblemKind, ProcessId, TaskSpec, Time};
use crate::verdict::{Overall, Status, Verdict};

#[derive(Debug, Error)]
pub enum AdversaryError {
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Run(#[from] RunError),
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub name: &'static str,
    pub run: Run,
    pub verdict: Verdict,
}

/// An answer that the sham view forbids, with the numbers that show it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub run: String,
    pub event: usize,
    pub time: Time,
    pub pid: ProcessId,
    pub value: Bit,
    pub query_vector: String,
    pub faulty_view: usize,
    pub allowed: DecisionSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    /// A legal run violates a task condition.
    Demonstrated { run: String, check: String, evidence: Vec<usize> },
    Blocked(Certificate),
    /// The candidate did not reach the decisions the construction needs.
    Stalled { run: String, detail: String },
    NotDemonstrated,
}

impl Outcome {
    pub fn overall(&self) -> Overall {
        match self {
            Outcome::Demonstrated { .. } | Outcome::Blocked(_) => Overall::Pass,
            Outcome::Stalled { .. } => Overall::Inconclusive,
            Outcome::NotDemonstrated => Overall::Fail,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub construction: &'static str,
    pub runs: Vec<RunReport>,
    pub outcome: Outcome,
}

impl Report {
    pub fn run(&self, name: &str) -> Option<&RunReport> {
        self.runs.iter().find(|r| r.name == name)
    }

    pub fn summary(&self) -> Value {
        json!({
            "construction": self.construction,
            "outcome": self.outcome,
            "runs": self.runs.iter().map(|r| json!({
                "name": r.name,
                "decisions": r.run.decisions().iter().map(|d| d.map(Bit::as_u8)).collect::<Vec<_>>(),
                "overall": r.verdict.overall(),
                "verdict": r.verdict,
            })).collect::<Vec<_>>(),
        })
    }
}

fn single_oracle(candidate: &dyn Protocol, what: &str, ok: impl Fn(&OracleSpec) -> bool) -> Result<OracleSpec, AdversaryError> {
    match candidate.oracles().as_slice() {
        [spec] if ok(spec) => Ok(spec.clone()),
        _ => Err(AdversaryError::Precondition(format!("candidate must use exactly one {what} oracle"))),
    }
}

fn full_set(spec: &OracleSpec, n: usize) -> bool {
    spec.consultants.len() == n && spec.consultants.iter().enumerate().all(|(i, p)| p.0 == i + 1)
}

fn first_decision_time(run: &Run, who: &BTreeSet<ProcessId>) -> Option<Time> {
    let mut seen = BTreeSet::new();
    for (_, e) in run.decide_events() {
        if who.contains(&e.pid) {
            seen.insert(e.pid);
            if seen.len() == who.len() {
                return Some(e.time);
            }
        }
    }
    None
}

fn validity_failure(report: &RunReport) -> Option<Outcome> {
    ["task.validity.part1", "task.validity.part2"].into_iter().find_map(|check| match report.verdict.get(check) {
        Some(Status::Fail { evidence, .. }) => Some(Outcome::Demonstrated {
            run: report.name.into(),
            check: check.into(),
            evidence: evidence.clone(),
        }),
        _ => None,
    })
}

/// See the module docs. `k` processes start crashed; `1 <= k <= f <= n-1`.
pub fn build_ir1(candidate: &dyn Protocol, f: usize, k: usize, step_bound: u64) -> Result<Report, AdversaryError> {
    let n = candidate.n();
    if !(1 <= k && k <= f && f < n) {
        return Err(AdversaryError::Precondition(format!("need 1 <= k <= f <= n-1, got n={n}, f={f}, k={k}")));
    }
    let spec = single_oracle(candidate, "wait-free consensus", |s| {
        full_set(s, n) && s.problem == ProblemKind::Threshold { k: n } && s.f == n - 1
    })?;
    let spec = spec.with_mode(PowerMode::General).with_rule(AnswerRule::Policy);
    let spec = OracleSpec {
        policy: AnswerPolicy::Prefer0,
        ..spec
    };
    let task = TaskSpec::threshold(k, n, f).map_err(|e| AdversaryError::Precondition(e.to_string()))?;
    let silent: BTreeSet<ProcessId> = (1..=k).map(ProcessId).collect();
    let pattern = FailurePattern::from_crashes(n, silent.iter().map(|&p| (p, 0)));
    let setup = Setup::new(InputVector::uniform(n, Bit::One), pattern)
        .oracles(vec![spec])
        .step_bound(step_bound)
        .settle(0);
    let rho = simulate(candidate, &setup)?;
    let Some(last) = rho.last_decision_time() else {
        let verdict = check_all(&rho, &task, candidate);
        return Ok(Report {
            construction: "ir1",
            runs: vec![RunReport { name: "rho", run: rho, verdict }],
            outcome: Outcome::Stalled {
                run: "rho".into(),
                detail: "no process decided".into(),
            },
        });
    };
    let flipped = flip_inputs(&rho, &silent, Bit::Zero)?;
    let rho0 = fair_extension(&rho.prefix(last), candidate, step_bound)?;
    let runs: Vec<RunReport> = [("rho", rho), ("rho_flipped", flipped), ("rho0", rho0)]
        .into_iter()
        .map(|(name, run)| {
            let verdict = check_all(&run, &task, candidate);
            RunReport { name, run, verdict }
        })
        .collect();
    let outcome = runs.iter().find_map(validity_failure).unwrap_or(Outcome::NotDemonstrated);
    Ok(Report {
        construction: "ir1",
        runs,
        outcome,
    })
}

/// See the module docs. Requires `n <= 2f <= 2(n-1)`.
pub fn build_ir3(candidate: &dyn Protocol, f: usize, mode: PowerMode, step_bound: u64) -> Result<Report, AdversaryError> {
    let n = candidate.n();
    if !(f < n && n <= 2 * f) {
        return Err(AdversaryError::Precondition(format!("need n <= 2f <= 2(n-1), got n={n}, f={f}")));
    }
    let spec = single_oracle(candidate, "f-TAg(Π, f)", |s| full_set(s, n) && s.problem == ProblemKind::Threshold { k: f } && s.f == f)?;
    let spec = spec.with_mode(mode).with_rule(AnswerRule::Forced(Bit::Zero));
    let task = TaskSpec::threshold(f + 1, n, f).map_err(|e| AdversaryError::Precondition(e.to_string()))?;

    let first: BTreeSet<ProcessId> = (1..=f).map(ProcessId).collect();
    let second: BTreeSet<ProcessId> = (f + 1..=n).map(ProcessId).collect();
    let hidden: BTreeSet<ProcessId> = (1..=2 * f - n).map(ProcessId).collect();
    let deciders: BTreeSet<ProcessId> = first.difference(&hidden).copied().collect();
    let mut inputs = InputVector::uniform(n, Bit::One);
    for &p in &first {
        inputs.set(p, Bit::Zero);
    }
    let crashed_at = |set: &BTreeSet<ProcessId>, t: Time| FailurePattern::from_crashes(n, set.iter().map(|&p| (p, t)));
    let stalled = |runs: Vec<RunReport>, run: &str, detail: String| Report {
        construction: "ir3",
        runs,
        outcome: Outcome::Stalled { run: run.into(), detail },
    };

    let out_first: BTreeSet<ProcessId> = hidden.union(&second).copied().collect();
    let setup = Setup::new(inputs.clone(), crashed_at(&out_first, 0))
        .oracles(vec![spec.clone()])
        .step_bound(step_bound)
        .settle(0);
    let rho1 = simulate(candidate, &setup)?;
    let report1 = RunReport {
        name: "rho_prime",
        verdict: check_all(&rho1, &task, candidate),
        run: rho1,
    };
    let Some(theta1) = first_decision_time(&report1.run, &deciders) else {
        return Ok(stalled(vec![report1], "rho_prime", "not every process of the first group decided".into()));
    };

    let setup = Setup::new(inputs.clone(), crashed_at(&first, 0))
        .oracles(vec![spec.clone()])
        .step_bound(step_bound)
        .settle(0)
        .start_time(theta1 + 1);
    let rho2 = simulate(candidate, &setup)?;
    let report2 = RunReport {
        name: "rho_dblprime",
        verdict: check_all(&rho2, &task, candidate),
        run: rho2,
    };
    let Some(theta2) = first_decision_time(&report2.run, &second) else {
        return Ok(stalled(vec![report1, report2], "rho_dblprime", "not every process of the second group decided".into()));
    };

    let pattern = crashed_at(&first, theta2 + 1);
    let mut engine = Engine::new(candidate, &inputs, pattern, vec![spec.clone()], 0)?;
    engine.replay(&report1.run.prefix(theta1).events)?;
    let offset = engine.events().len();
    for (i, e) in report2.run.prefix(theta2).events.iter().enumerate() {
        engine.apply(offset + i, e)?;
    }
    let setup = Setup::new(inputs, FailurePattern::failure_free(n));
    let stop = engine.run(&Scheduler::FairRr, step_bound, setup.settle)?;
    let scheduler = Scheduler::Composite {
        parts: vec!["rho_prime".into(), "rho_dblprime".into(), "fair_rr".into()],
    };
    let merged = engine.into_run(scheduler, step_bound, stop);
    let verdict = check_all(&merged, &task, candidate);
    let merged = RunReport {
        name: "merged",
        run: merged,
        verdict,
    };

    let outcome = if mode == PowerMode::Sham {
        match sham_certificate(&merged.run, &spec) {
            Some(c) => Outcome::Blocked(c),
            None => Outcome::NotDemonstrated,
        }
    } else {
        match merged.verdict.get("task.agreement") {
            Some(Status::Fail { evidence, .. }) => Outcome::Demonstrated {
                run: "merged".into(),
                check: "task.agreement".into(),
                evidence: evidence.clone(),
            },
            _ => Outcome::NotDemonstrated,
        }
    };
    Ok(Report {
        construction: "ir3",
        runs: vec![report1, report2, merged],
        outcome,
    })
}

/// First answer in `run` at `spec`'s sanctuary that is not admissible when
/// only crashes up to its own time count.
pub fn sham_certificate(run: &Run, spec: &OracleSpec) -> Option<Certificate> {
    let pattern = run.pattern();
    let problem = spec.problem_spec();
    let mut answered = vec![0usize; spec.consultants.len()];
    let mut vectors: Vec<PartialVector> = Vec::new();
    for (i, e) in run.events.iter().enumerate() {
        if e.sanctuary() != Some(spec.label.as_str()) {
            continue;
        }
        let pos = spec.position(e.pid)?;
        let c = answered[pos];
        match e.kind {
            EventKind::Query { value } => {
                if vectors.len() <= c {
                    vectors.resize(c + 1, PartialVector::empty(spec.consultants.len()));
                }
                vectors[c].set(ProcessId::from_index(pos), Some(value));
            }
            EventKind::Answer { value } => {
                answered[pos] += 1;
                let view = spec.faulty_view(&pattern, Some(e.time));
                let w = vectors.get(c)?.clone();
                let allowed = oracle_allowed(&problem, view, &w).ok()?;
                if !allowed.contains(value) {
                    return Some(Certificate {
                        run: "merged".into(),
                        event: i,
                        time: e.time,
                        pid: e.pid,
                        value,
                        query_vector: w.to_string(),
                        faulty_view: view,
                        allowed,
                    });
                }
            }
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::{OracleChoice, ProtocolSpec};

    #[test]
    fn ir1_naive_candidate_fails_on_flip() {
        let candidate = ProtocolSpec::query_decide(3, 1, 1).unwrap();
        let r = build_ir1(&candidate, 1, 1, 10_000).unwrap();
        let rho = &r.run("rho").unwrap().run;
        assert_eq!(rho.decisions(), vec![None, Some(Bit::One), Some(Bit::One)]);
        let flipped = &r.run("rho_flipped").unwrap();
        assert_eq!(flipped.run.events, rho.events);
        assert!(flipped.verdict.get("task.validity.part1").unwrap().is_fail());
        assert!(matches!(r.outcome, Outcome::Demonstrated { ref run, .. } if run == "rho_flipped"));
        for rep in &r.runs {
            assert!(rep.verdict.checks.iter().filter(|c| c.name.starts_with("structure.")).all(|c| !c.status.is_fail()));
        }
    }

    #[test]
    fn ir1_constant_zero_fails_without_failures() {
        let candidate = ProtocolSpec::constant(3, 1, 1, Bit::Zero).unwrap();
        let r = build_ir1(&candidate, 1, 1, 10_000).unwrap();
        let rho0 = r.run("rho0").unwrap();
        assert!(rho0.run.header.crashes.is_empty());
        assert!(rho0.verdict.get("task.validity.part2").unwrap().is_fail());
        assert!(matches!(r.outcome, Outcome::Demonstrated { ref run, .. } if run == "rho0"));
    }

    #[test]
    fn ir1_rejects_other_wiring() {
        let fig1 = ProtocolSpec::fig1(3, 1).unwrap();
        assert!(matches!(build_ir1(&fig1, 1, 1, 100), Err(AdversaryError::Precondition(_))));
    }

    #[test]
    fn ir3_fig4_general_splits() {
        let candidate = ProtocolSpec::fig4(2, 1).unwrap();
        let r = build_ir3(&candidate, 1, PowerMode::General, 10_000).unwrap();
        assert_eq!(r.run("rho_prime").unwrap().run.decisions()[0], Some(Bit::Zero));
        assert_eq!(r.run("rho_dblprime").unwrap().run.decisions()[1], Some(Bit::One));
        let merged = r.run("merged").unwrap();
        assert!(merged.verdict.get("task.agreement").unwrap().is_fail());
        assert!(merged.verdict.failures().all(|c| c.name.starts_with("task.")), "{}", merged.verdict);
    }

    #[test]
    fn ir3_fig4_sham_blocked() {
        let candidate = ProtocolSpec::fig4(2, 1).unwrap();
        let r = build_ir3(&candidate, 1, PowerMode::Sham, 10_000).unwrap();
        let Outcome::Blocked(c) = &r.outcome else {
            panic!("{:?}", r.outcome)
        };
        assert_eq!(c.value, Bit::Zero);
        assert_eq!(c.faulty_view, 0);
        assert!(!c.allowed.contains(Bit::Zero));
    }

    #[test]
    fn ir3_fig2_livelocks() {
        let candidate = ProtocolSpec::Fig2 {
            n: 4,
            f: 2,
            oracle: OracleChoice::general(),
        };
        let r = build_ir3(&candidate, 2, PowerMode::General, 2_000).unwrap();
        assert!(matches!(r.outcome, Outcome::Stalled { ref run, .. } if run == "rho_prime"));
    }
}
