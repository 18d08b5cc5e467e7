//! Batches of randomized runs, judged and aggregated into counts.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checker::check_all;
use crate::oracles::AnswerPolicy;
use crate::protocols::{OracleChoice, ProtocolSpec};
use crate::runtime::{simulate, EventKind, Message, Phase, Protocol, Run, Scheduler, Setup, DEFAULT_STEP_BOUND};
use crate::tasks::{processes, Bit, FailurePattern, InputVector, ProcessId, TaskSpec, Time};
use crate::verdict::Overall;

/// How many failing trials a summary keeps for inspection.
pub const KEPT_FAILURES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputPlan {
    /// Every input vector, crossed with every crash sample, seed and policy.
    Exhaustive,
    /// This many trials, each with fresh random inputs and crashes.
    Random { trials: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub protocol: ProtocolSpec,
    pub task: TaskSpec,
    pub inputs: InputPlan,
    pub crash_samples: usize,
    pub scheduler_seeds: usize,
    pub policies: Vec<AnswerPolicy>,
    pub seed: u64,
    pub step_bound: u64,
    /// Latest crash time sampled; `None` uses `6 n^2`.
    pub horizon: Option<Time>,
}

impl SweepConfig {
    pub fn new(protocol: ProtocolSpec) -> Self {
        let task = protocol.task();
        SweepConfig {
            protocol,
            task,
            inputs: InputPlan::Exhaustive,
            crash_samples: 200,
            scheduler_seeds: 5,
            policies: vec![AnswerPolicy::Prefer0, AnswerPolicy::Prefer1],
            seed: 0,
            step_bound: DEFAULT_STEP_BOUND,
            horizon: None,
        }
    }

    fn horizon(&self) -> Time {
        self.horizon.unwrap_or_else(|| {
            let n = self.protocol.n() as Time;
            6 * n * n
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub inputs: InputVector,
    pub pattern: FailurePattern,
    pub policy: AnswerPolicy,
    pub scheduler_seed: u64,
}

/// At most `f` crashes: the count is uniform in `0..=f`, victims distinct,
/// each crash at time 0 with probability 1/4 and otherwise uniform in
/// `1..=horizon`.
pub fn sample_crashes(rng: &mut impl Rng, n: usize, f: usize, horizon: Time) -> FailurePattern {
    let m = rng.gen_range(0..=f);
    let victims = sample(rng, n, m).into_vec();
    FailurePattern::from_crashes(
        n,
        victims.into_iter().map(|i| {
            let t = if rng.gen_ratio(1, 4) { 0 } else { rng.gen_range(1..=horizon.max(1)) };
            (ProcessId::from_index(i), t)
        }),
    )
}

pub fn plan(cfg: &SweepConfig) -> Vec<Trial> {
    let n = cfg.protocol.n();
    let f = cfg.task.f;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let horizon = cfg.horizon();
    let policies = if cfg.policies.is_empty() { vec![AnswerPolicy::Prefer0] } else { cfg.policies.clone() };
    let mut trials = Vec::new();
    match cfg.inputs {
        InputPlan::Exhaustive => {
            let crashes: Vec<FailurePattern> = (0..cfg.crash_samples).map(|_| sample_crashes(&mut rng, n, f, horizon)).collect();
            for mask in 0..(1u64 << n) {
                let inputs = InputVector::from_mask(n, mask);
                for pattern in &crashes {
                    for &policy in &policies {
                        for _ in 0..cfg.scheduler_seeds {
                            trials.push(Trial {
                                inputs: inputs.clone(),
                                pattern: pattern.clone(),
                                policy,
                                scheduler_seed: rng.gen(),
                            });
                        }
                    }
                }
            }
        }
        InputPlan::Random { trials: count } => {
            for i in 0..count {
                let inputs = InputVector::from_mask(n, rng.gen_range(0..(1u64 << n)));
                trials.push(Trial {
                    inputs,
                    pattern: sample_crashes(&mut rng, n, f, horizon),
                    policy: policies[i % policies.len()],
                    scheduler_seed: rng.gen(),
                });
            }
        }
    }
    trials
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureSample {
    pub trial: usize,
    pub inputs: InputVector,
    pub crashes: Vec<(ProcessId, Time)>,
    pub policy: AnswerPolicy,
    pub scheduler_seed: u64,
    pub failed: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub trials: usize,
    pub pass: usize,
    pub fail: usize,
    pub inconclusive: usize,
    /// Highest round in which a process decided (round-based protocols).
    pub max_decision_round: Option<u32>,
    pub round_bound_violations: usize,
    pub failures: Vec<FailureSample>,
}

impl SweepSummary {
    fn merge(mut self, other: SweepSummary) -> SweepSummary {
        self.trials += other.trials;
        self.pass += other.pass;
        self.fail += other.fail;
        self.inconclusive += other.inconclusive;
        self.max_decision_round = self.max_decision_round.max(other.max_decision_round);
        self.round_bound_violations += other.round_bound_violations;
        self.failures.extend(other.failures);
        self.failures.sort_by_key(|s| s.trial);
        self.failures.truncate(KEPT_FAILURES);
        self
    }
}

/// Round bookkeeping for round-based runs: the highest round in which a
/// process first decided, and whether every correct process first decided
/// within `m + 2` rounds of the furthest round any correct process had
/// started by the last crash, `m` being the number of crashes.
pub fn decision_rounds(run: &Run) -> Option<(u32, bool)> {
    let pattern = run.pattern();
    let last_crash = processes(run.header.n).filter_map(|p| pattern.crash_time(p)).max().unwrap_or(0);
    let mut current = vec![0u32; run.header.n];
    let mut started_by_crash = 0u32;
    let mut decided_in = Vec::new();
    let mut seen = vec![false; run.header.n];
    for e in &run.events {
        match &e.kind {
            EventKind::Send {
                msg: Message::Round { phase: Phase::R, round, .. },
                ..
            } => {
                current[e.pid.index()] = *round;
                if e.time <= last_crash && !pattern.is_faulty(e.pid) {
                    started_by_crash = started_by_crash.max(*round);
                }
            }
            EventKind::Decide { .. } if !seen[e.pid.index()] => {
                seen[e.pid.index()] = true;
                if current[e.pid.index()] > 0 {
                    decided_in.push((e.pid, current[e.pid.index()]));
                }
            }
            _ => {}
        }
    }
    let max = decided_in.iter().map(|&(_, r)| r).max()?;
    let within = decided_in.iter().filter(|&&(p, _)| !pattern.is_faulty(p)).all(|&(_, r)| r <= started_by_crash + pattern.faulty_count() as u32 + 2);
    Some((max, within))
}

fn run_trial(cfg: &SweepConfig, index: usize, trial: &Trial) -> SweepSummary {
    let choice = cfg.protocol.oracle_choice().map(|c| OracleChoice::new(c.mode, trial.policy));
    let protocol = match choice {
        Some(c) => cfg.protocol.clone().with_oracle(c),
        None => cfg.protocol.clone(),
    };
    let setup = Setup::new(trial.inputs.clone(), trial.pattern.clone())
        .scheduler(Scheduler::Random { seed: trial.scheduler_seed })
        .step_bound(cfg.step_bound);
    let mut s = SweepSummary {
        trials: 1,
        ..SweepSummary::default()
    };
    let sample = |failed: Vec<String>| FailureSample {
        trial: index,
        inputs: trial.inputs.clone(),
        crashes: processes(trial.inputs.n()).filter_map(|p| trial.pattern.crash_time(p).map(|t| (p, t))).collect(),
        policy: trial.policy,
        scheduler_seed: trial.scheduler_seed,
        failed,
    };
    let run = match simulate(&protocol, &setup) {
        Ok(run) => run,
        Err(e) => {
            s.fail = 1;
            s.failures.push(sample(vec![format!("simulate: {e}")]));
            return s;
        }
    };
    let verdict = check_all(&run, &cfg.task, &protocol);
    if let Some((max, within)) = decision_rounds(&run) {
        s.max_decision_round = Some(max);
        if !within {
            s.round_bound_violations = 1;
        }
    }
    match verdict.overall() {
        Overall::Pass => s.pass = 1,
        Overall::Inconclusive => s.inconclusive = 1,
        Overall::Fail => {
            s.fail = 1;
            s.failures.push(sample(verdict.failures().map(|c| c.name.clone()).collect()));
        }
    }
    s
}

/// Runs every planned trial in parallel; the result depends only on `cfg`.
pub fn sweep(cfg: &SweepConfig) -> SweepSummary {
    let trials = plan(cfg);
    trials
        .par_iter()
        .enumerate()
        .map(|(i, t)| run_trial(cfg, i, t))
        .reduce(SweepSummary::default, SweepSummary::merge)
}

/// Decisions as a string, `-` for undecided.
pub fn bits(v: &[Option<Bit>]) -> String {
    v.iter().map(|d| d.map_or('-', Bit::as_char)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crash_samples_respect_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let p = sample_crashes(&mut rng, 5, 2, 150);
            assert!(p.faulty_count() <= 2);
            assert!(processes(5).filter_map(|q| p.crash_time(q)).all(|t| t <= 150));
        }
    }

    #[test]
    fn plan_sizes() {
        let mut cfg = SweepConfig::new(ProtocolSpec::fig1(3, 1).unwrap());
        cfg.crash_samples = 4;
        cfg.scheduler_seeds = 3;
        assert_eq!(plan(&cfg).len(), 8 * 4 * 3 * 2);
        cfg.inputs = InputPlan::Random { trials: 17 };
        assert_eq!(plan(&cfg).len(), 17);
        assert_eq!(plan(&cfg), plan(&cfg));
    }

    #[test]
    fn small_sweep_is_clean_and_deterministic() {
        let mut cfg = SweepConfig::new(ProtocolSpec::fig4(2, 1).unwrap());
        cfg.crash_samples = 10;
        cfg.scheduler_seeds = 2;
        let a = sweep(&cfg);
        assert_eq!(a.trials, 4 * 10 * 2 * 2);
        assert_eq!(a.fail, 0, "{:?}", a.failures);
        assert_eq!(a.inconclusive, 0);
        assert_eq!(a, sweep(&cfg));
    }

    #[test]
    fn fig2_rounds_reported() {
        let mut cfg = SweepConfig::new(ProtocolSpec::fig2(3, 1).unwrap());
        cfg.crash_samples = 10;
        cfg.scheduler_seeds = 2;
        let s = sweep(&cfg);
        assert_eq!(s.fail, 0, "{:?}", s.failures);
        assert_eq!(s.round_bound_violations, 0);
        assert!(s.max_decision_round.is_some());
    }
}
