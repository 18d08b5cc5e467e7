//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::time::{Duration, Instant};

use ktag_core::adversary::{build_ir1, build_ir3, Outcome, Report};
use ktag_core::protocols::ProtocolSpec;
use ktag_core::sweep::{sweep, InputPlan, SweepConfig};
use ktag_core::tasks::{is_generalization, oracle_allowed, oracle_allowed_bruteforce, GeneralizationWitness};
use ktag_core::{
    check_all, check_recorded, simulate, AnswerPolicy, Bit, DecisionSet, FailurePattern, InputVector, OracleChoice, PartialVector, PowerMode, ProblemSpec,
    ProcessId, Protocol, Run, Scheduler, Setup, Status, TaskSpec, Verdict,
};

const MAX_N: usize = 5;
const ORACLE_ALGEBRA_LIMIT: Duration = Duration::from_secs(10);
const CRASH_SAMPLES: usize = 200;
const SCHEDULER_SEEDS: usize = 5;
const STEP_BOUND: u64 = 10_000;
const SWEEP_SEED: u64 = 2024;
const ADVERSARY_BOUND: u64 = 10_000;

type Criterion = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn partial_vectors(n: usize) -> Vec<PartialVector> {
    (0..3usize.pow(n as u32))
        .map(|mut code| {
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                v.push(match code % 3 {
                    0 => None,
                    1 => Some(Bit::Zero),
                    _ => Some(Bit::One),
                });
                code /= 3;
            }
            PartialVector::new(v)
        })
        .collect()
}

fn oracle_algebra() -> Result<String, String> {
    let start = Instant::now();
    let mut cases = 0usize;
    for n in 1..=MAX_N {
        let vectors = partial_vectors(n);
        for k in 1..=n {
            let problem = ProblemSpec::threshold(k, n).unwrap();
            for m in 0..=n {
                for w in &vectors {
                    let closed = oracle_allowed(&problem, m, w).map_err(|e| e.to_string())?;
                    let brute = oracle_allowed_bruteforce(&problem, m, w).map_err(|e| e.to_string())?;
                    ensure(closed == brute, || format!("{problem} faulty={m} w={w}: closed form {closed}, enumeration {brute}"))?;
                    cases += 1;
                }
            }
        }
    }
    let took = start.elapsed();
    ensure(took < ORACLE_ALGEBRA_LIMIT, || format!("{cases} cases took {took:?}"))?;
    Ok(format!("{cases} cases equal in {:.2}s", took.as_secs_f64()))
}

fn forced_answers() -> Result<String, String> {
    let (mut first, mut second) = (0usize, 0usize);
    for n in 1..=MAX_N {
        let vectors = partial_vectors(n);
        for k in 1..=n {
            let problem = ProblemSpec::threshold(k, n).unwrap();
            for m in 0..=n {
                for w in &vectors {
                    for allowed in [oracle_allowed(&problem, m, w), oracle_allowed_bruteforce(&problem, m, w)] {
                        let allowed = allowed.map_err(|e| e.to_string())?;
                        if w.zeros_plus_missing() >= k {
                            first += 1;
                            ensure(allowed == DecisionSet::ZERO || allowed.is_empty(), || format!("zeros force 0: {problem} faulty={m} w={w} gives {allowed}"))?;
                            if m >= k {
                                ensure(allowed == DecisionSet::ZERO, || format!("zeros force 0: {problem} faulty={m} w={w} gives {allowed}"))?;
                            }
                        }
                        if w.is_total() && w.all_present_are(Bit::One) && m < k {
                            second += 1;
                            ensure(allowed == DecisionSet::ONE, || format!("all ones force 1: {problem} faulty={m} w={w} gives {allowed}"))?;
                        }
                    }
                }
            }
        }
    }
    Ok(format!("zero forcing held on {first} instances, one forcing on {second}"))
}

fn generalization_lattice() -> Result<String, String> {
    let task = |k, n, f| TaskSpec::threshold(k, n, f).unwrap();
    let gen = |t1: &TaskSpec, t2: &TaskSpec| is_generalization(t1, t2).map_err(|e| e.to_string());
    let (mut holds, mut refuted) = (0usize, 0usize);
    for n in 1..=MAX_N {
        for f in 0..n {
            for k in (f + 1).max(1)..n {
                let g = gen(&task(k + 1, n, f), &task(k, n, f))?;
                ensure(g.holds && g.witness.is_none(), || format!("{k}-TAg({n},{f}) should generalize {}-TAg", k + 1))?;
                holds += 1;
            }
            if f >= 1 {
                let (t1, t2) = (task(f + 1, n, f), task(f, n, f));
                let g = gen(&t1, &t2)?;
                ensure(!g.holds, || format!("{t2} should not generalize {t1}"))?;
                match g.witness {
                    Some(GeneralizationWitness::Decision {
                        faulty_count,
                        inputs,
                        decision,
                    }) => {
                        let p1 = ktag_core::tasks::decision_set(&t1.problem, faulty_count, &inputs).unwrap();
                        let p2 = ktag_core::tasks::decision_set(&t2.problem, faulty_count, &inputs).unwrap();
                        ensure(faulty_count <= f && p2.contains(decision) && !p1.contains(decision), || {
                            format!("witness {inputs} faulty={faulty_count} decision={decision} does not separate {t1} and {t2}")
                        })?;
                    }
                    other => return Err(format!("{t2} vs {t1}: unexpected witness {other:?}")),
                }
                refuted += 1;
            }
            let wag = TaskSpec::new(ProblemSpec::weak_agreement(n).unwrap(), f).unwrap();
            for strong in [task(n, n, f), task(1, n, f)] {
                let g = gen(&wag, &strong)?;
                ensure(g.holds, || format!("{strong} should generalize {wag}"))?;
                holds += 1;
            }
        }
    }
    Ok(format!("{holds} generalizations hold, {refuted} refuted with witnesses"))
}

fn sweep_clean(protocol: ProtocolSpec) -> Result<String, String> {
    let mut cfg = SweepConfig::new(protocol);
    cfg.inputs = InputPlan::Exhaustive;
    cfg.crash_samples = CRASH_SAMPLES;
    cfg.scheduler_seeds = SCHEDULER_SEEDS;
    cfg.policies = vec![AnswerPolicy::Prefer0, AnswerPolicy::Prefer1];
    cfg.step_bound = STEP_BOUND;
    cfg.seed = SWEEP_SEED;
    let s = sweep(&cfg);
    let name = format!("{} {}", cfg.protocol.name(), cfg.task);
    ensure(s.fail == 0 && s.inconclusive == 0 && s.round_bound_violations == 0, || {
        format!(
            "{name}: {} FAIL, {} INCONCLUSIVE, {} over the round bound, first failures {:?}",
            s.fail, s.inconclusive, s.round_bound_violations, s.failures
        )
    })?;
    Ok(match s.max_decision_round {
        Some(r) => format!("{name} {} trials, max round {r}", s.trials),
        None => format!("{name} {} trials", s.trials),
    })
}

fn sweeps(protocols: Vec<ProtocolSpec>) -> Result<String, String> {
    let mut lines = Vec::new();
    for p in protocols {
        let t = Instant::now();
        let line = sweep_clean(p)?;
        lines.push(format!("{line} ({:.1}s)", t.elapsed().as_secs_f64()));
    }
    for l in &lines {
        println!("    {l}");
    }
    Ok(format!("{} configurations, 0 FAIL, 0 INCONCLUSIVE", lines.len()))
}

fn soundness_sweeps() -> Result<String, String> {
    let mut ps = Vec::new();
    for (n, f) in [(3, 1), (4, 1), (5, 2)] {
        ps.push(ProtocolSpec::fig1(n, f).unwrap());
    }
    for (n, f) in [(3, 1), (5, 2)] {
        let p = ProtocolSpec::fig2(n, f).unwrap();
        ensure(p.oracle_choice().map(|c| c.mode) == Some(PowerMode::Consistent), || "fig2 must default to a consistent oracle".into())?;
        ps.push(p);
    }
    for (n, f, k) in [(2, 1, 1), (3, 1, 1), (3, 2, 2)] {
        ps.push(ProtocolSpec::fig3_max(n, f, k).unwrap());
        ps.push(ProtocolSpec::fig3_min(n, f, k).unwrap());
    }
    for (n, f) in [(2, 1), (3, 2), (4, 2)] {
        let p = ProtocolSpec::fig4(n, f).unwrap();
        ensure(p.oracle_choice().map(|c| c.mode) == Some(PowerMode::Sham), || "fig4 must default to a sham oracle".into())?;
        ps.push(p);
    }
    sweeps(ps)
}

fn fig2_with_sham() -> Result<String, String> {
    let sham = OracleChoice::new(PowerMode::Sham, AnswerPolicy::Prefer0);
    sweeps([(3, 1), (5, 2)].into_iter().map(|(n, f)| ProtocolSpec::fig2(n, f).unwrap().with_oracle(sham)).collect())
}

fn structure_holds(v: &Verdict) -> bool {
    v.checks.iter().filter(|c| c.name.starts_with("structure.")).all(|c| matches!(c.status, Status::Pass | Status::Vacuous))
}

fn run_of<'a>(report: &'a Report, name: &str) -> Result<&'a ktag_core::adversary::RunReport, String> {
    report.run(name).ok_or_else(|| format!("{} has no run {name}", report.construction))
}

fn ir1_demonstration() -> Result<String, String> {
    let mut found = Vec::new();
    for (n, f, k) in [(3, 1, 1), (4, 2, 2)] {
        let candidate = ProtocolSpec::query_decide(n, f, k).unwrap();
        let report = build_ir1(&candidate, f, k, ADVERSARY_BOUND).map_err(|e| e.to_string())?;
        let mut fails = Vec::new();
        for name in ["rho", "rho_flipped", "rho0"] {
            let r = run_of(&report, name)?;
            ensure(structure_holds(&r.verdict), || format!("({n},{f},{k}) {name} fails structure:\n{}", r.verdict))?;
            for part in ["task.validity.part1", "task.validity.part2"] {
                if r.verdict.get(part).is_some_and(Status::is_fail) {
                    fails.push(format!("{name}:{part}"));
                }
            }
        }
        let rho0 = run_of(&report, "rho0")?;
        ensure(rho0.run.pattern().faulty_count() == 0, || format!("({n},{f},{k}) rho0 has crashes"))?;
        let rho = run_of(&report, "rho")?;
        let flipped = run_of(&report, "rho_flipped")?;
        ensure(rho.run.events == flipped.run.events, || format!("({n},{f},{k}) flipping changed the history"))?;
        ensure(!fails.is_empty(), || format!("({n},{f},{k}) no validity failure, outcome {:?}", report.outcome))?;
        ensure(matches!(report.outcome, Outcome::Demonstrated { .. }), || format!("({n},{f},{k}) outcome {:?}", report.outcome))?;
        found.push(format!("({n},{f},{k}) {}", fails.join(",")));
    }
    Ok(found.join("; "))
}

fn ir3_demonstration() -> Result<String, String> {
    let mut found = Vec::new();
    for (n, f) in [(2, 1), (4, 2)] {
        let candidate = ProtocolSpec::fig4(n, f).unwrap().with_oracle(OracleChoice::general());
        let report = build_ir3(&candidate, f, PowerMode::General, ADVERSARY_BOUND).map_err(|e| e.to_string())?;
        let merged = run_of(&report, "merged")?;
        ensure(structure_holds(&merged.verdict), || format!("({n},{f}) merged fails structure:\n{}", merged.verdict))?;
        ensure(merged.verdict.get("task.agreement").is_some_and(Status::is_fail), || {
            format!("({n},{f}) merged run agrees:\n{}", merged.verdict)
        })?;
        ensure(matches!(report.outcome, Outcome::Demonstrated { .. }), || format!("({n},{f}) outcome {:?}", report.outcome))?;

        let report = build_ir3(&candidate, f, PowerMode::Sham, ADVERSARY_BOUND).map_err(|e| e.to_string())?;
        let Outcome::Blocked(cert) = &report.outcome else {
            return Err(format!("({n},{f}) sham outcome {:?}", report.outcome));
        };
        let run = &run_of(&report, &cert.run)?.run;
        let spec = run.header.oracles.iter().find(|s| Some(s.label.as_str()) == run.events[cert.event].sanctuary()).ok_or("certificate names no oracle")?;
        let pattern = run.pattern();
        let view = spec.consultants.iter().filter(|&&p| p.0 > n || pattern.crash_time(p).is_some_and(|t| t <= cert.time)).count();
        let w: PartialVector = cert.query_vector.parse()?;
        let allowed = oracle_allowed(&spec.problem_spec(), view, &w).map_err(|e| e.to_string())?;
        ensure(view == cert.faulty_view && allowed == cert.allowed && !allowed.contains(cert.value), || {
            format!("({n},{f}) certificate does not check out: {cert:?}, view {view}, allowed {allowed}")
        })?;
        ensure(run.events[cert.event].time == cert.time && run.events[cert.event].pid == cert.pid, || format!("({n},{f}) certificate event mismatch"))?;
        found.push(format!("({n},{f}) agreement FAIL, sham BLOCKED at t={} answering {} to {} (allowed {})", cert.time, cert.value, w, allowed));
    }
    Ok(found.join("; "))
}

fn roundtrip(protocol: &ProtocolSpec, setup: &Setup) -> Result<(), String> {
    let a = simulate(protocol, setup).map_err(|e| e.to_string())?;
    let b = simulate(protocol, setup).map_err(|e| e.to_string())?;
    let text = a.to_jsonl();
    ensure(text == b.to_jsonl(), || format!("{} traces differ between identical runs", protocol.name()))?;
    let back = Run::from_jsonl(&text).map_err(|e| e.to_string())?;
    ensure(back == a && back.to_jsonl() == text, || format!("{} trace does not round-trip", protocol.name()))?;
    let direct = check_all(&a, &protocol.task(), protocol);
    let recorded = check_recorded(&back, None)?;
    ensure(direct == recorded, || format!("{} verdict changed through the trace", protocol.name()))?;
    Ok(())
}

fn determinism() -> Result<String, String> {
    let crashes = |n, list: &[(usize, u64)]| FailurePattern::from_crashes(n, list.iter().map(|&(p, t)| (ProcessId(p), t)));
    let cases: Vec<(ProtocolSpec, InputVector, FailurePattern, Scheduler)> = vec![
        (ProtocolSpec::fig2(5, 2).unwrap(), "01101".parse()?, crashes(5, &[(2, 7), (5, 30)]), Scheduler::Random { seed: 42 }),
        (ProtocolSpec::fig1(4, 1).unwrap(), "1011".parse()?, crashes(4, &[(3, 0)]), Scheduler::FairRr),
        (ProtocolSpec::fig3_max(3, 2, 2).unwrap(), "0111".parse()?, crashes(4, &[(1, 5), (4, 12)]), Scheduler::Random { seed: 7 }),
        (
            ProtocolSpec::fig4(3, 2).unwrap().with_oracle(OracleChoice::new(PowerMode::Sham, AnswerPolicy::Seeded(3))),
            "110".parse()?,
            crashes(3, &[(1, 3)]),
            Scheduler::Random { seed: 9 },
        ),
    ];
    let count = cases.len();
    for (p, inputs, pattern, scheduler) in cases {
        roundtrip(&p, &Setup::new(inputs, pattern).scheduler(scheduler))?;
    }
    let mut cfg = SweepConfig::new(ProtocolSpec::fig2(3, 1).unwrap());
    cfg.inputs = InputPlan::Random { trials: 300 };
    ensure(sweep(&cfg) == sweep(&cfg), || "sweep summaries differ between identical configs".into())?;
    Ok(format!("{count} runs byte-identical and verdict-stable through JSONL; sweep summary repeatable"))
}

fn main() {
    let criteria: [(&str, Criterion); 8] = [
        ("oracle algebra", oracle_algebra),
        ("forced oracle answers", forced_answers),
        ("generalization lattice", generalization_lattice),
        ("soundness sweeps", soundness_sweeps),
        ("fig2 with sham oracle", fig2_with_sham),
        ("ir1 demonstration", ir1_demonstration),
        ("ir3 demonstration", ir3_demonstration),
        ("determinism and serialization", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {} {name}: PASS {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
