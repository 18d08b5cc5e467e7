use std::collections::BTreeSet;

use ktag_core::protocols::ProtocolSpec;
use ktag_core::runtime::{flip_inputs, validate_run_structure};
use ktag_core::tasks::{oracle_allowed, oracle_allowed_bruteforce};
use ktag_core::{simulate, AnswerPolicy, Bit, FailurePattern, InputVector, OracleChoice, PartialVector, ProblemSpec, ProcessId, Run, Scheduler, Setup, Status};
use proptest::prelude::*;

fn bit() -> impl Strategy<Value = Bit> {
    any::<bool>().prop_map(Bit::from)
}

fn partial_and_extension() -> impl Strategy<Value = (PartialVector, PartialVector, usize, usize)> {
    (1usize..=6).prop_flat_map(|n| {
        (
            prop::collection::vec((prop::option::of(bit()), any::<bool>(), bit()), n),
            1..=n,
            0..=n,
        )
            .prop_map(move |(entries, k, m)| {
                let small: Vec<Option<Bit>> = entries.iter().map(|&(v, _, _)| v).collect();
                let large = entries.iter().map(|&(v, fill, b)| v.or(if fill { Some(b) } else { None })).collect();
                (PartialVector::new(small), PartialVector::new(large), k, m)
            })
    })
}

fn protocol() -> impl Strategy<Value = ProtocolSpec> {
    prop_oneof![
        (3usize..=4).prop_map(|n| ProtocolSpec::fig1(n, 1).unwrap()),
        Just(ProtocolSpec::fig2(3, 1).unwrap()),
        Just(ProtocolSpec::fig2(5, 2).unwrap()),
        (2usize..=3, 1usize..=2).prop_filter_map("k <= n", |(n, k)| ProtocolSpec::fig3_max(n, 1, k).ok()),
        (2usize..=3, 1usize..=2).prop_filter_map("k <= n", |(n, k)| ProtocolSpec::fig3_min(n, 1, k).ok()),
        (2usize..=4).prop_map(|n| ProtocolSpec::fig4(n, n - 1).unwrap()),
    ]
}

/// A protocol with inputs, at most `f` crashes, a policy and a scheduler.
fn setup() -> impl Strategy<Value = (ProtocolSpec, Setup)> {
    protocol().prop_flat_map(|p| {
        use ktag_core::Protocol;
        let n = p.n();
        let f = p.task().f;
        (
            prop::collection::vec(bit(), n),
            prop::sample::subsequence((1..=n).collect::<Vec<_>>(), 0..=f),
            prop::collection::vec(0u64..80, f),
            any::<bool>(),
            prop::option::of(any::<u64>()),
        )
            .prop_map(move |(inputs, victims, times, prefer1, seed)| {
                let pattern = FailurePattern::from_crashes(n, victims.iter().zip(&times).map(|(&v, &t)| (ProcessId(v), t)));
                let policy = if prefer1 { AnswerPolicy::Prefer1 } else { AnswerPolicy::Prefer0 };
                let proto = match p.oracle_choice() {
                    Some(c) => p.clone().with_oracle(OracleChoice::new(c.mode, policy)),
                    None => p.clone(),
                };
                let scheduler = seed.map_or(Scheduler::FairRr, |seed| Scheduler::Random { seed });
                (proto, Setup::new(InputVector::new(inputs), pattern).scheduler(scheduler))
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn allowed_sets_grow_along_extensions((small, large, k, m) in partial_and_extension()) {
        let problem = ProblemSpec::threshold(k, small.n()).unwrap();
        let a = oracle_allowed(&problem, m, &small).unwrap();
        let b = oracle_allowed(&problem, m, &large).unwrap();
        prop_assert!(large.extends(&small));
        prop_assert!(a.is_subset(b), "{small} -> {a}, {large} -> {b}");
        prop_assert_eq!(a, oracle_allowed_bruteforce(&problem, m, &small).unwrap());
    }

    #[test]
    fn weak_agreement_matches_enumeration((small, _large, _k, m) in partial_and_extension()) {
        let problem = ProblemSpec::weak_agreement(small.n()).unwrap();
        prop_assert_eq!(oracle_allowed(&problem, m, &small).unwrap(), oracle_allowed_bruteforce(&problem, m, &small).unwrap());
    }

    #[test]
    fn simulated_runs_are_well_formed((p, s) in setup()) {
        let run = simulate(&p, &s).unwrap();
        let v = validate_run_structure(&run, &p);
        for c in &v.checks {
            prop_assert!(matches!(c.status, Status::Pass | Status::Vacuous), "{}: {}\n{}", c.name, c.status, run.to_jsonl());
        }
    }

    #[test]
    fn traces_round_trip((p, s) in setup()) {
        let run = simulate(&p, &s).unwrap();
        let text = run.to_jsonl();
        let back = Run::from_jsonl(&text).unwrap();
        prop_assert_eq!(&back, &run);
        prop_assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn flipping_silent_inputs_twice_is_identity((p, s) in setup(), to in bit()) {
        let run = simulate(&p, &s).unwrap();
        let silent: BTreeSet<ProcessId> = (1..=run.header.n).map(ProcessId).filter(|q| !run.active_processes().contains(q)).collect();
        let same: BTreeSet<ProcessId> = silent.iter().copied().filter(|&q| run.header.inputs.get(q) == Bit::One).collect();
        let there = flip_inputs(&run, &same, to).unwrap();
        prop_assert_eq!(&there.events, &run.events);
        let back = flip_inputs(&there, &same, Bit::One).unwrap();
        prop_assert_eq!(back, run);
    }

    #[test]
    fn flipping_active_processes_is_refused((p, s) in setup()) {
        let run = simulate(&p, &s).unwrap();
        if let Some(&q) = run.active_processes().iter().next() {
            prop_assert!(flip_inputs(&run, &BTreeSet::from([q]), Bit::Zero).is_err());
        }
    }
}
