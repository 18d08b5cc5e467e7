//! Judges runs against agreement tasks.
//!
//! Task conditions look only at the failure pattern, the inputs and the
//! decide events; they never ask the protocol what it meant to do.

use crate::protocols::ProtocolSpec;
use crate::runtime::{validate_run_structure, Protocol, Run, StopReason};
use crate::tasks::{decision_set, processes, Bit, DecisionSet, TaskSpec};
use crate::verdict::{Status, Verdict};

pub const CONDITIONS: [&str; 5] = ["termination", "agreement", "irrevocability", "validity.part1", "validity.part2"];

/// Termination, agreement, irrevocability and both validity parts.
///
/// With more than `f` faulty processes every condition is vacuous. A
/// validity part applies when the inputs and faulty count pin the decision
/// to one value (part 1 for 0, part 2 for 1); for threshold agreement these
/// are "at least k zeros" and "all ones with at most k-1 faulty".
pub fn check_task_conditions(run: &Run, task: &TaskSpec) -> Verdict {
    let mut v = Verdict::new();
    let pattern = run.pattern();
    let m = pattern.faulty_count();
    if task.n() != run.header.n {
        for name in CONDITIONS {
            v.push(name, Status::fail(Vec::new(), format!("task has {} processes, run has {}", task.n(), run.header.n)));
        }
        return v;
    }
    if m > task.f {
        for name in CONDITIONS {
            v.push(name, Status::Vacuous);
        }
        return v;
    }

    let decides: Vec<(usize, crate::tasks::ProcessId, Bit)> = run
        .decide_events()
        .map(|(i, e)| (i, e.pid, e.decision().expect("decide event")))
        .collect();

    let decided: Vec<bool> = processes(run.header.n).map(|p| decides.iter().any(|&(_, q, _)| q == p)).collect();
    let undecided: Vec<_> = processes(run.header.n).filter(|&p| !pattern.is_faulty(p) && !decided[p.index()]).collect();
    v.push(
        "termination",
        if undecided.is_empty() {
            Status::Pass
        } else {
            let who = undecided.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",");
            match run.header.stop {
                StopReason::StepBound | StopReason::ScriptEnd => Status::inconclusive(format!("{who} undecided when the run was cut off")),
                _ => Status::fail(run.events.len().checked_sub(1).into_iter().collect(), format!("{who} never decide")),
            }
        },
    );

    let first = |b: Bit| decides.iter().find(|&&(_, _, d)| d == b).map(|&(i, _, _)| i);
    v.push(
        "agreement",
        match (first(Bit::Zero), first(Bit::One)) {
            (Some(a), Some(b)) => Status::fail(vec![a.min(b), a.max(b)], "both 0 and 1 decided"),
            _ => Status::Pass,
        },
    );

    let mut flip = None;
    'outer: for (j, &(i, p, d)) in decides.iter().enumerate() {
        for &(i2, p2, d2) in &decides[j + 1..] {
            if p2 == p && d2 != d {
                flip = Some((i, i2, p));
                break 'outer;
            }
        }
    }
    v.push(
        "irrevocability",
        match flip {
            Some((a, b, p)) => Status::fail(vec![a, b], format!("{p} changed its decision")),
            None => Status::Pass,
        },
    );

    let allowed = decision_set(&task.problem, m, &run.header.inputs);
    let part = |pinned: DecisionSet, bad: Bit| -> Status {
        match &allowed {
            Ok(set) if *set == pinned => {
                let wrong: Vec<usize> = decides.iter().filter(|&&(_, _, d)| d == bad).map(|&(i, _, _)| i).collect();
                if wrong.is_empty() {
                    Status::Pass
                } else {
                    Status::fail(wrong, format!("only {} is admissible, {bad} decided", bad.flip()))
                }
            }
            Ok(_) => Status::Vacuous,
            Err(e) => Status::fail(Vec::new(), e.to_string()),
        }
    };
    v.push("validity.part1", part(DecisionSet::ZERO, Bit::One));
    v.push("validity.part2", part(DecisionSet::ONE, Bit::Zero));
    v
}

/// Structure, oracle histories and task conditions together. Names are
/// prefixed `structure.` and `task.`.
pub fn check_all(run: &Run, task: &TaskSpec, protocol: &dyn Protocol) -> Verdict {
    let mut v = Verdict::new();
    v.absorb("structure", validate_run_structure(run, protocol));
    v.absorb("task", check_task_conditions(run, task));
    v
}

/// [`check_all`] with the protocol rebuilt from the run header, against
/// `task` or else the task recorded in the header.
pub fn check_recorded(run: &Run, task: Option<TaskSpec>) -> Result<Verdict, String> {
    let protocol = ProtocolSpec::from_descriptor(&run.header.protocol)?;
    Ok(check_all(run, &task.unwrap_or(run.header.task), &protocol))
}
