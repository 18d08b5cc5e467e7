//! Structural checks on a run, independent of the task it should solve.

use std::collections::BTreeMap;

use crate::oracles::{validate_oracle_history, OracleEvent, OracleEventKind};
use crate::runtime::automaton::Protocol;
use crate::runtime::engine::{Engine, SimError};
use crate::runtime::event::{EventKind, Location, Message};
use crate::runtime::run::{Run, StopReason};
use crate::tasks::{processes, ProcessId, Time};
use crate::verdict::{Status, Verdict};

/// Checks, by name:
///
/// * `times`: event times strictly increase from the start time.
/// * `R2`: each process's events are well formed (known ids, one pending
///   query at a time, answers match the pending sanctuary, valid send
///   destinations).
/// * `R3`: every receive consumes an earlier, not yet consumed send copy.
/// * `R4`: replaying the history through fresh automata reproduces it.
/// * `R5`: every correct process decided; a run stopped at its step bound is
///   inconclusive, and a run stopped while a correct process could still
///   move fails.
/// * `R6`: nobody acts at or after its crash time.
/// * `R1.<sanctuary>.*`: the oracle history checks of each sanctuary.
pub fn validate_run_structure(run: &Run, protocol: &dyn Protocol) -> Verdict {
    let mut v = Verdict::new();
    let h = &run.header;
    let n = h.n;
    let pattern = run.pattern();

    let mut prev: Option<Time> = None;
    let mut bad_time = None;
    for (i, e) in run.events.iter().enumerate() {
        let ok = match prev {
            None => e.time >= h.start_time,
            Some(t) => e.time > t,
        };
        if !ok {
            bad_time = Some(i);
            break;
        }
        prev = Some(e.time);
    }
    v.push(
        "times",
        match bad_time {
            None => Status::Pass,
            Some(i) => Status::fail(vec![i], "event times must strictly increase"),
        },
    );

    let mut pending: Vec<Option<String>> = vec![None; n];
    let mut r2 = Vec::new();
    for (i, e) in run.events.iter().enumerate() {
        if e.pid.0 == 0 || e.pid.0 > n {
            r2.push((i, format!("{} is not a process", e.pid)));
            continue;
        }
        let slot = &mut pending[e.pid.index()];
        match (&e.kind, &e.loc) {
            (EventKind::Send { to, .. }, Location::Buffer) => {
                if to.is_empty() || to.iter().any(|q| q.0 == 0 || q.0 > n) {
                    r2.push((i, "send with invalid destinations".into()));
                }
            }
            (EventKind::Receive { .. }, Location::Buffer) | (EventKind::Decide { .. }, Location::Local) => {}
            (EventKind::Query { .. }, Location::Sanctuary(s)) => {
                if slot.is_some() {
                    r2.push((i, format!("{} queries with a query pending", e.pid)));
                }
                *slot = Some(s.clone());
            }
            (EventKind::Answer { .. }, Location::Sanctuary(s)) => {
                if slot.as_deref() != Some(s.as_str()) {
                    r2.push((i, format!("{} answered at {s} without a pending query there", e.pid)));
                }
                *slot = None;
            }
            (kind, loc) => r2.push((i, format!("{} event at location {}", kind.code(), loc.as_str()))),
        }
    }
    v.push("R2", collect_failures(r2));

    let mut outstanding: BTreeMap<(ProcessId, ProcessId, Time), Vec<Message>> = BTreeMap::new();
    let mut r3 = Vec::new();
    for (i, e) in run.events.iter().enumerate() {
        match &e.kind {
            EventKind::Send { msg, to } => {
                for &q in to {
                    outstanding.entry((e.pid, q, e.time)).or_default().push(msg.clone());
                }
            }
            EventKind::Receive { from, sent_at, msg } => {
                let copies = outstanding.get_mut(&(*from, e.pid, *sent_at));
                match copies.and_then(|c| c.iter().position(|m| m == msg).map(|pos| (c, pos))) {
                    Some((c, pos)) => {
                        c.remove(pos);
                    }
                    None => r3.push((i, format!("{} receives {msg} from {from} that was not sent to it", e.pid))),
                }
            }
            _ => {}
        }
    }
    v.push("R3", collect_failures(r3));

    let mut r6 = Vec::new();
    for (i, e) in run.events.iter().enumerate() {
        if pattern.crashed_by(e.pid, e.time) {
            r6.push((i, format!("{} acts at t={} after crashing", e.pid, e.time)));
        }
    }
    v.push("R6", collect_failures(r6));

    let replayed = Engine::new(protocol, &h.inputs, pattern.clone(), h.oracles.clone(), h.start_time).and_then(|mut engine| {
        engine.replay(&run.events)?;
        Ok(engine)
    });
    match replayed {
        Ok(engine) => {
            v.push("R4", Status::Pass);
            let undecided: Vec<ProcessId> = processes(n)
                .filter(|&p| !pattern.is_faulty(p) && engine.decisions()[p.index()].is_none())
                .collect();
            let status = if undecided.is_empty() {
                Status::Pass
            } else {
                match h.stop {
                    StopReason::StepBound | StopReason::ScriptEnd => {
                        Status::inconclusive(format!("{} correct processes undecided at the step bound", undecided.len()))
                    }
                    _ if engine.correct_can_move() => Status::fail(Vec::new(), "run stopped while correct processes could still move"),
                    _ => Status::Pass,
                }
            };
            v.push("R5", status);
        }
        Err(err) => {
            let evidence = match &err {
                SimError::Replay { index, .. } => vec![*index],
                _ => Vec::new(),
            };
            v.push("R4", Status::fail(evidence, err.to_string()));
            v.push("R5", Status::inconclusive("history does not replay"));
        }
    }

    let complete = h.stop == StopReason::Quiescent;
    for spec in &h.oracles {
        let events: Vec<OracleEvent> = run
            .events
            .iter()
            .enumerate()
            .filter(|(_, e)| e.sanctuary() == Some(spec.label.as_str()))
            .filter_map(|(index, e)| {
                let kind = match e.kind {
                    EventKind::Query { value } => OracleEventKind::Query(value),
                    EventKind::Answer { value } => OracleEventKind::Answer(value),
                    _ => return None,
                };
                Some(OracleEvent {
                    index,
                    time: e.time,
                    pid: e.pid,
                    kind,
                })
            })
            .collect();
        v.absorb(&format!("R1.{}", spec.label), validate_oracle_history(&events, &pattern, spec, complete));
    }
    v
}

fn collect_failures(found: Vec<(usize, String)>) -> Status {
    match found.first() {
        None => Status::Pass,
        Some((_, detail)) => Status::fail(found.iter().map(|(i, _)| *i).collect(), detail.clone()),
    }
}
