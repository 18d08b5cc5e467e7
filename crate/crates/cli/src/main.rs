//! `ktag`: run, check, sweep and refute threshold agreement reductions.
//!
//! Exit codes: 0 PASS, 2 FAIL, 3 INCONCLUSIVE, 64 bad flags, 1 internal error.

mod args;

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use serde_json::{json, Value};

use args::{build_protocol, parse_crashes, usage, AllowedArgs, CheckArgs, Cli, Cmd, Construction, ProblemArg, ProtocolKind, RefuteArgs, RunArgs, SweepArgs, Usage};
use ktag_core::adversary::{build_ir1, build_ir3, Report};
use ktag_core::protocols::ProtocolSpec;
use ktag_core::sweep::{sweep, InputPlan, SweepConfig, SweepSummary};
use ktag_core::tasks::oracle_allowed;
use ktag_core::{
    check_all, check_recorded, simulate, Bit, InputVector, OracleChoice, Overall, PartialVector, PowerMode, ProblemSpec, Protocol, Run, Scheduler, Setup,
    Status, Verdict,
};

fn exit_code(o: Overall) -> u8 {
    match o {
        Overall::Pass => 0,
        Overall::Fail => 2,
        Overall::Inconclusive => 3,
    }
}

fn emit(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json values serialize"));
}

fn print_failures(v: &Verdict) {
    for c in &v.checks {
        if matches!(c.status, Status::Fail { .. } | Status::Inconclusive { .. }) {
            println!("  {:<30} {}", c.name, c.status);
        }
    }
}

fn decisions_text(run: &Run) -> String {
    run.decisions().iter().map(|d| d.map_or('-', Bit::as_char).to_string()).collect::<Vec<_>>().join(",")
}

fn decisions_json(run: &Run) -> Value {
    json!(run.decisions().iter().map(|d| d.map(Bit::as_u8)).collect::<Vec<_>>())
}

fn label(p: &ProtocolSpec) -> String {
    match p.oracle_choice() {
        Some(c) => format!("{} {} oracle={}:{}", p.name(), p.task(), c.mode, c.policy),
        None => format!("{} {}", p.name(), p.task()),
    }
}

fn cmd_run(a: RunArgs, json: bool) -> Result<u8> {
    let protocol = build_protocol(&a.proto, a.seed.unwrap_or(0))?;
    let n = protocol.n();
    let inputs: InputVector = a.inputs.parse().map_err(usage)?;
    if inputs.n() != n {
        return Err(usage(format!("--inputs has {} bits, the protocol has {n} processes", inputs.n())));
    }
    let pattern = parse_crashes(&a.crashes, n)?;
    let scheduler = a.seed.map_or(Scheduler::FairRr, |seed| Scheduler::Random { seed });
    let setup = Setup::new(inputs, pattern).scheduler(scheduler).step_bound(a.bound);
    let run = simulate(&protocol, &setup)?;
    let verdict = check_all(&run, &protocol.task(), &protocol);
    if let Some(path) = &a.trace {
        fs::write(path, run.to_jsonl()).with_context(|| format!("writing {}", path.display()))?;
    }
    let overall = verdict.overall();
    if json {
        emit(&json!({
            "protocol": run.header.protocol,
            "decisions": decisions_json(&run),
            "stop": run.header.stop,
            "events": run.events.len(),
            "trace": a.trace,
            "overall": overall,
            "verdict": verdict,
        }));
    } else {
        println!("{} inputs={} stop={:?} events={}", label(&protocol), run.header.inputs, run.header.stop, run.events.len());
        println!("decisions {}", decisions_text(&run));
        println!("verdict {overall}");
        print_failures(&verdict);
    }
    Ok(exit_code(overall))
}

fn cmd_check(a: CheckArgs, json: bool) -> Result<u8> {
    let text = fs::read_to_string(&a.trace).map_err(|e| usage(format!("cannot read {}: {e}", a.trace.display())))?;
    let (verdict, decisions) = match Run::from_jsonl(&text) {
        Ok(run) => {
            let verdict = check_recorded(&run, a.task).unwrap_or_else(|e| {
                let mut v = Verdict::new();
                v.push("structure.protocol", Status::fail(Vec::new(), e));
                v
            });
            (verdict, Some(run))
        }
        Err(e) => {
            let mut v = Verdict::new();
            v.push("structure.parse", Status::fail(Vec::new(), e.to_string()));
            (v, None)
        }
    };
    let overall = verdict.overall();
    if json {
        emit(&json!({
            "trace": a.trace,
            "decisions": decisions.as_ref().map(decisions_json),
            "overall": overall,
            "verdict": verdict,
        }));
    } else {
        if let Some(run) = &decisions {
            println!("decisions {}", decisions_text(run));
        }
        println!("{verdict}");
    }
    Ok(exit_code(overall))
}

fn sweep_code(s: &SweepSummary) -> u8 {
    if s.fail > 0 {
        2
    } else if s.inconclusive > 0 {
        3
    } else {
        0
    }
}

fn cmd_sweep(a: SweepArgs, json: bool) -> Result<u8> {
    let protocol = build_protocol(&a.proto, a.seed)?;
    let mut cfg = SweepConfig::new(protocol.clone());
    cfg.seed = a.seed;
    cfg.step_bound = a.bound;
    cfg.crash_samples = a.crash_samples;
    cfg.scheduler_seeds = a.scheduler_seeds;
    cfg.inputs = if a.exhaustive_inputs { InputPlan::Exhaustive } else { InputPlan::Random { trials: a.trials } };
    if let (Some((_, policy)), Some(c)) = (a.proto.oracle, protocol.oracle_choice()) {
        cfg.policies = vec![policy.resolve(a.seed)];
        cfg.protocol = protocol.with_oracle(OracleChoice::new(c.mode, policy.resolve(a.seed)));
    }
    let s = sweep(&cfg);
    let config = label(&cfg.protocol);
    if json {
        emit(&json!({ "config": config, "summary": s }));
    } else {
        println!("{:<40} {:>8} {:>8} {:>6} {:>13} {:>10}", "config", "trials", "PASS", "FAIL", "INCONCLUSIVE", "max_round");
        let round = s.max_decision_round.map_or("-".to_string(), |r| r.to_string());
        println!("{:<40} {:>8} {:>8} {:>6} {:>13} {:>10}", config, s.trials, s.pass, s.fail, s.inconclusive, round);
        if s.round_bound_violations > 0 {
            println!("round bound exceeded in {} trials", s.round_bound_violations);
        }
        for f in &s.failures {
            let crashes = f.crashes.iter().map(|(p, t)| format!("{}@{t}", p.0)).collect::<Vec<_>>().join(",");
            println!(
                "  trial {} inputs={} crashes={} policy={} seed={}: {}",
                f.trial,
                f.inputs,
                crashes,
                f.policy,
                f.scheduler_seed,
                f.failed.join(" ")
            );
        }
    }
    Ok(sweep_code(&s))
}

fn candidate(a: &RefuteArgs) -> Result<ProtocolSpec> {
    let (n, f) = (a.n, a.f);
    let k = || a.k.ok_or_else(|| usage(format!("--k is required for candidate {:?}", a.candidate).to_lowercase()));
    let general = OracleChoice::general();
    let built = match a.candidate {
        // Unchecked: ir3 runs it with n <= 2f.
        ProtocolKind::Fig2 if f >= 1 && f < n => Ok(ProtocolSpec::Fig2 { n, f, oracle: general }),
        ProtocolKind::Fig2 => return Err(usage(format!("need 1 <= f <= n-1, got n={n}, f={f}"))),
        ProtocolKind::Fig4 => ProtocolSpec::fig4(n, f).map(|p| p.with_oracle(general)),
        ProtocolKind::Fig1 => ProtocolSpec::fig1(n, f),
        ProtocolKind::Direct => ProtocolSpec::direct(n, f, k()?),
        ProtocolKind::Fig3max => ProtocolSpec::fig3_max(n, f, k()?),
        ProtocolKind::Fig3min => ProtocolSpec::fig3_min(n, f, k()?),
        ProtocolKind::QueryDecide => ProtocolSpec::query_decide(n, f, k()?),
        ProtocolKind::Const0 => ProtocolSpec::constant(n, f, k()?, Bit::Zero),
        ProtocolKind::Const1 => ProtocolSpec::constant(n, f, k()?, Bit::One),
        ProtocolKind::Noop => return Err(usage("noop cannot be a refutation candidate")),
    };
    built.map_err(|e| usage(e.to_string()))
}

fn write_runs(report: &Report, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for r in &report.runs {
        let path = dir.join(format!("{}.jsonl", r.name));
        fs::write(&path, r.run.to_jsonl()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_refute(a: RefuteArgs, json: bool) -> Result<u8> {
    let cand = candidate(&a)?;
    let result = match a.construction {
        Construction::Ir1 => {
            let k = a.k.ok_or_else(|| usage("--k is required for ir1"))?;
            build_ir1(&cand, a.f, k, a.bound)
        }
        Construction::Ir3 => build_ir3(&cand, a.f, PowerMode::from(a.oracle_mode), a.bound),
    };
    let report = result.map_err(|e| match e {
        ktag_core::adversary::AdversaryError::Precondition(msg) => usage(msg),
        other => other.into(),
    })?;
    if let Some(dir) = &a.out {
        write_runs(&report, dir)?;
    }
    let overall = report.outcome.overall();
    if json {
        let mut summary = report.summary();
        summary["candidate"] = json!(cand.name());
        summary["overall"] = json!(overall);
        emit(&summary);
    } else {
        println!("{} against {}", report.construction, label(&cand));
        for r in &report.runs {
            println!("{:<14} decisions {} verdict {}", r.name, decisions_text(&r.run), r.verdict.overall());
            print_failures(&r.verdict);
        }
        println!("outcome {}", serde_json::to_string(&report.outcome)?);
        println!("demonstration {overall}");
    }
    Ok(exit_code(overall))
}

fn cmd_allowed(a: AllowedArgs, json: bool) -> Result<u8> {
    let w: PartialVector = a.inputs.parse().map_err(usage)?;
    let n = a.n.unwrap_or(w.n());
    let problem = match a.problem {
        ProblemArg::Ktag => ProblemSpec::threshold(a.k.ok_or_else(|| usage("--k is required for ktag"))?, n),
        ProblemArg::Wag => ProblemSpec::weak_agreement(n),
    }
    .map_err(|e| usage(e.to_string()))?;
    let set = oracle_allowed(&problem, a.faulty, &w).map_err(|e| usage(e.to_string()))?;
    if json {
        emit(&json!({
            "problem": problem.to_string(),
            "inputs": w.to_string(),
            "faulty": a.faulty,
            "allowed": set.iter().map(Bit::as_u8).collect::<Vec<_>>(),
        }));
    } else {
        println!("{set}");
    }
    Ok(0)
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Run(a) => cmd_run(a, cli.json),
        Cmd::Check(a) => cmd_check(a, cli.json),
        Cmd::Sweep(a) => cmd_sweep(a, cli.json),
        Cmd::Refute(a) => cmd_refute(a, cli.json),
        Cmd::Allowed(a) => cmd_allowed(a, cli.json),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.is::<Usage>() { 64 } else { 1 })
        }
    }
}
