//! Flag parsing for the `ktag` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ktag_core::protocols::ProtocolSpec;
use ktag_core::{AnswerPolicy, Bit, FailurePattern, OracleChoice, PowerMode, ProblemSpec, ProcessId, TaskSpec};

/// Raised for flags that parse but do not fit together.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "ktag", version, about = "Simulate and check threshold agreement reductions")]
pub struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Simulate one run, write its trace and judge it.
    Run(RunArgs),
    /// Judge a recorded trace.
    Check(CheckArgs),
    /// Judge many randomized runs.
    Sweep(SweepArgs),
    /// Build a counterexample schedule against a candidate.
    Refute(RefuteArgs),
    /// Print the admissible oracle answers for a partial vector.
    Allowed(AllowedArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolKind {
    Direct,
    Fig1,
    Fig2,
    Fig3max,
    Fig3min,
    Fig4,
    Noop,
    /// Query the consensus oracle with the input and decide the answer.
    #[value(alias = "naive")]
    QueryDecide,
    /// Decide 0 without communicating.
    Const0,
    /// Decide 1 without communicating.
    Const1,
}

#[derive(Debug, Clone, Args)]
pub struct ProtocolArgs {
    #[arg(long, value_enum)]
    pub protocol: ProtocolKind,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub f: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Task solved by `noop`, e.g. `ktag:2,3,1` or `wag:3,1`.
    #[arg(long, value_parser = parse_task)]
    pub task: Option<TaskSpec>,
    /// Task of the oracle `noop` relies on.
    #[arg(long, value_parser = parse_task)]
    pub via: Option<TaskSpec>,
    /// Oracle power and answer policy, `mode:policy`.
    #[arg(long, value_parser = parse_oracle)]
    pub oracle: Option<(PowerMode, PolicyKind)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyKind {
    Prefer0,
    Prefer1,
    Seeded,
}

impl PolicyKind {
    pub fn resolve(self, seed: u64) -> AnswerPolicy {
        match self {
            PolicyKind::Prefer0 => AnswerPolicy::Prefer0,
            PolicyKind::Prefer1 => AnswerPolicy::Prefer1,
            PolicyKind::Seeded => AnswerPolicy::Seeded(seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    General,
    Consistent,
    Sham,
}

impl From<ModeArg> for PowerMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::General => PowerMode::General,
            ModeArg::Consistent => PowerMode::Consistent,
            ModeArg::Sham => PowerMode::Sham,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub proto: ProtocolArgs,
    /// One bit per process, process 1 first.
    #[arg(long)]
    pub inputs: String,
    /// Crash schedule `p@t,...`; empty for none.
    #[arg(long, default_value = "")]
    pub crashes: String,
    /// Scheduler seed; without it processes take turns round-robin.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = ktag_core::runtime::DEFAULT_STEP_BOUND)]
    pub bound: u64,
    /// Where to write the JSONL trace.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Task to judge against; defaults to the one recorded in the trace.
    #[arg(long, value_parser = parse_task)]
    pub task: Option<TaskSpec>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub proto: ProtocolArgs,
    /// Random trials; ignored with --exhaustive-inputs.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Every input vector crossed with sampled crashes, policies and seeds.
    #[arg(long)]
    pub exhaustive_inputs: bool,
    #[arg(long, default_value_t = 200)]
    pub crash_samples: usize,
    #[arg(long, default_value_t = 5)]
    pub scheduler_seeds: usize,
    #[arg(long, default_value_t = ktag_core::runtime::DEFAULT_STEP_BOUND)]
    pub bound: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Construction {
    Ir1,
    Ir3,
}

#[derive(Debug, Args)]
pub struct RefuteArgs {
    #[arg(long, value_enum)]
    pub construction: Construction,
    #[arg(long, value_enum)]
    pub candidate: ProtocolKind,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub f: usize,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum, default_value = "general")]
    pub oracle_mode: ModeArg,
    #[arg(long, default_value_t = ktag_core::runtime::DEFAULT_STEP_BOUND)]
    pub bound: u64,
    /// Directory for the emitted traces, one `<run>.jsonl` each.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProblemArg {
    Ktag,
    Wag,
}

#[derive(Debug, Args)]
pub struct AllowedArgs {
    #[arg(long, value_enum, default_value = "ktag")]
    pub problem: ProblemArg,
    #[arg(long)]
    pub k: Option<usize>,
    /// Defaults to the length of --inputs.
    #[arg(long)]
    pub n: Option<usize>,
    /// Partial vector over `0`, `1` and `?`.
    #[arg(long)]
    pub inputs: String,
    #[arg(long, default_value_t = 0)]
    pub faulty: usize,
}

pub fn parse_task(s: &str) -> Result<TaskSpec, String> {
    let (kind, rest) = s.split_once(':').ok_or("expected ktag:k,n,f or wag:n,f")?;
    let nums = rest
        .split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    let problem = match (kind, nums.as_slice()) {
        ("ktag", &[k, n, _]) => ProblemSpec::threshold(k, n),
        ("wag", &[n, _]) => ProblemSpec::weak_agreement(n),
        _ => return Err("expected ktag:k,n,f or wag:n,f".into()),
    }
    .map_err(|e| e.to_string())?;
    TaskSpec::new(problem, *nums.last().expect("matched above")).map_err(|e| e.to_string())
}

pub fn parse_oracle(s: &str) -> Result<(PowerMode, PolicyKind), String> {
    let (mode, policy) = s.split_once(':').unwrap_or((s, "prefer0"));
    let mode = ModeArg::from_str(mode, true)?;
    let policy = PolicyKind::from_str(policy, true)?;
    Ok((mode.into(), policy))
}

pub fn parse_crashes(s: &str, n: usize) -> anyhow::Result<FailurePattern> {
    let mut crashes = Vec::new();
    for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        let (p, t) = item.split_once('@').ok_or_else(|| usage(format!("crash {item:?} is not p@t")))?;
        let p: usize = p.trim().parse().map_err(|_| usage(format!("bad process in {item:?}")))?;
        let t: u64 = t.trim().parse().map_err(|_| usage(format!("bad time in {item:?}")))?;
        if p == 0 || p > n {
            return Err(usage(format!("process {p} is not in 1..={n}")));
        }
        if crashes.iter().any(|&(q, _)| q == ProcessId(p)) {
            return Err(usage(format!("process {p} crashes twice")));
        }
        crashes.push((ProcessId(p), t));
    }
    Ok(FailurePattern::from_crashes(n, crashes))
}

fn need(v: Option<usize>, flag: &str, kind: ProtocolKind) -> anyhow::Result<usize> {
    v.ok_or_else(|| usage(format!("--{flag} is required for {kind:?}").to_lowercase()))
}

/// The protocol the flags describe. `seed` feeds a seeded answer policy.
pub fn build_protocol(a: &ProtocolArgs, seed: u64) -> anyhow::Result<ProtocolSpec> {
    let kind = a.protocol;
    let n = || need(a.n, "n", kind);
    let f = || need(a.f, "f", kind);
    let k = || need(a.k, "k", kind);
    let built = match kind {
        ProtocolKind::Direct => ProtocolSpec::direct(n()?, f()?, k()?),
        ProtocolKind::Fig1 => ProtocolSpec::fig1(n()?, f()?),
        ProtocolKind::Fig2 => ProtocolSpec::fig2(n()?, f()?),
        ProtocolKind::Fig3max => ProtocolSpec::fig3_max(n()?, f()?, k()?),
        ProtocolKind::Fig3min => ProtocolSpec::fig3_min(n()?, f()?, k()?),
        ProtocolKind::Fig4 => ProtocolSpec::fig4(n()?, f()?),
        ProtocolKind::Noop => {
            let task = a.task.ok_or_else(|| usage("--task is required for noop"))?;
            let via = a.via.ok_or_else(|| usage("--via is required for noop"))?;
            ProtocolSpec::noop(task, via)
        }
        ProtocolKind::QueryDecide => ProtocolSpec::query_decide(n()?, f()?, k()?),
        ProtocolKind::Const0 | ProtocolKind::Const1 => {
            let value = if kind == ProtocolKind::Const0 { Bit::Zero } else { Bit::One };
            ProtocolSpec::constant(n()?, f()?, k()?, value)
        }
    }
    .map_err(|e| usage(e.to_string()))?;
    Ok(match a.oracle {
        Some((mode, policy)) => built.with_oracle(OracleChoice::new(mode, policy.resolve(seed))),
        None => built,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_strings() {
        assert_eq!(parse_task("ktag:2,3,1").unwrap(), TaskSpec::threshold(2, 3, 1).unwrap());
        assert_eq!(parse_task("wag:3,1").unwrap().problem, ProblemSpec::weak_agreement(3).unwrap());
        assert!(parse_task("ktag:4,3,1").is_err());
        assert!(parse_task("ktag:2,3").is_err());
    }

    #[test]
    fn oracle_strings() {
        assert_eq!(parse_oracle("sham:prefer1").unwrap(), (PowerMode::Sham, PolicyKind::Prefer1));
        assert_eq!(parse_oracle("consistent").unwrap(), (PowerMode::Consistent, PolicyKind::Prefer0));
        assert!(parse_oracle("loud:prefer0").is_err());
    }

    #[test]
    fn crash_strings() {
        let p = parse_crashes("2@5, 3@0", 3).unwrap();
        assert_eq!(p.crash_time(ProcessId(2)), Some(5));
        assert_eq!(p.crash_time(ProcessId(3)), Some(0));
        assert_eq!(parse_crashes("", 3).unwrap(), FailurePattern::failure_free(3));
        assert!(parse_crashes("4@1", 3).is_err());
        assert!(parse_crashes("1@1,1@2", 3).is_err());
        assert!(parse_crashes("1-1", 3).is_err());
    }
}
