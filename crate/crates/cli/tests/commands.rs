use std::fs;
use std::process::{Command, Output};

fn ktag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ktag")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn fig4_all_ones_decides_one() {
    let o = ktag(&["run", "--protocol", "fig4", "--n", "2", "--f", "1", "--inputs", "11", "--oracle", "sham:prefer0", "--seed", "1"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("decisions 1,1"), "{}", stdout(&o));
}

#[test]
fn fig2_needs_a_majority() {
    let o = ktag(&["run", "--protocol", "fig2", "--n", "2", "--f", "1", "--inputs", "11"]);
    assert_eq!(code(&o), 64);
    assert!(String::from_utf8_lossy(&o.stderr).contains("n > 2f"));
}

#[test]
fn bad_flags_exit_64() {
    assert_eq!(code(&ktag(&["run", "--protocol", "fig4", "--n", "2", "--f", "1", "--inputs", "11", "--bogus"])), 64);
    assert_eq!(code(&ktag(&["run", "--protocol", "fig4", "--n", "2", "--f", "1", "--inputs", "111"])), 64);
    assert_eq!(code(&ktag(&["run", "--protocol", "fig1", "--n", "3", "--inputs", "111"])), 64);
    assert_eq!(code(&ktag(&["run", "--protocol", "fig1", "--n", "3", "--f", "1", "--inputs", "111", "--crashes", "9@1"])), 64);
    assert_eq!(code(&ktag(&["check", "--trace", "/nonexistent/trace.jsonl"])), 64);
    assert_eq!(code(&ktag(&["--help"])), 0);
}

#[test]
fn fig1_takes_the_minimum() {
    let o = ktag(&["run", "--protocol", "fig1", "--n", "3", "--f", "1", "--inputs", "001", "--crashes", ""]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("decisions 0,0,0"));
}

#[test]
fn traces_are_byte_identical_and_check_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let args = |p: &str| {
        ["run", "--protocol", "fig2", "--n", "5", "--f", "2", "--inputs", "01101", "--crashes", "2@7,5@30", "--seed", "42", "--json", "--trace", p]
            .map(String::from)
    };
    let ra = Command::new(env!("CARGO_BIN_EXE_ktag")).args(args(a.to_str().unwrap())).output().unwrap();
    let rb = Command::new(env!("CARGO_BIN_EXE_ktag")).args(args(b.to_str().unwrap())).output().unwrap();
    assert_eq!(code(&ra), 0);
    assert_eq!(code(&rb), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let run: serde_json::Value = serde_json::from_slice(&ra.stdout).unwrap();
    let check = ktag(&["check", "--json", "--trace", a.to_str().unwrap()]);
    assert_eq!(code(&check), 0);
    let checked: serde_json::Value = serde_json::from_slice(&check.stdout).unwrap();
    assert_eq!(run["verdict"], checked["verdict"]);
    assert_eq!(run["decisions"], checked["decisions"]);
}

#[test]
fn corrupted_traces_fail_structure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let o = ktag(&["run", "--protocol", "fig1", "--n", "3", "--f", "1", "--inputs", "011", "--trace", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(&path).unwrap();

    let mut lines: Vec<&str> = text.lines().collect();
    let send = lines.iter().position(|l| l.contains("\"kind\":\"S\"")).unwrap();
    lines.remove(send);
    fs::write(&path, lines.join("\n")).unwrap();
    let o = ktag(&["check", "--trace", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("structure.R3"));

    fs::write(&path, "{ not json").unwrap();
    let o = ktag(&["check", "--json", "--trace", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["overall"], "fail");
}

#[test]
fn split_decisions_fail_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    ktag(&["run", "--protocol", "fig4", "--n", "2", "--f", "1", "--inputs", "11", "--trace", path.to_str().unwrap()]);
    let text = fs::read_to_string(&path).unwrap();
    let last_decide = text.rfind("\"kind\":\"D\"").unwrap();
    let line_end = last_decide + text[last_decide..].find('\n').unwrap_or(text.len() - last_decide);
    let line = &text[last_decide..line_end];
    let edited = format!("{}{}{}", &text[..last_decide], line.replace("\"value\":1", "\"value\":0"), &text[line_end..]);
    assert_ne!(edited, text);
    fs::write(&path, edited).unwrap();
    let o = ktag(&["check", "--task", "ktag:2,2,1", "--trace", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).lines().any(|l| l.starts_with("task.agreement") && l.contains("FAIL")), "{}", stdout(&o));
}

#[test]
fn allowed_examples() {
    let cases = [
        (["--k", "2", "--n", "3", "--inputs", "1?0", "--faulty", "0"], "{0}"),
        (["--k", "3", "--n", "3", "--inputs", "111", "--faulty", "2"], "{1}"),
        (["--k", "1", "--n", "2", "--inputs", "0?", "--faulty", "0"], "{0}"),
        (["--k", "2", "--n", "3", "--inputs", "1??", "--faulty", "0"], "{}"),
        (["--k", "2", "--n", "3", "--inputs", "11?", "--faulty", "0"], "{1}"),
    ];
    for (args, want) in cases {
        let mut all = vec!["allowed"];
        all.extend(args);
        let o = ktag(&all);
        assert_eq!(code(&o), 0);
        assert_eq!(stdout(&o).trim(), want, "{args:?}");
    }
    assert_eq!(code(&ktag(&["allowed", "--k", "4", "--inputs", "1?0"])), 64);
}

#[test]
fn refute_exit_codes() {
    assert_eq!(code(&ktag(&["refute", "--construction", "ir1", "--candidate", "naive", "--n", "3", "--f", "1", "--k", "1"])), 0);
    assert_eq!(code(&ktag(&["refute", "--construction", "ir3", "--candidate", "fig4", "--n", "2", "--f", "1"])), 0);
    let o = ktag(&["refute", "--json", "--construction", "ir3", "--candidate", "fig4", "--n", "2", "--f", "1", "--oracle-mode", "sham"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["outcome"]["outcome"], "blocked");
    assert_eq!(code(&ktag(&["refute", "--construction", "ir3", "--candidate", "fig4", "--n", "3", "--f", "1"])), 64);
}

#[test]
fn refute_writes_traces() {
    let dir = tempfile::tempdir().unwrap();
    let o = ktag(&["refute", "--construction", "ir1", "--candidate", "const0", "--n", "3", "--f", "1", "--k", "1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    for name in ["rho", "rho_flipped", "rho0"] {
        let path = dir.path().join(format!("{name}.jsonl"));
        assert!(path.exists(), "{name}");
        let c = ktag(&["check", "--trace", path.to_str().unwrap()]);
        assert_ne!(code(&c), 64);
    }
}

#[test]
fn sweep_reports_counts() {
    let o = ktag(&["sweep", "--json", "--protocol", "fig4", "--n", "3", "--f", "2", "--trials", "300", "--seed", "5"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["summary"]["trials"], 300);
    assert_eq!(v["summary"]["fail"], 0);
    let again = ktag(&["sweep", "--json", "--protocol", "fig4", "--n", "3", "--f", "2", "--trials", "300", "--seed", "5"]);
    assert_eq!(o.stdout, again.stdout);
}
