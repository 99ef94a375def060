use std::process::{Command, Output};

fn qudo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qudo"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn generate_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("a.json");
    let inst = inst.to_str().unwrap();
    let g = qudo(&[
        "generate", "--kind", "qubo", "--n", "12", "--k", "2", "--seed", "3", "--output", inst,
    ]);
    assert!(g.status.success(), "{}", stderr(&g));
    let s = qudo(&[
        "solve",
        "--input",
        inst,
        "--method",
        "waterfall",
        "--tau",
        "20",
    ]);
    assert!(s.status.success(), "{}", stderr(&s));
    let out = stdout(&s);
    assert!(out.contains("cost:"));
    assert!(out.contains("w_prob:"));
}

#[test]
fn compare_against_brute_reports_errors() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("b.json");
    let inst = inst.to_str().unwrap();
    qudo(&[
        "generate", "--kind", "qudo", "--n", "7", "--d", "3", "--k", "2", "--seed", "1", "--lin",
        "--output", inst,
    ]);
    let c = qudo(&[
        "compare",
        "--input",
        inst,
        "--method",
        "matrix,brute",
        "--tau-grid",
        "0.1,500,20",
    ]);
    assert!(c.status.success(), "{}", stderr(&c));
    let out = stdout(&c);
    assert!(out.starts_with("instance,"));
    assert_eq!(out.lines().count(), 3);
}

#[test]
fn usage_errors_exit_two() {
    let o = qudo(&["generate", "--n", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error kind=usage"));
    let o = qudo(&["generate", "--kind", "qubo", "--n", "4", "--d", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn capacity_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("c.json");
    let inst = inst.to_str().unwrap();
    qudo(&["generate", "--n", "30", "--d", "3", "--output", inst]);
    let o = qudo(&["solve", "--input", inst, "--method", "dense"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error kind="), "{}", stderr(&o));
}

#[test]
fn missing_input_is_an_io_error() {
    let o = qudo(&["solve", "--input", "/nonexistent/x.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error kind=io"));
}
