use std::path::PathBuf;
use std::process::{Command, Output};

use answerability::parser::parse_and_check;
use answerability_core::constraints::{Dependency, Tgd};
use answerability_core::model::Atom;

fn data(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(file)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_answerability"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(file: &str) -> String {
    data(file).display().to_string()
}

#[test]
fn q2_is_answerable() {
    let o = run(&["decide", &path("university.dsl"), "--query", "Q2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("Answerable\n"), "{}", stdout(&o));
}

#[test]
fn q1_with_bound_is_not_answerable() {
    let o = run(&["decide", &path("university.dsl"), "--query", "Q1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("NotAnswerable\n"));
}

#[test]
fn q3_is_answerable_through_the_fd() {
    let o = run(&["--json", "decide", &path("directory_fd.dsl"), "--query", "Q3"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["answer"], "Answerable");
    assert_eq!(v["route"], "FdRoute");
}

#[test]
fn existence_simplification_prints_the_two_ids() {
    let o = run(&["simplify", &path("university.dsl"), "--kind", "existence"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let doc = parse_and_check(&text).unwrap().document;
    let id = |b: Atom, h: Atom| Dependency::Tgd(Tgd::new(vec![b], vec![h]));
    let to_view = id(
        Atom::vars("Udirectory", &["x1", "x2", "x3"]),
        Atom::vars("Udirectory__ud", &[]),
    );
    let from_view = id(
        Atom::vars("Udirectory__ud", &[]),
        Atom::vars("Udirectory", &["x1", "x2", "x3"]),
    );
    assert!(doc.schema.constraints.contains(&to_view), "{text}");
    assert!(doc.schema.constraints.contains(&from_view), "{text}");
    assert!(text.contains("method ud' on Udirectory__ud inputs ();"), "{text}");
}

#[test]
fn tiny_budget_on_recursive_tgds_is_unknown() {
    let o = run(&["decide", &path("recursive.dsl"), "--query", "Q", "--budget-depth", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).starts_with("Unknown\n"));
}

#[test]
fn parse_errors_exit_one_with_positions() {
    let dir = std::env::temp_dir().join(format!("answerability-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let f = dir.join("bad.dsl");
    std::fs::write(&f, "relation R/2;\nrelation S/1;\nid R(x,x) -> S(x);\n").unwrap();
    let o = run(&["check", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("bad.dsl:3:4: error: repeated variable `x`"), "{err}");
    let o = run(&["--json", "check", f.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["diagnostics"][0]["span"]["line"], 3);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn unknown_query_is_an_error() {
    let o = run(&["decide", &path("university.dsl"), "--query", "Nope"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn plan_eval_splits_the_semantics() {
    let idem = run(&["plan-eval", &path("twosem.dsl"), "--plan", "P", "--semantics", "idem"]);
    assert_eq!(stdout(&idem), "1 possible output(s)\n{()}\n");
    let non = run(&["plan-eval", &path("twosem.dsl"), "--plan", "P", "--semantics", "nonidem"]);
    assert_eq!(stdout(&non), "2 possible output(s)\n{}\n{()}\n");
}

#[test]
fn plan_eval_runs_over_the_file_facts() {
    let o = run(&["plan-eval", &path("university.dsl"), "--plan", "Salaries"]);
    assert_eq!(stdout(&o), "1 possible output(s)\n{(\"ann\")}\n");
}

#[test]
fn reduce_lists_the_counting_axioms() {
    let o = run(&["reduce", &path("university.dsl"), "--query", "Q1"]);
    let text = stdout(&o);
    assert_eq!(text.matches("# counting ud on Udirectory").count(), 99);
    let rules: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    parse_and_check(&rules).unwrap();
}

#[test]
fn chase_emits_dot_and_json() {
    let dot = run(&["chase", &path("directory_fd.dsl"), "--query", "Q3"]);
    assert!(stdout(&dot).starts_with("digraph chase {"));
    let json = run(&["chase", &path("directory_fd.dsl"), "--query", "Q3", "--emit", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["outcome"], "Stopped");
}

#[test]
fn saturate_and_linearize_print_parsable_rules() {
    let sat = stdout(&run(&["saturate", &path("university.dsl")]));
    assert!(sat.contains("tgd accessible(x1), Prof(x1,x2,x3) -> accessible(x2);"), "{sat}");
    let lin = stdout(&run(&["linearize", &path("university.dsl"), "--query", "Q1"]));
    let doc = answerability::parser::parse(&lin).unwrap().document;
    assert!(!doc.schema.constraints.is_empty());
}

#[test]
fn diff_reports_no_disagreements() {
    let o = run(&["diff", "--family", "fd", "--seed", "3", "--count", "20"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("0 disagreements, 0 errors"));
}

#[test]
fn output_is_deterministic() {
    let a = run(&["--json", "decide", &path("university.dsl"), "--query", "Q2"]);
    let b = run(&["--json", "decide", &path("university.dsl"), "--query", "Q2"]);
    assert_eq!(a.stdout, b.stdout);
}
