//! End-to-end tests of the `matcalc` binary: output formats and the exit
//! status contract (0 success/pass, 1 check-fail or divergence, 2 usage,
//! parse, or I/O errors).

use std::io::Write;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_matcalc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

#[test]
fn diff_prints_canonical_derivative() {
    let out = run(&["diff", "sin(x^2)", "--wrt", "x"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "2 * x * cos(x^2)\n");
}

#[test]
fn grad_over_scalar_list() {
    let out = run(&["grad", "3*x^2*y", "--wrt", "x,y"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "[6 * x * y, 3 * x^2]\n");
}

#[test]
fn grad_over_vector_variable() {
    let out = run(&[
        "grad",
        "sum(w (*) x) + b",
        "--vec",
        "w:3",
        "--vec",
        "x:3",
        "--wrt",
        "w",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "[x_1, x_2, x_3]\n");
}

#[test]
fn jacobian_prints_diagonal_form() {
    let out = run(&[
        "jacobian", "w (*) x", "--vec", "w:3", "--vec", "x:3", "--wrt", "w",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "diag(x_1, x_2, x_3)\n");
}

#[test]
fn jacobian_prints_aligned_dense_grid() {
    let out = run(&[
        "jacobian",
        "sum(w) * x",
        "--vec",
        "w:2",
        "--vec",
        "x:2",
        "--wrt",
        "w",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| l.starts_with('[') && l.ends_with(']')));
    assert_eq!(lines[0], "[x_1  x_1]");
    assert_eq!(lines[1], "[x_2  x_2]");
}

#[test]
fn eval_prints_sig12_value() {
    let out = run(&["eval", "3*x^2*y", "--bind", "x=2", "--bind", "y=3"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "36\n");
}

#[test]
fn eval_vector_bindings() {
    let out = run(&[
        "eval",
        "sum(w (*) x)",
        "--vec",
        "w:2",
        "--vec",
        "x:2",
        "--bind",
        "w=[1,2]",
        "--bind",
        "x=[3,4]",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "11\n");
}

#[test]
fn eval_unbound_variable_is_usage_error() {
    let out = run(&["eval", "x + 1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("unbound variable `x`"));
}

#[test]
fn syntax_error_reports_position_and_exits_2() {
    let out = run(&["diff", "sin(x^2", "--wrt", "x"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("syntax error at 8"));
}

#[test]
fn empty_expression_exits_2() {
    let out = run(&["dot", ""]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("syntax error"));
}

#[test]
fn shape_error_exits_2() {
    let out = run(&["eval", "w (*) x", "--vec", "w:2", "--vec", "x:3"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("shape"));
}

#[test]
fn check_passes_with_exit_0() {
    let out = run(&["check", "ln(sin(x^3)^2)", "--wrt", "x", "--bind", "x=0.5"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("verdict: pass"));
    assert!(text.contains("ok"));
}

#[test]
fn check_failure_exits_1() {
    // Zero tolerances turn ordinary truncation error into a failure.
    let out = run(&[
        "check",
        "sin(x^2)",
        "--wrt",
        "x",
        "--bind",
        "x=1",
        "--tol-abs",
        "0",
        "--tol-rel",
        "0",
    ]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("verdict: fail"));
}

#[test]
fn check_at_kink_skips_and_passes() {
    let out = run(&["check", "max0(z)", "--wrt", "z", "--bind", "z=0"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("skipped"));
    assert!(text.contains("verdict: pass (1 entries skipped near kinks)"));
}

#[test]
fn tape_prints_intermediate_bindings() {
    let out = run(&["tape", "ln(sin(x^3)^2)"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("u1 = x^3"));
    assert!(lines[1].starts_with("u2 = sin(u1)"));
    assert!(lines[2].starts_with("u3 = u2^2"));
    assert!(lines[3].starts_with("u4 = ln(u3)"));
}

#[test]
fn tape_with_wrt_appends_symbolic_derivative() {
    let out = run(&["tape", "sin(x^2)", "--wrt", "x"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).ends_with("d/dx = 2 * x * cos(x^2)\n"));
}

#[test]
fn dot_writes_graph_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.dot");
    let out = run(&["dot", "x + x^2", "-o", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("digraph tape {"));
    // x feeds both the square and the addition.
    assert_eq!(text.matches("\"x\" ->").count(), 2);
}

#[test]
fn dot_write_failure_exits_2() {
    let out = run(&["dot", "x", "-o", "/nonexistent-dir/g.dot"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("cannot write"));
}

#[test]
fn train_fixture_reaches_small_loss() {
    let out = run(&["train", "--seed", "42", "--eta", "0.05", "--epochs", "200"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 201);
    assert!(lines[0].starts_with("epoch 1 loss "));
    let last_epoch = lines[199];
    let loss: f64 = last_epoch.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(loss < 1e-3, "final loss {loss}");
    assert!(lines[200].starts_with("w = ["));
    assert!(lines[200].contains("] b = "));
}

#[test]
fn train_zero_epochs_prints_initial_model_only() {
    let out = run(&["train", "--seed", "42", "--epochs", "0"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "w = [0, 0, 0] b = 0\n");
}

#[test]
fn train_reads_csv_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "x1,x2,y").unwrap();
    writeln!(f, "1.0,0.5,2.0").unwrap();
    writeln!(f, "0.5,1.0,1.5").unwrap();
    drop(f);
    let out = run(&["train", "--data", path.to_str().unwrap(), "--epochs", "5"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).lines().count(), 6);
}

#[test]
fn train_malformed_csv_reports_line_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "x1,x2,y\n1.0,2.0,3.0\n4.0,oops,6.0\n").unwrap();
    let out = run(&["train", "--data", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 3"));

    std::fs::write(&path, "x1,x2,y\n1.0,2.0\n").unwrap();
    let out = run(&["train", "--data", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 2"));
}

#[test]
fn train_requires_data_or_seed() {
    let out = run(&["train"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--data") && stderr(&out).contains("--seed"));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = run(&["integrate", "x"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn fold_bias_flag_matches_unfolded_run() {
    let plain = run(&["train", "--seed", "42", "--epochs", "50"]);
    let folded = run(&["train", "--seed", "42", "--epochs", "50", "--fold-bias"]);
    assert_eq!(code(&plain), 0);
    assert_eq!(code(&folded), 0);
    let a = stdout(&plain);
    let b = stdout(&folded);
    let a_lines: Vec<&str> = a.lines().collect();
    let b_lines: Vec<&str> = b.lines().collect();
    assert_eq!(a_lines.len(), b_lines.len());
    // Identical arithmetic gives identical traces and parameters.
    assert_eq!(a_lines, b_lines);
}
