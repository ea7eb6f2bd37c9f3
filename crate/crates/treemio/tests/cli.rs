//! End-to-end CLI tests driving the compiled binary on fixtures only.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_treemio"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn gen_fixture(name: &str, dir: &Path) -> String {
    let path = dir.join(format!("{}.json", name));
    let out = run(&["gen", "--fixture", name, "-o", path.to_str().unwrap()]);
    assert!(out.status.success(), "gen {} failed", name);
    path.to_str().unwrap().to_string()
}

#[test]
fn build_writes_lp_and_prints_stats() {
    let dir = tempfile::tempdir().unwrap();
    let ex1 = gen_fixture("ex1", dir.path());
    let lp = dir.path().join("ex1.lp");
    let out = run(&["build", &ex1, "--kind", "misic", "-o", lp.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("binaries: 2"), "{}", text);
    assert!(text.contains("constraints: 6"), "{}", text);
    let written = std::fs::read_to_string(&lp).unwrap();
    assert!(written.starts_with("Maximize"));
    assert!(written.trim_end().ends_with("End"));
}

#[test]
fn build_rejects_unknown_kind_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let ex1 = gen_fixture("ex1", dir.path());
    let lp = dir.path().join("x.lp");
    let out = run(&["build", &ex1, "--kind", "nope", "-o", lp.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["build", "/nonexistent.json", "--kind", "misic", "-o", lp.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_reports_ensemble_maximum() {
    let dir = tempfile::tempdir().unwrap();
    let ex3 = gen_fixture("ex3", dir.path());
    let out = run(&["solve", &ex3, "--kind", "projected"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("status: optimal"), "{}", text);
    assert!(text.contains("objective: 3.500000000"), "{}", text);
    assert!(text.contains("w1 = "), "{}", text);
}

#[test]
fn solve_constrained_relaxation_reports_features() {
    let dir = tempfile::tempdir().unwrap();
    let ex4 = gen_fixture("ex4", dir.path());
    let out = run(&[
        "solve", &ex4, "--kind", "projected", "--relax", "--constraint", "w1 + w2 <= 3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("status: optimal"), "{}", text);
    assert!(text.contains("objective: 3.000000000"), "{}", text);
    let w: Vec<f64> = ["w1 = ", "w2 = "]
        .iter()
        .map(|p| {
            text.lines()
                .find_map(|l| l.strip_prefix(p))
                .unwrap()
                .trim()
                .parse()
                .unwrap()
        })
        .collect();
    assert!(w[0] + w[1] <= 3.0 + 1e-9, "{}", text);
}

#[test]
fn solve_rejects_w_constraints_on_binary_x_family() {
    let dir = tempfile::tempdir().unwrap();
    let ex3 = gen_fixture("ex3", dir.path());
    let out = run(&["solve", &ex3, "--kind", "misic", "--constraint", "w1 <= 1"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn solve_rejects_bad_constraint_syntax() {
    let dir = tempfile::tempdir().unwrap();
    let ex3 = gen_fixture("ex3", dir.path());
    let out = run(&["solve", &ex3, "--kind", "projected", "--constraint", "w1 < 1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["solve", &ex3, "--kind", "projected", "--constraint", "w7 <= 1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_examples_suite_passes() {
    let out = run(&["verify", "examples"]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).contains("0 failures"));
}

#[test]
fn verify_unknown_suite_is_usage_error() {
    let out = run(&["verify", "everything"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_emits_stable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rows.csv");
    let args = [
        "bench", "--d", "1", "--trees", "1,2", "--depth", "2", "--seeds", "2",
        "--kinds", "misic,projected", "--points", "15", "--seed", "4", "-o",
    ];
    let out = run(&[&args[..], &[csv.to_str().unwrap()]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read_to_string(&csv).unwrap();
    let mut lines = first.lines();
    assert_eq!(
        lines.next().unwrap(),
        "seed,d,T,depth,formulation,build_ms,solve_ms,status,mip_obj,lp_bound,gap_percent,nodes"
    );
    assert_eq!(first.lines().count(), 1 + 2 * 2 * 2);

    let out = run(&[&args[..], &[csv.to_str().unwrap()]].concat());
    assert!(out.status.success());
    let second = std::fs::read_to_string(&csv).unwrap();
    // Identical seeds reproduce identical rows except the timing columns.
    let strip = |text: &str| {
        text.lines()
            .map(|l| {
                let cols: Vec<&str> = l.split(',').collect();
                cols.iter()
                    .enumerate()
                    .filter(|(i, _)| *i != 5 && *i != 6)
                    .map(|(_, c)| *c)
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&first), strip(&second));
}

#[test]
fn bench_summary_reports_per_formulation() {
    let out = run(&[
        "bench", "--d", "1", "--trees", "1", "--depth", "2", "--seeds", "1",
        "--kinds", "misic,expset", "--points", "15", "--seed", "9", "--summary",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("geomean_solve_ms"), "{}", text);
    assert!(text.contains("misic,"), "{}", text);
    assert!(text.contains("expset,"), "{}", text);
}

#[test]
fn gen_respects_env_seed() {
    let run_env = |seed: &str| {
        let out = bin()
            .args(["gen", "--d", "2", "--trees", "2", "--depth", "2", "--points", "15"])
            .env("TREEMIO_SEED", seed)
            .output()
            .unwrap();
        assert!(out.status.success());
        stdout(&out)
    };
    assert_eq!(run_env("11"), run_env("11"));
    assert_ne!(run_env("11"), run_env("12"));
}

#[test]
fn gen_unknown_fixture_is_usage_error() {
    let out = run(&["gen", "--fixture", "ex99"]);
    assert_eq!(out.status.code(), Some(2));
}
