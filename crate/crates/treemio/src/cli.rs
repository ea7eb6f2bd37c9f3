//! Command-line front end: build/solve/verify/bench/gen.
//!
//! Exit codes: 0 success, 1 verification or solve failure, 2 usage/IO/schema
//! errors, 3 unsupported formulation (e.g. feature constraints on a model
//! without feature variables).

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{
    self, check_containment, check_implication_lemma2, check_sharpness_1d, check_tu,
    expset_equality_matrix_1d, nested_pairs, oracle_optimum, probe_integrality,
};
use crate::fixtures::{gen_triangle_data, example_fixture, train_cart, train_forest};
use crate::formulations::{
    attach_constraints, build, set_objective, BuildOptions, FormulationError, FormulationKind,
    Objective,
};
use crate::model::{relax, write_lp, MipModel, ObjSense, Sense, Status, VarRole};
use crate::solver::{is_vertex, solve_lp, solve_mip, SolverConfig};
use crate::tree::{build_split_index, ensemble_to_json, parse_ensemble, TreeEnsemble};

pub const DEFAULT_SEED: u64 = 20240824;

#[derive(Debug)]
pub enum CliError {
    /// Usage, IO, or schema problems → exit 2.
    Usage(String),
    /// The requested operation is not supported by the formulation → exit 3.
    Unsupported(String),
    /// A check or solve did not succeed → exit 1.
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failure(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Unsupported(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Unsupported(m) | CliError::Failure(m) => m,
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Parser, Debug)]
#[command(
    name = "treemio",
    about = "Compile trained tree ensembles into MIP formulations, solve, and verify",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a formulation from an ensemble JSON file and write it as an LP file.
    Build(BuildArgs),
    /// Build and optimize a formulation (MIP by default, LP with --relax).
    Solve(SolveArgs),
    /// Run a verification suite over fixtures and seeded instances.
    Verify(VerifyArgs),
    /// Benchmark the formulations over a seeded grid of random instances; CSV out.
    Bench(BenchArgs),
    /// Emit an ensemble JSON file: a named fixture or a seeded random forest.
    Gen(GenArgs),
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    /// Ensemble JSON file.
    pub ensemble: PathBuf,
    /// Formulation kind.
    #[arg(long)]
    pub kind: FormulationKind,
    /// Output LP file.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Fixed big-M value (bigm kind only; default is the per-constraint tightest M).
    #[arg(long)]
    pub bigm: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Ensemble JSON file.
    pub ensemble: PathBuf,
    /// Formulation kind.
    #[arg(long)]
    pub kind: FormulationKind,
    /// Solve the linear relaxation instead of the MIP.
    #[arg(long)]
    pub relax: bool,
    /// Minimize instead of maximize the ensemble output.
    #[arg(long)]
    pub minimize: bool,
    /// Extra linear constraint over the features, e.g. "2*w1 + w2 <= 3". Repeatable.
    #[arg(long = "constraint")]
    pub constraints: Vec<String>,
    /// Fixed big-M value (bigm kind only).
    #[arg(long)]
    pub bigm: Option<f64>,
    /// Time limit in seconds for branch-and-bound.
    #[arg(long)]
    pub time_limit_s: Option<f64>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Suite: ideal | containment | tu | sharp | lemma2 | examples | all.
    pub suite: String,
    /// Base seed for the seeded instances (default: TREEMIO_SEED or built-in).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Feature counts, comma separated.
    #[arg(long, default_value = "1,2,3", value_delimiter = ',')]
    pub d: Vec<usize>,
    /// Ensemble sizes, comma separated.
    #[arg(long, default_value = "1,2,4,8", value_delimiter = ',')]
    pub trees: Vec<usize>,
    /// Tree depth.
    #[arg(long, default_value_t = 4)]
    pub depth: usize,
    /// Number of seeds per grid point.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// Formulations, comma separated (default: all eight).
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<FormulationKind>>,
    /// Time limit per MIP solve, in seconds.
    #[arg(long)]
    pub time_limit_s: Option<f64>,
    /// Training points per instance.
    #[arg(long, default_value_t = 40)]
    pub points: usize,
    /// Write the CSV here instead of stdout.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Print a per-formulation geometric-mean summary after the CSV.
    #[arg(long)]
    pub summary: bool,
    /// Base seed (default: TREEMIO_SEED or built-in).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Named fixture (ex1, ex2, ex3, ex4, fig3a, fig3b, elbow_segment).
    #[arg(long, conflicts_with_all = ["d", "trees", "depth", "points"])]
    pub fixture: Option<String>,
    /// Feature count for a random forest.
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Number of trees.
    #[arg(long, default_value_t = 2)]
    pub trees: usize,
    /// Tree depth.
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    /// Training points.
    #[arg(long, default_value_t = 40)]
    pub points: usize,
    /// Seed (default: TREEMIO_SEED or built-in).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (stdout if omitted).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

/// Seed resolution order: explicit flag, then TREEMIO_SEED, then default.
pub fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| {
        std::env::var("TREEMIO_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
    })
    .unwrap_or(DEFAULT_SEED)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Build(a) => cmd_build(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Gen(a) => cmd_gen(a),
    }
}

// ---------------------------------------------------------------------------
// build
// ---------------------------------------------------------------------------

fn load_ensemble(path: &PathBuf) -> Result<TreeEnsemble<f64>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {}", path.display(), e)))?;
    parse_ensemble(&text).map_err(usage)
}

fn build_model(
    ensemble: &TreeEnsemble<f64>,
    kind: FormulationKind,
    bigm: Option<f64>,
) -> Result<MipModel<f64>, CliError> {
    let index = build_split_index(ensemble);
    build(kind, ensemble, &index, &BuildOptions { bigm }).map_err(|e| usage(e.to_string()))
}

fn cmd_build(a: BuildArgs) -> Result<(), CliError> {
    let ensemble = load_ensemble(&a.ensemble)?;
    let model = build_model(&ensemble, a.kind, a.bigm)?;
    let lp = write_lp(&model).map_err(usage)?;
    fs::write(&a.out, lp).map_err(|e| usage(format!("cannot write {}: {}", a.out.display(), e)))?;
    let s = model.stats();
    println!("formulation: {}", a.kind);
    println!("variables: {}", s.num_variables);
    println!("constraints: {}", s.num_constraints);
    println!("binaries: {}", s.num_binaries);
    println!("nonzeros: {}", s.num_nonzeros);
    println!("wrote {}", a.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

/// Parse "c1*w1 + c2*w2 <= b" into a sparse row over 0-based feature indices.
pub fn parse_constraint(
    text: &str,
    num_features: usize,
) -> Result<(Vec<(usize, f64)>, Sense, f64), String> {
    let (sense, op) = if text.contains("<=") {
        (Sense::Le, "<=")
    } else if text.contains(">=") {
        (Sense::Ge, ">=")
    } else if text.contains('=') {
        (Sense::Eq, "=")
    } else {
        return Err(format!("constraint `{}` has no operator (<=, >=, =)", text));
    };
    let mut parts = text.splitn(2, op);
    let lhs = parts.next().unwrap();
    let rhs_text = parts.next().ok_or_else(|| format!("constraint `{}` has no right-hand side", text))?;
    let rhs: f64 = rhs_text
        .trim()
        .parse()
        .map_err(|_| format!("bad right-hand side `{}`", rhs_text.trim()))?;

    // Tokenize the left-hand side into signed terms.
    let mut row: Vec<(usize, f64)> = Vec::new();
    let mut term = String::new();
    let mut terms: Vec<String> = Vec::new();
    for ch in lhs.chars() {
        match ch {
            '+' | '-' if !term.trim().is_empty() => {
                terms.push(std::mem::take(&mut term));
                term.push(ch);
            }
            _ => term.push(ch),
        }
    }
    if !term.trim().is_empty() {
        terms.push(term);
    }
    if terms.is_empty() {
        return Err(format!("constraint `{}` has an empty left-hand side", text));
    }
    for t in terms {
        let t = t.replace(char::is_whitespace, "");
        let (coeff_text, var_text) = match t.split_once('*') {
            Some((c, v)) => (c.to_string(), v.to_string()),
            None => {
                // Bare `w2`, `-w2`, or a sign-prefixed variable.
                let stripped = t.trim_start_matches(['+', '-']);
                let sign = if t.starts_with('-') { "-1" } else { "1" };
                (sign.to_string(), stripped.to_string())
            }
        };
        let coeff: f64 = match coeff_text.as_str() {
            "" | "+" => 1.0,
            "-" => -1.0,
            c => c.parse().map_err(|_| format!("bad coefficient `{}`", c))?,
        };
        let idx: usize = var_text
            .strip_prefix('w')
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .ok_or_else(|| format!("bad variable `{}` (expected w1..w{})", var_text, num_features))?;
        if idx > num_features {
            return Err(format!("variable w{} out of range (d = {})", idx, num_features));
        }
        row.push((idx - 1, coeff));
    }
    Ok((row, sense, rhs))
}

fn cmd_solve(a: SolveArgs) -> Result<(), CliError> {
    let ensemble = load_ensemble(&a.ensemble)?;
    let mut model = build_model(&ensemble, a.kind, a.bigm)?;
    let rows: Vec<_> = a
        .constraints
        .iter()
        .map(|c| parse_constraint(c, ensemble.num_features))
        .collect::<Result<_, _>>()
        .map_err(CliError::Usage)?;
    attach_constraints(&mut model, &rows).map_err(|e| match e {
        FormulationError::UnsupportedFormulation(m) => CliError::Unsupported(m),
        other => usage(other),
    })?;
    let obj = if a.minimize { Objective::MinY } else { Objective::MaxY };
    set_objective(&mut model, obj).map_err(usage)?;

    let mut config = SolverConfig::default();
    config.time_limit = a.time_limit_s.map(Duration::from_secs_f64);
    let start = Instant::now();
    let result = if a.relax {
        solve_lp(&relax(&model), &config)
    } else {
        solve_mip(&model, &config)
    };
    let elapsed = start.elapsed();

    println!("status: {}", result.status);
    println!("objective: {:.9}", result.objective);
    if a.kind.has_w() {
        for i in 0..ensemble.num_features {
            if let Some(v) = result.value_of(&model, VarRole::Feature(i)) {
                println!("w{} = {:.9}", i + 1, v);
            }
        }
    }
    println!("best_bound: {:.9}", result.best_bound);
    println!("nodes: {}", result.node_count);
    println!("lp_iterations: {}", result.lp_iterations);
    println!("solve_ms: {:.1}", elapsed.as_secs_f64() * 1e3);
    if result.status == Status::Optimal {
        Ok(())
    } else {
        Err(CliError::Failure(format!("solve ended {}", result.status)))
    }
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct SuiteLog {
    failures: usize,
    checks: usize,
}

impl SuiteLog {
    fn new() -> Self {
        SuiteLog { failures: 0, checks: 0 }
    }

    fn check(&mut self, label: &str, ok: bool) {
        self.checks += 1;
        if ok {
            println!("ok   {}", label);
        } else {
            self.failures += 1;
            println!("FAIL {}", label);
        }
    }
}

fn cmd_verify(a: VerifyArgs) -> Result<(), CliError> {
    let seed = resolve_seed(a.seed);
    let mut log = SuiteLog::new();
    let suites: Vec<&str> = match a.suite.as_str() {
        "all" => vec!["examples", "ideal", "containment", "tu", "sharp", "lemma2"],
        s @ ("examples" | "ideal" | "containment" | "tu" | "sharp" | "lemma2") => vec![s],
        other => return Err(usage(format!("unknown suite `{}`", other))),
    };
    for suite in suites {
        match suite {
            "examples" => verify_examples(&mut log)?,
            "ideal" => verify_ideal(&mut log, seed)?,
            "containment" => verify_containment(&mut log, seed)?,
            "tu" => verify_tu(&mut log, seed)?,
            "sharp" => verify_sharp(&mut log)?,
            "lemma2" => verify_lemma2(&mut log)?,
            _ => unreachable!(),
        }
    }
    println!("{} checks, {} failures", log.checks, log.failures);
    if log.failures == 0 {
        Ok(())
    } else {
        Err(CliError::Failure(format!("{} verification failures", log.failures)))
    }
}

fn verify_examples(log: &mut SuiteLog) -> Result<(), CliError> {
    for name in ["ex1", "ex2", "ex4", "fig3a", "fig3b"] {
        let fx = example_fixture::<f64>(name).map_err(usage)?;
        let index = build_split_index(&fx.ensemble);
        for case in &fx.vertices {
            let mut m = build(
                case.kind,
                &fx.ensemble,
                &index,
                &BuildOptions { bigm: fx.bigm_override },
            )
            .map_err(usage)?;
            if case.with_extra_constraints {
                attach_constraints(&mut m, &fx.extra_constraints).map_err(usage)?;
            }
            let point = m
                .point_from_roles(&case.assignment)
                .ok_or_else(|| CliError::Failure(format!("{}: role missing", case.label)))?;
            let got = is_vertex(&relax(&m), &point, 1e-7);
            log.check(
                &format!("examples: {} ({})", case.label, name),
                got == case.expect_vertex,
            );
        }
    }
    Ok(())
}

fn verify_ideal(log: &mut SuiteLog, seed: u64) -> Result<(), CliError> {
    let config = SolverConfig::default();
    // Single trees: the projected relaxation should never go fractional.
    for i in 0..10u64 {
        let d = 1 + (i as usize % 5);
        let data = gen_triangle_data::<f64>(d, 30, true, seed ^ (i * 7 + 1));
        let tree = train_cart(&data, 4, 1).map_err(usage)?;
        let domain: Vec<(f64, f64)> = (0..d).map(|_| (-1.0, 1.0)).collect();
        let e = TreeEnsemble::new(vec![tree], d, domain).map_err(usage)?;
        let index = build_split_index(&e);
        let m = build(FormulationKind::Projected, &e, &index, &BuildOptions::default())
            .map_err(usage)?;
        let zs: Vec<usize> = m.binaries().collect();
        let r = probe_integrality(&m, &zs, 20, seed ^ (i + 100), &config)
            .map_err(|e| CliError::Failure(e.to_string()))?;
        log.check(
            &format!("ideal: single tree d={} seed#{} projected integral", d, i),
            r.fractional == 0,
        );
    }
    // 1-D ensembles: the expanded-set relaxation should never go fractional.
    for i in 0..10u64 {
        let t = 1 + (i as usize % 5);
        let data = gen_triangle_data::<f64>(1, 30, true, seed ^ (i * 13 + 3));
        let e = train_forest(&data, t, 3, seed ^ (i * 17 + 5)).map_err(usage)?;
        let index = build_split_index(&e);
        let m = build(FormulationKind::Expset, &e, &index, &BuildOptions::default())
            .map_err(usage)?;
        let vars: Vec<usize> = (0..m.variables.len()).filter(|&v| !m.is_defined(v)).collect();
        let r = probe_integrality(&m, &vars, 20, seed ^ (i + 200), &config)
            .map_err(|e| CliError::Failure(e.to_string()))?;
        log.check(
            &format!("ideal: 1-D ensemble T={} seed#{} expset integral", t, i),
            r.fractional == 0,
        );
    }
    Ok(())
}

fn containment_pair(
    log: &mut SuiteLog,
    label: &str,
    ensemble: &TreeEnsemble<f64>,
) -> Result<(), CliError> {
    let config = SolverConfig::default();
    let index = build_split_index(ensemble);
    let misic = build(FormulationKind::Misic, ensemble, &index, &BuildOptions::default())
        .map_err(usage)?;
    for kind in [FormulationKind::Expset, FormulationKind::Elbow] {
        let inner = build(kind, ensemble, &index, &BuildOptions::default()).map_err(usage)?;
        let r = check_containment(&inner, &misic, &config)
            .map_err(|e| CliError::Failure(e.to_string()))?;
        log.check(
            &format!("containment: {} {} inside misic (max viol {:.2e})", label, kind, r.max_violation),
            r.contained(1e-7),
        );
    }
    Ok(())
}

fn verify_containment(log: &mut SuiteLog, seed: u64) -> Result<(), CliError> {
    let config = SolverConfig::default();
    for name in ["fig3a", "fig3b"] {
        let fx = example_fixture::<f64>(name).map_err(usage)?;
        containment_pair(log, name, &fx.ensemble)?;
    }
    // Strictness: on fig3a the reverse direction must be violated.
    let fx = example_fixture::<f64>("fig3a").map_err(usage)?;
    let index = build_split_index(&fx.ensemble);
    let misic = build(FormulationKind::Misic, &fx.ensemble, &index, &BuildOptions::default())
        .map_err(usage)?;
    let expset = build(FormulationKind::Expset, &fx.ensemble, &index, &BuildOptions::default())
        .map_err(usage)?;
    let rev = check_containment(&misic, &expset, &config)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    log.check(
        &format!("containment: fig3a misic strictly looser (reverse viol {:.2e})", rev.max_violation),
        rev.max_violation > 1e-4,
    );
    for i in 0..10u64 {
        let d = 1 + (i as usize % 3);
        let data = gen_triangle_data::<f64>(d, 25, true, seed ^ (i * 31 + 7));
        let e = train_forest(&data, 2, 3, seed ^ (i * 37 + 11)).map_err(usage)?;
        containment_pair(log, &format!("random#{}", i), &e)?;
    }
    Ok(())
}

fn verify_tu(log: &mut SuiteLog, seed: u64) -> Result<(), CliError> {
    for i in 0..5u64 {
        let data = gen_triangle_data::<f64>(1, 20, true, seed ^ (i * 41 + 13));
        let e = train_forest(&data, 2, 2, seed ^ (i * 43 + 17)).map_err(usage)?;
        let index = build_split_index(&e);
        let a = expset_equality_matrix_1d(&e, &index)
            .map_err(|e| CliError::Failure(e.to_string()))?;
        let ok = check_tu(&a, 9).map_err(|e| CliError::Failure(e.to_string()))?;
        log.check(
            &format!("tu: 1-D ensemble seed#{} ({}x{} matrix, order <= 9)", i, a.len(), a[0].len()),
            ok,
        );
    }
    Ok(())
}

fn verify_sharp(log: &mut SuiteLog) -> Result<(), CliError> {
    let config = SolverConfig::default();
    let fx = example_fixture::<f64>("ex3").map_err(usage)?;
    let index = build_split_index(&fx.ensemble);
    for &(w, y, expect_proj, expect_hull) in &fx.sharp_points {
        let r = check_sharpness_1d(&fx.ensemble, &index, FormulationKind::Projected, (w, y), &config)
            .map_err(|e| CliError::Failure(e.to_string()))?;
        log.check(
            &format!(
                "sharp: ex3 point ({}, {}) projection={} hull={}",
                w, y, r.in_projection, r.in_hull
            ),
            r.in_projection == expect_proj && r.in_hull == expect_hull,
        );
    }
    Ok(())
}

fn verify_lemma2(log: &mut SuiteLog) -> Result<(), CliError> {
    let config = SolverConfig::default();
    let fx = example_fixture::<f64>("elbow_segment").map_err(usage)?;
    let index = build_split_index(&fx.ensemble);
    for (s, p) in nested_pairs(&index, 0) {
        let r = check_implication_lemma2(&fx.ensemble, &index, 0, s, p, &config)
            .map_err(|e| CliError::Failure(e.to_string()))?;
        log.check(
            &format!("lemma2: elbow_segment pair ({}, {}) implied (viol {:.2e})", s, p, r.max_violation),
            r.covering_holds && r.max_violation <= 1e-7,
        );
    }
    let fx = example_fixture::<f64>("fig3b").map_err(usage)?;
    let index = build_split_index(&fx.ensemble);
    for (s, p) in nested_pairs(&index, 0) {
        let r = check_implication_lemma2(&fx.ensemble, &index, 0, s, p, &config)
            .map_err(|e| CliError::Failure(e.to_string()))?;
        log.check(
            &format!("lemma2: fig3b pair ({}, {}) not implied (viol {:.2e})", s, p, r.max_violation),
            !r.covering_holds && r.max_violation > 1e-4,
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub seed: u64,
    pub d: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub depth: usize,
    pub formulation: String,
    pub build_ms: f64,
    pub solve_ms: f64,
    pub status: String,
    pub mip_obj: f64,
    pub lp_bound: f64,
    pub gap_percent: f64,
    pub nodes: usize,
}

pub const BENCH_HEADER: &str =
    "seed,d,T,depth,formulation,build_ms,solve_ms,status,mip_obj,lp_bound,gap_percent,nodes";

impl BenchRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{:.3},{:.3},{},{:.9},{:.9},{:.6},{}",
            self.seed,
            self.d,
            self.t,
            self.depth,
            self.formulation,
            self.build_ms,
            self.solve_ms,
            self.status,
            self.mip_obj,
            self.lp_bound,
            self.gap_percent,
            self.nodes
        )
    }
}

pub struct BenchGrid {
    pub d: Vec<usize>,
    pub trees: Vec<usize>,
    pub depth: usize,
    pub seeds: u64,
    pub base_seed: u64,
    pub kinds: Vec<FormulationKind>,
    pub points: usize,
    pub time_limit: Option<Duration>,
}

/// One row per (seed, d, T, formulation). Objective is `max y`; the LP bound
/// comes from the relaxation of the same model.
pub fn bench_rows(grid: &BenchGrid) -> Result<Vec<BenchRow>, String> {
    let mut config = SolverConfig::default();
    config.time_limit = grid.time_limit;
    let mut rows = Vec::new();
    for s in 0..grid.seeds {
        let seed = grid.base_seed.wrapping_add(s);
        for &d in &grid.d {
            for &t in &grid.trees {
                let data = gen_triangle_data::<f64>(d, grid.points, true, seed);
                let ensemble =
                    train_forest(&data, t, grid.depth, seed).map_err(|e| e.to_string())?;
                let index = build_split_index(&ensemble);
                for &kind in &grid.kinds {
                    let t0 = Instant::now();
                    let mut m = build(kind, &ensemble, &index, &BuildOptions::default())
                        .map_err(|e| e.to_string())?;
                    set_objective(&mut m, Objective::MaxY).map_err(|e| e.to_string())?;
                    let build_ms = t0.elapsed().as_secs_f64() * 1e3;
                    let t1 = Instant::now();
                    let mip = solve_mip(&m, &config);
                    let solve_ms = t1.elapsed().as_secs_f64() * 1e3;
                    let lp = solve_lp(&relax(&m), &config);
                    rows.push(BenchRow {
                        seed,
                        d,
                        t,
                        depth: grid.depth,
                        formulation: kind.name().to_string(),
                        build_ms,
                        solve_ms,
                        status: mip.status.to_string(),
                        mip_obj: mip.objective,
                        lp_bound: lp.objective,
                        gap_percent: analysis::gap_percent(lp.objective, mip.objective),
                        nodes: mip.node_count,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Per-formulation summary: geometric mean of solve times (Table-2 style,
/// shifted by 1 ms to absorb zero timings) and mean relaxation gap over rows
/// that solved to optimality.
pub fn summarize(rows: &[BenchRow]) -> String {
    let mut out = String::from("formulation,geomean_solve_ms,mean_gap_percent,optimal,rows\n");
    let mut kinds: Vec<&str> = rows.iter().map(|r| r.formulation.as_str()).collect();
    kinds.dedup();
    let mut seen: Vec<&str> = Vec::new();
    for k in kinds {
        if seen.contains(&k) {
            continue;
        }
        seen.push(k);
        let sel: Vec<&BenchRow> = rows.iter().filter(|r| r.formulation == k).collect();
        let n = sel.len() as f64;
        let geo = (sel.iter().map(|r| (r.solve_ms + 1.0).ln()).sum::<f64>() / n).exp() - 1.0;
        let opt: Vec<&&BenchRow> = sel.iter().filter(|r| r.status == "optimal").collect();
        let gap = if opt.is_empty() {
            f64::NAN
        } else {
            opt.iter().map(|r| r.gap_percent).sum::<f64>() / opt.len() as f64
        };
        let _ = writeln!(out, "{},{:.3},{:.6},{},{}", k, geo, gap, opt.len(), sel.len());
    }
    out
}

fn cmd_bench(a: BenchArgs) -> Result<(), CliError> {
    let grid = BenchGrid {
        d: a.d,
        trees: a.trees,
        depth: a.depth,
        seeds: a.seeds,
        base_seed: resolve_seed(a.seed),
        kinds: a.kinds.unwrap_or_else(|| FormulationKind::ALL.to_vec()),
        points: a.points,
        time_limit: a.time_limit_s.map(Duration::from_secs_f64),
    };
    let rows = bench_rows(&grid).map_err(CliError::Failure)?;
    let mut csv = String::from(BENCH_HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.csv_line());
        csv.push('\n');
    }
    match &a.out {
        Some(path) => fs::write(path, &csv)
            .map_err(|e| usage(format!("cannot write {}: {}", path.display(), e)))?,
        None => print!("{}", csv),
    }
    if a.summary {
        print!("{}", summarize(&rows));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

fn cmd_gen(a: GenArgs) -> Result<(), CliError> {
    let ensemble = match &a.fixture {
        Some(name) => example_fixture::<f64>(name).map_err(usage)?.ensemble,
        None => {
            let seed = resolve_seed(a.seed);
            let data = gen_triangle_data::<f64>(a.d, a.points, true, seed);
            train_forest(&data, a.trees, a.depth, seed).map_err(usage)?
        }
    };
    let json = ensemble_to_json(&ensemble);
    match &a.out {
        Some(path) => fs::write(path, json)
            .map_err(|e| usage(format!("cannot write {}: {}", path.display(), e)))?,
        None => println!("{}", json),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sanity helper used by tests: oracle cross-check on one instance
// ---------------------------------------------------------------------------

/// Convenience: MIP optimum of one formulation against the cell oracle.
pub fn oracle_matches(
    ensemble: &TreeEnsemble<f64>,
    kind: FormulationKind,
    tol: f64,
) -> Result<bool, String> {
    let config = SolverConfig::default();
    let index = build_split_index(ensemble);
    let mut m = build(kind, ensemble, &index, &BuildOptions::default()).map_err(|e| e.to_string())?;
    set_objective(&mut m, Objective::MaxY).map_err(|e| e.to_string())?;
    let mip = solve_mip(&m, &config);
    if mip.status != Status::Optimal {
        return Err(format!("MIP ended {}", mip.status));
    }
    let oracle = oracle_optimum(ensemble, &index, &[], ObjSense::Maximize, &config)
        .map_err(|e| e.to_string())?;
    Ok((mip.objective - oracle.value).abs() <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constraint_grammar() {
        let (row, sense, rhs) = parse_constraint("2*w1 + w2 <= 3", 2).unwrap();
        assert_eq!(row, vec![(0, 2.0), (1, 1.0)]);
        assert_eq!(sense, Sense::Le);
        assert_eq!(rhs, 3.0);

        let (row, sense, rhs) = parse_constraint("-0.5*w3 - w1 >= -2.5", 3).unwrap();
        assert_eq!(row, vec![(2, -0.5), (0, -1.0)]);
        assert_eq!(sense, Sense::Ge);
        assert_eq!(rhs, -2.5);

        let (row, sense, rhs) = parse_constraint("w1 = 1", 1).unwrap();
        assert_eq!(row, vec![(0, 1.0)]);
        assert_eq!(sense, Sense::Eq);
        assert_eq!(rhs, 1.0);

        assert!(parse_constraint("w9 <= 1", 2).is_err());
        assert!(parse_constraint("2*q1 <= 1", 2).is_err());
        assert!(parse_constraint("w1 < 1", 2).is_err());
        assert!(parse_constraint("<= 1", 2).is_err());
    }

    #[test]
    fn bench_rows_reproducible_and_schema_stable() {
        let grid = BenchGrid {
            d: vec![1, 2],
            trees: vec![1, 2],
            depth: 2,
            seeds: 2,
            base_seed: 5,
            kinds: vec![FormulationKind::Misic, FormulationKind::Projected],
            points: 15,
            time_limit: None,
        };
        let a = bench_rows(&grid).unwrap();
        let b = bench_rows(&grid).unwrap();
        assert_eq!(a.len(), 2 * 2 * 2 * 2);
        assert_eq!(BENCH_HEADER.split(',').count(), 12);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.seed, y.seed);
            assert_eq!(x.mip_obj, y.mip_obj);
            assert_eq!(x.lp_bound, y.lp_bound);
            assert_eq!(x.gap_percent, y.gap_percent);
            assert_eq!(x.nodes, y.nodes);
            assert_eq!(x.csv_line().split(',').count(), 12);
        }
        let s = summarize(&a);
        assert!(s.contains("misic"));
        assert!(s.contains("projected"));
    }

    #[test]
    fn seed_resolution_prefers_flag() {
        assert_eq!(resolve_seed(Some(7)), 7);
    }
}
