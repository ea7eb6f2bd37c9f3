//! Round-trip oracle for the LP writer: an independent parser reconstructs a
//! model from the exported text, and both models must agree on their LP and
//! MIP optima. Output definitions surface as `def_` equality rows, so the
//! reconstructed model is definition-free but equivalent.

use std::collections::HashMap;

use treemio::fixtures::example_fixture;
use treemio::formulations::{build, set_objective, BuildOptions, FormulationKind, Objective};
use treemio::model::{relax, write_lp, Integrality, MipModel, ObjSense, Sense, Status};
use treemio::solver::{solve_lp, solve_mip, SolverConfig};
use treemio::tree::build_split_index;

#[derive(Default)]
struct ParsedLp {
    obj: Vec<(String, f64)>,
    constraints: Vec<(String, Vec<(String, f64)>, Sense, f64)>,
    bounds: Vec<(String, Option<f64>, Option<f64>)>,
    binaries: Vec<String>,
}

/// Terms look like `+ 1.0e0 name` / `- 2.5e-1 name`, with a possible
/// unsigned leading term (the writer emits `0 var` for an empty objective).
fn parse_terms(tokens: &[&str]) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let (sign, coeff_tok) = match tokens[i] {
            "+" => (1.0, tokens[i + 1]),
            "-" => (-1.0, tokens[i + 1]),
            t => (1.0, t),
        };
        let step = if tokens[i] == "+" || tokens[i] == "-" { 3 } else { 2 };
        let coeff: f64 = coeff_tok.parse().expect("coefficient");
        let name = tokens[i + step - 1].to_string();
        out.push((name, sign * coeff));
        i += step;
    }
    out
}

fn parse_lp(text: &str) -> ParsedLp {
    let mut parsed = ParsedLp::default();
    let mut section = "";
    for line in text.lines() {
        let line = line.trim();
        match line {
            "" => continue,
            "Maximize" | "Subject To" | "Bounds" | "Binaries" | "End" => {
                section = line;
                continue;
            }
            _ => {}
        }
        match section {
            "Maximize" => {
                let body = line.strip_prefix("obj:").expect("objective label").trim();
                let tokens: Vec<&str> = body.split_whitespace().collect();
                parsed.obj = parse_terms(&tokens);
            }
            "Subject To" => {
                let (name, body) = line.split_once(':').expect("constraint label");
                let tokens: Vec<&str> = body.split_whitespace().collect();
                let op = tokens
                    .iter()
                    .position(|t| matches!(*t, "<=" | ">=" | "="))
                    .expect("operator");
                let sense = match tokens[op] {
                    "<=" => Sense::Le,
                    ">=" => Sense::Ge,
                    _ => Sense::Eq,
                };
                let rhs: f64 = tokens[op + 1].parse().expect("rhs");
                parsed.constraints.push((
                    name.trim().to_string(),
                    parse_terms(&tokens[..op]),
                    sense,
                    rhs,
                ));
            }
            "Bounds" => {
                let tokens: Vec<&str> = line.split_whitespace().collect();
                match tokens.as_slice() {
                    [name, "free"] => parsed.bounds.push((name.to_string(), None, None)),
                    [lb, "<=", name, "<=", ub] => parsed.bounds.push((
                        name.to_string(),
                        Some(lb.parse().unwrap()),
                        Some(ub.parse().unwrap()),
                    )),
                    [name, "<=", ub] => {
                        parsed.bounds.push((name.to_string(), None, Some(ub.parse().unwrap())))
                    }
                    [name, ">=", lb] => {
                        parsed.bounds.push((name.to_string(), Some(lb.parse().unwrap()), None))
                    }
                    other => panic!("unrecognized bounds line: {:?}", other),
                }
            }
            "Binaries" => parsed.binaries.push(line.to_string()),
            _ => panic!("content outside any section: {}", line),
        }
    }
    parsed
}

fn to_model(parsed: &ParsedLp) -> MipModel<f64> {
    let mut m = MipModel::<f64>::new();
    let mut ids: HashMap<String, usize> = HashMap::new();
    for (name, lb, ub) in &parsed.bounds {
        let integrality = if parsed.binaries.contains(name) {
            Integrality::Binary
        } else {
            Integrality::Continuous
        };
        ids.insert(name.clone(), m.add_var(name.clone(), *lb, *ub, integrality, None));
    }
    let lookup = |ids: &HashMap<String, usize>, terms: &[(String, f64)]| {
        terms.iter().map(|(n, c)| (ids[n], *c)).collect::<Vec<_>>()
    };
    for (name, terms, sense, rhs) in &parsed.constraints {
        m.add_constraint(name.clone(), lookup(&ids, terms), *sense, *rhs);
    }
    m.set_objective(ObjSense::Maximize, lookup(&ids, &parsed.obj));
    m
}

#[test]
fn exported_lp_reparses_to_an_equivalent_model() {
    let config = SolverConfig::<f64>::default();
    for name in ["ex3", "ex4"] {
        let fx = example_fixture::<f64>(name).unwrap();
        let index = build_split_index(&fx.ensemble);
        for kind in FormulationKind::ALL {
            let mut original = build(
                kind,
                &fx.ensemble,
                &index,
                &BuildOptions { bigm: fx.bigm_override },
            )
            .unwrap();
            set_objective(&mut original, Objective::MaxY).unwrap();
            let text = write_lp(&original).unwrap();
            let parsed = to_model(&parse_lp(&text));

            let a = solve_mip(&original, &config);
            let b = solve_mip(&parsed, &config);
            assert_eq!(a.status, Status::Optimal, "{} {}", name, kind);
            assert_eq!(b.status, Status::Optimal, "{} {} (reparsed)", name, kind);
            assert!(
                (a.objective - b.objective).abs() < 1e-7,
                "{} {}: {} vs {}",
                name,
                kind,
                a.objective,
                b.objective
            );

            let ra = solve_lp(&relax(&original), &config);
            let rb = solve_lp(&relax(&parsed), &config);
            assert!(
                (ra.objective - rb.objective).abs() < 1e-7,
                "{} {} relaxation: {} vs {}",
                name,
                kind,
                ra.objective,
                rb.objective
            );
        }
    }
}

#[test]
fn export_is_deterministic() {
    let fx = example_fixture::<f64>("ex3").unwrap();
    let index = build_split_index(&fx.ensemble);
    let m = build(FormulationKind::Misic, &fx.ensemble, &index, &BuildOptions::default()).unwrap();
    assert_eq!(write_lp(&m).unwrap(), write_lp(&m).unwrap());
}
