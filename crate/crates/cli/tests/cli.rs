mod common;

use std::collections::BTreeMap;
use std::fs;

use common::{check_case, fixture, golden, golden_cases, p, run_bin, scratch};
use geomtensor::document::{graph_from_json, graph_to_json, tensors_from_json};
use geomtensor::graph::{geometric_pass, Session};
use geomtensor::search::Catalog;
use geomtensor::Tensor;
use geomtensor_oracle::cost::select;
use geomtensor_oracle::{close, eval_graph};

fn read_tensors(path: &std::path::Path) -> BTreeMap<String, Tensor> {
    tensors_from_json(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn goldens_reproduce() {
    for c in golden_cases("golden") {
        check_case(&c).unwrap();
    }
}

#[test]
fn run_identity_echoes_input() {
    let out = scratch("identity_out.json");
    let r = run_bin(&[
        "run",
        "--graph",
        p(&fixture("identity.json")),
        "--input",
        p(&fixture("identity_input.json")),
        "--output",
        p(&out),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(read_tensors(&out), read_tensors(&fixture("identity_input.json")));
}

#[test]
fn run_mlp_matches_oracle() {
    let out = scratch("mlp_check.json");
    for mode in ["session", "module"] {
        let r = run_bin(&[
            "run",
            "--graph",
            p(&fixture("mlp.json")),
            "--input",
            p(&fixture("mlp_input.json")),
            "--catalog",
            p(&fixture("catalog.json")),
            "--mode",
            mode,
            "--output",
            p(&out),
        ]);
        assert_eq!(r.code, 0, "{}", r.stderr);
        let got = read_tensors(&out);
        let g = graph_from_json(&fs::read_to_string(fixture("mlp.json")).unwrap()).unwrap();
        let want = eval_graph(&g, &read_tensors(&fixture("mlp_input.json"))).unwrap();
        for (k, v) in &want {
            assert!(close(got[k].data(), v.data(), 1e-5));
        }
        let committed = read_tensors(&golden("run_mlp.output.json"));
        for (k, v) in &committed {
            assert!(close(got[k].data(), v.data(), 1e-5));
        }
    }
}

#[test]
fn exit_codes() {
    let out = scratch("unused.json");
    let r = run_bin(&[
        "run",
        "--graph",
        p(&fixture("if_graph.json")),
        "--input",
        p(&fixture("if_input.json")),
        "--mode",
        "session",
        "--output",
        p(&out),
    ]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    assert!(r.stderr.contains("module mode"));

    let bad = scratch("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let r = run_bin(&["run", "--graph", p(&bad), "--input", p(&fixture("mlp_input.json")), "--output", p(&out)]);
    assert_eq!(r.code, 2);

    let text = fs::read_to_string(fixture("mlp.json")).unwrap().replace("\"matmul\"", "\"gemm\"");
    let unknown = scratch("unknown_kind.json");
    fs::write(&unknown, text).unwrap();
    let r = run_bin(&["search-report", "--graph", p(&unknown), "--catalog", p(&fixture("catalog.json"))]);
    assert_eq!(r.code, 2, "{}", r.stderr);

    let r =
        run_bin(&["search-report", "--graph", p(&scratch("missing.json")), "--catalog", p(&fixture("catalog.json"))]);
    assert_eq!(r.code, 2);

    let r = run_bin(&["workload", "--aop", "-1", "--top", "0", "--cop", "0", "--fop", "0", "--backends", "1"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("non-negative"));
}

fn winner(stdout: &str) -> &str {
    stdout.lines().find_map(|l| l.strip_prefix("winner: ")).unwrap()
}

#[test]
fn search_report_single_backend() {
    let r = run_bin(&[
        "search-report",
        "--graph",
        p(&fixture("mlp.json")),
        "--catalog",
        p(&fixture("single_catalog.json")),
    ]);
    assert_eq!(r.code, 0);
    assert_eq!(winner(&r.stdout), "cpu-only");
}

#[test]
fn search_report_agrees_with_brute_force() {
    let catalog = Catalog::from_json(&fs::read_to_string(fixture("catalog.json")).unwrap()).unwrap().backends;
    assert_eq!(catalog.len(), 4);
    for graph in ["mlp.json", "conv.json", "empty.json"] {
        let g = graph_from_json(&fs::read_to_string(fixture(graph)).unwrap()).unwrap();
        let s = Session::prepare(&g, &BTreeMap::new(), &catalog).unwrap();
        let ops: Vec<_> = s.plan().ops.iter().map(|c| c.workload).collect();
        let (best, totals) = select(&ops, &catalog);
        let r = run_bin(&["search-report", "--graph", p(&fixture(graph)), "--catalog", p(&fixture("catalog.json"))]);
        assert_eq!(r.code, 0);
        assert_eq!(winner(&r.stdout), catalog[best.unwrap()].name, "{graph}");
        for (spec, total) in catalog.iter().zip(&totals) {
            let line = r.stdout.lines().find(|l| l.starts_with(&format!("backend {} ", spec.name))).unwrap();
            match total {
                None => assert!(line.ends_with("unsupported")),
                Some(t) => {
                    let printed: f64 = line.split_whitespace().last().unwrap().parse().unwrap();
                    assert!((printed - t).abs() <= 1e-6 * t.abs(), "{line} vs {t}");
                }
            }
        }
        if graph == "empty.json" {
            assert!(totals.iter().all(|t| *t == Some(0.0)));
            assert_eq!(best, Some(0));
        }
    }
}

fn workload_numbers(args: [&str; 5]) -> (String, String, String) {
    let mut v = vec!["workload"];
    for (flag, a) in ["--aop", "--top", "--cop", "--fop", "--backends"].iter().zip(args.iter()) {
        v.push(flag);
        v.push(a);
    }
    let r = run_bin(&v);
    assert_eq!(r.code, 0);
    let field = |name: &str| r.stdout.lines().find_map(|l| l.strip_prefix(name)).unwrap().trim().to_string();
    (field("naive:"), field("geometric:"), field("reduction:"))
}

#[test]
fn workload_examples() {
    assert_eq!(workload_numbers(["61", "45", "16", "2", "16"]), ("1954".into(), "1055".into(), "46.0%".into()));
    let (n, g, r) = workload_numbers(["0", "0", "0", "0", "1"]);
    assert_eq!((n.as_str(), g.as_str(), r.as_str()), ("0", "1", "n/a"));

    // hand evaluation
    let (aop, top, cop, fop, ba) = (10u64, 10, 10, 2, 4);
    let naive = (aop + top + cop) * ba + fop;
    let geo = (aop + 1) * ba + top + cop + fop;
    let red = format!("{:.1}%", 100.0 * (1.0 - geo as f64 / naive as f64));
    assert_eq!(workload_numbers(["10", "10", "10", "2", "4"]), (naive.to_string(), geo.to_string(), red));
}

fn train(opt: &str, lr: &str, steps: &str, out: &std::path::Path) -> (i32, Vec<f64>) {
    let r = run_bin(&[
        "train",
        "--graph",
        p(&fixture("linreg.json")),
        "--data",
        p(&fixture("linreg_data.json")),
        "--optimizer",
        opt,
        "--lr",
        lr,
        "--steps",
        steps,
        "--params-out",
        p(out),
    ]);
    let curve = r.stdout.lines().skip(1).filter_map(|l| l.split_whitespace().nth(1)?.parse().ok()).collect();
    (r.code, curve)
}

/// Least-squares fit of the fixture data in f64 via the normal equations.
fn least_squares() -> [f64; 3] {
    let data = read_tensors(&fixture("linreg_data.json"));
    let (x, y) = (data["x"].data(), data["y"].data());
    let mut a = [[0.0f64; 4]; 3];
    for r in 0..20 {
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += x[r * 3 + i] as f64 * x[r * 3 + j] as f64;
            }
            a[i][3] += x[r * 3 + i] as f64 * y[r] as f64;
        }
    }
    for c in 0..3 {
        let piv = (c..3).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        for r in 0..3 {
            if r != c {
                let f = a[r][c] / a[c][c];
                let pivot = a[c];
                for (x, p) in a[r].iter_mut().zip(pivot).skip(c) {
                    *x -= f * p;
                }
            }
        }
    }
    [a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]]
}

#[test]
fn train_sgd_fits_least_squares() {
    let out = scratch("sgd_params.json");
    let (code, curve) = train("sgd", "0.05", "200", &out);
    assert_eq!(code, 0);
    assert_eq!(curve.len(), 201);
    assert!(*curve.last().unwrap() < 1e-3);
    let w = read_tensors(&out)["w"].data().to_vec();
    for (got, want) in w.iter().zip(least_squares()) {
        assert!((*got as f64 - want).abs() < 0.1, "{got} vs {want}");
    }
}

#[test]
fn train_zero_steps_keeps_params() {
    let out = scratch("zero_params.json");
    let (code, curve) = train("adam", "0.1", "0", &out);
    assert_eq!((code, curve.len()), (0, 1));
    let g = graph_from_json(&fs::read_to_string(fixture("linreg.json")).unwrap()).unwrap();
    let init = g.constants().find(|(k, _)| *k == "w").unwrap().1.clone();
    assert_eq!(read_tensors(&out)["w"], init);
}

/// Independent f64 ADAM on the same least-squares objective.
fn adam_reference(lr: f64, steps: usize) -> Vec<f64> {
    let data = read_tensors(&fixture("linreg_data.json"));
    let (x, y) = (data["x"].data(), data["y"].data());
    let (mut w, mut m, mut v) = ([0.0f64; 3], [0.0f64; 3], [0.0f64; 3]);
    let mut curve = Vec::new();
    for t in 0..=steps {
        let mut loss = 0.0;
        let mut g = [0.0f64; 3];
        for r in 0..20 {
            let d: f64 = (0..3).map(|i| x[r * 3 + i] as f64 * w[i]).sum::<f64>() - y[r] as f64;
            loss += d * d / 20.0;
            for i in 0..3 {
                g[i] += 2.0 * d * x[r * 3 + i] as f64 / 20.0;
            }
        }
        curve.push(loss);
        if t == steps {
            break;
        }
        let k = (t + 1) as i32;
        for i in 0..3 {
            m[i] = 0.9 * m[i] + 0.1 * g[i];
            v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
            let mh = m[i] / (1.0 - 0.9f64.powi(k));
            let vh = v[i] / (1.0 - 0.999f64.powi(k));
            w[i] -= lr * mh / (vh.sqrt() + 1e-8);
        }
    }
    curve
}

#[test]
fn train_adam_tracks_reference() {
    let out = scratch("adam_params.json");
    let (code, curve) = train("adam", "0.02", "200", &out);
    assert_eq!(code, 0);
    let reference = adam_reference(0.02, 200);
    for (i, (a, b)) in curve.iter().zip(&reference).enumerate() {
        assert!((a - b).abs() <= 1e-3 * b.max(1e-3), "step {i}: {a} vs {b}");
    }
    let tail = &curve[150..];
    assert!(tail.windows(2).all(|w| w[1] <= w[0]), "trailing window increases");
}

#[test]
fn train_divergence_exits_4() {
    let (code, curve) = train("sgd", "50", "200", &scratch("diverged.json"));
    assert_eq!(code, 4);
    assert!(curve.len() < 201);
}

#[test]
fn commands_are_deterministic() {
    for c in golden_cases("determinism") {
        let args: Vec<&str> = c.args.iter().map(String::as_str).collect();
        let first = run_bin(&args);
        let file1 = c.file.as_ref().map(|(path, _)| fs::read(path).unwrap());
        let second = run_bin(&args);
        let file2 = c.file.as_ref().map(|(path, _)| fs::read(path).unwrap());
        assert_eq!(first.stdout, second.stdout, "{}", c.name);
        assert_eq!(file1, file2, "{}", c.name);
    }
}

#[test]
fn fixtures_round_trip_and_pass_is_idempotent() {
    for name in ["identity.json", "mlp.json", "if_graph.json", "conv.json", "empty.json", "linreg.json"] {
        let text = fs::read_to_string(fixture(name)).unwrap();
        let g = graph_from_json(&text).unwrap();
        assert_eq!(graph_from_json(&graph_to_json(&g).unwrap()).unwrap(), g, "{name}");
        let once = geometric_pass(&g).unwrap();
        assert_eq!(geometric_pass(&once).unwrap(), once, "{name}");
    }
}
