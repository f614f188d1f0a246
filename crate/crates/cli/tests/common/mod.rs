#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

pub fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn run_bin(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_geomtensor")).args(args).output().expect("spawn geomtensor");
    Output {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Splits text into alternating literal and numeric segments. Numbers are
/// `-?digits[.digits][e[+-]digits]`.
fn segments(s: &str) -> Vec<(bool, &str)> {
    let b = s.as_bytes();
    let mut out = Vec::new();
    let (mut i, mut lit) = (0, 0);
    while i < b.len() {
        let neg = b[i] == b'-' && i + 1 < b.len() && b[i + 1].is_ascii_digit();
        if !(b[i].is_ascii_digit() || neg) {
            i += 1;
            continue;
        }
        let start = i;
        i += neg as usize;
        let digits = |i: &mut usize| {
            while *i < b.len() && b[*i].is_ascii_digit() {
                *i += 1;
            }
        };
        digits(&mut i);
        if i + 1 < b.len() && b[i] == b'.' && b[i + 1].is_ascii_digit() {
            i += 1;
            digits(&mut i);
        }
        if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
            let mut j = i + 1;
            if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                j += 1;
            }
            if j < b.len() && b[j].is_ascii_digit() {
                i = j;
                digits(&mut i);
            }
        }
        out.push((false, &s[lit..start]));
        out.push((true, &s[start..i]));
        lit = i;
    }
    out.push((false, &s[lit..]));
    out
}

/// Compares two texts byte for byte, except that numbers may differ by a
/// relative `tol` (absolute below 1). Returns the first difference.
pub fn text_diff(got: &str, want: &str, tol: f64) -> Option<String> {
    let (g, w) = (segments(got), segments(want));
    if g.len() != w.len() {
        return Some(format!("segment count {} vs {}", g.len(), w.len()));
    }
    for (i, ((gn, a), (wn, b))) in g.iter().zip(&w).enumerate() {
        if a == b {
            continue;
        }
        let numeric_ok = *gn && *wn && {
            let (x, y) = (a.parse::<f64>().unwrap(), b.parse::<f64>().unwrap());
            (x - y).abs() <= tol * y.abs().max(1.0)
        };
        if !numeric_ok {
            return Some(format!("segment {i}: `{a}` vs `{b}`"));
        }
    }
    None
}

pub fn matches_golden(got: &str, name: &str) -> Result<(), String> {
    let want = std::fs::read_to_string(golden(name)).map_err(|e| format!("{name}: {e}"))?;
    match text_diff(got, &want, 1e-6) {
        None => Ok(()),
        Some(d) => Err(format!("{name}: {d}")),
    }
}

/// Every golden check: the command line, the golden for stdout, and optionally
/// an output file with its golden.
pub struct Case {
    pub name: &'static str,
    pub args: Vec<String>,
    pub stdout_golden: &'static str,
    pub file: Option<(PathBuf, &'static str)>,
}

/// `tag` keeps scratch outputs of concurrent callers apart.
pub fn golden_cases(tag: &str) -> Vec<Case> {
    let f = |n: &str| p(&fixture(n)).to_string();
    let s = |n: &str| scratch(&format!("{tag}_{n}"));
    let strs = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let mut cases = Vec::new();

    let out = s("mlp_out.json");
    let mut args = strs(&["run", "--graph", &f("mlp.json"), "--input", &f("mlp_input.json")]);
    args.extend(strs(&["--catalog", &f("catalog.json"), "--mode", "session", "--output", p(&out)]));
    cases.push(Case {
        name: "run mlp",
        args,
        stdout_golden: "run_mlp.stdout",
        file: Some((out, "run_mlp.output.json")),
    });

    let out = s("if_out.json");
    let mut args = strs(&["run", "--graph", &f("if_graph.json"), "--input", &f("if_input.json")]);
    args.extend(strs(&["--catalog", &f("catalog.json"), "--mode", "module", "--output", p(&out)]));
    cases.push(Case { name: "run if", args, stdout_golden: "run_if.stdout", file: Some((out, "run_if.output.json")) });

    for (g, golden) in
        [("mlp.json", "search_mlp.stdout"), ("conv.json", "search_conv.stdout"), ("empty.json", "search_empty.stdout")]
    {
        cases.push(Case {
            name: golden,
            args: strs(&["search-report", "--graph", &f(g), "--catalog", &f("catalog.json")]),
            stdout_golden: golden,
            file: None,
        });
    }

    for (vals, golden) in [
        (["61", "45", "16", "2", "16"], "workload_reference.stdout"),
        (["0", "0", "0", "0", "1"], "workload_degenerate.stdout"),
        (["10", "10", "10", "2", "4"], "workload_small.stdout"),
    ] {
        let mut args = strs(&["workload"]);
        for (flag, v) in ["--aop", "--top", "--cop", "--fop", "--backends"].iter().zip(vals) {
            args.extend(strs(&[flag, v]));
        }
        cases.push(Case { name: golden, args, stdout_golden: golden, file: None });
    }

    for (opt, lr) in [("sgd", "0.05"), ("adam", "0.02")] {
        let out = s(&format!("train_{opt}.json"));
        let mut args = strs(&["train", "--graph", &f("linreg.json"), "--data", &f("linreg_data.json")]);
        args.extend(strs(&["--optimizer", opt, "--lr", lr, "--steps", "200", "--params-out", p(&out)]));
        let (so, po) = match opt {
            "sgd" => ("train_sgd.stdout", "train_sgd.params.json"),
            _ => ("train_adam.stdout", "train_adam.params.json"),
        };
        cases.push(Case { name: so, args, stdout_golden: so, file: Some((out, po)) });
    }
    cases
}

pub fn check_case(c: &Case) -> Result<(), String> {
    let args: Vec<&str> = c.args.iter().map(String::as_str).collect();
    let out = run_bin(&args);
    if out.code != 0 {
        return Err(format!("{}: exit {} ({})", c.name, out.code, out.stderr.trim()));
    }
    matches_golden(&out.stdout, c.stdout_golden)?;
    if let Some((path, golden)) = &c.file {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", c.name))?;
        matches_golden(&text, golden)?;
    }
    Ok(())
}
