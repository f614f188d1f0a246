//! Subcommands of the `geomtensor` binary. Each command writes its report to a
//! caller-supplied sink so tests can capture it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use geomtensor::autodiff::{backward, OptimizerState};
use geomtensor::document::{graph_from_json, tensors_from_json, tensors_to_json};
use geomtensor::graph::{
    module_run, module_split, shape_inference, workload_report, Graph, Module, OperatorRegistry, Session,
};
use geomtensor::kernels::Workload;
use geomtensor::search::{BackendSpec, Catalog, CostBreakdown, Selection};
use geomtensor::{Error, Tensor};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: Error },
    #[error("{0}")]
    Usage(String),
    #[error("loss diverged at step {step} (value {value})")]
    Diverged { step: usize, value: f32 },
    #[error(transparent)]
    Engine(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. } | CliError::Parse { .. } | CliError::Usage(_) => 2,
            CliError::Engine(Error::Parse(_) | Error::InvalidGraph(_) | Error::CyclicGraph) => 2,
            CliError::Engine(Error::Mode(_)) => 3,
            CliError::Diverged { .. } => 4,
            CliError::Write { .. } | CliError::Engine(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Session,
    Module,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    Adam,
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Read { path: path.into(), source })
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| CliError::Write { path: path.into(), source })
}

fn parsed<T>(path: &Path, r: geomtensor::Result<T>) -> CliResult<T> {
    r.map_err(|source| CliError::Parse { path: path.into(), source })
}

pub fn load_graph(path: &Path) -> CliResult<Graph> {
    parsed(path, graph_from_json(&read(path)?))
}

pub fn load_tensors(path: &Path) -> CliResult<BTreeMap<String, Tensor>> {
    parsed(path, tensors_from_json(&read(path)?))
}

/// Reads a catalog file, or the reference backend when no file is given.
pub fn load_catalog(path: Option<&Path>) -> CliResult<Vec<BackendSpec>> {
    match path {
        Some(p) => Ok(parsed(p, Catalog::from_json(&read(p)?))?.backends),
        None => Ok(vec![BackendSpec::reference()]),
    }
}

fn describe(w: &Workload) -> String {
    match w {
        Workload::Elementwise { n } => format!("elementwise n={n}"),
        Workload::ReduceSum { n } => format!("reduce_sum n={n}"),
        Workload::MatMul { a, e, b } => format!("matmul {a}x{e}x{b}"),
        Workload::Conv2d(g) => {
            format!("conv2d {}x{}x{}x{} o={} k={}x{} s={} p={}", g.n, g.c, g.h, g.w, g.o, g.kh, g.kw, g.stride, g.pad)
        }
        Workload::Raster { moved } => format!("raster moved={moved}"),
    }
}

fn cost_table(out: &mut String, ids: &[usize], plan: &CostBreakdown) {
    let _ = writeln!(out, "{:>4}  {:<36}  {:<22}  {:>12}  {:>14}", "op", "workload", "variant", "q", "cost_s");
    for (id, c) in ids.iter().zip(&plan.ops) {
        let _ = writeln!(
            out,
            "{:>4}  {:<36}  {:<22}  {:>12}  {:>14.6e}",
            id,
            describe(&c.workload),
            c.variant.to_string(),
            c.q,
            c.cost
        );
    }
    let _ = writeln!(out, "total_s {:.6e}", plan.total);
}

fn backend_totals(out: &mut String, catalog: &[BackendSpec], sel: &Selection) {
    for (spec, cost) in catalog.iter().zip(&sel.costs) {
        match cost {
            Some(c) => {
                let _ = writeln!(out, "backend {:<12} total_s {:.6e}", spec.name, c.total);
            }
            None => {
                let _ = writeln!(out, "backend {:<12} unsupported", spec.name);
            }
        }
    }
}

fn session_report(out: &mut String, s: &Session) {
    let _ = writeln!(out, "selected backend: {}", s.selected().name);
    let _ = writeln!(out, "executed backend: {}", s.executed().name);
    let ids: Vec<usize> = s.schedule().iter().map(|(id, _)| *id).collect();
    cost_table(out, &ids, s.plan());
}

fn shapes_of(t: &BTreeMap<String, Tensor>) -> BTreeMap<String, Vec<usize>> {
    t.iter().map(|(k, v)| (k.clone(), v.shape().to_vec())).collect()
}

/// `run`: executes `graph` on `inputs` and writes the outputs to `output`.
pub fn cmd_run(
    graph: &Path,
    inputs: &Path,
    catalog: Option<&Path>,
    mode: Mode,
    output: &Path,
    out: &mut String,
) -> CliResult<()> {
    let g = load_graph(graph)?;
    let feeds = load_tensors(inputs)?;
    let catalog = load_catalog(catalog)?;
    let results = match mode {
        Mode::Session => {
            let s = Session::prepare(&g, &shapes_of(&feeds), &catalog)?;
            let _ = writeln!(out, "mode: session");
            session_report(out, &s);
            let r = s.run(&feeds)?;
            let _ = writeln!(out, "peak_bytes {}", r.peak_bytes);
            r.outputs
        }
        Mode::Module => {
            let prog = module_split(&g)?;
            let shapes = shape_inference(&g, &shapes_of(&feeds))?;
            let _ = writeln!(out, "mode: module ({} modules)", prog.modules.len());
            for (i, m) in prog.modules.iter().enumerate() {
                match m {
                    Module::Session(span) => {
                        let _ = writeln!(out, "module {i}: session");
                        let s = Session::prepare(span, &shapes, &catalog)?;
                        session_report(out, &s);
                    }
                    Module::If { op_id, .. } => {
                        let _ = writeln!(out, "module {i}: if (op {op_id})");
                    }
                    Module::While { op_id, max_iterations, .. } => {
                        let _ = writeln!(out, "module {i}: while (op {op_id}, max {max_iterations} iterations)");
                    }
                }
            }
            module_run(&prog, &feeds, &catalog)?
        }
    };
    write(output, &(tensors_to_json(&results)? + "\n"))
}

/// `search-report`: prices the graph on every backend of the catalog. Input
/// shapes come from `inputs` when given, otherwise from the graph's declarations.
pub fn cmd_search_report(graph: &Path, catalog: &Path, inputs: Option<&Path>, out: &mut String) -> CliResult<()> {
    let g = load_graph(graph)?;
    let catalog = load_catalog(Some(catalog))?;
    let shapes = match inputs {
        Some(p) => shapes_of(&load_tensors(p)?),
        None => BTreeMap::new(),
    };
    let s = Session::prepare(&g, &shapes, &catalog)?;
    let sel = s.selection();
    backend_totals(out, &catalog, sel);
    let ids: Vec<usize> = s.schedule().iter().map(|(id, _)| *id).collect();
    for (spec, cost) in catalog.iter().zip(&sel.costs) {
        if let Some(c) = cost {
            let _ = writeln!(out, "\n[{}]", spec.name);
            cost_table(out, &ids, c);
        }
    }
    let _ = writeln!(out, "\nwinner: {}", catalog[sel.winner].name);
    Ok(())
}

/// `workload`: naive versus geometric operator workload.
pub fn cmd_workload(aop: i64, top: i64, cop: i64, fop: i64, backends: i64, out: &mut String) -> CliResult<()> {
    let check = |name: &str, v: i64| {
        u64::try_from(v).map_err(|_| CliError::Usage(format!("--{name} must be a non-negative integer, got {v}")))
    };
    let reg = OperatorRegistry {
        aop: check("aop", aop)?,
        top: check("top", top)?,
        cop: check("cop", cop)?,
        fop: check("fop", fop)?,
        ba: check("backends", backends)?,
    };
    let r = workload_report(&reg);
    let _ = writeln!(out, "naive: {}", r.naive);
    let _ = writeln!(out, "geometric: {}", r.geometric);
    match r.reduction {
        Some(x) => {
            let _ = writeln!(out, "reduction: {:.1}%", x * 100.0);
        }
        None => {
            let _ = writeln!(out, "reduction: n/a");
        }
    }
    Ok(())
}

pub struct TrainOptions {
    pub optimizer: Optimizer,
    pub lr: f32,
    pub steps: usize,
}

/// `train`: minimises the graph's designated loss over its parameters. Writes the
/// final parameters to `params_out` and one `step loss` line per step to `out`.
pub fn cmd_train(
    graph: &Path,
    data: &Path,
    opts: &TrainOptions,
    params_out: &Path,
    out: &mut String,
) -> CliResult<Vec<f32>> {
    let g = load_graph(graph)?;
    let feeds = load_tensors(data)?;
    let loss = g.loss.clone().ok_or_else(|| CliError::Parse {
        path: graph.into(),
        source: Error::Parse("graph designates no loss".into()),
    })?;
    if g.parameters.is_empty() {
        return Err(CliError::Parse { path: graph.into(), source: Error::Parse("graph lists no parameters".into()) });
    }
    let mut params: Vec<Tensor> = g
        .parameters
        .iter()
        .map(|p| {
            g.constants().find(|(k, _)| *k == p).map(|(_, t)| t.clone()).ok_or_else(|| CliError::Parse {
                path: graph.into(),
                source: Error::Parse(format!("parameter `{p}` has no initial value")),
            })
        })
        .collect::<CliResult<_>>()?;
    let mut state = match opts.optimizer {
        Optimizer::Sgd => OptimizerState::sgd(opts.lr),
        Optimizer::Adam => OptimizerState::adam(opts.lr),
    };

    let evaluate = |params: &[Tensor]| {
        let mut f = feeds.clone();
        for (name, p) in g.parameters.iter().zip(params) {
            f.insert(name.clone(), p.clone());
        }
        backward(&g, &f, &loss, &g.parameters)
    };
    let mut curve = Vec::with_capacity(opts.steps + 1);
    let _ = writeln!(out, "step loss");
    for step in 0..=opts.steps {
        let res = evaluate(&params)?;
        if !res.loss.is_finite() {
            return Err(CliError::Diverged { step, value: res.loss });
        }
        let _ = writeln!(out, "{step} {:.6e}", res.loss);
        curve.push(res.loss);
        if step == opts.steps {
            break;
        }
        let grads: Vec<Tensor> = g.parameters.iter().map(|p| res.grads[p].clone()).collect();
        state.step(&mut params, &grads)?;
    }
    let trained: BTreeMap<String, Tensor> = g.parameters.iter().cloned().zip(params).collect();
    write(params_out, &(tensors_to_json(&trained)? + "\n"))?;
    Ok(curve)
}
