//! Module-mode execution: the graph is cut at control-flow operators into
//! session-executable spans, and control flow is interpreted between them.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::session::Session;
use super::{topo_order, Graph, OpKind};
use crate::error::{Error, Result};
use crate::search::BackendSpec;
use crate::tensor::Tensor;

pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

/// A split graph. Tensors flow between modules by name.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleProgram {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub constants: BTreeMap<String, Tensor>,
    pub modules: Vec<Module>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Module {
    /// Control-flow-free span. Its graph inputs are read from, and its graph
    /// outputs written to, the enclosing program's environment.
    Session(Graph),
    If {
        op_id: usize,
        cond: String,
        args: Vec<String>,
        outputs: Vec<String>,
        then_branch: ModuleProgram,
        else_branch: ModuleProgram,
    },
    While {
        op_id: usize,
        args: Vec<String>,
        outputs: Vec<String>,
        cond: ModuleProgram,
        body: ModuleProgram,
        max_iterations: usize,
    },
}

impl Module {
    pub fn is_control_flow(&self) -> bool {
        !matches!(self, Module::Session(_))
    }
}

/// Splits `g` at its control-flow operators, recursing into their sub-graphs.
pub fn module_split(g: &Graph) -> Result<ModuleProgram> {
    let order = topo_order(g)?;
    let constants: BTreeMap<String, Tensor> = g.constants().map(|(k, t)| (k.clone(), t.clone())).collect();
    let mut prog = ModuleProgram {
        inputs: g.inputs.clone(),
        outputs: g.outputs.clone(),
        constants: BTreeMap::new(),
        modules: Vec::new(),
    };
    if !g.has_control_flow() {
        prog.modules.push(Module::Session(g.clone()));
        return Ok(prog);
    }

    // Tensors each position in `order` still needs, from that position onward.
    let mut needed_after: Vec<BTreeSet<String>> = vec![BTreeSet::new(); order.len() + 1];
    let mut acc: BTreeSet<String> = g.outputs.iter().chain(&g.loss).cloned().collect();
    needed_after[order.len()] = acc.clone();
    for (pos, &i) in order.iter().enumerate().rev() {
        acc.extend(g.operators[i].inputs.iter().cloned());
        needed_after[pos] = acc.clone();
    }

    let mut span: Vec<usize> = Vec::new();
    let flush = |span: &mut Vec<usize>, end: usize, prog: &mut ModuleProgram| {
        if span.is_empty() {
            return;
        }
        prog.modules.push(Module::Session(span_graph(g, span, &needed_after[end])));
        span.clear();
    };
    for (pos, &i) in order.iter().enumerate() {
        let op = &g.operators[i];
        match &op.kind {
            OpKind::If { then_branch, else_branch } => {
                flush(&mut span, pos, &mut prog);
                prog.modules.push(Module::If {
                    op_id: op.id,
                    cond: op.inputs[0].clone(),
                    args: op.inputs[1..].to_vec(),
                    outputs: op.outputs.clone(),
                    then_branch: module_split(then_branch)?,
                    else_branch: module_split(else_branch)?,
                });
            }
            OpKind::While { cond, body, max_iterations } => {
                flush(&mut span, pos, &mut prog);
                prog.modules.push(Module::While {
                    op_id: op.id,
                    args: op.inputs.clone(),
                    outputs: op.outputs.clone(),
                    cond: module_split(cond)?,
                    body: module_split(body)?,
                    max_iterations: *max_iterations,
                });
            }
            _ => span.push(i),
        }
    }
    flush(&mut span, order.len(), &mut prog);

    // Constants read directly by control-flow modules live in the program.
    for m in &prog.modules {
        let reads: Vec<&String> = match m {
            Module::If { cond, args, .. } => std::iter::once(cond).chain(args).collect(),
            Module::While { args, .. } => args.iter().collect(),
            Module::Session(_) => Vec::new(),
        };
        for t in reads {
            if let Some(c) = constants.get(t) {
                prog.constants.insert(t.clone(), c.clone());
            }
        }
    }
    for o in &prog.outputs {
        if let Some(c) = constants.get(o) {
            prog.constants.insert(o.clone(), c.clone());
        }
    }
    Ok(prog)
}

fn span_graph(g: &Graph, span: &[usize], needed_later: &BTreeSet<String>) -> Graph {
    let mut sub = Graph::new();
    let produced: BTreeSet<&String> = span.iter().flat_map(|&i| &g.operators[i].outputs).collect();
    for &i in span {
        for t in &g.operators[i].inputs {
            if produced.contains(t) || sub.tensors.contains_key(t) {
                continue;
            }
            let desc = g.tensors.get(t).cloned().unwrap_or_default();
            if g.is_constant(t) {
                sub.tensors.insert(t.clone(), desc);
            } else {
                sub.add_input(t, desc.shape);
            }
        }
    }
    for &i in span {
        let op = g.operators[i].clone();
        for t in &op.outputs {
            sub.tensors.insert(t.clone(), g.tensors.get(t).cloned().unwrap_or_default());
        }
        sub.operators.push(op);
    }
    sub.outputs = produced.into_iter().filter(|t| needed_later.contains(*t)).cloned().collect();
    sub
}

/// Runs a split program. Each session span picks its backend from `catalog`
/// independently.
pub fn module_run(
    prog: &ModuleProgram,
    inputs: &BTreeMap<String, Tensor>,
    catalog: &[BackendSpec],
) -> Result<BTreeMap<String, Tensor>> {
    let mut cache = HashMap::new();
    run_program(prog, inputs, catalog, &mut cache)
}

type SessionCache = HashMap<(*const Graph, Vec<Vec<usize>>), Session>;

fn run_program(
    prog: &ModuleProgram,
    inputs: &BTreeMap<String, Tensor>,
    catalog: &[BackendSpec],
    cache: &mut SessionCache,
) -> Result<BTreeMap<String, Tensor>> {
    let mut env: HashMap<String, Tensor> = prog.constants.clone().into_iter().collect();
    for name in &prog.inputs {
        let t = inputs.get(name).ok_or_else(|| Error::Shape(format!("missing input `{name}`")))?;
        env.insert(name.clone(), t.clone());
    }
    for m in &prog.modules {
        match m {
            Module::Session(graph) => {
                let feeds: BTreeMap<String, Tensor> =
                    graph.inputs.iter().map(|t| Ok((t.clone(), fetch(&env, t)?.clone()))).collect::<Result<_>>()?;
                let key =
                    (graph as *const Graph, graph.inputs.iter().map(|t| feeds[t].shape().to_vec()).collect::<Vec<_>>());
                if !cache.contains_key(&key) {
                    let shapes = feeds.iter().map(|(k, t)| (k.clone(), t.shape().to_vec())).collect();
                    cache.insert(key.clone(), Session::prepare(graph, &shapes, catalog)?);
                }
                let out = cache[&key].run(&feeds)?;
                env.extend(out.outputs);
            }
            Module::If { op_id, cond, args, outputs, then_branch, else_branch } => {
                let branch = if truth(fetch(&env, cond)?, *op_id)? { then_branch } else { else_branch };
                let vals = args.iter().map(|t| fetch(&env, t).cloned()).collect::<Result<Vec<_>>>()?;
                let res = call(branch, vals, catalog, cache, *op_id)?;
                env.extend(outputs.iter().cloned().zip(res));
            }
            Module::While { op_id, args, outputs, cond, body, max_iterations } => {
                let mut vals = args.iter().map(|t| fetch(&env, t).cloned()).collect::<Result<Vec<_>>>()?;
                let mut iterations = 0;
                loop {
                    let c = call(cond, vals.clone(), catalog, cache, *op_id)?;
                    let c = c.first().ok_or_else(|| {
                        Error::InvalidGraph(format!("while operator {op_id}: condition has no output"))
                    })?;
                    if !truth(c, *op_id)? {
                        break;
                    }
                    if iterations == *max_iterations {
                        return Err(Error::RunawayLoop(*max_iterations));
                    }
                    vals = call(body, vals, catalog, cache, *op_id)?;
                    iterations += 1;
                }
                env.extend(outputs.iter().cloned().zip(vals));
            }
        }
    }
    prog.outputs.iter().map(|o| Ok((o.clone(), fetch(&env, o)?.clone()))).collect()
}

/// Runs a sub-program with positionally bound arguments.
fn call(
    prog: &ModuleProgram,
    args: Vec<Tensor>,
    catalog: &[BackendSpec],
    cache: &mut SessionCache,
    op_id: usize,
) -> Result<Vec<Tensor>> {
    if args.len() != prog.inputs.len() {
        return Err(Error::InvalidGraph(format!(
            "operator {op_id}: sub-graph takes {} inputs, got {}",
            prog.inputs.len(),
            args.len()
        )));
    }
    let feeds = prog.inputs.iter().cloned().zip(args).collect();
    let mut out = run_program(prog, &feeds, catalog, cache)?;
    Ok(prog.outputs.iter().map(|o| out.remove(o).expect("program outputs")).collect())
}

fn fetch<'a>(env: &'a HashMap<String, Tensor>, name: &str) -> Result<&'a Tensor> {
    env.get(name).ok_or_else(|| Error::InvalidGraph(format!("tensor `{name}` is not available")))
}

fn truth(t: &Tensor, op_id: usize) -> Result<bool> {
    if t.numel() != 1 {
        return Err(Error::Shape(format!("operator {op_id}: condition must be scalar, got shape {:?}", t.shape())));
    }
    Ok(t.data()[0] != 0.0)
}
