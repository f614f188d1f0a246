//! Session-mode execution: topological order, shape inference, geometric pass,
//! backend search, then sequential kernel execution.

use std::collections::{BTreeMap, HashMap};

use super::exec::{execute_op, op_workload};
use super::pass::geometric_pass;
use super::shape::annotate;
use super::{topo_order, Graph};
use crate::error::{Error, Result};
use crate::kernels::AlgorithmVariant;
use crate::search::{graph_cost, select_backend, BackendSpec, CostBreakdown, Selection};
use crate::tensor::Tensor;

/// A graph prepared for repeated execution with fixed input shapes.
#[derive(Debug, Clone)]
pub struct Session {
    graph: Graph,
    order: Vec<usize>,
    input_shapes: BTreeMap<String, Vec<usize>>,
    catalog: Vec<BackendSpec>,
    selection: Selection,
    executed: BackendSpec,
    plan: CostBreakdown,
}

#[derive(Debug, Clone)]
pub struct SessionOutput {
    pub outputs: BTreeMap<String, Tensor>,
    /// Backend with the lowest modelled cost.
    pub selected: String,
    /// Backend whose kernels actually ran; differs from `selected` when the
    /// winner is a cost-only catalog entry.
    pub executed: String,
    /// Per-operator variants and costs on the executed backend.
    pub plan: CostBreakdown,
    pub selection: Selection,
    /// Largest total size of simultaneously live tensors, in bytes.
    pub peak_bytes: usize,
}

impl Session {
    /// Prepares `g` for inputs of the given shapes. An empty catalog means the
    /// built-in reference CPU backend.
    pub fn prepare(g: &Graph, input_shapes: &BTreeMap<String, Vec<usize>>, catalog: &[BackendSpec]) -> Result<Self> {
        if let Some(op) = g.operators.iter().find(|o| o.kind.category() == super::Category::ControlFlow) {
            return Err(Error::Mode(format!(
                "operator {} ({}) is control flow; use module mode",
                op.id,
                op.kind.name()
            )));
        }
        topo_order(g)?;
        let annotated = annotate(g, input_shapes)?;
        let graph = geometric_pass(&annotated)?;
        let order = topo_order(&graph)?;
        let workloads = order
            .iter()
            .map(|&i| {
                let op = &graph.operators[i];
                let shapes: Vec<Vec<usize>> =
                    op.inputs.iter().map(|t| graph.tensors[t].shape.clone().expect("annotated")).collect();
                op_workload(&op.kind, &shapes)?
                    .ok_or_else(|| Error::Unsupported(format!("cannot cost {}", op.kind.name())))
            })
            .collect::<Result<Vec<_>>>()?;

        let catalog = if catalog.is_empty() { vec![BackendSpec::reference()] } else { catalog.to_vec() };
        let selection = select_backend(&workloads, &catalog)?;
        let (executed, plan) = if catalog[selection.winner].executable {
            (catalog[selection.winner].clone(), selection.winner_cost().clone())
        } else if let Some(i) = selection.best_where(|i| catalog[i].executable) {
            (catalog[i].clone(), selection.costs[i].clone().expect("costed"))
        } else {
            let reference = BackendSpec::reference();
            let plan = graph_cost(&workloads, &reference)?;
            (reference, plan)
        };
        let input_shapes =
            graph.inputs.iter().map(|t| (t.clone(), graph.tensors[t].shape.clone().expect("annotated"))).collect();
        Ok(Session { graph, order, input_shapes, catalog, selection, executed, plan })
    }

    /// The graph after the geometric pass.
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn selection(&self) -> &Selection {
        &self.selection
    }

    pub fn selected(&self) -> &BackendSpec {
        &self.catalog[self.selection.winner]
    }

    pub fn executed(&self) -> &BackendSpec {
        &self.executed
    }

    pub fn plan(&self) -> &CostBreakdown {
        &self.plan
    }

    /// Operator ids in execution order with their chosen algorithms.
    pub fn schedule(&self) -> Vec<(usize, AlgorithmVariant)> {
        self.order.iter().zip(&self.plan.ops).map(|(&i, c)| (self.graph.operators[i].id, c.variant)).collect()
    }

    pub fn run(&self, inputs: &BTreeMap<String, Tensor>) -> Result<SessionOutput> {
        let g = &self.graph;
        let mut env: HashMap<&str, Tensor> = HashMap::new();
        for (name, shape) in &self.input_shapes {
            let t = inputs.get(name).ok_or_else(|| Error::Shape(format!("missing input `{name}`")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Shape(format!(
                    "input `{name}` has shape {:?}, session prepared for {shape:?}",
                    t.shape()
                )));
            }
            env.insert(name, t.clone());
        }
        for (name, t) in g.constants() {
            env.insert(name, t.clone());
        }

        let mut last_use: HashMap<&str, usize> = HashMap::new();
        for (step, &i) in self.order.iter().enumerate() {
            for t in &g.operators[i].inputs {
                last_use.insert(t, step);
            }
        }
        let keep = |t: &str| g.outputs.iter().any(|o| o == t) || g.is_constant(t);
        let mut live: usize = env.values().map(bytes).sum();
        let mut peak = live;

        for (step, (&i, cost)) in self.order.iter().zip(&self.plan.ops).enumerate() {
            let op = &g.operators[i];
            let outs = {
                let args: Vec<&Tensor> = op.inputs.iter().map(|t| &env[t.as_str()]).collect();
                execute_op(op, &args, cost.variant)?
            };
            for (name, t) in op.outputs.iter().zip(outs) {
                live += bytes(&t);
                env.insert(name, t);
            }
            peak = peak.max(live);
            for t in &op.inputs {
                if last_use.get(t.as_str()) == Some(&step) && !keep(t) {
                    if let Some(freed) = env.remove(t.as_str()) {
                        live -= bytes(&freed);
                    }
                }
            }
        }
        let outputs = g
            .outputs
            .iter()
            .map(|o| {
                env.get(o.as_str())
                    .cloned()
                    .map(|t| (o.clone(), t))
                    .ok_or_else(|| Error::InvalidGraph(format!("output `{o}` was not computed")))
            })
            .collect::<Result<_>>()?;
        Ok(SessionOutput {
            outputs,
            selected: self.selected().name.clone(),
            executed: self.executed.name.clone(),
            plan: self.plan.clone(),
            selection: self.selection.clone(),
            peak_bytes: peak,
        })
    }
}

fn bytes(t: &Tensor) -> usize {
    t.numel() * std::mem::size_of::<f32>()
}

/// Prepares and runs `g` once.
pub fn session_run(g: &Graph, inputs: &BTreeMap<String, Tensor>, catalog: &[BackendSpec]) -> Result<SessionOutput> {
    let shapes = inputs.iter().map(|(k, t)| (k.clone(), t.shape().to_vec())).collect();
    Session::prepare(g, &shapes, catalog)?.run(inputs)
}
