//! Computation-graph IR and the runtimes that execute it.

mod exec;
mod lower;
mod module;
mod pass;
mod session;
pub(crate) mod shape;
mod workload;

pub use exec::{execute_op, op_workload};
pub use lower::{lower_composite, CompositeOp};
pub use module::{module_run, module_split, Module, ModuleProgram, DEFAULT_MAX_ITERATIONS};
pub use pass::geometric_pass;
pub use session::{session_run, Session, SessionOutput};
pub use shape::{infer_op_shapes, shape_inference};
pub use workload::{workload_report, OperatorRegistry, WorkloadReport};

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RasterOp, Transform};
use crate::kernels::{BinaryOp, UnaryOp};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Atomic,
    Transform,
    Composite,
    #[serde(alias = "control-flow")]
    ControlFlow,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Atomic => "atomic",
            Category::Transform => "transform",
            Category::Composite => "composite",
            Category::ControlFlow => "control_flow",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    Unary(UnaryOp),
    Binary(BinaryOp),
    ReduceSum {
        axis: usize,
    },
    MatMul,
    Conv2d {
        stride: usize,
        pad: usize,
    },
    Raster(RasterOp),
    Transform(Transform),
    Composite(CompositeOp),
    /// Inputs are `[cond, args..]`; each branch takes `args` and yields the outputs.
    If {
        then_branch: Box<Graph>,
        else_branch: Box<Graph>,
    },
    /// Inputs are the initial loop variables. `cond` maps them to a scalar, `body`
    /// maps them to their next values; outputs are the final values.
    While {
        cond: Box<Graph>,
        body: Box<Graph>,
        max_iterations: usize,
    },
}

impl OpKind {
    pub fn category(&self) -> Category {
        match self {
            OpKind::Unary(_)
            | OpKind::Binary(_)
            | OpKind::ReduceSum { .. }
            | OpKind::MatMul
            | OpKind::Conv2d { .. }
            | OpKind::Raster(_) => Category::Atomic,
            OpKind::Transform(_) => Category::Transform,
            OpKind::Composite(_) => Category::Composite,
            OpKind::If { .. } | OpKind::While { .. } => Category::ControlFlow,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Unary(u) => u.name(),
            OpKind::Binary(b) => b.name(),
            OpKind::ReduceSum { .. } => "reduce_sum",
            OpKind::MatMul => "matmul",
            OpKind::Conv2d { .. } => "conv2d",
            OpKind::Raster(_) => "raster",
            OpKind::Transform(t) => t.name(),
            OpKind::Composite(c) => c.name(),
            OpKind::If { .. } => "if",
            OpKind::While { .. } => "while",
        }
    }

    /// Expected `(inputs, outputs)`; `None` means variadic.
    fn arity(&self) -> (Option<usize>, Option<usize>) {
        match self {
            OpKind::Unary(_) | OpKind::ReduceSum { .. } => (Some(1), Some(1)),
            OpKind::Binary(_) | OpKind::MatMul | OpKind::Conv2d { .. } => (Some(2), Some(1)),
            OpKind::Raster(r) => (Some(r.num_inputs()), Some(1)),
            OpKind::Transform(Transform::Concat { .. }) => (None, Some(1)),
            OpKind::Transform(_) => (Some(1), Some(1)),
            OpKind::Composite(c) => (Some(c.num_inputs()), Some(c.num_outputs())),
            OpKind::If { then_branch, else_branch } => {
                if then_branch.inputs.len() != else_branch.inputs.len()
                    || then_branch.outputs.len() != else_branch.outputs.len()
                {
                    return (None, None);
                }
                (Some(then_branch.inputs.len() + 1), Some(then_branch.outputs.len()))
            }
            OpKind::While { body, .. } => (Some(body.inputs.len()), Some(body.inputs.len())),
        }
    }

    fn subgraphs(&self) -> Vec<&Graph> {
        match self {
            OpKind::If { then_branch, else_branch } => vec![then_branch, else_branch],
            OpKind::While { cond, body, .. } => vec![cond, body],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    pub id: usize,
    pub kind: OpKind,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl Operator {
    pub fn category(&self) -> Category {
        self.kind.category()
    }
}

/// Tensor metadata; a tensor carrying `data` is a constant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorDesc {
    pub shape: Option<Vec<usize>>,
    pub data: Option<Tensor>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Graph {
    pub tensors: BTreeMap<String, TensorDesc>,
    pub operators: Vec<Operator>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Constants updated by training.
    pub parameters: Vec<String>,
    /// Scalar training objective.
    pub loss: Option<String>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_input(&mut self, name: &str, shape: Option<Vec<usize>>) -> String {
        self.tensors.insert(name.into(), TensorDesc { shape, data: None });
        self.inputs.push(name.into());
        name.into()
    }

    pub fn add_constant(&mut self, name: &str, value: Tensor) -> String {
        let shape = Some(value.shape().to_vec());
        self.tensors.insert(name.into(), TensorDesc { shape, data: Some(value) });
        name.into()
    }

    pub fn next_op_id(&self) -> usize {
        self.operators.iter().map(|o| o.id + 1).max().unwrap_or(0)
    }

    /// Appends an operator writing to the named outputs; returns its id.
    pub fn add_op(&mut self, kind: OpKind, inputs: &[&str], outputs: &[&str]) -> usize {
        let id = self.next_op_id();
        for o in outputs {
            self.tensors.entry((*o).into()).or_default();
        }
        self.operators.push(Operator {
            id,
            kind,
            inputs: inputs.iter().map(|s| (*s).into()).collect(),
            outputs: outputs.iter().map(|s| (*s).into()).collect(),
        });
        id
    }

    /// Appends a single-output operator with a generated output name.
    pub fn push(&mut self, kind: OpKind, inputs: &[&str]) -> String {
        let name = format!("%{}", self.next_op_id());
        self.add_op(kind, inputs, &[&name]);
        name
    }

    pub fn set_outputs(&mut self, outputs: &[&str]) {
        self.outputs = outputs.iter().map(|s| (*s).into()).collect();
    }

    pub fn is_constant(&self, name: &str) -> bool {
        self.tensors.get(name).is_some_and(|d| d.data.is_some())
    }

    pub fn constants(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter().filter_map(|(k, d)| d.data.as_ref().map(|t| (k, t)))
    }

    pub fn op(&self, id: usize) -> Option<&Operator> {
        self.operators.iter().find(|o| o.id == id)
    }

    pub fn has_control_flow(&self) -> bool {
        self.operators.iter().any(|o| o.category() == Category::ControlFlow)
    }

    /// Number of operators per category, including nested sub-graphs.
    pub fn census(&self) -> BTreeMap<Category, usize> {
        let mut out = BTreeMap::new();
        for op in &self.operators {
            *out.entry(op.category()).or_default() += 1;
            for g in op.kind.subgraphs() {
                for (k, v) in g.census() {
                    *out.entry(k).or_default() += v;
                }
            }
        }
        out
    }

    /// Map from tensor name to the index of its producing operator.
    pub fn producers(&self) -> HashMap<&str, usize> {
        let mut out = HashMap::new();
        for (i, op) in self.operators.iter().enumerate() {
            for t in &op.outputs {
                out.insert(t.as_str(), i);
            }
        }
        out
    }

    /// Structural checks: unique ids, operator arity, single producers, and every
    /// consumed tensor is an input, a constant or produced by some operator.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidGraph(m));
        let mut ids = BTreeSet::new();
        let mut produced: BTreeSet<&str> = self.inputs.iter().map(String::as_str).collect();
        if produced.len() != self.inputs.len() {
            return bad("duplicate graph input".into());
        }
        for (name, d) in &self.tensors {
            if d.data.is_some() {
                if produced.contains(name.as_str()) {
                    return bad(format!("constant `{name}` is also a graph input"));
                }
                produced.insert(name);
            }
        }
        for op in &self.operators {
            if !ids.insert(op.id) {
                return bad(format!("duplicate operator id {}", op.id));
            }
            let (ni, no) = op.kind.arity();
            if (op.kind.category() == Category::ControlFlow && ni.is_none())
                || ni.is_some_and(|n| n != op.inputs.len())
                || no.is_some_and(|n| n != op.outputs.len())
                || op.outputs.is_empty()
                || op.inputs.is_empty()
            {
                return bad(format!(
                    "operator {} ({}) has {} inputs and {} outputs",
                    op.id,
                    op.kind.name(),
                    op.inputs.len(),
                    op.outputs.len()
                ));
            }
            for t in &op.outputs {
                if !produced.insert(t) {
                    return bad(format!("tensor `{t}` has more than one producer"));
                }
            }
            if let OpKind::While { cond, .. } = &op.kind {
                if cond.inputs.len() != op.inputs.len() || cond.outputs.len() != 1 {
                    return bad(format!("while {} condition must map the loop vars to one scalar", op.id));
                }
            }
            for g in op.kind.subgraphs() {
                g.validate()?;
            }
        }
        for t in self.operators.iter().flat_map(|o| &o.inputs).chain(&self.outputs) {
            if !produced.contains(t.as_str()) {
                return bad(format!("tensor `{t}` has no producer"));
            }
        }
        for name in self.parameters.iter().chain(&self.loss) {
            if !produced.contains(name.as_str()) {
                return bad(format!("unknown tensor `{name}`"));
            }
        }
        Ok(())
    }
}

/// Operator indices in dependency order; ties go to the smaller operator id.
/// Control-flow sub-graphs are opaque.
pub fn topo_order(g: &Graph) -> Result<Vec<usize>> {
    let producers = g.producers();
    let mut indegree = vec![0usize; g.operators.len()];
    let mut consumers: Vec<Vec<usize>> = vec![Vec::new(); g.operators.len()];
    for (i, op) in g.operators.iter().enumerate() {
        let deps: BTreeSet<usize> = op.inputs.iter().filter_map(|t| producers.get(t.as_str()).copied()).collect();
        indegree[i] = deps.len();
        for d in deps {
            consumers[d].push(i);
        }
    }
    let mut ready: BinaryHeap<Reverse<(usize, usize)>> =
        indegree.iter().enumerate().filter(|(_, &d)| d == 0).map(|(i, _)| Reverse((g.operators[i].id, i))).collect();
    let mut order = Vec::with_capacity(g.operators.len());
    while let Some(Reverse((_, i))) = ready.pop() {
        order.push(i);
        for &c in &consumers[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(Reverse((g.operators[c].id, c)));
            }
        }
    }
    if order.len() != g.operators.len() {
        return Err(Error::CyclicGraph);
    }
    Ok(order)
}
