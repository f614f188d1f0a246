//! JSON documents for graphs and named tensor sets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::graph::{Category, CompositeOp, Graph, OpKind, Operator, TensorDesc, DEFAULT_MAX_ITERATIONS};
use crate::kernels::{BinaryOp, UnaryOp};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    pub tensors: Vec<TensorEntry>,
    pub operators: Vec<OperatorEntry>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parameters: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub id: String,
    #[serde(default)]
    pub shape: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorEntry {
    pub id: usize,
    pub kind: String,
    pub category: Category,
    #[serde(default)]
    pub attributes: Map<String, Value>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub subgraphs: BTreeMap<String, GraphDocument>,
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

impl GraphDocument {
    pub fn from_graph(g: &Graph) -> Result<Self> {
        let tensors = g
            .tensors
            .iter()
            .map(|(id, d)| TensorEntry {
                id: id.clone(),
                shape: d.shape.clone(),
                data: d.data.as_ref().map(|t| t.data().to_vec()),
            })
            .collect();
        let operators = g.operators.iter().map(op_entry).collect::<Result<_>>()?;
        Ok(GraphDocument {
            tensors,
            operators,
            inputs: g.inputs.clone(),
            outputs: g.outputs.clone(),
            parameters: g.parameters.clone(),
            loss: g.loss.clone(),
        })
    }

    /// Builds and validates the graph.
    pub fn into_graph(self) -> Result<Graph> {
        let mut g = Graph::new();
        for t in self.tensors {
            if g.tensors.contains_key(&t.id) {
                return Err(parse_err(format!("tensor `{}` declared twice", t.id)));
            }
            let data = match (t.data, &t.shape) {
                (Some(d), Some(s)) => Some(Tensor::new(s.clone(), d)?),
                (Some(_), None) => return Err(parse_err(format!("constant `{}` needs a shape", t.id))),
                (None, _) => None,
            };
            g.tensors.insert(t.id, TensorDesc { shape: t.shape, data });
        }
        for e in self.operators {
            g.operators.push(parse_op(e)?);
        }
        g.inputs = self.inputs;
        g.outputs = self.outputs;
        g.parameters = self.parameters;
        g.loss = self.loss;
        g.validate()?;
        Ok(g)
    }
}

fn op_entry(op: &Operator) -> Result<OperatorEntry> {
    let mut subgraphs = BTreeMap::new();
    let (kind, attributes) = match &op.kind {
        OpKind::Unary(u) => (u.name().to_string(), Map::new()),
        OpKind::Binary(b) => (b.name().to_string(), Map::new()),
        OpKind::ReduceSum { axis } => ("reduce_sum".into(), obj([("axis", (*axis).into())])),
        OpKind::MatMul => ("matmul".into(), Map::new()),
        OpKind::Conv2d { stride, pad } => {
            ("conv2d".into(), obj([("stride", (*stride).into()), ("pad", (*pad).into())]))
        }
        OpKind::Raster(r) => ("raster".into(), as_object(serde_json::to_value(r)?)),
        OpKind::Transform(t) => untag(serde_json::to_value(t)?),
        OpKind::Composite(c) => untag(serde_json::to_value(c)?),
        OpKind::If { then_branch, else_branch } => {
            subgraphs.insert("then".into(), GraphDocument::from_graph(then_branch)?);
            subgraphs.insert("else".into(), GraphDocument::from_graph(else_branch)?);
            ("if".into(), Map::new())
        }
        OpKind::While { cond, body, max_iterations } => {
            subgraphs.insert("cond".into(), GraphDocument::from_graph(cond)?);
            subgraphs.insert("body".into(), GraphDocument::from_graph(body)?);
            ("while".into(), obj([("max_iterations", (*max_iterations).into())]))
        }
    };
    Ok(OperatorEntry {
        id: op.id,
        kind,
        category: op.kind.category(),
        attributes,
        inputs: op.inputs.clone(),
        outputs: op.outputs.clone(),
        subgraphs,
    })
}

fn obj<const N: usize>(kv: [(&str, Value); N]) -> Map<String, Value> {
    kv.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn as_object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => Map::new(),
    }
}

/// Splits serde's externally tagged enum encoding into name and attributes.
fn untag(v: Value) -> (String, Map<String, Value>) {
    match v {
        Value::String(s) => (s, Map::new()),
        Value::Object(m) => {
            let (k, v) = m.into_iter().next().expect("tagged enum has one key");
            (k, as_object(v))
        }
        other => (other.to_string(), Map::new()),
    }
}

fn retag<T: for<'de> Deserialize<'de>>(kind: &str, attrs: &Map<String, Value>) -> Result<T> {
    let tagged = Value::Object(obj([(kind, Value::Object(attrs.clone()))]));
    serde_json::from_value(tagged)
        .or_else(|e| {
            if attrs.is_empty() {
                serde_json::from_value(Value::String(kind.into())).map_err(|_| e)
            } else {
                Err(e)
            }
        })
        .map_err(|e| parse_err(format!("{kind}: {e}")))
}

fn attr<T: for<'de> Deserialize<'de>>(kind: &str, attrs: &Map<String, Value>, key: &str) -> Result<T> {
    let v = attrs.get(key).ok_or_else(|| parse_err(format!("{kind}: missing attribute `{key}`")))?;
    serde_json::from_value(v.clone()).map_err(|e| parse_err(format!("{kind}.{key}: {e}")))
}

fn no_attrs(kind: &str, attrs: &Map<String, Value>, allowed: &[&str]) -> Result<()> {
    match attrs.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(parse_err(format!("{kind}: unknown attribute `{k}`"))),
        None => Ok(()),
    }
}

const TRANSFORMS: [&str; 6] = ["transpose", "slice", "concat", "reverse", "reshape", "broadcast"];
const COMPOSITES: [&str; 4] = ["elu", "avg_pool2d", "layer_norm", "lstm_cell"];

fn parse_op(mut e: OperatorEntry) -> Result<Operator> {
    let k = e.kind.as_str();
    let a = &e.attributes;
    let mut sub = |name: &str| -> Result<Box<Graph>> {
        let doc = e
            .subgraphs
            .remove(name)
            .ok_or_else(|| parse_err(format!("{k} operator {} needs sub-graph `{name}`", e.id)))?;
        Ok(Box::new(doc.into_graph()?))
    };
    let kind = if let Some(u) = UnaryOp::ALL.into_iter().find(|u| u.name() == k) {
        no_attrs(k, a, &[])?;
        OpKind::Unary(u)
    } else if let Some(b) = BinaryOp::ALL.into_iter().find(|b| b.name() == k) {
        no_attrs(k, a, &[])?;
        OpKind::Binary(b)
    } else {
        match k {
            "reduce_sum" => {
                no_attrs(k, a, &["axis"])?;
                OpKind::ReduceSum { axis: attr(k, a, "axis")? }
            }
            "matmul" => {
                no_attrs(k, a, &[])?;
                OpKind::MatMul
            }
            "conv2d" => {
                no_attrs(k, a, &["stride", "pad"])?;
                OpKind::Conv2d { stride: attr(k, a, "stride")?, pad: attr(k, a, "pad")? }
            }
            "raster" => OpKind::Raster(
                serde_json::from_value(Value::Object(a.clone())).map_err(|err| parse_err(format!("raster: {err}")))?,
            ),
            _ if TRANSFORMS.contains(&k) => OpKind::Transform(retag(k, a)?),
            _ if COMPOSITES.contains(&k) => OpKind::Composite(retag::<CompositeOp>(k, a)?),
            "if" => {
                no_attrs(k, a, &[])?;
                let (t, f) = (sub("then")?, sub("else")?);
                OpKind::If { then_branch: t, else_branch: f }
            }
            "while" => {
                no_attrs(k, a, &["max_iterations"])?;
                let max_iterations = match a.get("max_iterations") {
                    Some(_) => attr(k, a, "max_iterations")?,
                    None => DEFAULT_MAX_ITERATIONS,
                };
                let (c, b) = (sub("cond")?, sub("body")?);
                OpKind::While { cond: c, body: b, max_iterations }
            }
            _ => return Err(parse_err(format!("operator {}: unknown kind `{k}`", e.id))),
        }
    };
    if let Some(extra) = e.subgraphs.keys().next() {
        return Err(parse_err(format!("operator {}: unexpected sub-graph `{extra}`", e.id)));
    }
    if kind.category() != e.category {
        return Err(parse_err(format!(
            "operator {}: `{k}` is {}, document says {}",
            e.id,
            kind.category(),
            e.category
        )));
    }
    Ok(Operator { id: e.id, kind, inputs: e.inputs, outputs: e.outputs })
}

pub fn graph_from_json(text: &str) -> Result<Graph> {
    serde_json::from_str::<GraphDocument>(text)?.into_graph()
}

pub fn graph_to_json(g: &Graph) -> Result<String> {
    Ok(serde_json::to_string_pretty(&GraphDocument::from_graph(g)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorDocument {
    pub tensors: Vec<TensorEntry>,
}

pub fn tensors_from_json(text: &str) -> Result<BTreeMap<String, Tensor>> {
    let doc: TensorDocument = serde_json::from_str(text)?;
    let mut out = BTreeMap::new();
    for t in doc.tensors {
        let shape = t.shape.ok_or_else(|| parse_err(format!("tensor `{}` needs a shape", t.id)))?;
        let data = t.data.ok_or_else(|| parse_err(format!("tensor `{}` needs data", t.id)))?;
        if out.insert(t.id.clone(), Tensor::new(shape, data)?).is_some() {
            return Err(parse_err(format!("tensor `{}` given twice", t.id)));
        }
    }
    Ok(out)
}

pub fn tensors_to_json(tensors: &BTreeMap<String, Tensor>) -> Result<String> {
    let doc = TensorDocument {
        tensors: tensors
            .iter()
            .map(|(id, t)| TensorEntry {
                id: id.clone(),
                shape: Some(t.shape().to_vec()),
                data: Some(t.data().to_vec()),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}
