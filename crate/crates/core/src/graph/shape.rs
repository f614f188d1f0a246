use std::collections::BTreeMap;

use super::{topo_order, Graph, OpKind};
use crate::error::{Error, Result};
use crate::geometry::transform_output_shape;
use crate::kernels::ConvGeometry;
use crate::tensor::{check_shape, numel};

/// Shapes of every tensor in `g`, given shapes for its inputs. Inputs missing from
/// `input_shapes` fall back to their declared shape.
pub fn shape_inference(g: &Graph, input_shapes: &BTreeMap<String, Vec<usize>>) -> Result<BTreeMap<String, Vec<usize>>> {
    let annotated = annotate(g, input_shapes)?;
    Ok(annotated.tensors.into_iter().filter_map(|(k, d)| d.shape.map(|s| (k, s))).collect())
}

/// Copy of `g` with every tensor descriptor's shape filled in, recursively
/// through control-flow sub-graphs.
pub(crate) fn annotate(g: &Graph, input_shapes: &BTreeMap<String, Vec<usize>>) -> Result<Graph> {
    g.validate()?;
    let mut out = g.clone();
    for name in &g.inputs {
        let shape = input_shapes
            .get(name)
            .or_else(|| g.tensors.get(name).and_then(|d| d.shape.as_ref()))
            .ok_or_else(|| Error::Shape(format!("no shape given for input `{name}`")))?
            .clone();
        check_shape(&shape)?;
        out.tensors.entry(name.clone()).or_default().shape = Some(shape);
    }
    for idx in topo_order(g)? {
        let op = &g.operators[idx];
        let in_shapes =
            op.inputs.iter().map(|t| out.tensors[t].shape.clone().expect("producers run first")).collect::<Vec<_>>();
        let (shapes, kind) =
            infer_with_subgraphs(&op.kind, &in_shapes).map_err(|e| prefix(e, op.id, op.kind.name()))?;
        out.operators[idx].kind = kind;
        for (t, s) in op.outputs.iter().zip(shapes) {
            out.tensors.entry(t.clone()).or_default().shape = Some(s);
        }
    }
    Ok(out)
}

fn prefix(e: Error, id: usize, name: &str) -> Error {
    match e {
        Error::Shape(m) => Error::Shape(format!("operator {id} ({name}): {m}")),
        other => other,
    }
}

/// Output shapes of one operator given its input shapes.
pub fn infer_op_shapes(kind: &OpKind, inputs: &[Vec<usize>]) -> Result<Vec<Vec<usize>>> {
    infer_with_subgraphs(kind, inputs).map(|(s, _)| s)
}

fn bind(g: &Graph, shapes: &[Vec<usize>]) -> BTreeMap<String, Vec<usize>> {
    g.inputs.iter().cloned().zip(shapes.iter().cloned()).collect()
}

fn outputs_of(g: &Graph) -> Vec<Vec<usize>> {
    g.outputs.iter().map(|t| g.tensors[t].shape.clone().expect("annotated")).collect()
}

fn infer_with_subgraphs(kind: &OpKind, inputs: &[Vec<usize>]) -> Result<(Vec<Vec<usize>>, OpKind)> {
    let single = |s: Vec<usize>| Ok((vec![s], kind.clone()));
    match kind {
        OpKind::Unary(_) => single(inputs[0].clone()),
        OpKind::Binary(b) => {
            if inputs[0] != inputs[1] {
                return Err(Error::Shape(format!("{} of {:?} and {:?}", b.name(), inputs[0], inputs[1])));
            }
            single(inputs[0].clone())
        }
        OpKind::ReduceSum { axis } => {
            if *axis >= inputs[0].len() {
                return Err(Error::Axis { axis: *axis, rank: inputs[0].len() });
            }
            single(crate::kernels::elementwise_reduced_shape(&inputs[0], *axis))
        }
        OpKind::MatMul => match (inputs[0].as_slice(), inputs[1].as_slice()) {
            (&[a, e], &[e2, b]) if e == e2 => single(vec![a, b]),
            (l, r) => Err(Error::Shape(format!("matmul of {l:?} and {r:?}"))),
        },
        OpKind::Conv2d { stride, pad } => {
            single(ConvGeometry::from_shapes(&inputs[0], &inputs[1], *stride, *pad)?.out_shape())
        }
        OpKind::Raster(r) => {
            let lens: Vec<usize> = inputs.iter().map(|s| numel(s)).collect();
            check_shape(&r.out_shape)?;
            r.check_bounds(&lens)?;
            single(r.out_shape.clone())
        }
        OpKind::Transform(t) => single(transform_output_shape(t, inputs)?),
        OpKind::Composite(c) => Ok((c.output_shapes(inputs)?, kind.clone())),
        OpKind::If { then_branch, else_branch } => {
            let cond = &inputs[0];
            if numel(cond) != 1 {
                return Err(Error::Shape(format!("if condition must be scalar, got {cond:?}")));
            }
            let t = annotate(then_branch, &bind(then_branch, &inputs[1..]))?;
            let e = annotate(else_branch, &bind(else_branch, &inputs[1..]))?;
            let (ts, es) = (outputs_of(&t), outputs_of(&e));
            if ts != es {
                return Err(Error::Shape(format!("if branches yield {ts:?} and {es:?}")));
            }
            Ok((ts, OpKind::If { then_branch: Box::new(t), else_branch: Box::new(e) }))
        }
        OpKind::While { cond, body, max_iterations } => {
            let c = annotate(cond, &bind(cond, inputs))?;
            let cs = outputs_of(&c);
            if cs.len() != 1 || numel(&cs[0]) != 1 {
                return Err(Error::Shape(format!("while condition must be scalar, got {cs:?}")));
            }
            let b = annotate(body, &bind(body, inputs))?;
            let bs = outputs_of(&b);
            if bs != inputs {
                return Err(Error::Shape(format!("while body changes loop variable shapes {inputs:?} -> {bs:?}")));
            }
            Ok((bs, OpKind::While { cond: Box::new(c), body: Box::new(b), max_iterations: *max_iterations }))
        }
    }
}
