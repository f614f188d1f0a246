use std::collections::{BTreeSet, HashMap};

use super::lower::lower_composite;
use super::shape::annotate;
use super::{topo_order, Graph, OpKind, Operator};
use crate::error::{Error, Result};
use crate::geometry::{decompose_transform, merge_vertical, RasterOp};

/// Decomposes transform and composite operators into atomic and raster
/// operators, then applies vertical and horizontal raster merging until nothing
/// changes. Control-flow sub-graphs are rewritten recursively.
///
/// Input shapes are taken from the tensor descriptors, so run shape inference
/// first (or declare input shapes).
pub fn geometric_pass(g: &Graph) -> Result<Graph> {
    let g = annotate(g, &Default::default())?;
    let mut g = decompose(g)?;
    loop {
        let changed = merge_vertical_pass(&mut g)? | merge_horizontal_pass(&mut g)? | prune(&mut g)?;
        if !changed {
            break;
        }
    }
    g.validate()?;
    Ok(g)
}

fn shape_of(g: &Graph, t: &str) -> Vec<usize> {
    g.tensors[t].shape.clone().expect("graph annotated before decomposition")
}

fn decompose(g: Graph) -> Result<Graph> {
    let mut next_id = g.next_op_id();
    let mut out = Graph { operators: Vec::with_capacity(g.operators.len()), ..g.clone() };
    for op in g.operators.iter().cloned() {
        let in_shapes: Vec<Vec<usize>> = op.inputs.iter().map(|t| shape_of(&g, t)).collect();
        match op.kind.clone() {
            OpKind::Transform(t) => {
                let r = decompose_transform(&t, &in_shapes)?;
                out.operators.push(Operator { kind: OpKind::Raster(r), ..op });
            }
            OpKind::Composite(c) => {
                let sub = annotate(&lower_composite(&c, &in_shapes)?, &Default::default())?;
                inline(&mut out, &op, sub, &mut next_id)?;
            }
            OpKind::If { then_branch, else_branch } => out.operators.push(Operator {
                kind: OpKind::If {
                    then_branch: Box::new(geometric_pass(&then_branch)?),
                    else_branch: Box::new(geometric_pass(&else_branch)?),
                },
                ..op
            }),
            OpKind::While { cond, body, max_iterations } => out.operators.push(Operator {
                kind: OpKind::While {
                    cond: Box::new(geometric_pass(&cond)?),
                    body: Box::new(geometric_pass(&body)?),
                    max_iterations,
                },
                ..op
            }),
            _ => out.operators.push(op),
        }
    }
    Ok(out)
}

/// Splices a lowered sub-graph in place of `op`.
fn inline(out: &mut Graph, op: &Operator, sub: Graph, next_id: &mut usize) -> Result<()> {
    let mut rename: HashMap<String, String> = HashMap::new();
    for (i, name) in sub.inputs.iter().enumerate() {
        rename.insert(name.clone(), op.inputs[i].clone());
    }
    for (j, name) in sub.outputs.iter().enumerate() {
        if rename.contains_key(name) {
            return Err(Error::InvalidGraph(format!("lowered {} forwards an input", op.kind.name())));
        }
        rename.insert(name.clone(), op.outputs[j].clone());
    }
    for (name, desc) in &sub.tensors {
        if rename.contains_key(name) {
            continue;
        }
        let fresh = format!("{}::{}", op.outputs[0], name);
        if out.tensors.contains_key(&fresh) {
            return Err(Error::InvalidGraph(format!("lowering would overwrite tensor `{fresh}`")));
        }
        out.tensors.insert(fresh.clone(), desc.clone());
        rename.insert(name.clone(), fresh);
    }
    for o in &op.outputs {
        out.tensors.entry(o.clone()).or_default();
    }
    for sop in sub.operators {
        out.operators.push(Operator {
            id: *next_id,
            kind: sop.kind,
            inputs: sop.inputs.iter().map(|t| rename[t].clone()).collect(),
            outputs: sop.outputs.iter().map(|t| rename[t].clone()).collect(),
        });
        *next_id += 1;
    }
    Ok(())
}

fn roots(g: &Graph) -> BTreeSet<String> {
    g.outputs.iter().chain(&g.loss).cloned().collect()
}

fn merge_vertical_pass(g: &mut Graph) -> Result<bool> {
    let mut changed = false;
    for ci in topo_order(g)? {
        let producers = g.producers();
        let consumer = &g.operators[ci];
        let OpKind::Raster(c) = &consumer.kind else { continue };
        if consumer.inputs.len() != 1 {
            continue;
        }
        let Some(&pi) = producers.get(consumer.inputs[0].as_str()) else { continue };
        let OpKind::Raster(p) = &g.operators[pi].kind else { continue };
        if let Some(mut merged) = merge_vertical(p, c) {
            let src = g.operators[pi].inputs[merged.regions[0].src].clone();
            merged.regions[0].src = 0;
            let consumer = &mut g.operators[ci];
            consumer.kind = OpKind::Raster(merged);
            consumer.inputs = vec![src];
            changed = true;
        }
    }
    Ok(changed)
}

fn merge_horizontal_pass(g: &mut Graph) -> Result<bool> {
    let keep = roots(g);
    let mut seen: HashMap<(Vec<String>, RasterOp), String> = HashMap::new();
    let mut rename: HashMap<String, String> = HashMap::new();
    let mut dropped = BTreeSet::new();
    for idx in topo_order(g)? {
        let op = &g.operators[idx];
        let OpKind::Raster(r) = &op.kind else { continue };
        let inputs: Vec<String> = op.inputs.iter().map(|t| rename.get(t).unwrap_or(t).clone()).collect();
        let key = (inputs, r.clone());
        match seen.get(&key) {
            Some(kept) if !keep.contains(&op.outputs[0]) => {
                rename.insert(op.outputs[0].clone(), kept.clone());
                dropped.insert(op.id);
            }
            Some(_) => {}
            None => {
                seen.insert(key, op.outputs[0].clone());
            }
        }
    }
    if dropped.is_empty() {
        return Ok(false);
    }
    g.operators.retain(|o| !dropped.contains(&o.id));
    for op in &mut g.operators {
        for t in &mut op.inputs {
            if let Some(n) = rename.get(t) {
                *t = n.clone();
            }
        }
    }
    for t in rename.keys() {
        g.tensors.remove(t);
    }
    Ok(true)
}

/// Drops raster operators whose output nobody reads, and orphaned descriptors.
fn prune(g: &mut Graph) -> Result<bool> {
    let mut changed = false;
    loop {
        let used: BTreeSet<String> =
            g.operators.iter().flat_map(|o| o.inputs.iter().cloned()).chain(roots(g)).collect();
        let before = g.operators.len();
        g.operators.retain(|o| !matches!(o.kind, OpKind::Raster(_)) || o.outputs.iter().any(|t| used.contains(t)));
        if g.operators.len() == before {
            break;
        }
        changed = true;
    }
    let live: BTreeSet<String> = g
        .operators
        .iter()
        .flat_map(|o| o.inputs.iter().chain(&o.outputs).cloned())
        .chain(g.inputs.iter().cloned())
        .chain(g.parameters.iter().cloned())
        .chain(roots(g))
        .collect();
    let before = g.tensors.len();
    g.tensors.retain(|k, _| live.contains(k));
    Ok(changed || g.tensors.len() != before)
}
