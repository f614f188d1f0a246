//! Reverse-mode gradients over atomic and raster operators, and optimizers.

mod optim;

use std::collections::{BTreeMap, HashMap};

pub use optim::{adam_step, sgd_step, OptimizerKind, OptimizerState};

use crate::error::{Error, Result};
use crate::geometry::RasterOp;
use crate::graph::{execute_op, geometric_pass, infer_op_shapes, topo_order, Category, Graph, OpKind};
use crate::kernels::{AlgorithmVariant, BinaryOp, ConvGeometry, UnaryOp};
use crate::tensor::Tensor;

/// Gradients of an atomic operator with respect to each of its inputs, given the
/// gradient of its (single) output.
pub fn grad_atomic(kind: &OpKind, inputs: &[&Tensor], upstream: &Tensor) -> Result<Vec<Tensor>> {
    if kind.category() != Category::Atomic {
        return Err(Error::Unsupported(format!("{} has no atomic gradient", kind.name())));
    }
    if let OpKind::Raster(r) = kind {
        return grad_raster(r, &inputs.iter().map(|t| t.shape().to_vec()).collect::<Vec<_>>(), upstream);
    }
    let shapes: Vec<Vec<usize>> = inputs.iter().map(|t| t.shape().to_vec()).collect();
    let out_shape = infer_op_shapes(kind, &shapes)?.remove(0);
    if upstream.shape() != out_shape.as_slice() {
        return Err(Error::Shape(format!(
            "upstream gradient has shape {:?}, {} output is {out_shape:?}",
            upstream.shape(),
            kind.name()
        )));
    }
    let u = upstream.data();
    match kind {
        OpKind::Unary(op) => {
            let x = inputs[0];
            let g = x.data().iter().zip(u).map(|(&x, &u)| u * unary_derivative(*op, x)).collect();
            Ok(vec![Tensor::new(x.shape().to_vec(), g)?])
        }
        OpKind::Binary(op) => {
            let (a, b) = (inputs[0], inputs[1]);
            let mut ga = Vec::with_capacity(u.len());
            let mut gb = Vec::with_capacity(u.len());
            for ((&x, &y), &u) in a.data().iter().zip(b.data()).zip(u) {
                let (da, db) = match op {
                    BinaryOp::Add => (u, u),
                    BinaryOp::Sub => (u, -u),
                    BinaryOp::Mul => (u * y, u * x),
                    BinaryOp::Div => (u / y, -u * x / (y * y)),
                    // Ties route to the first operand.
                    BinaryOp::Max if x >= y => (u, 0.0),
                    BinaryOp::Max => (0.0, u),
                };
                ga.push(da);
                gb.push(db);
            }
            Ok(vec![Tensor::new(a.shape().to_vec(), ga)?, Tensor::new(b.shape().to_vec(), gb)?])
        }
        OpKind::ReduceSum { axis } => {
            let shape = inputs[0].shape();
            let outer: usize = shape[..*axis].iter().product();
            let n = shape[*axis];
            let inner: usize = shape[axis + 1..].iter().product();
            let mut g = Vec::with_capacity(outer * n * inner);
            for o in 0..outer {
                for _ in 0..n {
                    g.extend_from_slice(&u[o * inner..][..inner]);
                }
            }
            Ok(vec![Tensor::new(shape.to_vec(), g)?])
        }
        OpKind::MatMul => {
            let (a, b) = (inputs[0], inputs[1]);
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let (ad, bd) = (a.data(), b.data());
            let mut ga = vec![0.0f32; m * k];
            let mut gb = vec![0.0f32; k * n];
            for i in 0..m {
                for p in 0..k {
                    let mut acc = 0.0f32;
                    for j in 0..n {
                        acc += u[i * n + j] * bd[p * n + j];
                        gb[p * n + j] += ad[i * k + p] * u[i * n + j];
                    }
                    ga[i * k + p] = acc;
                }
            }
            Ok(vec![Tensor::new(vec![m, k], ga)?, Tensor::new(vec![k, n], gb)?])
        }
        OpKind::Conv2d { stride, pad } => {
            let (x, w) = (inputs[0], inputs[1]);
            let geo = ConvGeometry::from_shapes(x.shape(), w.shape(), *stride, *pad)?;
            let (gx, gw) = conv_grads(&geo, x.data(), w.data(), u);
            Ok(vec![Tensor::new(x.shape().to_vec(), gx)?, Tensor::new(w.shape().to_vec(), gw)?])
        }
        _ => unreachable!("non-atomic kinds rejected above"),
    }
}

fn unary_derivative(op: UnaryOp, x: f32) -> f32 {
    match op {
        UnaryOp::Neg => -1.0,
        UnaryOp::Square => 2.0 * x,
        // Zero at the origin instead of infinity, so training stays finite.
        UnaryOp::Sqrt if x > 0.0 => 0.5 / x.sqrt(),
        UnaryOp::Sqrt => 0.0,
        UnaryOp::Exp => x.exp(),
        UnaryOp::Sigmoid => {
            let s = UnaryOp::Sigmoid.apply(x);
            s * (1.0 - s)
        }
        UnaryOp::Tanh => 1.0 - x.tanh().powi(2),
        UnaryOp::Relu if x > 0.0 => 1.0,
        UnaryOp::Relu => 0.0,
    }
}

fn conv_grads(geo: &ConvGeometry, x: &[f32], w: &[f32], u: &[f32]) -> (Vec<f32>, Vec<f32>) {
    let (oh, ow) = (geo.out_h(), geo.out_w());
    let mut gx = vec![0.0f32; x.len()];
    let mut gw = vec![0.0f32; w.len()];
    for n in 0..geo.n {
        for o in 0..geo.o {
            for y in 0..oh {
                for xo in 0..ow {
                    let up = u[((n * geo.o + o) * oh + y) * ow + xo];
                    if up == 0.0 {
                        continue;
                    }
                    for c in 0..geo.c {
                        for ky in 0..geo.kh {
                            let iy = (y * geo.stride + ky) as isize - geo.pad as isize;
                            if iy < 0 || iy >= geo.h as isize {
                                continue;
                            }
                            for kx in 0..geo.kw {
                                let ix = (xo * geo.stride + kx) as isize - geo.pad as isize;
                                if ix < 0 || ix >= geo.w as isize {
                                    continue;
                                }
                                let xi = ((n * geo.c + c) * geo.h + iy as usize) * geo.w + ix as usize;
                                let wi = ((o * geo.c + c) * geo.kh + ky) * geo.kw + kx;
                                gx[xi] += w[wi] * up;
                                gw[wi] += x[xi] * up;
                            }
                        }
                    }
                }
            }
        }
    }
    (gx, gw)
}

/// Gradient of a raster with respect to each source: the movement run backwards,
/// accumulating where a source element is read more than once.
pub fn grad_raster(r: &RasterOp, src_shapes: &[Vec<usize>], upstream: &Tensor) -> Result<Vec<Tensor>> {
    if upstream.shape() != r.out_shape.as_slice() {
        return Err(Error::Shape(format!(
            "upstream gradient has shape {:?}, raster output is {:?}",
            upstream.shape(),
            r.out_shape
        )));
    }
    let lens: Vec<usize> = src_shapes.iter().map(|s| s.iter().product()).collect();
    r.check_bounds(&lens)?;
    let mut grads: Vec<Vec<f32>> = lens.iter().map(|&n| vec![0.0; n]).collect();
    let u = upstream.data();
    for region in &r.regions {
        let g = &mut grads[region.src];
        region.for_each(|s, d| g[s] += u[d]);
    }
    src_shapes.iter().zip(grads).map(|(s, g)| Tensor::new(s.clone(), g)).collect()
}

/// Loss value and the gradients of the requested tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f32,
    pub grads: BTreeMap<String, Tensor>,
}

/// Differentiates the scalar tensor `loss` of `g` with respect to `wrt`, which may
/// name graph inputs or constants. Values in `inputs` override constants of the
/// same name. The geometric pass runs first, so gradients flow only through
/// atomic and raster operators.
pub fn backward(g: &Graph, inputs: &BTreeMap<String, Tensor>, loss: &str, wrt: &[String]) -> Result<Gradients> {
    if g.has_control_flow() {
        return Err(Error::Mode("gradients through control flow are not supported".into()));
    }
    let mut g = g.clone();
    if !g.outputs.iter().any(|o| o == loss) && g.loss.as_deref() != Some(loss) {
        g.loss = Some(loss.to_string());
    }
    let shapes = inputs.iter().map(|(k, t)| (k.clone(), t.shape().to_vec())).collect();
    let g = geometric_pass(&crate::graph::shape::annotate(&g, &shapes)?)?;

    let mut vals: HashMap<String, Tensor> = g.constants().map(|(k, t)| (k.clone(), t.clone())).collect();
    for (k, t) in inputs {
        vals.insert(k.clone(), t.clone());
    }
    for name in &g.inputs {
        if !vals.contains_key(name) {
            return Err(Error::Shape(format!("missing input `{name}`")));
        }
    }
    let order = topo_order(&g)?;
    for &i in &order {
        let op = &g.operators[i];
        let args: Vec<&Tensor> = op.inputs.iter().map(|t| &vals[t]).collect();
        let outs = execute_op(op, &args, AlgorithmVariant::Direct)?;
        for (n, t) in op.outputs.iter().zip(outs) {
            vals.insert(n.clone(), t);
        }
    }
    let l = vals.get(loss).ok_or_else(|| Error::InvalidGraph(format!("loss `{loss}` is not computed")))?;
    if l.numel() != 1 {
        return Err(Error::Shape(format!("loss must be scalar, got shape {:?}", l.shape())));
    }
    let loss_value = l.data()[0];

    let mut adj: HashMap<String, Tensor> = HashMap::new();
    adj.insert(loss.to_string(), Tensor::full(l.shape().to_vec(), 1.0)?);
    for &i in order.iter().rev() {
        let op = &g.operators[i];
        let Some(up) = adj.get(&op.outputs[0]).cloned() else { continue };
        let args: Vec<&Tensor> = op.inputs.iter().map(|t| &vals[t]).collect();
        let grads = grad_atomic(&op.kind, &args, &up)?;
        for (name, gr) in op.inputs.iter().zip(grads) {
            match adj.get_mut(name) {
                Some(acc) => acc.data_mut().iter_mut().zip(gr.data()).for_each(|(a, b)| *a += b),
                None => {
                    adj.insert(name.clone(), gr);
                }
            }
        }
    }
    let grads = wrt
        .iter()
        .map(|name| {
            let v =
                vals.get(name).ok_or_else(|| Error::InvalidGraph(format!("no tensor `{name}` to differentiate")))?;
            let gr = match adj.remove(name) {
                Some(gr) => gr,
                None => Tensor::zeros(v.shape().to_vec())?,
            };
            Ok((name.clone(), gr))
        })
        .collect::<Result<_>>()?;
    Ok(Gradients { loss: loss_value, grads })
}
