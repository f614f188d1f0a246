//! Composite operators and their lowering into atomic and raster operators.

use serde::{Deserialize, Serialize};

use super::{Graph, OpKind};
use crate::error::{Error, Result};
use crate::geometry::{decompose_transform, RasterOp, Region, Transform, View};
use crate::kernels::{BinaryOp, UnaryOp};
use crate::tensor::{check_shape, default_strides, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositeOp {
    Elu {
        alpha: f32,
    },
    /// Square window over the last two axes of an `(N, C, H, W)` tensor.
    AvgPool2d {
        kernel: usize,
        stride: usize,
    },
    /// Normalises over the last axis, without affine parameters.
    LayerNorm {
        eps: f32,
    },
    /// Inputs `[x (B,I), h (B,H), c (B,H), w (I,4H), u (H,4H), bias (4H)]`, outputs
    /// `[h', c']`. Gate order along the `4H` axis is input, forget, cell, output.
    LstmCell,
}

impl CompositeOp {
    pub fn name(&self) -> &'static str {
        match self {
            CompositeOp::Elu { .. } => "elu",
            CompositeOp::AvgPool2d { .. } => "avg_pool2d",
            CompositeOp::LayerNorm { .. } => "layer_norm",
            CompositeOp::LstmCell => "lstm_cell",
        }
    }

    pub fn num_inputs(&self) -> usize {
        match self {
            CompositeOp::LstmCell => 6,
            _ => 1,
        }
    }

    pub fn num_outputs(&self) -> usize {
        match self {
            CompositeOp::LstmCell => 2,
            _ => 1,
        }
    }

    pub fn output_shapes(&self, inputs: &[Vec<usize>]) -> Result<Vec<Vec<usize>>> {
        if inputs.len() != self.num_inputs() {
            return Err(Error::Shape(format!("{} takes {} inputs", self.name(), self.num_inputs())));
        }
        for s in inputs {
            check_shape(s)?;
        }
        match self {
            CompositeOp::Elu { .. } | CompositeOp::LayerNorm { .. } => Ok(vec![inputs[0].clone()]),
            CompositeOp::AvgPool2d { kernel, stride } => {
                let &[n, c, h, w] = inputs[0].as_slice() else {
                    return Err(Error::Shape(format!("avg_pool2d needs rank 4, got {:?}", inputs[0])));
                };
                if *kernel == 0 || *stride == 0 || h < *kernel || w < *kernel {
                    return Err(Error::Shape(format!("avg_pool2d window {kernel} stride {stride} on {h}x{w}")));
                }
                Ok(vec![vec![n, c, (h - kernel) / stride + 1, (w - kernel) / stride + 1]])
            }
            CompositeOp::LstmCell => {
                let (b, i, hid) = match inputs[0].as_slice() {
                    &[b, i] => (b, i, inputs[1].get(1).copied().unwrap_or(0)),
                    _ => return Err(Error::Shape(format!("lstm x must be rank 2, got {:?}", inputs[0]))),
                };
                let want = [vec![b, hid], vec![b, hid], vec![i, 4 * hid], vec![hid, 4 * hid], vec![4 * hid]];
                if inputs[1..] != want {
                    return Err(Error::Shape(format!(
                        "lstm cell expects h, c, w, u, bias of {want:?}, got {:?}",
                        &inputs[1..]
                    )));
                }
                Ok(vec![vec![b, hid], vec![b, hid]])
            }
        }
    }
}

/// Builds a graph with inputs `in0..` equivalent to `op`, using only atomic and
/// raster operators. Scalars are constants of shape `[1]` broadcast by rasters.
pub fn lower_composite(op: &CompositeOp, inputs: &[Vec<usize>]) -> Result<Graph> {
    let out_shapes = op.output_shapes(inputs)?;
    let mut b = Lowering { g: Graph::new(), consts: 0 };
    let names: Vec<String> =
        inputs.iter().enumerate().map(|(i, s)| b.g.add_input(&format!("in{i}"), Some(s.clone()))).collect();
    let x = names[0].as_str();
    let outputs = match op {
        CompositeOp::Elu { alpha } => {
            let shape = &inputs[0];
            let pos = b.unary(UnaryOp::Relu, x);
            let neg_x = b.unary(UnaryOp::Neg, x);
            let r = b.unary(UnaryOp::Relu, &neg_x);
            let min0 = b.unary(UnaryOp::Neg, &r);
            let e = b.unary(UnaryOp::Exp, &min0);
            let one = b.splat(1.0, shape)?;
            let em1 = b.binary(BinaryOp::Sub, &e, &one);
            let a = b.splat(*alpha, shape)?;
            let scaled = b.binary(BinaryOp::Mul, &a, &em1);
            vec![b.binary(BinaryOp::Add, &pos, &scaled)]
        }
        CompositeOp::AvgPool2d { kernel, stride } => {
            let &[_, c, h, w] = inputs[0].as_slice() else { unreachable!("checked above") };
            let out = &out_shapes[0];
            let mut acc: Option<String> = None;
            for dy in 0..*kernel {
                for dx in 0..*kernel {
                    let src = View::new(
                        (dy * w + dx) as isize,
                        vec![(c * h * w) as isize, (h * w) as isize, (stride * w) as isize, *stride as isize],
                    );
                    let window =
                        RasterOp::new(vec![Region::new(0, out.clone(), src, View::contiguous(out, 0)?)], out.clone());
                    let t = b.g.push(OpKind::Raster(window), &[x]);
                    acc = Some(match acc {
                        None => t,
                        Some(prev) => b.binary(BinaryOp::Add, &prev, &t),
                    });
                }
            }
            let inv = b.splat(1.0 / (kernel * kernel) as f32, out)?;
            vec![b.binary(BinaryOp::Mul, &acc.expect("kernel >= 1"), &inv)]
        }
        CompositeOp::LayerNorm { eps } => {
            let shape = &inputs[0];
            let rank = shape.len();
            let d = shape[rank - 1];
            let reduced = crate::kernels::elementwise_reduced_shape(shape, rank - 1);
            let inv_d = b.splat(1.0 / d as f32, &reduced)?;
            let sum = b.g.push(OpKind::ReduceSum { axis: rank - 1 }, &[x]);
            let mean = b.binary(BinaryOp::Mul, &sum, &inv_d);
            let mean_b = b.expand_last(&mean, &reduced, shape)?;
            let centered = b.binary(BinaryOp::Sub, x, &mean_b);
            let sq = b.unary(UnaryOp::Square, &centered);
            let sq_sum = b.g.push(OpKind::ReduceSum { axis: rank - 1 }, &[&sq]);
            let var = b.binary(BinaryOp::Mul, &sq_sum, &inv_d);
            let eps_t = b.splat(*eps, &reduced)?;
            let shifted = b.binary(BinaryOp::Add, &var, &eps_t);
            let den = b.unary(UnaryOp::Sqrt, &shifted);
            let den_b = b.expand_last(&den, &reduced, shape)?;
            vec![b.binary(BinaryOp::Div, &centered, &den_b)]
        }
        CompositeOp::LstmCell => {
            let (h, c, w, u, bias) = (&names[1], &names[2], &names[3], &names[4], &names[5]);
            let (batch, hid) = (inputs[1][0], inputs[1][1]);
            let xw = b.g.push(OpKind::MatMul, &[x, w]);
            let hu = b.g.push(OpKind::MatMul, &[h, u]);
            let pre = b.binary(BinaryOp::Add, &xw, &hu);
            let bias_b = b.raster(
                decompose_transform(&Transform::Broadcast { shape: vec![batch, 4 * hid] }, &[vec![4 * hid]])?,
                bias,
            );
            let gates = b.binary(BinaryOp::Add, &pre, &bias_b);
            let gate = |b: &mut Lowering, k: usize, f: UnaryOp| -> Result<String> {
                let slice = Transform::Slice { begin: vec![0, k * hid], size: vec![batch, hid] };
                let s = b.raster(decompose_transform(&slice, &[vec![batch, 4 * hid]])?, &gates);
                Ok(b.unary(f, &s))
            };
            let i_g = gate(&mut b, 0, UnaryOp::Sigmoid)?;
            let f_g = gate(&mut b, 1, UnaryOp::Sigmoid)?;
            let g_g = gate(&mut b, 2, UnaryOp::Tanh)?;
            let o_g = gate(&mut b, 3, UnaryOp::Sigmoid)?;
            let keep = b.binary(BinaryOp::Mul, &f_g, c);
            let write = b.binary(BinaryOp::Mul, &i_g, &g_g);
            let c_next = b.binary(BinaryOp::Add, &keep, &write);
            let squashed = b.unary(UnaryOp::Tanh, &c_next);
            let h_next = b.binary(BinaryOp::Mul, &o_g, &squashed);
            vec![h_next, c_next]
        }
    };
    let refs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    b.g.set_outputs(&refs);
    Ok(b.g)
}

struct Lowering {
    g: Graph,
    consts: usize,
}

impl Lowering {
    fn unary(&mut self, op: UnaryOp, x: &str) -> String {
        self.g.push(OpKind::Unary(op), &[x])
    }

    fn binary(&mut self, op: BinaryOp, x: &str, y: &str) -> String {
        self.g.push(OpKind::Binary(op), &[x, y])
    }

    fn raster(&mut self, r: RasterOp, x: &str) -> String {
        self.g.push(OpKind::Raster(r), &[x])
    }

    /// Scalar constant broadcast to `shape`.
    fn splat(&mut self, value: f32, shape: &[usize]) -> Result<String> {
        let name = format!("const{}", self.consts);
        self.consts += 1;
        self.g.add_constant(&name, Tensor::scalar(value));
        let r = decompose_transform(&Transform::Broadcast { shape: shape.to_vec() }, &[vec![1]])?;
        Ok(self.raster(r, &name))
    }

    /// Repeats a tensor of `reduced` shape along a new trailing axis to `full`.
    fn expand_last(&mut self, x: &str, reduced: &[usize], full: &[usize]) -> Result<String> {
        let mut strides: Vec<isize> = if full.len() == 1 { vec![] } else { default_strides(reduced)? };
        strides.push(0);
        let r = RasterOp::new(
            vec![Region::new(0, full.to_vec(), View::new(0, strides), View::contiguous(full, 0)?)],
            full.to_vec(),
        );
        Ok(self.raster(r, x))
    }
}
