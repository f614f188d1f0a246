use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnaryOp {
    Neg,
    Square,
    Sqrt,
    Exp,
    Sigmoid,
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ElementwiseOp {
    Unary(UnaryOp),
    Binary(BinaryOp),
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 7] =
        [UnaryOp::Neg, UnaryOp::Square, UnaryOp::Sqrt, UnaryOp::Exp, UnaryOp::Sigmoid, UnaryOp::Tanh, UnaryOp::Relu];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Square => "square",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Exp => "exp",
            UnaryOp::Sigmoid => "sigmoid",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Relu => "relu",
        }
    }

    #[inline]
    pub fn apply(self, x: f32) -> f32 {
        match self {
            UnaryOp::Neg => -x,
            UnaryOp::Square => x * x,
            UnaryOp::Sqrt => x.sqrt(),
            UnaryOp::Exp => x.exp(),
            UnaryOp::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            UnaryOp::Tanh => x.tanh(),
            UnaryOp::Relu => x.max(0.0),
        }
    }
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 5] = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div, BinaryOp::Max];

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
            BinaryOp::Max => "max",
        }
    }

    #[inline]
    pub fn apply(self, a: f32, b: f32) -> f32 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Max => a.max(b),
        }
    }
}

pub fn unary(op: UnaryOp, x: &Tensor) -> Result<Tensor> {
    x.require_row_major()?;
    let data = x.data().iter().map(|&v| op.apply(v)).collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Binary elementwise op; shapes must match exactly.
pub fn binary(op: BinaryOp, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.require_row_major()?;
    b.require_row_major()?;
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{} of {:?} and {:?}", op.name(), a.shape(), b.shape())));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| op.apply(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data)
}

pub fn elementwise(op: ElementwiseOp, inputs: &[&Tensor]) -> Result<Tensor> {
    match (op, inputs) {
        (ElementwiseOp::Unary(u), [x]) => unary(u, x),
        (ElementwiseOp::Binary(b), [x, y]) => binary(b, x, y),
        _ => Err(Error::Shape(format!("{op:?} given {} inputs", inputs.len()))),
    }
}

/// Sums along `axis`. The axis is removed; reducing a rank-1 tensor gives shape `[1]`.
pub fn reduce_sum(t: &Tensor, axis: usize) -> Result<Tensor> {
    t.require_row_major()?;
    let shape = t.shape();
    if axis >= shape.len() {
        return Err(Error::Axis { axis, rank: shape.len() });
    }
    let outer: usize = shape[..axis].iter().product();
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0f32; outer * inner];
    for o in 0..outer {
        let dst = &mut out[o * inner..][..inner];
        for k in 0..n {
            let src = &t.data()[(o * n + k) * inner..][..inner];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    Tensor::new(reduced_shape(shape, axis), out)
}

pub(crate) fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut out: Vec<usize> = shape.to_vec();
    out.remove(axis);
    if out.is_empty() {
        out.push(1);
    }
    out
}
