//! Direct per-operator interpreter in f64. Every operator is evaluated from its
//! textbook definition by walking output coordinates.

use std::collections::{BTreeMap, HashMap};

use geomtensor::geometry::{RasterOp, Transform};
use geomtensor::graph::{CompositeOp, Graph, OpKind};
use geomtensor::kernels::{BinaryOp, UnaryOp};
use geomtensor::Tensor;

pub type Res<T> = std::result::Result<T, String>;

#[derive(Debug, Clone, PartialEq)]
pub struct Nd {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Nd {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape {shape:?}");
        Nd { shape, data }
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        Nd::new(t.shape().to_vec(), t.data().iter().map(|&x| x as f64).collect())
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.shape.clone(), self.data.iter().map(|&x| x as f32).collect()).expect("valid shape")
    }

    fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Nd { shape, data: vec![0.0; n] }
    }

    fn at(&self, coord: &[usize]) -> f64 {
        let mut idx = 0;
        for (c, d) in coord.iter().zip(&self.shape) {
            idx = idx * d + c;
        }
        self.data[idx]
    }
}

/// All coordinates of `shape` in row-major order.
fn coords(shape: &[usize]) -> Vec<Vec<usize>> {
    let n: usize = shape.iter().product();
    let mut out = Vec::with_capacity(n);
    for mut flat in 0..n {
        let mut c = vec![0; shape.len()];
        for k in (0..shape.len()).rev() {
            c[k] = flat % shape[k];
            flat /= shape[k];
        }
        out.push(c);
    }
    out
}

fn map_out(shape: Vec<usize>, f: impl Fn(&[usize]) -> f64) -> Nd {
    let data = coords(&shape).iter().map(|c| f(c)).collect();
    Nd { shape, data }
}

fn unary(op: UnaryOp, x: f64) -> f64 {
    match op {
        UnaryOp::Neg => -x,
        UnaryOp::Square => x * x,
        UnaryOp::Sqrt => x.sqrt(),
        UnaryOp::Exp => x.exp(),
        UnaryOp::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        UnaryOp::Tanh => x.tanh(),
        UnaryOp::Relu => x.max(0.0),
    }
}

fn binary(op: BinaryOp, a: f64, b: f64) -> f64 {
    match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => a / b,
        BinaryOp::Max => a.max(b),
    }
}

fn same_shape(a: &Nd, b: &Nd) -> Res<()> {
    if a.shape != b.shape {
        return Err(format!("shape mismatch {:?} vs {:?}", a.shape, b.shape));
    }
    Ok(())
}

fn matmul(a: &Nd, b: &Nd) -> Res<Nd> {
    let (&[m, k], &[k2, n]) = (a.shape.as_slice(), b.shape.as_slice()) else {
        return Err("matmul needs rank-2 operands".into());
    };
    if k != k2 {
        return Err(format!("matmul inner dims {k} vs {k2}"));
    }
    Ok(map_out(vec![m, n], |c| (0..k).map(|p| a.at(&[c[0], p]) * b.at(&[p, c[1]])).sum()))
}

pub fn conv2d(x: &Nd, w: &Nd, stride: usize, pad: usize) -> Res<Nd> {
    let (&[n, c, h, wd], &[o, c2, kh, kw]) = (x.shape.as_slice(), w.shape.as_slice()) else {
        return Err("conv needs rank-4 operands".into());
    };
    if c != c2 || stride == 0 || h + 2 * pad < kh || wd + 2 * pad < kw {
        return Err("bad conv shapes".into());
    }
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    Ok(map_out(vec![n, o, oh, ow], |q| {
        let mut acc = 0.0;
        for ci in 0..c {
            for ky in 0..kh {
                for kx in 0..kw {
                    let iy = (q[2] * stride + ky) as isize - pad as isize;
                    let ix = (q[3] * stride + kx) as isize - pad as isize;
                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                        acc += x.at(&[q[0], ci, iy as usize, ix as usize]) * w.at(&[q[1], ci, ky, kx]);
                    }
                }
            }
        }
        acc
    }))
}

fn reduce_sum(x: &Nd, axis: usize) -> Res<Nd> {
    if axis >= x.shape.len() {
        return Err(format!("axis {axis} out of range"));
    }
    let mut shape = x.shape.clone();
    shape.remove(axis);
    let keep_scalar = shape.is_empty();
    let out = map_out(shape.clone(), |c| {
        (0..x.shape[axis])
            .map(|k| {
                let mut full = c.to_vec();
                full.insert(axis, k);
                x.at(&full)
            })
            .sum()
    });
    Ok(if keep_scalar { Nd::new(vec![1], out.data) } else { out })
}

/// Executes raster regions by evaluating both views at every range coordinate.
pub fn raster(r: &RasterOp, srcs: &[&Nd]) -> Res<Nd> {
    let mut out = Nd::zeros(r.out_shape.clone());
    for reg in &r.regions {
        let src = srcs.get(reg.src).ok_or("region source out of range")?;
        for c in coords(&reg.range) {
            let addr = |off: isize, st: &[isize]| off + c.iter().zip(st).map(|(&x, &s)| x as isize * s).sum::<isize>();
            let s = addr(reg.src_view.offset, &reg.src_view.strides);
            let d = addr(reg.dst_view.offset, &reg.dst_view.strides);
            if s < 0 || s as usize >= src.data.len() || d < 0 || d as usize >= out.data.len() {
                return Err("region out of bounds".into());
            }
            out.data[d as usize] = src.data[s as usize];
        }
    }
    Ok(out)
}

pub fn transform(t: &Transform, xs: &[&Nd]) -> Res<Nd> {
    let x = xs[0];
    let rank = x.shape.len();
    match t {
        Transform::Transpose { perm } => {
            let mut sorted = perm.clone();
            sorted.sort();
            if sorted != (0..rank).collect::<Vec<_>>() {
                return Err("bad permutation".into());
            }
            let shape = perm.iter().map(|&p| x.shape[p]).collect();
            Ok(map_out(shape, |c| {
                let mut src = vec![0; rank];
                for (k, &p) in perm.iter().enumerate() {
                    src[p] = c[k];
                }
                x.at(&src)
            }))
        }
        Transform::Slice { begin, size } => {
            if begin.len() != rank || size.len() != rank {
                return Err("slice rank".into());
            }
            if (0..rank).any(|k| size[k] == 0 || begin[k] + size[k] > x.shape[k]) {
                return Err("slice out of range".into());
            }
            Ok(map_out(size.clone(), |c| {
                let src: Vec<usize> = c.iter().zip(begin).map(|(a, b)| a + b).collect();
                x.at(&src)
            }))
        }
        Transform::Concat { axis } => {
            if *axis >= rank {
                return Err("concat axis".into());
            }
            let mut shape = x.shape.clone();
            shape[*axis] = 0;
            for y in xs {
                for k in 0..rank {
                    if k != *axis && y.shape.get(k) != Some(&x.shape[k]) || y.shape.len() != rank {
                        return Err("concat shapes".into());
                    }
                }
                shape[*axis] += y.shape[*axis];
            }
            Ok(map_out(shape, |c| {
                let mut pos = c[*axis];
                for y in xs {
                    if pos < y.shape[*axis] {
                        let mut src = c.to_vec();
                        src[*axis] = pos;
                        return y.at(&src);
                    }
                    pos -= y.shape[*axis];
                }
                unreachable!()
            }))
        }
        Transform::Reverse { axes } => {
            if axes.iter().any(|&a| a >= rank) {
                return Err("reverse axis".into());
            }
            Ok(map_out(x.shape.clone(), |c| {
                let mut src = c.to_vec();
                for &a in axes {
                    src[a] = x.shape[a] - 1 - c[a];
                }
                x.at(&src)
            }))
        }
        Transform::Reshape { shape } => {
            if shape.iter().product::<usize>() != x.data.len() || shape.contains(&0) {
                return Err("reshape size".into());
            }
            Ok(Nd::new(shape.clone(), x.data.clone()))
        }
        Transform::Broadcast { shape } => {
            if shape.len() < rank || shape.contains(&0) {
                return Err("broadcast rank".into());
            }
            let lead = shape.len() - rank;
            for k in 0..rank {
                if x.shape[k] != 1 && x.shape[k] != shape[lead + k] {
                    return Err("broadcast dims".into());
                }
            }
            Ok(map_out(shape.clone(), |c| {
                let src: Vec<usize> = (0..rank).map(|k| if x.shape[k] == 1 { 0 } else { c[lead + k] }).collect();
                x.at(&src)
            }))
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn composite(op: &CompositeOp, xs: &[&Nd]) -> Res<Vec<Nd>> {
    let x = xs[0];
    match op {
        CompositeOp::Elu { alpha } => {
            let a = *alpha as f64;
            Ok(vec![map_out(x.shape.clone(), |c| {
                let v = x.at(c);
                if v > 0.0 {
                    v
                } else {
                    a * (v.exp() - 1.0)
                }
            })])
        }
        CompositeOp::AvgPool2d { kernel, stride } => {
            let &[n, c, h, w] = x.shape.as_slice() else { return Err("pool rank".into()) };
            if h < *kernel || w < *kernel || *stride == 0 || *kernel == 0 {
                return Err("pool window".into());
            }
            let shape = vec![n, c, (h - kernel) / stride + 1, (w - kernel) / stride + 1];
            Ok(vec![map_out(shape, |q| {
                let mut acc = 0.0;
                for dy in 0..*kernel {
                    for dx in 0..*kernel {
                        acc += x.at(&[q[0], q[1], q[2] * stride + dy, q[3] * stride + dx]);
                    }
                }
                acc / (kernel * kernel) as f64
            })])
        }
        CompositeOp::LayerNorm { eps } => {
            let d = *x.shape.last().unwrap();
            let mut out = x.clone();
            for row in out.data.chunks_mut(d) {
                let mean = row.iter().sum::<f64>() / d as f64;
                let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
                let den = (var + *eps as f64).sqrt();
                for v in row.iter_mut() {
                    *v = (*v - mean) / den;
                }
            }
            Ok(vec![out])
        }
        CompositeOp::LstmCell => {
            let [x, h, c, w, u, bias] = xs else { return Err("lstm takes 6 inputs".into()) };
            let hid = h.shape[1];
            let pre = matmul(x, w)?;
            let rec = matmul(h, u)?;
            let batch = x.shape[0];
            if bias.shape != [4 * hid] || c.shape != h.shape {
                return Err("lstm shapes".into());
            }
            let gate = |b: usize, k: usize, j: usize| {
                let col = k * hid + j;
                pre.at(&[b, col]) + rec.at(&[b, col]) + bias.data[col]
            };
            let mut hn = Nd::zeros(vec![batch, hid]);
            let mut cn = Nd::zeros(vec![batch, hid]);
            for b in 0..batch {
                for j in 0..hid {
                    let i = sigmoid(gate(b, 0, j));
                    let f = sigmoid(gate(b, 1, j));
                    let g = gate(b, 2, j).tanh();
                    let o = sigmoid(gate(b, 3, j));
                    let cv = f * c.at(&[b, j]) + i * g;
                    cn.data[b * hid + j] = cv;
                    hn.data[b * hid + j] = o * cv.tanh();
                }
            }
            Ok(vec![hn, cn])
        }
    }
}

fn truth(t: &Nd) -> Res<bool> {
    if t.data.len() != 1 {
        return Err(format!("condition shape {:?}", t.shape));
    }
    Ok(t.data[0] != 0.0)
}

/// Evaluates one operator of any kind, including control flow.
pub fn eval_op(kind: &OpKind, xs: &[&Nd]) -> Res<Vec<Nd>> {
    Ok(match kind {
        OpKind::Unary(op) => vec![Nd::new(xs[0].shape.clone(), xs[0].data.iter().map(|&v| unary(*op, v)).collect())],
        OpKind::Binary(op) => {
            same_shape(xs[0], xs[1])?;
            let data = xs[0].data.iter().zip(&xs[1].data).map(|(&a, &b)| binary(*op, a, b)).collect();
            vec![Nd::new(xs[0].shape.clone(), data)]
        }
        OpKind::ReduceSum { axis } => vec![reduce_sum(xs[0], *axis)?],
        OpKind::MatMul => vec![matmul(xs[0], xs[1])?],
        OpKind::Conv2d { stride, pad } => vec![conv2d(xs[0], xs[1], *stride, *pad)?],
        OpKind::Raster(r) => vec![raster(r, xs)?],
        OpKind::Transform(t) => vec![transform(t, xs)?],
        OpKind::Composite(c) => composite(c, xs)?,
        OpKind::If { then_branch, else_branch } => {
            let branch = if truth(xs[0])? { then_branch } else { else_branch };
            call(branch, &xs[1..])?
        }
        OpKind::While { cond, body, max_iterations } => {
            let mut vals: Vec<Nd> = xs.iter().map(|&x| x.clone()).collect();
            let mut n = 0;
            loop {
                let refs: Vec<&Nd> = vals.iter().collect();
                let c = call(cond, &refs)?;
                if !truth(&c[0])? {
                    break vals;
                }
                if n == *max_iterations {
                    return Err("runaway loop".into());
                }
                vals = call(body, &refs)?;
                n += 1;
            }
        }
    })
}

fn call(g: &Graph, args: &[&Nd]) -> Res<Vec<Nd>> {
    if args.len() != g.inputs.len() {
        return Err("sub-graph arity".into());
    }
    let feeds = g.inputs.iter().cloned().zip(args.iter().map(|&a| a.clone())).collect();
    let mut out = eval_nd(g, &feeds)?;
    Ok(g.outputs.iter().map(|o| out.remove(o).expect("output")).collect())
}

/// Runs `g` op by op in whatever order producers become ready.
pub fn eval_nd(g: &Graph, inputs: &BTreeMap<String, Nd>) -> Res<BTreeMap<String, Nd>> {
    let mut env: HashMap<String, Nd> = HashMap::new();
    for (k, d) in &g.tensors {
        if let Some(t) = &d.data {
            env.insert(k.clone(), Nd::from_tensor(t));
        }
    }
    // feeds may also override constants
    for (k, v) in inputs {
        env.insert(k.clone(), v.clone());
    }
    if let Some(name) = g.inputs.iter().find(|n| !inputs.contains_key(*n)) {
        return Err(format!("missing input {name}"));
    }
    let mut done = vec![false; g.operators.len()];
    loop {
        let mut progressed = false;
        for (i, op) in g.operators.iter().enumerate() {
            if done[i] || !op.inputs.iter().all(|t| env.contains_key(t)) {
                continue;
            }
            let xs: Vec<&Nd> = op.inputs.iter().map(|t| &env[t]).collect();
            let outs = eval_op(&op.kind, &xs)?;
            for (n, v) in op.outputs.iter().zip(outs) {
                env.insert(n.clone(), v);
            }
            done[i] = true;
            progressed = true;
        }
        if !progressed {
            break;
        }
    }
    if done.iter().any(|d| !d) {
        return Err("graph has a cycle or a dangling input".into());
    }
    let mut wanted: Vec<&String> = g.outputs.iter().collect();
    wanted.extend(&g.loss);
    wanted
        .into_iter()
        .map(|o| env.get(o).map(|v| (o.clone(), v.clone())).ok_or_else(|| format!("output {o} missing")))
        .collect()
}

/// [`eval_nd`] on f32 tensors, rounding the results back to f32.
pub fn eval_graph(g: &Graph, inputs: &BTreeMap<String, Tensor>) -> Res<BTreeMap<String, Tensor>> {
    let feeds = inputs.iter().map(|(k, t)| (k.clone(), Nd::from_tensor(t))).collect();
    Ok(eval_nd(g, &feeds)?.into_iter().map(|(k, v)| (k, v.to_tensor())).collect())
}
