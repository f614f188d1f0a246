//! Random graph generators over every implemented operator kind.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use geomtensor::geometry::Transform;
use geomtensor::graph::{CompositeOp, Graph, OpKind};
use geomtensor::kernels::{BinaryOp, UnaryOp};
use geomtensor::Tensor;

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).unwrap()
}

pub fn random_shape(rng: &mut impl Rng) -> Vec<usize> {
    match rng.gen_range(1..=4) {
        4 => vec![rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(3..=6), rng.gen_range(3..=6)],
        r => (0..r).map(|_| rng.gen_range(1..=4)).collect(),
    }
}

/// A generated graph together with feeds for all of its inputs.
#[derive(Debug, Clone)]
pub struct Generated {
    pub graph: Graph,
    pub inputs: BTreeMap<String, Tensor>,
}

/// Incrementally grows a graph while tracking tensor shapes.
pub struct Builder<'r, R: Rng> {
    pub rng: &'r mut R,
    pub graph: Graph,
    pub feeds: BTreeMap<String, Tensor>,
    /// Tensors available as operands, with their shapes.
    pub pool: Vec<(String, Vec<usize>)>,
    /// Whether fresh graph inputs may be created (false inside sub-graphs).
    pub allow_inputs: bool,
    counter: usize,
}

impl<'r, R: Rng> Builder<'r, R> {
    pub fn new(rng: &'r mut R, allow_inputs: bool) -> Self {
        Builder { rng, graph: Graph::new(), feeds: BTreeMap::new(), pool: Vec::new(), allow_inputs, counter: 0 }
    }

    fn fresh(&mut self, prefix: &str) -> String {
        self.counter += 1;
        format!("{prefix}{}", self.counter)
    }

    /// A new operand of the given shape: a fed input when allowed, otherwise a constant.
    pub fn leaf(&mut self, shape: &[usize]) -> String {
        let value = random_tensor(self.rng, shape);
        if self.allow_inputs && self.rng.gen_bool(0.5) {
            let name = self.fresh("x");
            self.graph.add_input(&name, None);
            self.feeds.insert(name.clone(), value);
            self.pool.push((name.clone(), shape.to_vec()));
            name
        } else {
            let name = self.fresh("k");
            self.graph.add_constant(&name, value)
        }
    }

    pub fn input(&mut self, name: &str, shape: &[usize]) -> String {
        self.graph.add_input(name, Some(shape.to_vec()));
        self.pool.push((name.into(), shape.to_vec()));
        name.into()
    }

    fn op(&mut self, kind: OpKind, inputs: &[&str], shape: Vec<usize>) -> String {
        let name = self.graph.push(kind, inputs);
        self.pool.push((name.clone(), shape));
        name
    }

    fn pick(&mut self) -> (String, Vec<usize>) {
        let i = if self.rng.gen_bool(0.6) { self.pool.len() - 1 } else { self.rng.gen_range(0..self.pool.len()) };
        self.pool[i].clone()
    }

    /// Operand with the same shape as `x`, preferring existing tensors.
    fn partner(&mut self, x: &str, shape: &[usize]) -> String {
        let same: Vec<String> =
            self.pool.iter().filter(|(n, s)| s == shape && n != x).map(|(n, _)| n.clone()).collect();
        if !same.is_empty() && self.rng.gen_bool(0.5) {
            same.choose(self.rng).unwrap().clone()
        } else {
            self.leaf(shape)
        }
    }

    /// Elementwise op with well-conditioned arguments: exp sees tanh output,
    /// sqrt sees a square, and divisors are `exp(tanh(y))`.
    pub fn unary(&mut self, x: &str, shape: &[usize]) -> String {
        let op = *UnaryOp::ALL.choose(self.rng).unwrap();
        let s = shape.to_vec();
        match op {
            UnaryOp::Exp => {
                let t = self.op(OpKind::Unary(UnaryOp::Tanh), &[x], s.clone());
                self.op(OpKind::Unary(UnaryOp::Exp), &[&t], s)
            }
            UnaryOp::Sqrt => {
                let t = self.op(OpKind::Unary(UnaryOp::Square), &[x], s.clone());
                self.op(OpKind::Unary(UnaryOp::Sqrt), &[&t], s)
            }
            op => self.op(OpKind::Unary(op), &[x], s),
        }
    }

    pub fn binary(&mut self, x: &str, shape: &[usize]) -> String {
        let op = *BinaryOp::ALL.choose(self.rng).unwrap();
        let y = self.partner(x, shape);
        let s = shape.to_vec();
        if op == BinaryOp::Div {
            let t = self.op(OpKind::Unary(UnaryOp::Tanh), &[&y], s.clone());
            let d = self.op(OpKind::Unary(UnaryOp::Exp), &[&t], s.clone());
            return self.op(OpKind::Binary(op), &[x, &d], s);
        }
        let (a, b) = if self.rng.gen_bool(0.5) { (x.to_string(), y) } else { (y, x.to_string()) };
        self.op(OpKind::Binary(op), &[&a, &b], s)
    }

    /// Shape-preserving step, usable inside loop bodies and branches.
    pub fn preserving(&mut self, x: &str, shape: &[usize]) -> String {
        match self.rng.gen_range(0..4) {
            0 => self.unary(x, shape),
            1 => self.binary(x, shape),
            2 => {
                let alpha = self.rng.gen_range(1..=6) as f32 * 0.25;
                self.op(OpKind::Composite(CompositeOp::Elu { alpha }), &[x], shape.to_vec())
            }
            _ => {
                let r = self.rng.gen_range(0..shape.len());
                self.transform(Transform::Reverse { axes: vec![r] }, &[x], shape.to_vec())
            }
        }
    }

    fn transform(&mut self, t: Transform, inputs: &[&str], shape: Vec<usize>) -> String {
        let out = self.op(OpKind::Transform(t.clone()), inputs, shape.clone());
        // Occasionally repeat the transform verbatim to give horizontal merging work.
        if self.rng.gen_bool(0.15) {
            let dup = self.op(OpKind::Transform(t), inputs, shape.clone());
            return self.op(OpKind::Binary(BinaryOp::Add), &[&out, &dup], shape);
        }
        out
    }

    /// One random operator (or a short well-conditioned cluster) on the pool.
    pub fn step(&mut self) {
        let (x, s) = self.pick();
        let rank = s.len();
        loop {
            match self.rng.gen_range(0..15) {
                0 => drop(self.unary(&x, &s)),
                1 => drop(self.binary(&x, &s)),
                2 => {
                    let axis = self.rng.gen_range(0..rank);
                    let mut out = s.clone();
                    out.remove(axis);
                    if out.is_empty() {
                        out.push(1);
                    }
                    self.op(OpKind::ReduceSum { axis }, &[&x], out);
                }
                3 if rank == 2 => {
                    let b = self.rng.gen_range(1..=4);
                    let w = self.leaf(&[s[1], b]);
                    self.op(OpKind::MatMul, &[&x, &w], vec![s[0], b]);
                }
                4 if rank == 4 => {
                    let k = if s[2] >= 3 && s[3] >= 3 && self.rng.gen_bool(0.7) { 3 } else { 1 };
                    let pad = if k == 3 { self.rng.gen_range(0..=1) } else { 0 };
                    let (h, w) = (s[2] + 2 * pad - k, s[3] + 2 * pad - k);
                    let stride = if h % 2 == 0 && w % 2 == 0 && self.rng.gen_bool(0.3) { 2 } else { 1 };
                    let o = self.rng.gen_range(1..=3);
                    let wt = self.leaf(&[o, s[1], k, k]);
                    self.op(OpKind::Conv2d { stride, pad }, &[&x, &wt], vec![s[0], o, h / stride + 1, w / stride + 1]);
                }
                5 if rank >= 2 => {
                    let mut perm: Vec<usize> = (0..rank).collect();
                    perm.shuffle(self.rng);
                    let out = perm.iter().map(|&p| s[p]).collect();
                    self.transform(Transform::Transpose { perm }, &[&x], out);
                }
                6 => {
                    let mut begin = Vec::new();
                    let mut size = Vec::new();
                    for &d in &s {
                        let b = self.rng.gen_range(0..d);
                        begin.push(b);
                        size.push(self.rng.gen_range(1..=d - b));
                    }
                    self.transform(Transform::Slice { begin, size: size.clone() }, &[&x], size);
                }
                7 => {
                    let axis = self.rng.gen_range(0..rank);
                    let mut other = s.clone();
                    other[axis] = self.rng.gen_range(1..=3);
                    let y = self.leaf(&other);
                    let mut out = s.clone();
                    out[axis] += other[axis];
                    let ins: [&str; 2] = if self.rng.gen_bool(0.5) { [&x, &y] } else { [&y, &x] };
                    self.transform(Transform::Concat { axis }, &ins, out);
                }
                8 => {
                    let axes: Vec<usize> = (0..rank).filter(|_| self.rng.gen_bool(0.5)).collect();
                    self.transform(Transform::Reverse { axes }, &[&x], s.clone());
                }
                9 => {
                    let n: usize = s.iter().product();
                    let out = if rank >= 2 && self.rng.gen_bool(0.5) {
                        let k = self.rng.gen_range(0..rank - 1);
                        let mut o = s.clone();
                        let merged = o[k] * o[k + 1];
                        o.splice(k..k + 2, [merged]);
                        o
                    } else {
                        let divs: Vec<usize> = (1..=n).filter(|d| n.is_multiple_of(*d)).collect();
                        let f = *divs.choose(self.rng).unwrap();
                        vec![f, n / f]
                    };
                    self.transform(Transform::Reshape { shape: out.clone() }, &[&x], out);
                }
                10 => {
                    let mut out: Vec<usize> =
                        s.iter().map(|&d| if d == 1 { self.rng.gen_range(1..=3) } else { d }).collect();
                    if rank < 4 && self.rng.gen_bool(0.6) {
                        out.insert(0, self.rng.gen_range(1..=3));
                    }
                    self.transform(Transform::Broadcast { shape: out.clone() }, &[&x], out);
                }
                11 => {
                    let alpha = self.rng.gen_range(1..=6) as f32 * 0.25;
                    self.op(OpKind::Composite(CompositeOp::Elu { alpha }), &[&x], s.clone());
                }
                12 => {
                    self.op(OpKind::Composite(CompositeOp::LayerNorm { eps: 0.1 }), &[&x], s.clone());
                }
                13 if rank == 4 => {
                    let kernel = self.rng.gen_range(1..=2.min(s[2]).min(s[3]));
                    let stride = self.rng.gen_range(1..=2);
                    let out = vec![s[0], s[1], (s[2] - kernel) / stride + 1, (s[3] - kernel) / stride + 1];
                    self.op(OpKind::Composite(CompositeOp::AvgPool2d { kernel, stride }), &[&x], out);
                }
                14 if rank == 2 => {
                    let (b, i) = (s[0], s[1]);
                    let hid = self.rng.gen_range(1..=3);
                    let h = self.leaf(&[b, hid]);
                    let c = self.leaf(&[b, hid]);
                    let w = self.leaf(&[i, 4 * hid]);
                    let u = self.leaf(&[hid, 4 * hid]);
                    let bias = self.leaf(&[4 * hid]);
                    let (h1, c1) = (self.fresh("h"), self.fresh("c"));
                    self.graph.add_op(
                        OpKind::Composite(CompositeOp::LstmCell),
                        &[&x, &h, &c, &w, &u, &bias],
                        &[&h1, &c1],
                    );
                    self.pool.push((h1, vec![b, hid]));
                    self.pool.push((c1, vec![b, hid]));
                }
                _ => continue,
            }
            return;
        }
    }

    /// Marks the newest tensor, and sometimes one more, as graph outputs.
    pub fn finish(mut self) -> Generated {
        let last = self.pool.last().unwrap().0.clone();
        let mut outs = vec![last.clone()];
        if self.pool.len() > 2 && self.rng.gen_bool(0.3) {
            let extra = self.pool[self.rng.gen_range(0..self.pool.len())].0.clone();
            if extra != last {
                outs.push(extra);
            }
        }
        let refs: Vec<&str> = outs.iter().map(String::as_str).collect();
        self.graph.set_outputs(&refs);
        Generated { graph: self.graph, inputs: self.feeds }
    }
}

/// Control-flow-free graph of up to `max_steps` random operators.
pub fn random_graph(rng: &mut impl Rng, max_steps: usize) -> Generated {
    let shape = random_shape(rng);
    let mut b = Builder::new(rng, true);
    let x = b.input("in", &shape);
    let value = random_tensor(b.rng, &shape);
    b.feeds.insert(x, value);
    let steps = b.rng.gen_range(1..=max_steps);
    for _ in 0..steps {
        b.step();
    }
    b.finish()
}

/// Sub-graph `a -> chain(a)` of shape-preserving steps.
fn branch(rng: &mut impl Rng, shape: &[usize], nested: bool) -> Graph {
    let mut b = Builder::new(rng, false);
    let a = b.input("a", shape);
    let mut cur = a;
    for _ in 0..b.rng.gen_range(1..=3) {
        cur = b.preserving(&cur, shape);
    }
    if nested {
        let (loop_op, out) = counting_while(b.rng, shape, "n");
        let i0 = b.graph.add_constant("zero", Tensor::scalar(0.0));
        b.graph.add_op(loop_op, &[&i0, &cur], &["n_count", &out]);
        cur = out;
    }
    b.graph.set_outputs(&[&cur]);
    b.graph
}

/// `while i < limit { i += 1; v = tanh(step(v)) }` over loop variables `(i, v)`.
fn counting_while(rng: &mut impl Rng, shape: &[usize], tag: &str) -> (OpKind, String) {
    let limit = rng.gen_range(0..=4) as f32;
    let mut cond = Graph::new();
    cond.add_input("i", None);
    cond.add_input("v", None);
    cond.add_constant("limit", Tensor::scalar(limit));
    let d = cond.push(OpKind::Binary(BinaryOp::Sub), &["limit", "i"]);
    let c = cond.push(OpKind::Unary(UnaryOp::Relu), &[&d]);
    cond.set_outputs(&[&c]);

    let mut b = Builder::new(rng, false);
    b.graph.add_input("i", None);
    let v = b.input("v", shape);
    let one = b.graph.add_constant("one", Tensor::scalar(1.0));
    let i1 = b.graph.push(OpKind::Binary(BinaryOp::Add), &["i", &one]);
    let stepped = b.preserving(&v, shape);
    let squashed = b.graph.push(OpKind::Unary(UnaryOp::Tanh), &[&stepped]);
    b.graph.set_outputs(&[&i1, &squashed]);
    let body = b.graph;
    (
        OpKind::While {
            cond: Box::new(cond),
            body: Box::new(body),
            max_iterations: geomtensor::graph::DEFAULT_MAX_ITERATIONS,
        },
        format!("{tag}_loop_out"),
    )
}

/// A short prefix, one `if` or `while` (possibly nesting a loop inside a
/// branch), and a short suffix.
pub fn random_control_flow_graph(rng: &mut impl Rng) -> Generated {
    let shape: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(1..=4)).collect();
    let mut b = Builder::new(rng, true);
    let x = b.input("in", &shape);
    let value = random_tensor(b.rng, &shape);
    b.feeds.insert(x.clone(), value);
    let mut cur = x;
    for _ in 0..b.rng.gen_range(0..=2) {
        cur = b.preserving(&cur, &shape);
    }
    if b.rng.gen_bool(0.5) {
        let nested = b.rng.gen_bool(0.4);
        let then_b = branch(b.rng, &shape, nested);
        let else_b = branch(b.rng, &shape, false);
        let c = b.input("cond", &[1]);
        let flag = if b.rng.gen_bool(0.5) { 1.0 } else { 0.0 };
        b.feeds.insert(c.clone(), Tensor::scalar(flag));
        b.graph.add_op(
            OpKind::If { then_branch: Box::new(then_b), else_branch: Box::new(else_b) },
            &[&c, &cur],
            &["if_out"],
        );
        cur = "if_out".into();
    } else {
        let (op, out) = counting_while(b.rng, &shape, "top");
        let i0 = b.graph.add_constant("i0", Tensor::scalar(0.0));
        b.graph.add_op(op, &[&i0, &cur], &["top_count", &out]);
        cur = out;
    }
    b.pool.push((cur.clone(), shape.clone()));
    for _ in 0..b.rng.gen_range(0..=2) {
        cur = b.preserving(&cur, &shape);
    }
    b.graph.set_outputs(&[&cur]);
    Generated { graph: b.graph, inputs: b.feeds }
}

pub const TRANSFORM_KINDS: [&str; 6] = ["transpose", "slice", "concat", "reverse", "reshape", "broadcast"];

/// A random valid transform of the named kind, with its input shapes.
pub fn random_transform(rng: &mut impl Rng, kind: &str) -> (Transform, Vec<Vec<usize>>) {
    let rank = rng.gen_range(1..=4);
    let shape: Vec<usize> = (0..rank).map(|_| rng.gen_range(1..=5)).collect();
    match kind {
        "transpose" => {
            let mut perm: Vec<usize> = (0..rank).collect();
            perm.shuffle(rng);
            (Transform::Transpose { perm }, vec![shape])
        }
        "slice" => {
            let begin: Vec<usize> = shape.iter().map(|&d| rng.gen_range(0..d)).collect();
            let size = shape.iter().zip(&begin).map(|(&d, &b)| rng.gen_range(1..=d - b)).collect();
            (Transform::Slice { begin, size }, vec![shape])
        }
        "concat" => {
            let axis = rng.gen_range(0..rank);
            let shapes = (0..rng.gen_range(1..=4))
                .map(|_| {
                    let mut s = shape.clone();
                    s[axis] = rng.gen_range(1..=4);
                    s
                })
                .collect();
            (Transform::Concat { axis }, shapes)
        }
        "reverse" => {
            let axes = (0..rank).filter(|_| rng.gen_bool(0.5)).collect();
            (Transform::Reverse { axes }, vec![shape])
        }
        "reshape" => {
            let n: usize = shape.iter().product();
            let mut out = Vec::new();
            let mut rest = n;
            while rest > 1 && out.len() < 3 {
                let divs: Vec<usize> = (2..=rest).filter(|d| rest.is_multiple_of(*d)).collect();
                let d = *divs.choose(rng).unwrap();
                out.push(d);
                rest /= d;
            }
            out.push(rest);
            out.shuffle(rng);
            (Transform::Reshape { shape: out }, vec![shape])
        }
        "broadcast" => {
            let mut out: Vec<usize> = shape.iter().map(|&d| if d == 1 { rng.gen_range(1..=4) } else { d }).collect();
            for _ in 0..rng.gen_range(0..=2) {
                out.insert(0, rng.gen_range(1..=3));
            }
            (Transform::Broadcast { shape: out }, vec![shape])
        }
        other => panic!("unknown transform kind {other}"),
    }
}

/// Random mix of CPU and GPU specs; some GPUs refuse convolutions.
pub fn random_catalog(rng: &mut impl Rng, max_len: usize) -> Vec<geomtensor::search::BackendSpec> {
    use geomtensor::search::BackendSpec;
    (0..rng.gen_range(1..=max_len))
        .map(|i| {
            let regs = rng.gen_range(3..=32);
            let simd = *[1usize, 4, 8].choose(rng).unwrap();
            if rng.gen_bool(0.6) {
                let ghz = rng.gen_range(4..=30) as f64 / 10.0;
                BackendSpec::cpu(&format!("cpu{i}"), ghz, rng.gen_bool(0.5), regs, simd)
            } else {
                let flops = rng.gen_range(1..=200) as f64 * 1e10;
                let s = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(1..=100) as f64 * 1e-6 };
                let mut g = BackendSpec::gpu(&format!("gpu{i}"), flops, s, regs, simd);
                if rng.gen_bool(0.2) {
                    g.unsupported.push("conv2d".into());
                }
                g
            }
        })
        .collect()
}

pub fn random_workload(rng: &mut impl Rng) -> geomtensor::kernels::Workload {
    use geomtensor::kernels::{ConvGeometry, Workload};
    match rng.gen_range(0..5) {
        0 => Workload::Elementwise { n: rng.gen_range(1..100_000) },
        1 => Workload::ReduceSum { n: rng.gen_range(1..10_000) },
        2 => Workload::Raster { moved: rng.gen_range(1..100_000) },
        3 => Workload::MatMul { a: rng.gen_range(1..300), e: rng.gen_range(1..300), b: rng.gen_range(1..300) },
        _ => {
            let k = *[1usize, 3, 5].choose(rng).unwrap();
            let stride = if k == 3 { 1 } else { rng.gen_range(1..=2) };
            let h = rng.gen_range(k..40);
            let w = rng.gen_range(k..40);
            // Conv output sizes must be integral.
            let (h, w) = (h - (h - k) % stride, w - (w - k) % stride);
            Workload::Conv2d(ConvGeometry {
                n: rng.gen_range(1..3),
                c: rng.gen_range(1..16),
                h,
                w,
                o: rng.gen_range(1..16),
                kh: k,
                kw: k,
                stride,
                pad: 0,
            })
        }
    }
}

/// Every differentiable atomic case: the seven unary ops, the five binary ops,
/// reduce_sum, matmul, conv2d, and a raster per transform kind.
pub const GRADIENT_CASES: [&str; 21] = [
    "neg",
    "square",
    "sqrt",
    "exp",
    "sigmoid",
    "tanh",
    "relu",
    "add",
    "sub",
    "mul",
    "div",
    "max",
    "reduce_sum",
    "matmul",
    "conv2d",
    "raster/transpose",
    "raster/slice",
    "raster/concat",
    "raster/reverse",
    "raster/reshape",
    "raster/broadcast",
];

/// Values with magnitude in `[gap, 1)` and random sign.
fn away_from_zero(rng: &mut impl Rng, shape: &[usize], gap: f32) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(gap..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// A random instance of one of [`GRADIENT_CASES`], kept away from kinks
/// (relu at 0, max ties) and singularities (sqrt at 0, division by ~0).
pub fn gradient_case(rng: &mut impl Rng, case: &str) -> (OpKind, Vec<Tensor>) {
    use geomtensor::geometry::decompose_transform;
    if let Some(kind) = case.strip_prefix("raster/") {
        let (t, shapes) = random_transform(rng, kind);
        let r = decompose_transform(&t, &shapes).unwrap();
        return (OpKind::Raster(r), shapes.iter().map(|s| random_tensor(rng, s)).collect());
    }
    let shape = random_shape(rng);
    let unary = |op| OpKind::Unary(op);
    let binary = |op| OpKind::Binary(op);
    match case {
        "neg" => (unary(UnaryOp::Neg), vec![random_tensor(rng, &shape)]),
        "square" => (unary(UnaryOp::Square), vec![random_tensor(rng, &shape)]),
        "sqrt" => {
            let n = shape.iter().product();
            let x = Tensor::new(shape.clone(), (0..n).map(|_| rng.gen_range(0.5..2.0)).collect()).unwrap();
            (unary(UnaryOp::Sqrt), vec![x])
        }
        "exp" => (unary(UnaryOp::Exp), vec![random_tensor(rng, &shape)]),
        "sigmoid" => (unary(UnaryOp::Sigmoid), vec![random_tensor(rng, &shape)]),
        "tanh" => (unary(UnaryOp::Tanh), vec![random_tensor(rng, &shape)]),
        "relu" => (unary(UnaryOp::Relu), vec![away_from_zero(rng, &shape, 0.01)]),
        "add" | "sub" | "mul" => {
            let op = match case {
                "add" => BinaryOp::Add,
                "sub" => BinaryOp::Sub,
                _ => BinaryOp::Mul,
            };
            (binary(op), vec![random_tensor(rng, &shape), random_tensor(rng, &shape)])
        }
        "div" => (binary(BinaryOp::Div), vec![random_tensor(rng, &shape), away_from_zero(rng, &shape, 0.5)]),
        "max" => {
            let a = random_tensor(rng, &shape);
            let d = away_from_zero(rng, &shape, 0.01);
            let b = a.data().iter().zip(d.data()).map(|(x, y)| x + y).collect();
            (binary(BinaryOp::Max), vec![a.clone(), Tensor::new(shape, b).unwrap()])
        }
        "reduce_sum" => {
            let axis = rng.gen_range(0..shape.len());
            (OpKind::ReduceSum { axis }, vec![random_tensor(rng, &shape)])
        }
        "matmul" => {
            let (m, k, n) = (rng.gen_range(1..=5), rng.gen_range(1..=5), rng.gen_range(1..=5));
            (OpKind::MatMul, vec![random_tensor(rng, &[m, k]), random_tensor(rng, &[k, n])])
        }
        "conv2d" => {
            let (n, c, o) = (rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=3));
            let k = rng.gen_range(1..=3);
            let (h, w) = (rng.gen_range(k..=6), rng.gen_range(k..=6));
            let pad = rng.gen_range(0..=1);
            (
                OpKind::Conv2d { stride: 1, pad },
                vec![random_tensor(rng, &[n, c, h, w]), random_tensor(rng, &[o, c, k, k])],
            )
        }
        other => panic!("unknown gradient case {other}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn generated_graphs_evaluate() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..100 {
            let g = random_graph(&mut rng, 6);
            g.graph.validate().unwrap();
            crate::eval_graph(&g.graph, &g.inputs).unwrap();
            let c = random_control_flow_graph(&mut rng);
            c.graph.validate().unwrap();
            crate::eval_graph(&c.graph, &c.inputs).unwrap();
        }
    }
}
