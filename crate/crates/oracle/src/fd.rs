use geomtensor::graph::OpKind;
use geomtensor::Tensor;

use crate::interp::{eval_op, Nd};

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Numeric gradients of `sum(w * op(xs))` with respect to every input of `op`,
/// evaluated in f64 by the interpreter.
pub fn op_gradients(kind: &OpKind, xs: &[Tensor], w: &Tensor, h: f64) -> Vec<Vec<f64>> {
    let w64: Vec<f64> = w.data().iter().map(|&v| v as f64).collect();
    (0..xs.len())
        .map(|i| {
            let x64: Vec<f64> = xs[i].data().iter().map(|&v| v as f64).collect();
            let f = |probe: &[f64]| {
                let mut nds: Vec<Nd> = xs.iter().map(Nd::from_tensor).collect();
                nds[i].data = probe.to_vec();
                let r: Vec<&Nd> = nds.iter().collect();
                let y = eval_op(kind, &r).expect("valid case").remove(0);
                y.data.iter().zip(&w64).map(|(a, b)| a * b).sum::<f64>()
            };
            central_diff(f, &x64, h)
        })
        .collect()
}

/// Output shape of `kind` on `xs`, per the interpreter.
pub fn output_shape(kind: &OpKind, xs: &[Tensor]) -> Vec<usize> {
    let nds: Vec<Nd> = xs.iter().map(Nd::from_tensor).collect();
    let r: Vec<&Nd> = nds.iter().collect();
    eval_op(kind, &r).expect("valid case").remove(0).shape
}

/// Largest absolute difference between an f32 gradient and an f64 reference.
pub fn max_abs_diff(got: &[f32], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    got.iter().zip(want).map(|(a, b)| (*a as f64 - b).abs()).fold(0.0, f64::max)
}
