//! Slow, obviously-correct reference implementations used to check geomtensor.
//!
//! Nothing here calls into the engine's kernels, geometry code or search; only
//! the graph and tensor data types are shared.

pub mod cost;
pub mod fd;
pub mod gen;
pub mod interp;

pub use interp::{eval_graph, eval_op, Nd};

/// `max |a - b| / max(1, max |b|)`: relative for large outputs, absolute near zero.
pub fn rel_err(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    let diff = a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| (*y as f64).abs()).fold(0.0, f64::max);
    diff / scale.max(1.0)
}

/// Same as [`rel_err`], but false whenever either side is non-finite.
pub fn close(a: &[f32], b: &[f32], tol: f64) -> bool {
    a.len() == b.len() && a.iter().chain(b).all(|x| x.is_finite()) && rel_err(a, b) <= tol
}
