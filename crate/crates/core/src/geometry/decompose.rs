use serde::{Deserialize, Serialize};

use super::{RasterOp, Region, View};
use crate::error::{Error, Result};
use crate::tensor::{check_shape, default_strides, numel};

/// Pure data-movement operators that lower to a single [`RasterOp`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// Axis permutation: output axis `k` is input axis `perm[k]`.
    Transpose {
        perm: Vec<usize>,
    },
    Slice {
        begin: Vec<usize>,
        size: Vec<usize>,
    },
    Concat {
        axis: usize,
    },
    /// Element reordering that flips the listed axes.
    Reverse {
        axes: Vec<usize>,
    },
    /// Reinterpretation of a contiguous buffer under a new shape.
    Reshape {
        shape: Vec<usize>,
    },
    /// Numpy-style expansion of size-1 (or missing leading) dims.
    Broadcast {
        shape: Vec<usize>,
    },
}

impl Transform {
    pub fn name(&self) -> &'static str {
        match self {
            Transform::Transpose { .. } => "transpose",
            Transform::Slice { .. } => "slice",
            Transform::Concat { .. } => "concat",
            Transform::Reverse { .. } => "reverse",
            Transform::Reshape { .. } => "reshape",
            Transform::Broadcast { .. } => "broadcast",
        }
    }
}

fn invalid(msg: String) -> Error {
    Error::InvalidTransform(msg)
}

fn single_input<'a>(t: &Transform, inputs: &'a [Vec<usize>]) -> Result<&'a [usize]> {
    match inputs {
        [only] => {
            check_shape(only)?;
            Ok(only)
        }
        _ => Err(invalid(format!("{} takes one input, got {}", t.name(), inputs.len()))),
    }
}

/// Output shape of `t` applied to tensors of `inputs` shapes.
pub fn transform_output_shape(t: &Transform, inputs: &[Vec<usize>]) -> Result<Vec<usize>> {
    match t {
        Transform::Transpose { perm } => {
            let shape = single_input(t, inputs)?;
            let mut seen = vec![false; shape.len()];
            if perm.len() != shape.len()
                || perm.iter().any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true))
            {
                return Err(invalid(format!("{perm:?} is not a permutation of rank {}", shape.len())));
            }
            Ok(perm.iter().map(|&p| shape[p]).collect())
        }
        Transform::Slice { begin, size } => {
            let shape = single_input(t, inputs)?;
            if begin.len() != shape.len() || size.len() != shape.len() {
                return Err(invalid(format!("slice begin {begin:?} / size {size:?} vs rank {}", shape.len())));
            }
            for k in 0..shape.len() {
                if size[k] == 0 || begin[k] + size[k] > shape[k] {
                    return Err(invalid(format!(
                        "slice [{}, {}) exceeds dim {k} of size {}",
                        begin[k],
                        begin[k] + size[k],
                        shape[k]
                    )));
                }
            }
            Ok(size.clone())
        }
        Transform::Concat { axis } => {
            let Some(first) = inputs.first() else {
                return Err(invalid("concat needs at least one input".into()));
            };
            check_shape(first)?;
            if *axis >= first.len() {
                return Err(invalid(format!("concat axis {axis} for rank {}", first.len())));
            }
            let mut out = first.clone();
            for s in &inputs[1..] {
                check_shape(s)?;
                let agree =
                    s.len() == first.len() && s.iter().zip(first).enumerate().all(|(k, (a, b))| k == *axis || a == b);
                if !agree {
                    return Err(invalid(format!("cannot concat {s:?} with {first:?} on axis {axis}")));
                }
                out[*axis] += s[*axis];
            }
            Ok(out)
        }
        Transform::Reverse { axes } => {
            let shape = single_input(t, inputs)?;
            let mut seen = vec![false; shape.len()];
            if axes.iter().any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true)) {
                return Err(invalid(format!("bad reverse axes {axes:?} for rank {}", shape.len())));
            }
            Ok(shape.to_vec())
        }
        Transform::Reshape { shape: target } => {
            let shape = single_input(t, inputs)?;
            check_shape(target).map_err(|e| invalid(e.to_string()))?;
            if numel(target) != numel(shape) {
                return Err(invalid(format!("cannot reshape {shape:?} into {target:?}")));
            }
            Ok(target.clone())
        }
        Transform::Broadcast { shape: target } => {
            let shape = single_input(t, inputs)?;
            check_shape(target).map_err(|e| invalid(e.to_string()))?;
            if shape.len() > target.len() {
                return Err(invalid(format!("cannot broadcast {shape:?} to {target:?}")));
            }
            let lead = target.len() - shape.len();
            for (k, &d) in shape.iter().enumerate() {
                if d != 1 && d != target[lead + k] {
                    return Err(invalid(format!("cannot broadcast {shape:?} to {target:?}")));
                }
            }
            Ok(target.clone())
        }
    }
}

/// Lowers a transform into a raster whose execution reproduces it.
pub fn decompose_transform(t: &Transform, inputs: &[Vec<usize>]) -> Result<RasterOp> {
    let out_shape = transform_output_shape(t, inputs)?;
    let regions = match t {
        Transform::Transpose { perm } => {
            let in_strides = default_strides(&inputs[0])?;
            let src = View::new(0, perm.iter().map(|&p| in_strides[p]).collect());
            vec![Region::new(0, out_shape.clone(), src, View::contiguous(&out_shape, 0)?)]
        }
        Transform::Slice { begin, size } => {
            let in_strides = default_strides(&inputs[0])?;
            let offset = in_strides.iter().zip(begin).map(|(&s, &b)| s * b as isize).sum();
            vec![Region::new(0, size.clone(), View::new(offset, in_strides), View::contiguous(size, 0)?)]
        }
        Transform::Concat { axis } => {
            let out_strides = default_strides(&out_shape)?;
            let mut at = 0usize;
            let mut regions = Vec::with_capacity(inputs.len());
            for (i, s) in inputs.iter().enumerate() {
                let dst = View::new(out_strides[*axis] * at as isize, out_strides.clone());
                regions.push(Region::new(i, s.clone(), View::contiguous(s, 0)?, dst));
                at += s[*axis];
            }
            regions
        }
        Transform::Reverse { axes } => {
            let shape = &inputs[0];
            let mut src = View::contiguous(shape, 0)?;
            for &a in axes {
                src.offset += src.strides[a] * (shape[a] as isize - 1);
                src.strides[a] = -src.strides[a];
            }
            vec![Region::new(0, shape.clone(), src, View::contiguous(shape, 0)?)]
        }
        Transform::Reshape { .. } => {
            // Tensors are always contiguous row-major, so reshape is one flat copy.
            let n = numel(&out_shape);
            vec![Region::new(0, vec![n], View::new(0, vec![1]), View::new(0, vec![1]))]
        }
        Transform::Broadcast { shape: target } => {
            let shape = &inputs[0];
            let lead = target.len() - shape.len();
            let in_strides = default_strides(shape)?;
            let strides = (0..target.len())
                .map(|k| match k.checked_sub(lead) {
                    Some(j) if shape[j] == target[k] => in_strides[j],
                    _ => 0,
                })
                .collect();
            vec![Region::new(0, target.clone(), View::new(0, strides), View::contiguous(target, 0)?)]
        }
    };
    Ok(RasterOp::new(regions, out_shape))
}
