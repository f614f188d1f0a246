//! Dense `f32` tensors, row-major stride arithmetic and the NC/4HW4 packed layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Memory layout tag carried by a [`Tensor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Layout {
    #[default]
    RowMajor,
    /// Channel-blocked layout with shape `(N, ceil(C/4), H, W, 4)`; `channels` is the
    /// logical channel count `C` before padding.
    Nc4hw4 { channels: usize },
}

/// Dense tensor of `f32` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    #[serde(default)]
    layout: Layout,
}

pub(crate) fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::InvalidShape("shape must have at least one dim".into()));
    }
    if let Some(d) = shape.iter().position(|&d| d == 0) {
        return Err(Error::InvalidShape(format!("dim {d} of {shape:?} is zero")));
    }
    Ok(())
}

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        check_shape(&shape)?;
        if numel(&shape) != data.len() {
            return Err(Error::InvalidShape(format!(
                "shape {shape:?} needs {} elements, buffer has {}",
                numel(&shape),
                data.len()
            )));
        }
        Ok(Tensor { shape, data, layout: Layout::RowMajor })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        check_shape(&shape)?;
        let n = numel(&shape);
        Ok(Tensor { shape, data: vec![0.0; n], layout: Layout::RowMajor })
    }

    pub fn full(shape: Vec<usize>, value: f32) -> Result<Self> {
        let mut t = Self::zeros(shape)?;
        t.data.fill(value);
        Ok(t)
    }

    /// Single-element tensor of shape `[1]`.
    pub fn scalar(value: f32) -> Self {
        Tensor { shape: vec![1], data: vec![value], layout: Layout::RowMajor }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn strides(&self) -> Vec<isize> {
        default_strides(&self.shape).expect("tensor shape is validated on construction")
    }

    /// Element at a row-major coordinate.
    pub fn get(&self, coord: &[usize]) -> Result<f32> {
        if coord.len() != self.shape.len() || coord.iter().zip(&self.shape).any(|(c, d)| c >= d) {
            return Err(Error::InvalidCoordinate(format!("{coord:?} is outside shape {:?}", self.shape)));
        }
        let off = linear_offset(&self.strides(), 0, coord)?;
        Ok(self.data[off as usize])
    }

    /// Same buffer under a new shape with the same element count.
    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        check_shape(&shape)?;
        if numel(&shape) != self.data.len() {
            return Err(Error::InvalidShape(format!("cannot reshape {:?} into {shape:?}", self.shape)));
        }
        if self.layout != Layout::RowMajor {
            return Err(Error::InvalidShape("cannot reshape a packed tensor".into()));
        }
        self.shape = shape;
        Ok(self)
    }

    pub(crate) fn require_row_major(&self) -> Result<()> {
        match self.layout {
            Layout::RowMajor => Ok(()),
            Layout::Nc4hw4 { .. } => Err(Error::InvalidShape("operation requires a row-major tensor".into())),
        }
    }
}

/// Row-major strides: `strides[k]` is the product of `shape[k+1..]`.
pub fn default_strides(shape: &[usize]) -> Result<Vec<isize>> {
    check_shape(shape)?;
    let mut strides = vec![1isize; shape.len()];
    for k in (0..shape.len() - 1).rev() {
        strides[k] = strides[k + 1] * shape[k + 1] as isize;
    }
    Ok(strides)
}

/// `offset + sum(strides[k] * coord[k])`.
pub fn linear_offset(strides: &[isize], offset: isize, coord: &[usize]) -> Result<isize> {
    if strides.len() != coord.len() {
        return Err(Error::InvalidCoordinate(format!(
            "coordinate of rank {} against {} strides",
            coord.len(),
            strides.len()
        )));
    }
    Ok(strides.iter().zip(coord).fold(offset, |acc, (&s, &c)| acc + s * c as isize))
}

/// Packs a plain `(N, C, H, W)` tensor into NC/4HW4, zero-filling channels past `C`.
pub fn nc4hw4_pack(t: &Tensor) -> Result<Tensor> {
    t.require_row_major()?;
    let &[n, c, h, w] = t.shape() else {
        return Err(Error::InvalidShape(format!("nc4hw4 packing needs rank 4, got {:?}", t.shape())));
    };
    let c4 = c.div_ceil(4);
    let mut data = vec![0.0f32; n * c4 * h * w * 4];
    let hw = h * w;
    for ni in 0..n {
        for ci in 0..c {
            let src = &t.data[(ni * c + ci) * hw..][..hw];
            let base = (ni * c4 + ci / 4) * hw * 4 + ci % 4;
            for (p, &v) in src.iter().enumerate() {
                data[base + p * 4] = v;
            }
        }
    }
    Ok(Tensor { shape: vec![n, c4, h, w, 4], data, layout: Layout::Nc4hw4 { channels: c } })
}

/// Inverse of [`nc4hw4_pack`].
pub fn nc4hw4_unpack(t: &Tensor) -> Result<Tensor> {
    let Layout::Nc4hw4 { channels: c } = t.layout else {
        return Err(Error::InvalidShape("tensor is not nc4hw4-packed".into()));
    };
    let &[n, c4, h, w, 4] = t.shape() else {
        return Err(Error::InvalidShape(format!("bad nc4hw4 shape {:?}", t.shape())));
    };
    let hw = h * w;
    let mut data = vec![0.0f32; n * c * hw];
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c4 + ci / 4) * hw * 4 + ci % 4;
            let dst = &mut data[(ni * c + ci) * hw..][..hw];
            for (p, v) in dst.iter_mut().enumerate() {
                *v = t.data[base + p * 4];
            }
        }
    }
    Tensor::new(vec![n, c, h, w], data)
}
