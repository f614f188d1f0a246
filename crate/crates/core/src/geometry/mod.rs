//! Geometric computing: every data-movement operator becomes a *raster* over
//! one or more regions. A region iterates a coordinate box and moves the element
//! at `src_view(coord)` to `dst_view(coord)`, where both views are affine maps
//! from the coordinate to a flat buffer index.

mod decompose;
mod merge;

pub use decompose::{decompose_transform, transform_output_shape, Transform};
pub use merge::{merge_horizontal, merge_vertical};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{default_strides, numel, Tensor};

/// Affine map from a region coordinate to a buffer index. Strides may be negative
/// or zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct View {
    pub offset: isize,
    pub strides: Vec<isize>,
}

impl View {
    pub fn new(offset: isize, strides: Vec<isize>) -> Self {
        View { offset, strides }
    }

    /// Row-major view of `shape` starting at `offset`.
    pub fn contiguous(shape: &[usize], offset: isize) -> Result<Self> {
        Ok(View { offset, strides: default_strides(shape)? })
    }

    pub fn at(&self, coord: &[usize]) -> isize {
        self.strides.iter().zip(coord).fold(self.offset, |acc, (&s, &c)| acc + s * c as isize)
    }

    /// Smallest and largest index touched over `range`.
    pub fn extent(&self, range: &[usize]) -> (isize, isize) {
        let mut lo = self.offset;
        let mut hi = self.offset;
        for (&s, &n) in self.strides.iter().zip(range) {
            let span = s * (n as isize - 1);
            if span < 0 {
                lo += span;
            } else {
                hi += span;
            }
        }
        (lo, hi)
    }
}

/// One unit of raster work.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    /// Index of the source tensor among the raster's inputs.
    pub src: usize,
    pub range: Vec<usize>,
    pub src_view: View,
    pub dst_view: View,
}

impl Region {
    pub fn new(src: usize, range: Vec<usize>, src_view: View, dst_view: View) -> Self {
        Region { src, range, src_view, dst_view }
    }

    pub fn size(&self) -> usize {
        numel(&self.range)
    }

    fn check_arity(&self) -> Result<()> {
        if self.range.is_empty() || self.range.contains(&0) {
            return Err(Error::InvalidShape(format!("region range {:?}", self.range)));
        }
        if self.src_view.strides.len() != self.range.len() || self.dst_view.strides.len() != self.range.len() {
            return Err(Error::InvalidCoordinate(format!(
                "view strides {:?}/{:?} do not match range {:?}",
                self.src_view.strides, self.dst_view.strides, self.range
            )));
        }
        Ok(())
    }

    /// Calls `f(src_index, dst_index)` for every coordinate, in lexicographic order.
    pub fn for_each(&self, mut f: impl FnMut(usize, usize)) {
        let rank = self.range.len();
        let inner = self.range[rank - 1];
        let (ss, ds) = (self.src_view.strides[rank - 1], self.dst_view.strides[rank - 1]);
        let mut coord = vec![0usize; rank - 1];
        loop {
            let mut s = self.src_view.offset;
            let mut d = self.dst_view.offset;
            for (k, &c) in coord.iter().enumerate() {
                s += self.src_view.strides[k] * c as isize;
                d += self.dst_view.strides[k] * c as isize;
            }
            for _ in 0..inner {
                f(s as usize, d as usize);
                s += ss;
                d += ds;
            }
            let mut k = rank - 1;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                coord[k] += 1;
                if coord[k] < self.range[k] {
                    break;
                }
                coord[k] = 0;
            }
        }
    }
}

/// The raster operator: an ordered list of regions writing into a fresh tensor of
/// `out_shape`. Slots no region writes are zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RasterOp {
    pub regions: Vec<Region>,
    pub out_shape: Vec<usize>,
}

impl RasterOp {
    pub fn new(regions: Vec<Region>, out_shape: Vec<usize>) -> Self {
        RasterOp { regions, out_shape }
    }

    /// Identity movement over a tensor of `shape`.
    pub fn identity(shape: &[usize]) -> Result<Self> {
        let view = View::contiguous(shape, 0)?;
        Ok(RasterOp::new(vec![Region::new(0, shape.to_vec(), view.clone(), view)], shape.to_vec()))
    }

    pub fn num_inputs(&self) -> usize {
        self.regions.iter().map(|r| r.src + 1).max().unwrap_or(0)
    }

    /// Number of elements moved.
    pub fn moved(&self) -> usize {
        self.regions.iter().map(Region::size).sum()
    }

    /// Checks that every region maps inside its source (of length `src_lens[src]`)
    /// and inside the destination.
    pub fn check_bounds(&self, src_lens: &[usize]) -> Result<()> {
        let dst_len = numel(&self.out_shape) as isize;
        for (i, r) in self.regions.iter().enumerate() {
            r.check_arity()?;
            let Some(&src_len) = src_lens.get(r.src) else {
                return Err(Error::RegionBounds(format!(
                    "region {i} reads source {} but only {} given",
                    r.src,
                    src_lens.len()
                )));
            };
            let (lo, hi) = r.src_view.extent(&r.range);
            if lo < 0 || hi >= src_len as isize {
                return Err(Error::RegionBounds(format!(
                    "region {i} reads [{lo}, {hi}] from a source of {src_len} elements"
                )));
            }
            let (lo, hi) = r.dst_view.extent(&r.range);
            if lo < 0 || hi >= dst_len {
                return Err(Error::RegionBounds(format!(
                    "region {i} writes [{lo}, {hi}] into a destination of {dst_len} elements"
                )));
            }
        }
        Ok(())
    }

    /// Bounds check plus write-disjointness across all regions.
    pub fn validate(&self, src_lens: &[usize]) -> Result<()> {
        self.check_bounds(src_lens)?;
        let mut written = vec![false; numel(&self.out_shape)];
        let mut clash = None;
        for r in &self.regions {
            r.for_each(|_, d| {
                if std::mem::replace(&mut written[d], true) && clash.is_none() {
                    clash = Some(d);
                }
            });
            if let Some(d) = clash {
                return Err(Error::Overlap(d));
            }
        }
        Ok(())
    }
}

/// Executes a raster over `sources`, bounds-checked.
pub fn raster_execute(op: &RasterOp, sources: &[&Tensor]) -> Result<Tensor> {
    for s in sources {
        s.require_row_major()?;
    }
    let lens: Vec<usize> = sources.iter().map(|t| t.numel()).collect();
    op.check_bounds(&lens)?;
    Ok(execute_unchecked(op, sources))
}

/// Like [`raster_execute`], but also rejects overlapping destination writes.
pub fn raster_execute_validated(op: &RasterOp, sources: &[&Tensor]) -> Result<Tensor> {
    let lens: Vec<usize> = sources.iter().map(|t| t.numel()).collect();
    op.validate(&lens)?;
    raster_execute(op, sources)
}

fn execute_unchecked(op: &RasterOp, sources: &[&Tensor]) -> Tensor {
    let mut out = vec![0.0f32; numel(&op.out_shape)];
    for r in &op.regions {
        let src = sources[r.src].data();
        r.for_each(|s, d| out[d] = src[s]);
    }
    Tensor::new(op.out_shape.clone(), out).expect("raster out_shape checked by bounds pass")
}
