use serde::{Deserialize, Serialize};

use super::{AlgorithmVariant, ConvGeometry};
use crate::error::{Error, Result};

/// Operator sizes as seen by the cost model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Workload {
    Elementwise { n: usize },
    ReduceSum { n: usize },
    MatMul { a: usize, e: usize, b: usize },
    Conv2d(ConvGeometry),
    Raster { moved: usize },
}

impl Workload {
    pub fn name(&self) -> &'static str {
        match self {
            Workload::Elementwise { .. } => "elementwise",
            Workload::ReduceSum { .. } => "reduce_sum",
            Workload::MatMul { .. } => "matmul",
            Workload::Conv2d(_) => "conv2d",
            Workload::Raster { .. } => "raster",
        }
    }
}

/// Multiply-accumulate count of running `w` with `variant`. Additions spent in
/// Strassen and Winograd transforms are not counted.
pub fn q_count(w: &Workload, variant: &AlgorithmVariant) -> Result<u64> {
    variant.validate()?;
    let unsupported = || Error::UnsupportedVariant(format!("{variant} for {}", w.name()));
    match (*w, *variant) {
        (Workload::Elementwise { n } | Workload::ReduceSum { n } | Workload::Raster { moved: n }, v) => {
            if v != AlgorithmVariant::Direct {
                return Err(unsupported());
            }
            Ok(n as u64)
        }
        (Workload::MatMul { a, e, b }, v) => {
            if a == 0 || e == 0 || b == 0 {
                return Err(Error::Shape(format!("matmul sizes ({a},{e},{b})")));
            }
            match v {
                AlgorithmVariant::Direct | AlgorithmVariant::Tiled { .. } => Ok((a * e * b) as u64),
                AlgorithmVariant::Strassen { cutoff } => Ok(strassen_q(a, e, b, cutoff)),
                AlgorithmVariant::Winograd { .. } => Err(unsupported()),
            }
        }
        (Workload::Conv2d(g), v) => {
            if [g.n, g.c, g.h, g.w, g.o].contains(&0) {
                return Err(Error::Shape(format!("conv sizes {g:?}")));
            }
            ConvGeometry::from_shapes(&[g.n, g.c, g.h, g.w], &[g.o, g.c, g.kh, g.kw], g.stride, g.pad)?;
            let pairs = (g.n * g.o * g.c) as u64;
            match v {
                AlgorithmVariant::Direct => Ok(pairs * (g.out_h() * g.out_w() * g.kh * g.kw) as u64),
                AlgorithmVariant::Winograd { m } if g.winograd_ok() => {
                    let tiles = (g.out_h().div_ceil(m) * g.out_w().div_ceil(m)) as u64;
                    Ok(pairs * tiles * ((m + 2) * (m + 2)) as u64)
                }
                _ => Err(unsupported()),
            }
        }
    }
}

fn strassen_q(a: usize, e: usize, b: usize, cutoff: usize) -> u64 {
    if a <= cutoff || e <= cutoff || b <= cutoff {
        return (a * e * b) as u64;
    }
    7 * strassen_q(a.div_ceil(2), e.div_ceil(2), b.div_ceil(2), cutoff)
}
