//! Atomic operator kernels. Compute-heavy operators come in several algorithm
//! variants that the backend search chooses between.

mod conv;
mod count;
mod elementwise;
mod matmul;
mod winograd;

pub use conv::{conv2d, ConvGeometry};
pub use count::{q_count, Workload};
pub(crate) use elementwise::reduced_shape as elementwise_reduced_shape;
pub use elementwise::{binary, elementwise, reduce_sum, unary, BinaryOp, ElementwiseOp, UnaryOp};
pub use matmul::matmul;
pub use winograd::WinogradTransform;

use std::cell::Cell;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel algorithm choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlgorithmVariant {
    Direct,
    /// Register-blocked matmul with `te` rows of B and `tb` columns per block.
    Tiled {
        te: usize,
        tb: usize,
    },
    /// Strassen recursion, falling back to direct once any dim is `<= cutoff`.
    Strassen {
        cutoff: usize,
    },
    /// Winograd F(m, 3) convolution.
    Winograd {
        m: usize,
    },
}

impl AlgorithmVariant {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AlgorithmVariant::Direct => Ok(()),
            AlgorithmVariant::Tiled { te, tb } if te >= 1 && tb >= 1 => Ok(()),
            AlgorithmVariant::Strassen { cutoff } if cutoff.is_power_of_two() => Ok(()),
            AlgorithmVariant::Winograd { m: 2 | 6 } => Ok(()),
            v => Err(Error::UnsupportedVariant(format!("invalid parameters for {v}"))),
        }
    }
}

impl fmt::Display for AlgorithmVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlgorithmVariant::Direct => write!(f, "direct"),
            AlgorithmVariant::Tiled { te, tb } => write!(f, "tiled(te={te},tb={tb})"),
            AlgorithmVariant::Strassen { cutoff } => write!(f, "strassen(cutoff={cutoff})"),
            AlgorithmVariant::Winograd { m } => write!(f, "winograd(F({m},3))"),
        }
    }
}

thread_local! {
    static MULTIPLIES: Cell<u64> = const { Cell::new(0) };
}

pub(crate) fn record_multiplies(n: usize) {
    MULTIPLIES.with(|c| c.set(c.get() + n as u64));
}

/// Runs `f` and returns the number of multiplications the matmul and conv
/// kernels performed on this thread meanwhile.
pub fn count_multiplies<R>(f: impl FnOnce() -> R) -> (R, u64) {
    let before = MULTIPLIES.with(Cell::get);
    let out = f();
    (out, MULTIPLIES.with(Cell::get) - before)
}
