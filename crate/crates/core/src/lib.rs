//! A small tensor compute engine.
//!
//! Transform and composite operators are decomposed into a single data-movement
//! primitive, the raster, plus a handful of atomic kernels. A cost model over a
//! catalog of backends picks where and with which kernel algorithms a graph runs.

pub mod autodiff;
pub mod document;
pub mod error;
pub mod geometry;
pub mod graph;
pub mod kernels;
pub mod search;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Layout, Tensor};
