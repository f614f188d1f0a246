//! Semi-automatic backend search.
//!
//! Each backend's cost is the sum over operators of the cheapest feasible
//! algorithm, `min_alg Q_alg / P_ba + S_ba`, and the backend with the smallest
//! total wins. Algorithm parameters (matmul tile sizes, Strassen cutoff) are
//! picked by small exhaustive searches at costing time.

mod backend;
mod tile;

pub use backend::{backend_power, BackendKind, BackendSpec, Catalog};
pub use tile::{optimize_tile, tile_objective};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{q_count, AlgorithmVariant, Workload};

/// Smallest Strassen cutoff the search considers. Below this the recursion
/// overhead dwarfs the multiplications saved.
pub const MIN_STRASSEN_CUTOFF: usize = 16;

/// Cost of one operator on one backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpCost {
    pub workload: Workload,
    pub variant: AlgorithmVariant,
    pub q: u64,
    /// Seconds.
    pub cost: f64,
}

/// Per-operator costs of a sequence on one backend and their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub backend: String,
    pub ops: Vec<OpCost>,
    pub total: f64,
}

/// `algs(op, ba)`: the candidate algorithms for `w` on `spec`, each with its
/// parameters already optimised, in tie-break order.
pub fn algorithms(w: &Workload, spec: &BackendSpec) -> Result<Vec<AlgorithmVariant>> {
    if spec.unsupported.iter().any(|u| u == w.name()) {
        return Err(Error::UnsupportedOnBackend { op: w.name().into(), backend: spec.name.clone() });
    }
    Ok(match *w {
        Workload::MatMul { a, e, b } => match spec.kind {
            BackendKind::Cpu => {
                let (te, tb) = optimize_tile(a, e, b, spec.registers)?;
                vec![
                    AlgorithmVariant::Tiled { te, tb },
                    AlgorithmVariant::Direct,
                    AlgorithmVariant::Strassen { cutoff: strassen_cutoff(a, e, b)? },
                ]
            }
            BackendKind::Gpu => vec![AlgorithmVariant::Direct],
        },
        Workload::Conv2d(g) if g.winograd_ok() => {
            vec![AlgorithmVariant::Direct, AlgorithmVariant::Winograd { m: 2 }, AlgorithmVariant::Winograd { m: 6 }]
        }
        _ => vec![AlgorithmVariant::Direct],
    })
}

/// Strassen cutoff with the fewest multiplications, searching powers of two from
/// [`MIN_STRASSEN_CUTOFF`] up to the largest dim. Ties go to the smaller cutoff.
pub fn strassen_cutoff(a: usize, e: usize, b: usize) -> Result<usize> {
    let top = a.max(e).max(b);
    let mut best = (u64::MAX, MIN_STRASSEN_CUTOFF);
    let mut cutoff = MIN_STRASSEN_CUTOFF;
    loop {
        let q = q_count(&Workload::MatMul { a, e, b }, &AlgorithmVariant::Strassen { cutoff })?;
        if q < best.0 {
            best = (q, cutoff);
        }
        if cutoff >= top {
            return Ok(best.1);
        }
        cutoff *= 2;
    }
}

/// Elementary calculations the cost model charges. Elementwise work is counted
/// in SIMD lane-operations.
fn charged_q(w: &Workload, variant: &AlgorithmVariant, spec: &BackendSpec) -> Result<u64> {
    let q = q_count(w, variant)?;
    Ok(match w {
        Workload::Elementwise { .. } => q.div_ceil(spec.simd_width.max(1) as u64),
        _ => q,
    })
}

/// Cheapest algorithm for `w` on `spec`: `min Q / P + S`.
pub fn op_cost(w: &Workload, spec: &BackendSpec) -> Result<OpCost> {
    let power = backend_power(spec);
    let mut best: Option<OpCost> = None;
    for variant in algorithms(w, spec)? {
        let q = charged_q(w, &variant, spec)?;
        let cost = q as f64 / power + spec.schedule_cost;
        if best.as_ref().is_none_or(|b| cost < b.cost) {
            best = Some(OpCost { workload: *w, variant, q, cost });
        }
    }
    best.ok_or_else(|| Error::UnsupportedOnBackend { op: w.name().into(), backend: spec.name.clone() })
}

/// Total cost of running `ops` in sequence on `spec`.
pub fn graph_cost(ops: &[Workload], spec: &BackendSpec) -> Result<CostBreakdown> {
    let ops = ops.iter().map(|w| op_cost(w, spec)).collect::<Result<Vec<_>>>()?;
    let total = ops.iter().fold(0.0, |acc, o| acc + o.cost);
    Ok(CostBreakdown { backend: spec.name.clone(), ops, total })
}

/// Outcome of costing a sequence against a whole catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Index of the cheapest backend.
    pub winner: usize,
    /// One entry per catalog backend; `None` when it cannot run the sequence.
    pub costs: Vec<Option<CostBreakdown>>,
}

impl Selection {
    pub fn winner_cost(&self) -> &CostBreakdown {
        self.costs[self.winner].as_ref().expect("winner is always costed")
    }

    /// Cheapest backend satisfying `pred`, in catalog order on ties.
    pub fn best_where(&self, mut pred: impl FnMut(usize) -> bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in self.costs.iter().enumerate() {
            if let Some(c) = c {
                if pred(i) && best.is_none_or(|(_, t)| c.total < t) {
                    best = Some((i, c.total));
                }
            }
        }
        best.map(|(i, _)| i)
    }
}

/// Costs `ops` on every backend and picks the cheapest. Backends that cannot run
/// some operator are excluded; ties go to the earlier catalog entry.
pub fn select_backend(ops: &[Workload], catalog: &[BackendSpec]) -> Result<Selection> {
    let mut costs = Vec::with_capacity(catalog.len());
    for spec in catalog {
        match graph_cost(ops, spec) {
            Ok(c) => costs.push(Some(c)),
            Err(Error::UnsupportedOnBackend { .. }) => costs.push(None),
            Err(e) => return Err(e),
        }
    }
    let mut sel = Selection { winner: 0, costs };
    sel.winner = sel.best_where(|_| true).ok_or(Error::NoBackend)?;
    Ok(sel)
}
