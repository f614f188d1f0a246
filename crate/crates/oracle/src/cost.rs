//! Exhaustive cost-model oracle: every algorithm and every parameter value is
//! priced, and the cheapest is kept.

use num_rational::Ratio;

use geomtensor::kernels::{ConvGeometry, Workload};
use geomtensor::search::{BackendKind, BackendSpec};

pub fn power(spec: &BackendSpec) -> f64 {
    match spec.kind {
        BackendKind::Cpu => {
            let per_cycle = if spec.fp16 == Some(true) { 16.0 } else { 8.0 };
            per_cycle * spec.frequency_ghz.expect("cpu frequency") * 1e9
        }
        BackendKind::Gpu => spec.flops.expect("gpu flops"),
    }
}

/// Exact objective `(e/te)(b/tb)(a te + a tb + te tb)`.
pub fn tile_objective(a: usize, e: usize, b: usize, te: usize, tb: usize) -> Ratio<u128> {
    let (a, e, b, te, tb) = (a as u128, e as u128, b as u128, te as u128, tb as u128);
    Ratio::new(e * b * (a * te + a * tb + te * tb), te * tb)
}

/// Scans every feasible pair; the first minimum in (te, tb) order wins.
pub fn tile_argmin(a: usize, e: usize, b: usize, registers: usize) -> Option<(usize, usize)> {
    let mut best: Option<(Ratio<u128>, usize, usize)> = None;
    for te in 1..=e {
        for tb in 1..=b {
            if te * tb + te + tb > registers {
                continue;
            }
            let f = tile_objective(a, e, b, te, tb);
            if best.as_ref().is_none_or(|(bf, _, _)| f < *bf) {
                best = Some((f, te, tb));
            }
        }
    }
    best.map(|(_, te, tb)| (te, tb))
}

fn strassen(a: usize, e: usize, b: usize, cutoff: usize) -> u64 {
    if a.min(e).min(b) <= cutoff {
        (a * e * b) as u64
    } else {
        7 * strassen(a.div_ceil(2), e.div_ceil(2), b.div_ceil(2), cutoff)
    }
}

fn conv_out(g: &ConvGeometry) -> (usize, usize) {
    ((g.h + 2 * g.pad - g.kh) / g.stride + 1, (g.w + 2 * g.pad - g.kw) / g.stride + 1)
}

/// Charged operation counts of every algorithm instance available for `w`.
pub fn all_q(w: &Workload, spec: &BackendSpec) -> Vec<u64> {
    match *w {
        Workload::Elementwise { n } => vec![(n as u64).div_ceil(spec.simd_width as u64)],
        Workload::ReduceSum { n } => vec![n as u64],
        Workload::Raster { moved } => vec![moved as u64],
        Workload::MatMul { a, e, b } => {
            let direct = (a * e * b) as u64;
            if spec.kind == BackendKind::Gpu {
                return vec![direct];
            }
            let mut qs = vec![direct];
            // Tiling reorders the loops but performs the same multiplies.
            if tile_argmin(a, e, b, spec.registers).is_some() {
                qs.push(direct);
            }
            let mut cutoff = 16;
            loop {
                qs.push(strassen(a, e, b, cutoff));
                if cutoff >= a.max(e).max(b) {
                    break;
                }
                cutoff *= 2;
            }
            qs
        }
        Workload::Conv2d(g) => {
            let (oh, ow) = conv_out(&g);
            let pairs = (g.n * g.o * g.c) as u64;
            let mut qs = vec![pairs * (oh * ow * g.kh * g.kw) as u64];
            if g.kh == 3 && g.kw == 3 && g.stride == 1 {
                for m in [2usize, 6] {
                    qs.push(pairs * (oh.div_ceil(m) * ow.div_ceil(m) * (m + 2) * (m + 2)) as u64);
                }
            }
            qs
        }
    }
}

pub fn op_cost(w: &Workload, spec: &BackendSpec) -> Option<f64> {
    if spec.unsupported.iter().any(|u| u == w.name()) {
        return None;
    }
    let p = power(spec);
    all_q(w, spec).into_iter().map(|q| q as f64 / p + spec.schedule_cost).min_by(|x, y| x.total_cmp(y))
}

/// Per-backend totals and the index of the first cheapest backend.
pub fn select(ops: &[Workload], catalog: &[BackendSpec]) -> (Option<usize>, Vec<Option<f64>>) {
    let totals: Vec<Option<f64>> =
        catalog.iter().map(|spec| ops.iter().map(|w| op_cost(w, spec)).sum::<Option<f64>>()).collect();
    let mut winner: Option<usize> = None;
    for (i, t) in totals.iter().enumerate() {
        if let Some(t) = t {
            if winner.is_none_or(|w| *t < totals[w].unwrap()) {
                winner = Some(i);
            }
        }
    }
    (winner, totals)
}
