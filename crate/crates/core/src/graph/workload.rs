use serde::{Deserialize, Serialize};

/// Operator counts that drive the kernel-implementation workload estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorRegistry {
    /// Atomic operators.
    pub aop: u64,
    /// Transform operators.
    pub top: u64,
    /// Composite operators.
    pub cop: u64,
    /// Backend-specific fused operators.
    pub fop: u64,
    /// Backends.
    pub ba: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadReport {
    pub naive: u64,
    pub geometric: u64,
    /// `1 - geometric / naive`; `None` when `naive` is zero.
    pub reduction: Option<f64>,
}

pub fn workload_report(r: &OperatorRegistry) -> WorkloadReport {
    let naive = (r.aop + r.top + r.cop) * r.ba + r.fop;
    let geometric = (r.aop + 1) * r.ba + r.top + r.cop + r.fop;
    let reduction = (naive != 0).then(|| 1.0 - geometric as f64 / naive as f64);
    WorkloadReport { naive, geometric, reduction }
}
