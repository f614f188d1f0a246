use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Cpu,
    Gpu,
}

/// Description of a backend for costing. Only entries marked `executable`
/// actually run kernels; the rest are priced but never executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub name: String,
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency_ghz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fp16: Option<bool>,
    /// Floating point operations per second (GPU).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flops: Option<f64>,
    pub registers: usize,
    pub simd_width: usize,
    /// Seconds per kernel launch.
    #[serde(default)]
    pub schedule_cost: f64,
    #[serde(default)]
    pub executable: bool,
    /// Workload names (`matmul`, `conv2d`, ...) this backend cannot run.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unsupported: Vec<String>,
}

impl BackendSpec {
    pub fn cpu(name: &str, frequency_ghz: f64, fp16: bool, registers: usize, simd_width: usize) -> Self {
        BackendSpec {
            name: name.into(),
            kind: BackendKind::Cpu,
            frequency_ghz: Some(frequency_ghz),
            fp16: Some(fp16),
            flops: None,
            registers,
            simd_width,
            schedule_cost: 0.0,
            executable: true,
            unsupported: Vec::new(),
        }
    }

    pub fn gpu(name: &str, flops: f64, schedule_cost: f64, registers: usize, simd_width: usize) -> Self {
        BackendSpec {
            name: name.into(),
            kind: BackendKind::Gpu,
            frequency_ghz: None,
            fp16: None,
            flops: Some(flops),
            registers,
            simd_width,
            schedule_cost,
            executable: false,
            unsupported: Vec::new(),
        }
    }

    /// Built-in executable CPU backend used when a catalog has none.
    pub fn reference() -> Self {
        BackendSpec::cpu("reference-cpu", 1.0, false, 16, 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Parse(format!("backend `{}`: {msg}", self.name)));
        match self.kind {
            BackendKind::Cpu => match self.frequency_ghz {
                Some(f) if f > 0.0 && f.is_finite() => {}
                _ => return bad("cpu backends need a positive frequency_ghz"),
            },
            BackendKind::Gpu => match self.flops {
                Some(f) if f > 0.0 && f.is_finite() => {}
                _ => return bad("gpu backends need positive flops"),
            },
        }
        if !(self.schedule_cost >= 0.0 && self.schedule_cost.is_finite()) {
            return bad("schedule_cost must be non-negative");
        }
        if self.registers < 3 {
            return bad("at least 3 registers are required");
        }
        if self.simd_width == 0 {
            return bad("simd_width must be positive");
        }
        Ok(())
    }
}

/// Backend catalog document: `{"backends": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub backends: Vec<BackendSpec>,
}

impl Catalog {
    pub fn from_json(text: &str) -> Result<Self> {
        let cat: Catalog = serde_json::from_str(text)?;
        if cat.backends.is_empty() {
            return Err(Error::Parse("catalog lists no backends".into()));
        }
        for b in &cat.backends {
            b.validate()?;
        }
        Ok(cat)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }
}

/// Throughput in operations per second: 16x (FP16) or 8x the clock for CPUs,
/// measured FLOPS for GPUs.
pub fn backend_power(spec: &BackendSpec) -> f64 {
    match spec.kind {
        BackendKind::Cpu => {
            let per_cycle = if spec.fp16.unwrap_or(false) { 16.0 } else { 8.0 };
            per_cycle * spec.frequency_ghz.unwrap_or(0.0) * 1e9
        }
        BackendKind::Gpu => spec.flops.unwrap_or(0.0),
    }
}
