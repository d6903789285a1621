//! Analytical roofline model: arithmetic intensity, ridge points, attainable
//! throughput, and the op-count model for the fused kernel.
//!
//! Units follow the decimal convention: GB = 1e9 bytes, GFLOP/GOP = 1e9
//! operations, so a 2700 GFLOP/s machine with 200 GB/s has its ridge at
//! 13.5 OP/byte.

use crate::kernels::{KernelKind, OpCounts};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RooflineError {
    #[error("input dimension {0} is not a multiple of 16")]
    DimensionError(usize),
    #[error("platform {name}: {what} must be positive and finite, got {value}")]
    BadPlatform {
        name: String,
        what: &'static str,
        value: f64,
    },
}

/// A machine's memory and compute ceilings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlatformSpec {
    pub name: String,
    /// Peak memory bandwidth in GB/s (1e9 bytes per second).
    pub peak_bandwidth_gbs: f64,
    /// Peak arithmetic throughput in GOP/s (1e9 add/sub or FLOP per second).
    pub peak_compute_gops: f64,
}

impl PlatformSpec {
    pub fn new(
        name: impl Into<String>,
        peak_bandwidth_gbs: f64,
        peak_compute_gops: f64,
    ) -> Result<Self, RooflineError> {
        let name = name.into();
        for (what, value) in [
            ("peak bandwidth", peak_bandwidth_gbs),
            ("peak compute", peak_compute_gops),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(RooflineError::BadPlatform { name, what, value });
            }
        }
        Ok(PlatformSpec {
            name,
            peak_bandwidth_gbs,
            peak_compute_gops,
        })
    }

    /// Arithmetic intensity at which the platform turns compute-bound.
    pub fn ridge_point(&self) -> f64 {
        self.peak_compute_gops / self.peak_bandwidth_gbs
    }
}

/// 48-core Xeon 8558P single socket: 200 GB/s, 2700 GFLOP/s, ridge 13.5.
pub fn cpu_xeon_8558p() -> PlatformSpec {
    PlatformSpec::new("cpu-8558p", 200.0, 2700.0).expect("preset is valid")
}

/// H200 NVL: 4800 GB/s HBM, 134000 GFLOP/s FP16 tensor, ridge ~27.9.
pub fn gpu_h200_nvl() -> PlatformSpec {
    PlatformSpec::new("gpu-h200", 4800.0, 134_000.0).expect("preset is valid")
}

/// The kernel whose traffic and op counts the model describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelProfile {
    pub kind: KernelKind,
    pub n: usize,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntensityMode {
    /// Full traffic accounting, including input and output vectors.
    Exact,
    /// Weight-traffic-dominated limit as n, m grow.
    Asymptotic,
}

/// Operations per byte of memory traffic.
///
/// Exact accounting per kernel (ops / bytes):
/// - fp32 dense:     nm      / (4nm + 4m + 4n)
/// - ternary single: nm      / (nm/4 + 4m + 4n)
/// - ternary fused:  8nm     / (nm + 12m + 8n)
///
/// The fused denominator counts four packed matrices (4 * nm/4), three input
/// vectors loaded once each (x_re, x_im, neg_x_im), and the two output
/// vectors. Asymptotically these reduce to 0.25, 4.0, and 8.0.
pub fn arithmetic_intensity(profile: &KernelProfile, mode: IntensityMode) -> f64 {
    let n = profile.n as f64;
    let m = profile.m as f64;
    match (profile.kind, mode) {
        (KernelKind::Fp32Dense, IntensityMode::Asymptotic) => 0.25,
        (KernelKind::TernarySingle, IntensityMode::Asymptotic) => 4.0,
        (KernelKind::TernaryFused, IntensityMode::Asymptotic) => 8.0,
        (KernelKind::Fp32Dense, IntensityMode::Exact) => n * m / (4.0 * n * m + 4.0 * m + 4.0 * n),
        (KernelKind::TernarySingle, IntensityMode::Exact) => {
            n * m / (n * m / 4.0 + 4.0 * m + 4.0 * n)
        }
        (KernelKind::TernaryFused, IntensityMode::Exact) => {
            8.0 * n * m / (n * m + 12.0 * m + 8.0 * n)
        }
    }
}

/// Which side of the ridge a kernel lands on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    #[serde(rename = "memory-bound")]
    MemoryBound,
    #[serde(rename = "compute-bound")]
    ComputeBound,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::MemoryBound => "memory-bound",
            Regime::ComputeBound => "compute-bound",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Attainable throughput `min(peak_compute, ai * peak_bandwidth)` in GOP/s,
/// and the regime: memory-bound iff `ai < ridge`.
pub fn attainable(platform: &PlatformSpec, ai: f64) -> (f64, Regime) {
    let gops = (ai * platform.peak_bandwidth_gbs).min(platform.peak_compute_gops);
    let regime = if ai < platform.ridge_point() {
        Regime::MemoryBound
    } else {
        Regime::ComputeBound
    };
    (gops, regime)
}

/// Analytic op counts for the fused widely-linear kernel plus the resulting
/// multiplication fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OpCountModel {
    pub counts: OpCounts,
    /// `scale multiplies / elementwise add-sub slots`, in percent; equals
    /// `100/m` independent of n.
    pub multiply_fraction_percent: f64,
}

/// Closed-form op counts for the fused kernel: `m/16` chunks per row, eight
/// streams touching 16 lanes each, so `8*n*m` elementwise slots (evenly split
/// between adds and subs on a dense-sign weight pattern) and `8*n` scale
/// multiplies. Matches the instrumented `count_ops` on every size.
pub fn op_count_model(n: usize, m: usize) -> Result<OpCountModel, RooflineError> {
    if m == 0 || !m.is_multiple_of(16) {
        return Err(RooflineError::DimensionError(m));
    }
    let n64 = n as u64;
    let m64 = m as u64;
    let half_slots = 4 * n64 * m64;
    let counts = OpCounts {
        masked_adds: half_slots,
        masked_subs: half_slots,
        inner_multiplies: 0,
        scale_multiplies: 8 * n64,
    };
    Ok(OpCountModel {
        counts,
        multiply_fraction_percent: 100.0 / m as f64,
    })
}

/// One row of the roofline report.
#[derive(Debug, Clone, Serialize)]
pub struct RooflineRow {
    pub platform: String,
    pub kernel: &'static str,
    pub n: usize,
    pub m: usize,
    pub ai_exact: f64,
    pub ai_asymptotic: f64,
    /// Attainable GOP/s at the asymptotic intensity.
    pub attainable_gops: f64,
    pub ridge_point: f64,
    pub regime: Regime,
}

/// Evaluate one kernel profile against one platform.
pub fn roofline_row(platform: &PlatformSpec, profile: &KernelProfile) -> RooflineRow {
    let ai_exact = arithmetic_intensity(profile, IntensityMode::Exact);
    let ai_asymptotic = arithmetic_intensity(profile, IntensityMode::Asymptotic);
    let (attainable_gops, regime) = attainable(platform, ai_asymptotic);
    RooflineRow {
        platform: platform.name.clone(),
        kernel: profile.kind.name(),
        n: profile.n,
        m: profile.m,
        ai_exact,
        ai_asymptotic,
        attainable_gops,
        ridge_point: platform.ridge_point(),
        regime,
    }
}

pub fn rows_csv_header() -> &'static str {
    "platform,kernel,n,m,ai_exact,ai_asymptotic,attainable_gops,ridge_point,regime"
}

pub fn row_csv_line(row: &RooflineRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        row.platform,
        row.kernel,
        row.n,
        row.m,
        row.ai_exact,
        row.ai_asymptotic,
        row.attainable_gops,
        row.ridge_point,
        row.regime.name()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::count_ops;

    fn profile(kind: KernelKind, n: usize, m: usize) -> KernelProfile {
        KernelProfile { kind, n, m }
    }

    #[test]
    fn asymptotic_intensities() {
        let p = |k| profile(k, 4096, 4096);
        assert_eq!(
            arithmetic_intensity(&p(KernelKind::Fp32Dense), IntensityMode::Asymptotic),
            0.25
        );
        assert_eq!(
            arithmetic_intensity(&p(KernelKind::TernarySingle), IntensityMode::Asymptotic),
            4.0
        );
        assert_eq!(
            arithmetic_intensity(&p(KernelKind::TernaryFused), IntensityMode::Asymptotic),
            8.0
        );
    }

    #[test]
    fn exact_fp32_dense_at_4096() {
        let ai = arithmetic_intensity(
            &profile(KernelKind::Fp32Dense, 4096, 4096),
            IntensityMode::Exact,
        );
        assert!((ai - 0.24988).abs() < 5e-6, "{ai}");
    }

    #[test]
    fn exact_converges_to_asymptote() {
        // Dense and fused are within 0.5% at 4096; the single-GEMV formula's
        // vector terms weigh 1/4-packed bytes harder (0.775% at 4096) and
        // drop under 0.5% from 8192 up.
        for (kind, size) in [
            (KernelKind::Fp32Dense, 4096),
            (KernelKind::TernaryFused, 4096),
            (KernelKind::TernarySingle, 8192),
        ] {
            let exact = arithmetic_intensity(&profile(kind, size, size), IntensityMode::Exact);
            let asym = arithmetic_intensity(&profile(kind, size, size), IntensityMode::Asymptotic);
            assert!(
                (exact - asym).abs() / asym < 0.005,
                "{kind:?}: {exact} vs {asym}"
            );
        }
        let single_4096 = arithmetic_intensity(
            &profile(KernelKind::TernarySingle, 4096, 4096),
            IntensityMode::Exact,
        );
        assert!((single_4096 - 3.96899).abs() < 1e-5, "{single_4096}");
    }

    #[test]
    fn ridge_points_of_presets() {
        assert_eq!(cpu_xeon_8558p().ridge_point(), 13.5);
        let gpu_ridge = gpu_h200_nvl().ridge_point();
        assert!((gpu_ridge - 27.9166667).abs() < 1e-6, "{gpu_ridge}");
    }

    #[test]
    fn attainable_at_ai_8() {
        let (cpu_gops, cpu_regime) = attainable(&cpu_xeon_8558p(), 8.0);
        assert_eq!(cpu_gops, 1600.0);
        assert_eq!(cpu_regime, Regime::MemoryBound);
        let (gpu_gops, gpu_regime) = attainable(&gpu_h200_nvl(), 8.0);
        assert_eq!(gpu_gops, 38400.0);
        assert_eq!(gpu_regime, Regime::MemoryBound);
    }

    #[test]
    fn attainable_monotone_and_clamped() {
        let cpu = cpu_xeon_8558p();
        let mut last = 0.0;
        for step in 1..100 {
            let ai = step as f64 * 0.5;
            let (gops, regime) = attainable(&cpu, ai);
            assert!(gops >= last);
            last = gops;
            assert_eq!(regime == Regime::MemoryBound, ai * 200.0 < 2700.0);
            if ai >= cpu.ridge_point() {
                assert_eq!(gops, 2700.0);
            }
        }
    }

    #[test]
    fn op_model_at_llama_dims() {
        let model = op_count_model(4096, 4096).unwrap();
        assert_eq!(model.counts.elementwise_total(), 134_217_728);
        assert_eq!(model.counts.scale_multiplies, 32_768);
        assert!((model.multiply_fraction_percent - 0.0244140625).abs() < 1e-12);
    }

    #[test]
    fn op_model_minimum_size() {
        let model = op_count_model(1, 16).unwrap();
        assert_eq!(model.counts.elementwise_total(), 128);
        assert_eq!(model.counts.scale_multiplies, 8);
        assert_eq!(model.multiply_fraction_percent, 6.25);
    }

    #[test]
    fn fraction_independent_of_n() {
        for n in [1, 3, 77, 512] {
            let model = op_count_model(n, 64).unwrap();
            assert_eq!(model.multiply_fraction_percent, 100.0 / 64.0);
        }
    }

    #[test]
    fn op_model_rejects_ragged_m() {
        assert!(matches!(
            op_count_model(4, 20),
            Err(RooflineError::DimensionError(20))
        ));
    }

    #[test]
    fn analytic_agrees_with_instrumented() {
        for (n, m) in [(1, 16), (4, 32), (16, 16), (7, 48), (33, 64)] {
            let analytic = op_count_model(n, m).unwrap().counts;
            let measured = count_ops(n, m, KernelKind::TernaryFused).unwrap();
            assert_eq!(analytic, measured, "n={n} m={m}");
        }
    }

    #[test]
    fn csv_row_is_parseable() {
        let row = roofline_row(
            &cpu_xeon_8558p(),
            &profile(KernelKind::TernaryFused, 4096, 4096),
        );
        let line = row_csv_line(&row);
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), rows_csv_header().split(',').count());
        assert_eq!(fields[0], "cpu-8558p");
        assert_eq!(fields[5].parse::<f64>().unwrap(), 8.0);
        assert_eq!(fields[8], "memory-bound");
    }
}
