//! Statistics-disciplined micro-benchmark harness.
//!
//! Protocol: per seed, run a warmup pass untimed, then a fixed number of
//! timed iterations on a monotonic clock; report the per-seed median and the
//! cross-seed mean/std/CV of medians. In DRAM-cold mode a scratch-buffer
//! sweep evicts the working set before every timed iteration and is excluded
//! from the measurement. Frequency pinning, governor settings, and NUMA
//! binding are operator procedures outside this process.

use serde::Serialize;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no samples")]
    EmptySamples,
    #[error("failed to allocate {bytes} bytes of flush scratch")]
    AllocationFailure { bytes: usize },
    #[error("monotonic clock does not advance")]
    ClockUnavailable,
    #[error("bad bench config: {0}")]
    BadConfig(String),
    #[error("cross-seed CV {cv_percent:.2}% exceeds threshold {threshold_percent:.2}%")]
    CvExceeded {
        cv_percent: f64,
        threshold_percent: f64,
    },
}

/// Cache state at the start of every timed iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CacheMode {
    /// Working set left resident from the previous iteration.
    L3Warm,
    /// Working set evicted by a scratch sweep before each iteration.
    DramCold,
}

impl CacheMode {
    pub fn name(self) -> &'static str {
        match self {
            CacheMode::L3Warm => "l3-warm",
            CacheMode::DramCold => "dram-cold",
        }
    }
}

impl std::fmt::Display for CacheMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub warmup_iters: u32,
    pub timed_iters: u32,
    pub seeds: Vec<u64>,
    pub cache_mode: CacheMode,
    /// Worker count the workload runs with; carried into emitted rows.
    pub workers: usize,
    /// Working-set size hint for the DRAM-cold flush (floored internally).
    pub flush_footprint_bytes: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            warmup_iters: 10,
            timed_iters: 1000,
            seeds: vec![42, 123, 2026],
            cache_mode: CacheMode::L3Warm,
            workers: 1,
            flush_footprint_bytes: 0,
        }
    }
}

/// Summary statistics over a set of duration samples, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchStats {
    pub median_us: f64,
    pub mean_us: f64,
    pub std_us: f64,
    pub cv_percent: f64,
}

/// Standard-deviation convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StdMode {
    /// n-1 denominator; the default, matching cross-seed reporting.
    Sample,
    /// n denominator.
    Population,
}

/// Median (lower-middle for even counts), mean, sample std, and CV.
pub fn compute_stats(samples_us: &[f64]) -> Result<BenchStats, BenchError> {
    compute_stats_with(samples_us, StdMode::Sample)
}

/// As [`compute_stats`] with an explicit std convention.
pub fn compute_stats_with(samples_us: &[f64], mode: StdMode) -> Result<BenchStats, BenchError> {
    if samples_us.is_empty() {
        return Err(BenchError::EmptySamples);
    }
    let mut sorted = samples_us.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median_us = sorted[(sorted.len() - 1) / 2];
    // Mean and std accumulate over the sorted samples so the results are
    // exactly permutation-invariant.
    let n = sorted.len() as f64;
    let mean_us = sorted.iter().sum::<f64>() / n;
    let sq_dev: f64 = sorted.iter().map(|s| (s - mean_us) * (s - mean_us)).sum();
    let denom = match mode {
        StdMode::Sample if sorted.len() > 1 => n - 1.0,
        StdMode::Sample => 1.0,
        StdMode::Population => n,
    };
    let std_us = (sq_dev / denom).sqrt();
    let cv_percent = if mean_us > 0.0 {
        100.0 * std_us / mean_us
    } else {
        0.0
    };
    Ok(BenchStats {
        median_us,
        mean_us,
        std_us,
        cv_percent,
    })
}

/// Scratch buffer floor; sized to exceed any server L3.
pub const FLUSH_FLOOR_BYTES: usize = 256 * 1024 * 1024;

/// Reusable cache-eviction scratch buffer.
///
/// Streaming read-modify-write traffic over `max(2 * footprint, 256 MiB)`
/// pushes the benchmark working set out of every cache level with high
/// probability; there is no architectural guarantee.
pub struct CacheFlusher {
    buf: Vec<u64>,
}

impl CacheFlusher {
    pub fn new(footprint_bytes: usize) -> Result<Self, BenchError> {
        let bytes = footprint_bytes.saturating_mul(2).max(FLUSH_FLOOR_BYTES);
        let words = bytes / 8;
        let mut buf = Vec::new();
        buf.try_reserve_exact(words)
            .map_err(|_| BenchError::AllocationFailure { bytes })?;
        buf.resize(words, 0u64);
        Ok(CacheFlusher { buf })
    }

    pub fn flush(&mut self) {
        let mut checksum = 0u64;
        for v in self.buf.iter_mut() {
            let next = v.wrapping_add(1);
            *v = next;
            checksum = checksum.wrapping_add(next);
        }
        std::hint::black_box(checksum);
    }
}

/// One-shot eviction sweep for a working set of the given size.
pub fn flush_cache(footprint_bytes: usize) -> Result<(), BenchError> {
    CacheFlusher::new(footprint_bytes)?.flush();
    Ok(())
}

/// Median cost of one timing measurement, for overhead subtraction.
fn timer_overhead_ns() -> f64 {
    let mut deltas: Vec<f64> = (0..501)
        .map(|_| {
            let t0 = Instant::now();
            std::hint::black_box(());
            t0.elapsed().as_nanos() as f64
        })
        .collect();
    deltas.sort_by(f64::total_cmp);
    deltas[deltas.len() / 2]
}

fn check_clock() -> Result<(), BenchError> {
    let t0 = Instant::now();
    std::thread::sleep(std::time::Duration::from_millis(1));
    if t0.elapsed().as_nanos() == 0 {
        return Err(BenchError::ClockUnavailable);
    }
    Ok(())
}

/// Per-seed benchmark outcome.
#[derive(Debug, Clone, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    pub stats: BenchStats,
}

/// Full benchmark outcome: per-seed statistics over the timed samples, and
/// cross-seed statistics over the per-seed medians.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub per_seed: Vec<SeedRun>,
    pub across_seeds: BenchStats,
}

impl BenchReport {
    /// Median of medians: the headline latency.
    pub fn median_us(&self) -> f64 {
        self.across_seeds.median_us
    }

    /// Reproducibility gate on the cross-seed coefficient of variation.
    pub fn check_cv(&self, threshold_percent: f64) -> Result<(), BenchError> {
        if self.across_seeds.cv_percent > threshold_percent {
            return Err(BenchError::CvExceeded {
                cv_percent: self.across_seeds.cv_percent,
                threshold_percent,
            });
        }
        Ok(())
    }
}

/// Run the benchmark protocol. `setup(seed)` builds a deterministic
/// parameterless workload from seed-derived inputs; warmup iterations and
/// DRAM-cold flushes never contribute to the reported samples.
pub fn run_bench<S, W>(mut setup: S, config: &BenchConfig) -> Result<BenchReport, BenchError>
where
    S: FnMut(u64) -> W,
    W: FnMut(),
{
    if config.timed_iters == 0 {
        return Err(BenchError::BadConfig("timed_iters must be >= 1".into()));
    }
    if config.seeds.is_empty() {
        return Err(BenchError::BadConfig("seeds must be nonempty".into()));
    }
    check_clock()?;
    let mut flusher = match config.cache_mode {
        CacheMode::DramCold => Some(CacheFlusher::new(config.flush_footprint_bytes)?),
        CacheMode::L3Warm => None,
    };
    let overhead_ns = timer_overhead_ns();

    let mut per_seed = Vec::with_capacity(config.seeds.len());
    let mut medians = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let mut workload = setup(seed);
        for _ in 0..config.warmup_iters {
            workload();
        }
        let mut samples_ns = Vec::with_capacity(config.timed_iters as usize);
        for _ in 0..config.timed_iters {
            if let Some(f) = flusher.as_mut() {
                f.flush();
            }
            let t0 = Instant::now();
            workload();
            samples_ns.push(t0.elapsed().as_nanos() as f64);
        }
        // Subtract measurement overhead only when it is material.
        let mut sorted = samples_ns.clone();
        sorted.sort_by(f64::total_cmp);
        let raw_median = sorted[(sorted.len() - 1) / 2];
        if overhead_ns > 0.01 * raw_median {
            for s in samples_ns.iter_mut() {
                *s = (*s - overhead_ns).max(0.0);
            }
        }
        let samples_us: Vec<f64> = samples_ns.iter().map(|ns| ns / 1000.0).collect();
        let stats = compute_stats(&samples_us)?;
        medians.push(stats.median_us);
        per_seed.push(SeedRun { seed, stats });
    }
    let across_seeds = compute_stats(&medians)?;
    Ok(BenchReport {
        per_seed,
        across_seeds,
    })
}

/// Workload identification carried into emitted rows.
#[derive(Debug, Clone, Serialize)]
pub struct BenchMeta {
    pub workload: String,
    pub n: usize,
    pub m: usize,
    pub kind: String,
    pub cache_mode: CacheMode,
    pub workers: usize,
}

#[derive(Serialize)]
struct BenchRecord<'a> {
    workload: &'a str,
    n: usize,
    m: usize,
    kind: &'a str,
    cache_mode: &'a str,
    workers: usize,
    seed: String,
    median_us: f64,
    mean_us: f64,
    std_us: f64,
    cv_percent: f64,
}

fn records<'a>(meta: &'a BenchMeta, report: &BenchReport) -> Vec<BenchRecord<'a>> {
    let mut out: Vec<BenchRecord> = report
        .per_seed
        .iter()
        .map(|run| BenchRecord {
            workload: &meta.workload,
            n: meta.n,
            m: meta.m,
            kind: &meta.kind,
            cache_mode: meta.cache_mode.name(),
            workers: meta.workers,
            seed: run.seed.to_string(),
            median_us: run.stats.median_us,
            mean_us: run.stats.mean_us,
            std_us: run.stats.std_us,
            cv_percent: run.stats.cv_percent,
        })
        .collect();
    out.push(BenchRecord {
        workload: &meta.workload,
        n: meta.n,
        m: meta.m,
        kind: &meta.kind,
        cache_mode: meta.cache_mode.name(),
        workers: meta.workers,
        seed: "aggregate".to_string(),
        median_us: report.across_seeds.median_us,
        mean_us: report.across_seeds.mean_us,
        std_us: report.across_seeds.std_us,
        cv_percent: report.across_seeds.cv_percent,
    });
    out
}

pub fn report_csv_header() -> &'static str {
    "workload,n,m,kind,cache_mode,workers,seed,median_us,mean_us,std_us,cv_percent"
}

/// Per-seed rows plus an `aggregate` row of cross-seed statistics.
pub fn report_csv(meta: &BenchMeta, report: &BenchReport) -> String {
    let mut out = String::from(report_csv_header());
    out.push('\n');
    for r in records(meta, report) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.workload,
            r.n,
            r.m,
            r.kind,
            r.cache_mode,
            r.workers,
            r.seed,
            r.median_us,
            r.mean_us,
            r.std_us,
            r.cv_percent
        ));
    }
    out
}

/// JSON array with the same fields as the CSV rows.
pub fn report_json(meta: &BenchMeta, report: &BenchReport) -> serde_json::Value {
    serde_json::to_value(records(meta, report)).expect("bench records serialize")
}
