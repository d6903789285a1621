//! Command-line front end: pack and inspect layer files, verify kernels
//! against the double-precision oracle, benchmark, and run the roofline
//! model and the single-token pipeline demo.

mod commands;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ternfuse",
    version,
    about = "Multiplication-free ternary GEMV kernels, benchmarks, and analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchKind {
    /// FP32 dense GEMV baseline (always single-threaded).
    Dense,
    /// Single ternary GEMV.
    Ternary,
    /// Fused widely-linear 8-GEMV.
    Fused,
    /// Eight sequential single-GEMV passes (fusion-ablation baseline).
    Unfused,
}

impl BenchKind {
    fn name(self) -> &'static str {
        match self {
            BenchKind::Dense => "dense",
            BenchKind::Ternary => "ternary",
            BenchKind::Fused => "fused",
            BenchKind::Unfused => "unfused",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CacheModeArg {
    L3Warm,
    DramCold,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Table,
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlatformArg {
    /// Xeon 8558P single socket: 200 GB/s, 2700 GFLOP/s.
    #[value(name = "cpu-8558p")]
    Cpu8558p,
    /// H200 NVL: 4800 GB/s, 134000 GFLOP/s.
    #[value(name = "gpu-h200")]
    GpuH200,
    /// User-specified --bw and --peak.
    Custom,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RooflineKind {
    /// FP32 dense GEMV.
    Dense,
    /// Single ternary GEMV.
    Ternary,
    /// Fused widely-linear 8-GEMV.
    Fused,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded random ternary layer and write it as a .tl2 file
    Pack {
        /// Output rows
        #[arg(long)]
        n: usize,
        /// Input columns
        #[arg(long)]
        m: usize,
        /// ChaCha8 seed for weights and scales
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Destination file
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a layer file's header, dimensions, sizes, and scale mapping
    Inspect { file: PathBuf },
    /// Run the oracle-equivalence and zero-multiply suites
    Verify {
        /// Square sizes to test, comma-separated
        #[arg(long, value_delimiter = ',', default_value = "16,64,256")]
        sizes: Vec<usize>,
        /// Random instances per size
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Master seed for instance generation
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Benchmark a kernel and report per-seed and aggregate statistics
    Bench {
        #[arg(long, value_enum)]
        kind: BenchKind,
        #[arg(long, default_value_t = 4096)]
        n: usize,
        #[arg(long, default_value_t = 4096)]
        m: usize,
        /// Worker threads (dense baseline ignores this)
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, value_enum, default_value = "l3-warm")]
        cache_mode: CacheModeArg,
        /// Timed iterations per seed
        #[arg(long, default_value_t = 1000)]
        iters: u32,
        /// Untimed warmup iterations per seed
        #[arg(long, default_value_t = 10)]
        warmup: u32,
        /// Seeds, comma-separated
        #[arg(long, value_delimiter = ',', default_values_t = [42u64, 123, 2026])]
        seeds: Vec<u64>,
        #[arg(long, value_enum, default_value = "table")]
        format: OutputFormat,
        /// Fail (exit 1) if cross-seed CV exceeds this percentage
        #[arg(long, num_args = 0..=1, default_missing_value = "5")]
        check_cv: Option<f64>,
    },
    /// Arithmetic intensity, attainable throughput, and regime per platform
    Roofline {
        #[arg(long, value_enum, default_value = "cpu-8558p")]
        platform: PlatformArg,
        /// Peak bandwidth in GB/s (custom platform)
        #[arg(long)]
        bw: Option<f64>,
        /// Peak compute in GFLOP/s (custom platform)
        #[arg(long)]
        peak: Option<f64>,
        #[arg(long, value_enum, default_value = "fused")]
        kind: RooflineKind,
        #[arg(long, default_value_t = 4096)]
        n: usize,
        #[arg(long, default_value_t = 4096)]
        m: usize,
        #[arg(long, value_enum, default_value = "table")]
        format: OutputFormat,
    },
    /// Single-token transformer block forward with a timing breakdown
    Pipeline {
        #[arg(long, default_value_t = 4096)]
        d_model: usize,
        #[arg(long, default_value_t = 11008)]
        d_ff: usize,
        #[arg(long)]
        threads: Option<usize>,
        /// Seed for the random block weights
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum, default_value = "table")]
        format: OutputFormat,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Pack { n, m, seed, out } => commands::pack(n, m, seed, &out),
        Command::Inspect { file } => commands::inspect(&file),
        Command::Verify {
            sizes,
            trials,
            seed,
        } => commands::verify(&sizes, trials, seed),
        Command::Bench {
            kind,
            n,
            m,
            threads,
            cache_mode,
            iters,
            warmup,
            seeds,
            format,
            check_cv,
        } => commands::bench(commands::BenchArgs {
            kind,
            n,
            m,
            threads,
            cache_mode,
            iters,
            warmup,
            seeds,
            format,
            check_cv,
        }),
        Command::Roofline {
            platform,
            bw,
            peak,
            kind,
            n,
            m,
            format,
        } => commands::roofline(platform, bw, peak, kind, n, m, format),
        Command::Pipeline {
            d_model,
            d_ff,
            threads,
            seed,
            format,
        } => commands::pipeline(d_model, d_ff, threads, seed, format),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
