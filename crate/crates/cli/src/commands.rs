use crate::{BenchKind, CacheModeArg, OutputFormat, PlatformArg, RooflineKind};
use anyhow::{bail, Context};
use std::path::Path;
use std::process::ExitCode;
use ternfuse::bench::{
    report_csv, report_json, run_bench, BenchConfig, BenchMeta, BenchReport, CacheMode,
};
use ternfuse::gen;
use ternfuse::io::{
    footprint_report, read_layer_file, write_layer_file, ComponentConfig, Precision,
    FILE_EXTENSION, HEADER_BYTES,
};
use ternfuse::kernels::{
    dense_gemv_f32, fused_widely_linear_counting, fused_widely_linear_with, oracle_widely_linear,
    relative_l2, ternary_gemv_counting, unfused_widely_linear_with, KernelKind, KernelVariant,
    OracleOutput,
};
use ternfuse::parallel::{
    default_workers, parallel_fused_with, parallel_ternary_gemv_with, parallel_unfused_with,
};
use ternfuse::pipeline::{block_forward, breakdown_csv, breakdown_table, op_dominance};
use ternfuse::roofline::{
    cpu_xeon_8558p, gpu_h200_nvl, roofline_row, row_csv_line, rows_csv_header, KernelProfile,
    PlatformSpec,
};

pub fn pack(n: usize, m: usize, seed: u64, out: &Path) -> anyhow::Result<ExitCode> {
    if n == 0 || m == 0 {
        bail!("layer dimensions must be at least 1x1, got {n}x{m}");
    }
    let layer = gen::random_file_layer(&mut gen::rng(seed), n, m);
    let outcome =
        write_layer_file(&layer, out).with_context(|| format!("writing {}", out.display()))?;
    if outcome.lossy_scales {
        eprintln!("warning: four-scale set not representable in the two-scale header");
    }
    println!(
        "wrote {} ({} bytes, {}x{}, seed {})",
        out.display(),
        outcome.bytes_written,
        n,
        m,
        seed
    );
    if out.extension().is_none_or(|e| e != FILE_EXTENSION) {
        eprintln!("note: conventional extension is .{FILE_EXTENSION}");
    }
    Ok(ExitCode::SUCCESS)
}

pub fn inspect(file: &Path) -> anyhow::Result<ExitCode> {
    let layer = read_layer_file(file).with_context(|| format!("reading {}", file.display()))?;
    let n = layer.n();
    let m = layer.m_logical();
    let per_matrix = layer.u_re().packed_bytes();
    let scales = layer.scales();
    let rows = footprint_report(&[ComponentConfig {
        name: "layer".into(),
        shapes: vec![(n, m); 4],
        count: 1,
        precision: Precision::Ternary2Bit,
    }]);

    println!("file:        {}", file.display());
    println!(
        "size:        {} bytes ({} header + 4 x {} payload)",
        HEADER_BYTES + 4 * per_matrix,
        HEADER_BYTES,
        per_matrix
    );
    println!(
        "dims:        n={} m={} (padded m={}, {} words/row)",
        n,
        m,
        layer.m_padded(),
        layer.u_re().words_per_row()
    );
    println!(
        "scales:      scale_re={} -> s_u_re=s_w_re, scale_im={} -> s_u_im=s_w_im",
        scales.s_u_re, scales.s_u_im
    );
    println!(
        "compression: {:.1}x vs FP16, {:.1}x vs FP32 weight payload",
        rows[0].ratio_vs_fp16, rows[0].ratio_vs_fp32
    );
    Ok(ExitCode::SUCCESS)
}

pub fn verify(sizes: &[usize], trials: usize, seed: u64) -> anyhow::Result<ExitCode> {
    if sizes.is_empty() || trials == 0 {
        bail!("verify needs at least one size and one trial");
    }
    let variants = KernelVariant::all_available();
    println!(
        "verifying sizes {:?}, {} trials each, variants {:?}",
        sizes,
        trials,
        variants.iter().map(|v| v.name()).collect::<Vec<_>>()
    );
    let mut rng = gen::rng(seed);
    let mut failures = 0usize;
    for &size in sizes {
        let mut worst_oracle = 0.0f64;
        let mut worst_pair = 0.0f64;
        for trial in 0..trials {
            let (layer, dense) = gen::random_layer_with_dense(&mut rng, size, size);
            let x = gen::random_activations(&mut rng, &layer);
            let oracle = oracle_widely_linear(
                &dense[0],
                &dense[1],
                &dense[2],
                &dense[3],
                layer.scales(),
                &x,
            )?;

            let mut trial_fail = false;
            let mut fused_ref: Option<ternfuse::GemvOutput> = None;
            for &variant in &variants {
                let fused = fused_widely_linear_with(variant, &layer, &x)?;
                let unfused = unfused_widely_linear_with(variant, &layer, &x)?;
                let e_fused = relative_l2(&fused.y_re, &fused.y_im, &oracle);
                let e_unfused = relative_l2(&unfused.y_re, &unfused.y_im, &oracle);
                worst_oracle = worst_oracle.max(e_fused).max(e_unfused);
                if e_fused > 1e-4 || e_unfused > 1e-4 {
                    println!(
                        "FAIL size {size} trial {trial} variant {}: oracle error fused {e_fused:.2e} unfused {e_unfused:.2e}",
                        variant.name()
                    );
                    trial_fail = true;
                }
                let pair_ref = OracleOutput {
                    y_re: unfused.y_re.iter().map(|&v| v as f64).collect(),
                    y_im: unfused.y_im.iter().map(|&v| v as f64).collect(),
                };
                let e_pair = relative_l2(&fused.y_re, &fused.y_im, &pair_ref);
                worst_pair = worst_pair.max(e_pair);
                if e_pair > 1e-6 {
                    println!(
                        "FAIL size {size} trial {trial} variant {}: fused vs unfused {e_pair:.2e}",
                        variant.name()
                    );
                    trial_fail = true;
                }
                if variant == KernelVariant::Reference {
                    fused_ref = Some(fused);
                }
            }

            // Zero-multiply accounting on the instrumented kernels.
            let (counted, counts) = fused_widely_linear_counting(&layer, &x)?;
            let reference = fused_ref.expect("reference variant always runs");
            if counts.inner_multiplies != 0
                || counts.scale_multiplies != 8 * size as u64
                || counted.y_re != reference.y_re
                || counted.y_im != reference.y_im
            {
                println!("FAIL size {size} trial {trial}: instrumented kernel mismatch");
                trial_fail = true;
            }
            let (_, counts) = ternary_gemv_counting(layer.u_re(), x.x_re(), 1.0)?;
            if counts.inner_multiplies != 0 {
                println!("FAIL size {size} trial {trial}: single kernel counted multiplies");
                trial_fail = true;
            }
            if trial_fail {
                failures += 1;
            }
        }
        println!(
            "size {size:>5}x{size:<5} {trials} trials: worst vs oracle {worst_oracle:.2e}, worst fused-vs-unfused {worst_pair:.2e}"
        );
    }
    if failures > 0 {
        println!("VERIFY FAILED: {failures} failing trials");
        return Ok(ExitCode::from(1));
    }
    println!("VERIFY PASSED: oracle equivalence and zero-multiply accounting");
    Ok(ExitCode::SUCCESS)
}

pub struct BenchArgs {
    pub kind: BenchKind,
    pub n: usize,
    pub m: usize,
    pub threads: Option<usize>,
    pub cache_mode: CacheModeArg,
    pub iters: u32,
    pub warmup: u32,
    pub seeds: Vec<u64>,
    pub format: OutputFormat,
    pub check_cv: Option<f64>,
}

pub fn bench(args: BenchArgs) -> anyhow::Result<ExitCode> {
    let BenchArgs {
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
    } = args;
    if n == 0 || m == 0 {
        bail!("bench dimensions must be at least 1x1");
    }
    let workers = match kind {
        BenchKind::Dense => 1,
        _ => threads.unwrap_or_else(default_workers),
    };
    let variant = KernelVariant::best_available();
    let cache_mode = match cache_mode {
        CacheModeArg::L3Warm => CacheMode::L3Warm,
        CacheModeArg::DramCold => CacheMode::DramCold,
    };
    let footprint = match kind {
        BenchKind::Dense => 4 * n * m + 4 * (n + m),
        BenchKind::Ternary => n * m.div_ceil(16) * 4 + 4 * (n + m),
        BenchKind::Fused | BenchKind::Unfused => n * m.div_ceil(16) * 16 + 16 * m + 8 * n,
    };
    let config = BenchConfig {
        warmup_iters: warmup,
        timed_iters: iters,
        seeds,
        cache_mode,
        workers,
        flush_footprint_bytes: footprint,
    };

    let report = match kind {
        BenchKind::Dense => run_bench(
            |seed| {
                let mut rng = gen::rng(seed);
                let a = gen::random_f32(&mut rng, n * m);
                let x = gen::random_f32(&mut rng, m);
                move || {
                    std::hint::black_box(dense_gemv_f32(&a, n, m, &x).unwrap());
                }
            },
            &config,
        )?,
        BenchKind::Ternary => run_bench(
            |seed| {
                let mut rng = gen::rng(seed);
                let a = gen::random_packed(&mut rng, n, m);
                let mut x = gen::random_f32(&mut rng, m);
                x.resize(a.m_padded(), 0.0);
                let scale = 0.5f32;
                move || {
                    std::hint::black_box(
                        parallel_ternary_gemv_with(variant, &a, &x, scale, workers).unwrap(),
                    );
                }
            },
            &config,
        )?,
        BenchKind::Fused => run_bench(
            |seed| {
                let mut rng = gen::rng(seed);
                let layer = gen::random_layer(&mut rng, n, m);
                let x = gen::random_activations(&mut rng, &layer);
                move || {
                    std::hint::black_box(
                        parallel_fused_with(variant, &layer, &x, workers).unwrap(),
                    );
                }
            },
            &config,
        )?,
        BenchKind::Unfused => run_bench(
            |seed| {
                let mut rng = gen::rng(seed);
                let layer = gen::random_layer(&mut rng, n, m);
                let x = gen::random_activations(&mut rng, &layer);
                move || {
                    std::hint::black_box(
                        parallel_unfused_with(variant, &layer, &x, workers).unwrap(),
                    );
                }
            },
            &config,
        )?,
    };

    let meta = BenchMeta {
        workload: "gemv".into(),
        n,
        m,
        kind: kind.name().into(),
        cache_mode,
        workers,
    };
    emit_bench(&meta, &report, format, variant);

    if let Some(threshold) = check_cv {
        if let Err(err) = report.check_cv(threshold) {
            eprintln!("{err}");
            return Ok(ExitCode::from(1));
        }
        println!(
            "check-cv: {:.2}% <= {threshold}%",
            report.across_seeds.cv_percent
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn emit_bench(
    meta: &BenchMeta,
    report: &BenchReport,
    format: OutputFormat,
    variant: KernelVariant,
) {
    match format {
        OutputFormat::Table => {
            println!(
                "{} {}x{} | {} | {} workers | {} variant",
                meta.kind,
                meta.n,
                meta.m,
                meta.cache_mode,
                meta.workers,
                variant.name()
            );
            println!(
                "{:>8} {:>12} {:>12} {:>12} {:>10}",
                "seed", "median_us", "mean_us", "std_us", "cv_%"
            );
            for run in &report.per_seed {
                println!(
                    "{:>8} {:>12.1} {:>12.1} {:>12.1} {:>10.2}",
                    run.seed,
                    run.stats.median_us,
                    run.stats.mean_us,
                    run.stats.std_us,
                    run.stats.cv_percent
                );
            }
            let agg = &report.across_seeds;
            println!(
                "{:>8} {:>12.1} {:>12.1} {:>12.1} {:>10.2}  (stats over per-seed medians)",
                "all", agg.median_us, agg.mean_us, agg.std_us, agg.cv_percent
            );
        }
        OutputFormat::Csv => print!("{}", report_csv(meta, report)),
        OutputFormat::Json => println!(
            "{}",
            serde_json::to_string_pretty(&report_json(meta, report)).expect("report serializes")
        ),
    }
}

pub fn roofline(
    platform: PlatformArg,
    bw: Option<f64>,
    peak: Option<f64>,
    kind: RooflineKind,
    n: usize,
    m: usize,
    format: OutputFormat,
) -> anyhow::Result<ExitCode> {
    let platform = match platform {
        PlatformArg::Cpu8558p => cpu_xeon_8558p(),
        PlatformArg::GpuH200 => gpu_h200_nvl(),
        PlatformArg::Custom => {
            use clap::CommandFactory;
            let (Some(bw), Some(peak)) = (bw, peak) else {
                crate::Cli::command()
                    .error(
                        clap::error::ErrorKind::MissingRequiredArgument,
                        "--platform custom requires --bw and --peak",
                    )
                    .exit();
            };
            PlatformSpec::new("custom", bw, peak)?
        }
    };
    let kind = match kind {
        RooflineKind::Dense => KernelKind::Fp32Dense,
        RooflineKind::Ternary => KernelKind::TernarySingle,
        RooflineKind::Fused => KernelKind::TernaryFused,
    };
    let row = roofline_row(&platform, &KernelProfile { kind, n, m });
    match format {
        OutputFormat::Table => {
            println!(
                "platform:    {} (ridge {:.2} OP/byte)",
                row.platform, row.ridge_point
            );
            println!("kernel:      {} at {}x{}", row.kernel, row.n, row.m);
            println!(
                "AI:          {:.5} OP/byte exact, {} OP/byte asymptotic",
                row.ai_exact, row.ai_asymptotic
            );
            println!(
                "attainable:  {:.0} GOP/s ({})",
                row.attainable_gops, row.regime
            );
        }
        OutputFormat::Csv => {
            println!("{}", rows_csv_header());
            println!("{}", row_csv_line(&row));
        }
        OutputFormat::Json => {
            println!(
                "{}",
                serde_json::to_string_pretty(&row).expect("row serializes")
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn pipeline(
    d_model: usize,
    d_ff: usize,
    threads: Option<usize>,
    seed: u64,
    format: OutputFormat,
) -> anyhow::Result<ExitCode> {
    if d_model == 0 || d_ff == 0 || 3 * d_model == 0 {
        bail!("pipeline dimensions must be positive");
    }
    let workers = threads.unwrap_or_else(default_workers);
    eprintln!("generating random block weights ({d_model} x {d_ff}, seed {seed})...");
    let mut rng = gen::rng(seed);
    let block = gen::random_block(&mut rng, d_model, d_ff);
    let x = gen::random_block_input(&mut rng, d_model);
    // One untimed pass warms allocators and page tables.
    let _ = block_forward(&block, &x, workers)?;
    let (_, rows) = block_forward(&block, &x, workers)?;

    match format {
        OutputFormat::Csv => print!("{}", breakdown_csv(&rows)),
        _ => {
            print!("{}", breakdown_table(&rows));
            let total: f64 = rows.iter().map(|r| r.elapsed_us).sum();
            let mul_free: f64 = rows
                .iter()
                .filter(|r| r.mul_free)
                .map(|r| r.elapsed_us)
                .sum();
            println!(
                "\nworkers: {workers}; multiplication-free stages: {:.1}% of time; \
                 analytic GEMV op share at these dims: {:.4}%",
                100.0 * mul_free / total,
                100.0 * op_dominance(d_model, d_ff)
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}
