//! Row-partitioned parallel kernel execution.
//!
//! Weights and activations are shared read-only; each worker owns a disjoint
//! contiguous slice of output rows and the only synchronization point is the
//! final join. Because every row's accumulation order is fixed by the kernel
//! variant and rows are independent, outputs are bitwise identical for every
//! worker count.

use crate::kernels::{
    check_gemv_dims, check_layer_dims, combine, fused_row, gemv_row, ActivationPair, GemvOutput,
    KernelError, KernelVariant, WidelyLinearLayer,
};
use crate::matrix::PackedTernaryMatrix;
use std::ops::Range;

/// Ordered, disjoint, contiguous row ranges covering `[0, n)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowPartition {
    ranges: Vec<Range<usize>>,
}

impl RowPartition {
    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn worker_count(&self) -> usize {
        self.ranges.len()
    }
}

/// Balanced contiguous split of `n` rows over `workers` ranges: the first
/// `n % workers` ranges get `ceil(n / workers)` rows, the rest get the floor.
/// Ranges may be empty when `workers > n`.
pub fn partition_rows(n: usize, workers: usize) -> RowPartition {
    let workers = workers.max(1);
    let base = n / workers;
    let extra = n % workers;
    let mut ranges = Vec::with_capacity(workers);
    let mut start = 0;
    for w in 0..workers {
        let len = base + usize::from(w < extra);
        ranges.push(start..start + len);
        start += len;
    }
    RowPartition { ranges }
}

/// Worker count to use when the caller does not specify one: the logical
/// core count. Cross-socket placement and frequency pinning are operator
/// concerns (`numactl`, governor settings), not handled in-process.
pub fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Run `fill(range, out_re_slice, out_im_slice)` over a balanced partition of
/// `n` rows, each worker writing its own disjoint output slice.
fn run_partitioned<F>(n: usize, workers: usize, fill: F) -> (Vec<f32>, Vec<f32>)
where
    F: Fn(Range<usize>, &mut [f32], &mut [f32]) + Sync,
{
    let mut y_re = vec![0.0f32; n];
    let mut y_im = vec![0.0f32; n];
    let partition = partition_rows(n, workers);
    if partition.worker_count() <= 1 {
        fill(0..n, &mut y_re, &mut y_im);
        return (y_re, y_im);
    }
    std::thread::scope(|scope| {
        let mut re_rest = y_re.as_mut_slice();
        let mut im_rest = y_im.as_mut_slice();
        for range in partition.ranges() {
            let (re_chunk, re_tail) = re_rest.split_at_mut(range.len());
            let (im_chunk, im_tail) = im_rest.split_at_mut(range.len());
            re_rest = re_tail;
            im_rest = im_tail;
            if range.is_empty() {
                continue;
            }
            let fill = &fill;
            let range = range.clone();
            scope.spawn(move || fill(range, re_chunk, im_chunk));
        }
    });
    (y_re, y_im)
}

/// Fused widely-linear GEMV over `workers` row-parallel workers. Bitwise
/// identical to the single-worker kernel for every worker count.
pub fn parallel_fused(
    layer: &WidelyLinearLayer,
    x: &ActivationPair,
    workers: usize,
) -> Result<GemvOutput, KernelError> {
    parallel_fused_with(KernelVariant::Reference, layer, x, workers)
}

/// Row-parallel fused GEMV under an explicit kernel variant.
pub fn parallel_fused_with(
    variant: KernelVariant,
    layer: &WidelyLinearLayer,
    x: &ActivationPair,
    workers: usize,
) -> Result<GemvOutput, KernelError> {
    if !variant.is_available() {
        return Err(KernelError::VariantUnavailable(variant.name()));
    }
    check_layer_dims(layer, x)?;
    let (y_re, y_im) = run_partitioned(layer.n(), workers, |range, out_re, out_im| {
        for (k, i) in range.enumerate() {
            let (re, im) = fused_row(variant, layer, x, i);
            out_re[k] = re;
            out_im[k] = im;
        }
    });
    Ok(GemvOutput { y_re, y_im })
}

/// Row-parallel single ternary GEMV (the unfused building block).
pub fn parallel_ternary_gemv(
    a: &PackedTernaryMatrix,
    x: &[f32],
    scale: f32,
    workers: usize,
) -> Result<Vec<f32>, KernelError> {
    parallel_ternary_gemv_with(KernelVariant::Reference, a, x, scale, workers)
}

/// Fusion-ablation baseline: eight sequential row-parallel single-GEMV
/// passes, one parallel region each, with the scales applied at the end.
/// Re-reads the activations and re-decodes the weight words once per pass.
pub fn parallel_unfused_with(
    variant: KernelVariant,
    layer: &WidelyLinearLayer,
    x: &ActivationPair,
    workers: usize,
) -> Result<GemvOutput, KernelError> {
    check_layer_dims(layer, x)?;
    let pass = |a: &PackedTernaryMatrix, v: &[f32]| {
        parallel_ternary_gemv_with(variant, a, v, 1.0, workers)
    };
    let h1 = pass(layer.u_re(), x.x_re())?;
    let h2 = pass(layer.u_im(), x.x_im())?;
    let h3 = pass(layer.w_re(), x.x_re())?;
    let h4 = pass(layer.w_im(), x.x_im())?;
    let g1 = pass(layer.u_re(), x.x_im())?;
    let g2 = pass(layer.u_im(), x.x_re())?;
    let g3 = pass(layer.w_re(), x.x_im())?;
    let g4 = pass(layer.w_im(), x.x_re())?;
    let s = layer.scales();
    let n = layer.n();
    let mut y_re = Vec::with_capacity(n);
    let mut y_im = Vec::with_capacity(n);
    for i in 0..n {
        let (re, im) = combine(
            s,
            [h1[i], h2[i], h3[i], h4[i]],
            [g1[i], g2[i], g3[i], g4[i]],
        );
        y_re.push(re);
        y_im.push(im);
    }
    Ok(GemvOutput { y_re, y_im })
}

/// Row-parallel single ternary GEMV under an explicit kernel variant.
pub fn parallel_ternary_gemv_with(
    variant: KernelVariant,
    a: &PackedTernaryMatrix,
    x: &[f32],
    scale: f32,
    workers: usize,
) -> Result<Vec<f32>, KernelError> {
    if !variant.is_available() {
        return Err(KernelError::VariantUnavailable(variant.name()));
    }
    check_gemv_dims(a, x)?;
    let (y, _) = run_partitioned(a.n(), workers, |range, out_re, _| {
        for (k, i) in range.enumerate() {
            out_re[k] = scale * gemv_row(variant, a.row(i), x);
        }
    });
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::fused_widely_linear;
    use crate::matrix::{pack_matrix, DenseTernaryMatrix, ScaleSet};

    #[test]
    fn partition_balances_10_over_4() {
        let p = partition_rows(10, 4);
        let sizes: Vec<usize> = p.ranges().iter().map(|r| r.len()).collect();
        assert_eq!(sizes, vec![3, 3, 2, 2]);
        assert_eq!(p.ranges()[0], 0..3);
        assert_eq!(p.ranges()[3], 8..10);
    }

    #[test]
    fn partition_single_worker() {
        let p = partition_rows(8, 1);
        assert_eq!(p.ranges(), std::slice::from_ref(&(0..8)));
    }

    #[test]
    fn partition_more_workers_than_rows() {
        let p = partition_rows(2, 4);
        let sizes: Vec<usize> = p.ranges().iter().map(|r| r.len()).collect();
        assert_eq!(sizes, vec![1, 1, 0, 0]);
    }

    #[test]
    fn partition_covers_each_row_exactly_once() {
        for (n, t) in [(0, 3), (1, 1), (7, 3), (16, 5), (100, 7)] {
            let p = partition_rows(n, t);
            let mut seen = vec![0u32; n];
            for range in p.ranges() {
                for i in range.clone() {
                    seen[i] += 1;
                }
            }
            assert!(seen.iter().all(|&c| c == 1), "n={n} t={t}");
        }
    }

    fn test_layer(n: usize, m: usize) -> WidelyLinearLayer {
        let mk = |salt: usize| {
            pack_matrix(
                &DenseTernaryMatrix::from_fn(n, m, |i, j| ((i * 7 + j * 13 + salt) % 3) as i8 - 1)
                    .unwrap(),
            )
        };
        WidelyLinearLayer::new(
            mk(0),
            mk(1),
            mk(2),
            mk(3),
            ScaleSet::new(1.5, -0.5, 0.25, 2.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn outputs_bitwise_identical_across_worker_counts() {
        let layer = test_layer(48, 64);
        let x_re: Vec<f32> = (0..64).map(|i| (i as f32 * 0.3).sin()).collect();
        let x_im: Vec<f32> = (0..64).map(|i| (i as f32 * 0.7).cos()).collect();
        let x = ActivationPair::from_logical(&x_re, &x_im, 64).unwrap();
        let single = fused_widely_linear(&layer, &x).unwrap();
        for workers in [1, 2, 3, 4, 16] {
            let y = parallel_fused(&layer, &x, workers).unwrap();
            assert_eq!(y.y_re, single.y_re, "workers={workers}");
            assert_eq!(y.y_im, single.y_im, "workers={workers}");
        }
    }

    #[test]
    fn zero_layer_parallel_is_zero() {
        let z = crate::matrix::PackedTernaryMatrix::zeros(32, 32);
        let layer =
            WidelyLinearLayer::new(z.clone(), z.clone(), z.clone(), z, ScaleSet::UNIT).unwrap();
        let x = ActivationPair::zeros(32);
        let y = parallel_fused(&layer, &x, 16).unwrap();
        assert_eq!(y.y_re, vec![0.0; 32]);
        assert_eq!(y.y_im, vec![0.0; 32]);
    }

    #[test]
    fn parallel_single_gemv_matches_serial() {
        let dense =
            DenseTernaryMatrix::from_fn(33, 48, |i, j| ((i + 2 * j) % 3) as i8 - 1).unwrap();
        let a = pack_matrix(&dense);
        let x: Vec<f32> = (0..48).map(|i| i as f32 * 0.01 - 0.2).collect();
        let serial = crate::kernels::ternary_gemv(&a, &x, 0.5).unwrap();
        for workers in [1, 2, 5, 8] {
            assert_eq!(parallel_ternary_gemv(&a, &x, 0.5, workers).unwrap(), serial);
        }
    }
}
