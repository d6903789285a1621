//! Fused and unfused widely-linear GEMV.
//!
//! A widely-linear layer expands into eight real sub-GEMVs. The fused kernel
//! walks the input dimension once per output row with eight accumulator
//! groups: each of the four weight words per chunk is decoded once and its
//! mask pair applied to both a real-path and an imaginary-path activation
//! chunk, and the two activation chunks are loaded once and shared. The
//! conjugation signs are folded into the final scale combination:
//!
//! ```text
//! y_re[i] = s_u_re*h1 - s_u_im*h2 + s_w_re*h3 + s_w_im*h4
//! y_im[i] = s_u_re*g1 + s_u_im*g2 + s_w_re*g3 - s_w_im*g4
//! ```
//!
//! where `h1..h4` reduce the real-path accumulators (fed by `x_re`, `x_im`,
//! `x_re`, `x_im`) and `g1..g4` the imaginary-path accumulators (fed by
//! `x_im`, `x_re`, `x_im`, `x_re`), for matrices `U_re`, `U_im`, `W_re`,
//! `W_im` respectively. A pre-negated `x_im` buffer would be an equivalent
//! alias for the sign folds; this implementation keeps the signs in the
//! combination, which costs nothing extra.

use super::gemv::{ensure_available, gemv_row, hsum, masked_acc, LANES};
use super::{
    check_layer_dims, ActivationPair, GemvOutput, KernelError, KernelVariant, WidelyLinearLayer,
};
use crate::matrix::ScaleSet;
use crate::ternary::decode_masks_portable;

/// Final combination of the eight horizontal sums. Shared by the fused and
/// unfused paths so both evaluate the identical f32 expression.
#[inline(always)]
pub(crate) fn combine(s: ScaleSet, h: [f32; 4], g: [f32; 4]) -> (f32, f32) {
    let y_re = s.s_u_re * h[0] - s.s_u_im * h[1] + s.s_w_re * h[2] + s.s_w_im * h[3];
    let y_im = s.s_u_re * g[0] + s.s_u_im * g[1] + s.s_w_re * g[2] - s.s_w_im * g[3];
    (y_re, y_im)
}

/// One fused output row in the canonical scalar order.
fn fused_row_reference(layer: &WidelyLinearLayer, x: &ActivationPair, i: usize) -> (f32, f32) {
    let u_re = layer.u_re().row(i);
    let u_im = layer.u_im().row(i);
    let w_re = layer.w_re().row(i);
    let w_im = layer.w_im().row(i);
    let x_re = x.x_re();
    let x_im = x.x_im();

    let mut a_re = [[0.0f32; LANES]; 4];
    let mut a_im = [[0.0f32; LANES]; 4];
    for j in 0..u_re.len() {
        let xr = &x_re[j * LANES..];
        let xi = &x_im[j * LANES..];

        // Each word decoded once, masks reused on both activation paths.
        let m = decode_masks_portable(u_re[j]);
        masked_acc(&mut a_re[0], m, xr);
        masked_acc(&mut a_im[0], m, xi);

        let m = decode_masks_portable(u_im[j]);
        masked_acc(&mut a_re[1], m, xi);
        masked_acc(&mut a_im[1], m, xr);

        let m = decode_masks_portable(w_re[j]);
        masked_acc(&mut a_re[2], m, xr);
        masked_acc(&mut a_im[2], m, xi);

        let m = decode_masks_portable(w_im[j]);
        masked_acc(&mut a_re[3], m, xi);
        masked_acc(&mut a_im[3], m, xr);
    }

    let h = [
        hsum(&a_re[0]),
        hsum(&a_re[1]),
        hsum(&a_re[2]),
        hsum(&a_re[3]),
    ];
    let g = [
        hsum(&a_im[0]),
        hsum(&a_im[1]),
        hsum(&a_im[2]),
        hsum(&a_im[3]),
    ];
    combine(layer.scales(), h, g)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f,bmi2")]
unsafe fn fused_row_avx512(layer: &WidelyLinearLayer, x: &ActivationPair, i: usize) -> (f32, f32) {
    use crate::ternary::{MASK_NEGATIVE, MASK_POSITIVE};
    use std::arch::x86_64::*;

    #[inline(always)]
    unsafe fn masked_as(a: __m512, k_pos: __mmask16, k_neg: __mmask16, xv: __m512) -> __m512 {
        let a = _mm512_mask_add_ps(a, k_pos, a, xv);
        _mm512_mask_sub_ps(a, k_neg, a, xv)
    }

    let u_re = layer.u_re().row(i);
    let u_im = layer.u_im().row(i);
    let w_re = layer.w_re().row(i);
    let w_im = layer.w_im().row(i);
    let xr_ptr = x.x_re().as_ptr();
    let xi_ptr = x.x_im().as_ptr();

    // Eight register-resident accumulators, one per sub-GEMV stream.
    let mut a_re = [_mm512_setzero_ps(); 4];
    let mut a_im = [_mm512_setzero_ps(); 4];
    for j in 0..u_re.len() {
        let xr = _mm512_loadu_ps(xr_ptr.add(j * LANES));
        let xi = _mm512_loadu_ps(xi_ptr.add(j * LANES));

        let p = u_re[j].bits();
        let kp = _pext_u32(p, MASK_POSITIVE) as __mmask16;
        let kn = _pext_u32(p, MASK_NEGATIVE) as __mmask16;
        a_re[0] = masked_as(a_re[0], kp, kn, xr);
        a_im[0] = masked_as(a_im[0], kp, kn, xi);

        let p = u_im[j].bits();
        let kp = _pext_u32(p, MASK_POSITIVE) as __mmask16;
        let kn = _pext_u32(p, MASK_NEGATIVE) as __mmask16;
        a_re[1] = masked_as(a_re[1], kp, kn, xi);
        a_im[1] = masked_as(a_im[1], kp, kn, xr);

        let p = w_re[j].bits();
        let kp = _pext_u32(p, MASK_POSITIVE) as __mmask16;
        let kn = _pext_u32(p, MASK_NEGATIVE) as __mmask16;
        a_re[2] = masked_as(a_re[2], kp, kn, xr);
        a_im[2] = masked_as(a_im[2], kp, kn, xi);

        let p = w_im[j].bits();
        let kp = _pext_u32(p, MASK_POSITIVE) as __mmask16;
        let kn = _pext_u32(p, MASK_NEGATIVE) as __mmask16;
        a_re[3] = masked_as(a_re[3], kp, kn, xi);
        a_im[3] = masked_as(a_im[3], kp, kn, xr);
    }

    let h = [
        _mm512_reduce_add_ps(a_re[0]),
        _mm512_reduce_add_ps(a_re[1]),
        _mm512_reduce_add_ps(a_re[2]),
        _mm512_reduce_add_ps(a_re[3]),
    ];
    let g = [
        _mm512_reduce_add_ps(a_im[0]),
        _mm512_reduce_add_ps(a_im[1]),
        _mm512_reduce_add_ps(a_im[2]),
        _mm512_reduce_add_ps(a_im[3]),
    ];
    combine(layer.scales(), h, g)
}

/// One fused output row under `variant`. The scalar loop already carries
/// eight independent accumulators, so the unrolled selector shares its path.
#[inline]
pub(crate) fn fused_row(
    variant: KernelVariant,
    layer: &WidelyLinearLayer,
    x: &ActivationPair,
    i: usize,
) -> (f32, f32) {
    match variant {
        KernelVariant::Reference | KernelVariant::Unrolled => fused_row_reference(layer, x, i),
        KernelVariant::Avx512 => {
            #[cfg(target_arch = "x86_64")]
            {
                unsafe { fused_row_avx512(layer, x, i) }
            }
            #[cfg(not(target_arch = "x86_64"))]
            {
                unreachable!("avx512 variant is gated by ensure_available")
            }
        }
    }
}

/// Fused widely-linear GEMV with the canonical reference kernel: one pass
/// over the input dimension per output row, eight accumulator groups, scales
/// applied once per output element.
pub fn fused_widely_linear(
    layer: &WidelyLinearLayer,
    x: &ActivationPair,
) -> Result<GemvOutput, KernelError> {
    fused_widely_linear_with(KernelVariant::Reference, layer, x)
}

/// Fused widely-linear GEMV under an explicit kernel variant.
pub fn fused_widely_linear_with(
    variant: KernelVariant,
    layer: &WidelyLinearLayer,
    x: &ActivationPair,
) -> Result<GemvOutput, KernelError> {
    ensure_available(variant)?;
    check_layer_dims(layer, x)?;
    let n = layer.n();
    let mut y_re = Vec::with_capacity(n);
    let mut y_im = Vec::with_capacity(n);
    for i in 0..n {
        let (re, im) = fused_row(variant, layer, x, i);
        y_re.push(re);
        y_im.push(im);
    }
    Ok(GemvOutput { y_re, y_im })
}

/// Unfused baseline: eight independent single-GEMV passes (scale 1 each),
/// combined with the scales at the end. This is the fusion-ablation
/// comparison point; it re-reads the activations once per pass.
pub fn unfused_widely_linear(
    layer: &WidelyLinearLayer,
    x: &ActivationPair,
) -> Result<GemvOutput, KernelError> {
    unfused_widely_linear_with(KernelVariant::Reference, layer, x)
}

/// Unfused baseline under an explicit kernel variant.
pub fn unfused_widely_linear_with(
    variant: KernelVariant,
    layer: &WidelyLinearLayer,
    x: &ActivationPair,
) -> Result<GemvOutput, KernelError> {
    ensure_available(variant)?;
    check_layer_dims(layer, x)?;
    let n = layer.n();
    let x_re = x.x_re();
    let x_im = x.x_im();

    let pass = |a: &crate::matrix::PackedTernaryMatrix, v: &[f32]| -> Vec<f32> {
        (0..n).map(|i| gemv_row(variant, a.row(i), v)).collect()
    };
    let h1 = pass(layer.u_re(), x_re);
    let h2 = pass(layer.u_im(), x_im);
    let h3 = pass(layer.w_re(), x_re);
    let h4 = pass(layer.w_im(), x_im);
    let g1 = pass(layer.u_re(), x_im);
    let g2 = pass(layer.u_im(), x_re);
    let g3 = pass(layer.w_re(), x_im);
    let g4 = pass(layer.w_im(), x_re);

    let s = layer.scales();
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{pack_matrix, DenseTernaryMatrix};

    fn layer_from_dense(
        u_re: &DenseTernaryMatrix,
        u_im: &DenseTernaryMatrix,
        w_re: &DenseTernaryMatrix,
        w_im: &DenseTernaryMatrix,
        scales: ScaleSet,
    ) -> WidelyLinearLayer {
        WidelyLinearLayer::new(
            pack_matrix(u_re),
            pack_matrix(u_im),
            pack_matrix(w_re),
            pack_matrix(w_im),
            scales,
        )
        .unwrap()
    }

    fn pattern(n: usize, m: usize, salt: usize) -> DenseTernaryMatrix {
        DenseTernaryMatrix::from_fn(n, m, |i, j| ((i * 17 + j * 5 + salt) % 3) as i8 - 1).unwrap()
    }

    #[test]
    fn zero_layer_gives_zero() {
        let z = DenseTernaryMatrix::zeros(8, 32);
        let layer = layer_from_dense(&z, &z, &z, &z, ScaleSet::UNIT);
        let x = ActivationPair::from_logical(&[1.5; 32], &[-0.5; 32], 32).unwrap();
        let y = fused_widely_linear(&layer, &x).unwrap();
        assert_eq!(y.y_re, vec![0.0; 8]);
        assert_eq!(y.y_im, vec![0.0; 8]);
        let y = unfused_widely_linear(&layer, &x).unwrap();
        assert_eq!(y.y_re, vec![0.0; 8]);
        assert_eq!(y.y_im, vec![0.0; 8]);
    }

    #[test]
    fn identity_u_re_passes_both_components() {
        let id = DenseTernaryMatrix::identity(16);
        let z = DenseTernaryMatrix::zeros(16, 16);
        let layer = layer_from_dense(&id, &z, &z, &z, ScaleSet::UNIT);
        let x_re: Vec<f32> = (0..16).map(|i| i as f32 / 4.0).collect();
        let x_im: Vec<f32> = (0..16).map(|i| -(i as f32) / 8.0).collect();
        let x = ActivationPair::from_logical(&x_re, &x_im, 16).unwrap();
        let y = fused_widely_linear(&layer, &x).unwrap();
        assert_eq!(y.y_re, x_re);
        assert_eq!(y.y_im, x_im);
        let y = unfused_widely_linear(&layer, &x).unwrap();
        assert_eq!(y.y_re, x_re);
        assert_eq!(y.y_im, x_im);
    }

    #[test]
    fn fused_matches_oracle_and_unfused() {
        let layer = layer_from_dense(
            &pattern(64, 64, 0),
            &pattern(64, 64, 1),
            &pattern(64, 64, 2),
            &pattern(64, 64, 3),
            ScaleSet::new(1.5, 0.75, 0.5, 2.0).unwrap(),
        );
        let x_re: Vec<f32> = (0..64)
            .map(|i| ((i * 37 + 11) % 64) as f32 / 32.0 - 1.0)
            .collect();
        let x_im: Vec<f32> = (0..64)
            .map(|i| ((i * 53 + 29) % 64) as f32 / 32.0 - 1.0)
            .collect();
        let x = ActivationPair::from_logical(&x_re, &x_im, 64).unwrap();

        let fused = fused_widely_linear(&layer, &x).unwrap();
        let unfused = unfused_widely_linear(&layer, &x).unwrap();
        let oracle = super::super::oracle_widely_linear(
            &pattern(64, 64, 0),
            &pattern(64, 64, 1),
            &pattern(64, 64, 2),
            &pattern(64, 64, 3),
            layer.scales(),
            &x,
        )
        .unwrap();

        let fused_err = super::super::relative_l2(&fused.y_re, &fused.y_im, &oracle);
        assert!(fused_err <= 1e-5, "fused vs oracle: {fused_err}");
        let unfused_err = super::super::relative_l2(&unfused.y_re, &unfused.y_im, &oracle);
        assert!(unfused_err <= 1e-5, "unfused vs oracle: {unfused_err}");

        // Reference fused and unfused share accumulation order exactly.
        assert_eq!(fused.y_re, unfused.y_re);
        assert_eq!(fused.y_im, unfused.y_im);
    }

    #[test]
    fn all_variants_match_oracle() {
        let layer = layer_from_dense(
            &pattern(32, 48, 4),
            &pattern(32, 48, 5),
            &pattern(32, 48, 6),
            &pattern(32, 48, 7),
            ScaleSet::new(0.9, 1.1, 1.3, 0.7).unwrap(),
        );
        let x_re: Vec<f32> = (0..48).map(|i| (i as f32 * 0.37).cos()).collect();
        let x_im: Vec<f32> = (0..48).map(|i| (i as f32 * 0.61).sin()).collect();
        let x = ActivationPair::from_logical(&x_re, &x_im, 48).unwrap();
        let oracle = super::super::oracle_widely_linear(
            &pattern(32, 48, 4),
            &pattern(32, 48, 5),
            &pattern(32, 48, 6),
            &pattern(32, 48, 7),
            layer.scales(),
            &x,
        )
        .unwrap();
        for variant in KernelVariant::all_available() {
            let fused = fused_widely_linear_with(variant, &layer, &x).unwrap();
            let err = super::super::relative_l2(&fused.y_re, &fused.y_im, &oracle);
            assert!(err <= 1e-4, "{}: {err}", variant.name());
            let unfused = unfused_widely_linear_with(variant, &layer, &x).unwrap();
            let err = super::super::relative_l2(&unfused.y_re, &unfused.y_im, &oracle);
            assert!(err <= 1e-4, "{} unfused: {err}", variant.name());
        }
    }

    #[test]
    fn scale_linearity_is_exact() {
        let z = DenseTernaryMatrix::zeros(8, 16);
        let w_im = pattern(8, 16, 3);
        // Only the W_im path is live; scaling its coefficient scales outputs exactly.
        let base = layer_from_dense(
            &z,
            &z,
            &z,
            &w_im,
            ScaleSet::new(0.0, 0.0, 0.0, 1.0).unwrap(),
        );
        let tripled = layer_from_dense(
            &z,
            &z,
            &z,
            &w_im,
            ScaleSet::new(0.0, 0.0, 0.0, 3.0).unwrap(),
        );
        let x_re: Vec<f32> = (0..16).map(|i| i as f32 / 5.0).collect();
        let x_im: Vec<f32> = (0..16).map(|i| (15 - i) as f32 / 9.0).collect();
        let x = ActivationPair::from_logical(&x_re, &x_im, 16).unwrap();
        let y1 = fused_widely_linear(&base, &x).unwrap();
        let y3 = fused_widely_linear(&tripled, &x).unwrap();
        for i in 0..8 {
            assert_eq!(y3.y_re[i], 3.0 * y1.y_re[i]);
            assert_eq!(y3.y_im[i], 3.0 * y1.y_im[i]);
        }
    }

    #[test]
    fn conjugation_structure_with_w_im_only() {
        // U = 0, W_re = 0, x_im = 0: y_re = 0 and y_im = -s_w_im * (W_im x_re).
        let z = DenseTernaryMatrix::zeros(8, 16);
        let w_im = pattern(8, 16, 9);
        let s_w_im = 0.75f32;
        let layer = layer_from_dense(
            &z,
            &z,
            &z,
            &w_im,
            ScaleSet::new(0.0, 0.0, 0.0, s_w_im).unwrap(),
        );
        let x_re: Vec<f32> = (0..16).map(|i| (i as f32) * 0.25 - 2.0).collect();
        let x = ActivationPair::from_real(&x_re, 16).unwrap();
        let y = fused_widely_linear(&layer, &x).unwrap();
        assert_eq!(y.y_re, vec![0.0; 8]);
        for i in 0..8 {
            let dot: f32 = (0..16).map(|j| w_im.get(i, j) as f32 * x_re[j]).sum();
            let expect = -(s_w_im * dot);
            assert!((y.y_im[i] - expect).abs() <= 1e-5, "row {i}");
        }
    }

    #[test]
    fn rejects_mismatched_activation() {
        let z = DenseTernaryMatrix::zeros(4, 32);
        let layer = layer_from_dense(&z, &z, &z, &z, ScaleSet::UNIT);
        let x = ActivationPair::zeros(16);
        assert!(fused_widely_linear(&layer, &x).is_err());
    }
}
