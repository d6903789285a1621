//! Single ternary GEMV: masked add/sub accumulation over packed rows.

use super::{check_gemv_dims, KernelError};
use crate::matrix::PackedTernaryMatrix;
use crate::ternary::{decode_masks_portable, MaskPair, PackedWord, SLOTS_PER_WORD};

pub(crate) const LANES: usize = SLOTS_PER_WORD;

/// Apply one decoded chunk to a 16-lane accumulator: all selected additions
/// first, then all selected subtractions, lanes ascending. This order is the
/// scalar rendering of the masked add / masked sub instruction pair. A slot
/// carrying the unused `(1,1)` pattern therefore adds and then subtracts its
/// lane, a net no-op up to f32 rounding; validated data never contains it.
#[inline(always)]
pub(crate) fn masked_acc(acc: &mut [f32; LANES], masks: MaskPair, x: &[f32]) {
    debug_assert!(x.len() >= LANES);
    let mut bits = masks.k_pos;
    while bits != 0 {
        let k = bits.trailing_zeros() as usize;
        acc[k] += x[k];
        bits &= bits - 1;
    }
    let mut bits = masks.k_neg;
    while bits != 0 {
        let k = bits.trailing_zeros() as usize;
        acc[k] -= x[k];
        bits &= bits - 1;
    }
}

/// Horizontal sum, lanes left-to-right. The canonical reduction order.
#[inline(always)]
pub(crate) fn hsum(acc: &[f32; LANES]) -> f32 {
    let mut s = 0.0f32;
    for v in acc {
        s += v;
    }
    s
}

/// Selector over the correctness-equivalent kernel implementations.
///
/// `Reference` fixes the canonical accumulation order and runs everywhere.
/// The other variants reorder partial sums for speed and must match the
/// oracle within the documented tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelVariant {
    /// Canonical scalar kernel: one accumulator group, fixed order.
    Reference,
    /// Scalar kernel with four interleaved accumulator groups (ILP unroll).
    Unrolled,
    /// AVX-512F masked add/sub datapath with BMI2 mask decode.
    Avx512,
}

impl KernelVariant {
    pub fn is_available(self) -> bool {
        match self {
            KernelVariant::Reference | KernelVariant::Unrolled => true,
            KernelVariant::Avx512 => avx512_available(),
        }
    }

    /// Fastest variant the CPU supports.
    pub fn best_available() -> Self {
        if avx512_available() {
            KernelVariant::Avx512
        } else {
            KernelVariant::Unrolled
        }
    }

    pub fn all_available() -> Vec<Self> {
        let mut all = vec![KernelVariant::Reference, KernelVariant::Unrolled];
        if avx512_available() {
            all.push(KernelVariant::Avx512);
        }
        all
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelVariant::Reference => "reference",
            KernelVariant::Unrolled => "unrolled",
            KernelVariant::Avx512 => "avx512",
        }
    }
}

fn avx512_available() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::is_x86_feature_detected!("avx512f") && std::is_x86_feature_detected!("bmi2")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

pub(crate) fn ensure_available(variant: KernelVariant) -> Result<(), KernelError> {
    if variant.is_available() {
        Ok(())
    } else {
        Err(KernelError::VariantUnavailable(variant.name()))
    }
}

/// Unscaled dot product of one packed row with `x`, canonical order.
pub(crate) fn gemv_row_reference(row: &[PackedWord], x: &[f32]) -> f32 {
    let mut acc = [0.0f32; LANES];
    for (j, word) in row.iter().enumerate() {
        let masks = decode_masks_portable(*word);
        masked_acc(&mut acc, masks, &x[j * LANES..]);
    }
    hsum(&acc)
}

/// Four independent accumulator groups keyed by chunk index; breaks the
/// single-accumulator dependency chain.
fn gemv_row_unrolled(row: &[PackedWord], x: &[f32]) -> f32 {
    let mut groups = [[0.0f32; LANES]; 4];
    for (j, word) in row.iter().enumerate() {
        let masks = decode_masks_portable(*word);
        masked_acc(&mut groups[j & 3], masks, &x[j * LANES..]);
    }
    let mut merged = [0.0f32; LANES];
    for k in 0..LANES {
        merged[k] = (groups[0][k] + groups[1][k]) + (groups[2][k] + groups[3][k]);
    }
    hsum(&merged)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f,bmi2")]
unsafe fn gemv_row_avx512(row: &[PackedWord], x: &[f32]) -> f32 {
    use crate::ternary::{MASK_NEGATIVE, MASK_POSITIVE};
    use std::arch::x86_64::*;

    let mut acc = [_mm512_setzero_ps(); 4];
    let xp = x.as_ptr();
    for (j, word) in row.iter().enumerate() {
        let p = word.bits();
        let k_pos = _pext_u32(p, MASK_POSITIVE) as __mmask16;
        let k_neg = _pext_u32(p, MASK_NEGATIVE) as __mmask16;
        let xv = _mm512_loadu_ps(xp.add(j * LANES));
        let a = acc[j & 3];
        let a = _mm512_mask_add_ps(a, k_pos, a, xv);
        acc[j & 3] = _mm512_mask_sub_ps(a, k_neg, a, xv);
    }
    let lo = _mm512_add_ps(acc[0], acc[1]);
    let hi = _mm512_add_ps(acc[2], acc[3]);
    _mm512_reduce_add_ps(_mm512_add_ps(lo, hi))
}

/// Unscaled dot product of one packed row with `x` under `variant`.
#[inline]
pub(crate) fn gemv_row(variant: KernelVariant, row: &[PackedWord], x: &[f32]) -> f32 {
    match variant {
        KernelVariant::Reference => gemv_row_reference(row, x),
        KernelVariant::Unrolled => gemv_row_unrolled(row, x),
        KernelVariant::Avx512 => {
            #[cfg(target_arch = "x86_64")]
            {
                // Availability is checked at the kernel entry point.
                unsafe { gemv_row_avx512(row, x) }
            }
            #[cfg(not(target_arch = "x86_64"))]
            {
                unreachable!("avx512 variant is gated by ensure_available")
            }
        }
    }
}

/// Ternary GEMV with the canonical reference kernel.
///
/// `x` must be zero-padded to the matrix's padded input dimension. The only
/// multiplication is the final per-row scale.
pub fn ternary_gemv(
    a: &PackedTernaryMatrix,
    x: &[f32],
    scale: f32,
) -> Result<Vec<f32>, KernelError> {
    ternary_gemv_with(KernelVariant::Reference, a, x, scale)
}

/// Ternary GEMV under an explicit kernel variant.
pub fn ternary_gemv_with(
    variant: KernelVariant,
    a: &PackedTernaryMatrix,
    x: &[f32],
    scale: f32,
) -> Result<Vec<f32>, KernelError> {
    ensure_available(variant)?;
    check_gemv_dims(a, x)?;
    Ok((0..a.n())
        .map(|i| scale * gemv_row(variant, a.row(i), x))
        .collect())
}
