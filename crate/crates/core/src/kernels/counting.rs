//! Instrumented kernels that tally the arithmetic mix of the datapath.
//!
//! These mirror the reference kernels operation for operation (outputs are
//! bitwise identical) while counting every elementwise masked add/sub lane,
//! every inner-loop multiply, and every scale multiply. The ternary kernels
//! have no multiply in the inner loop, so `inner_multiplies` stays zero by
//! construction; the counter exists so the claim is measured, not assumed.

use super::gemv::{hsum, masked_acc, LANES};
use super::{
    check_gemv_dims, check_layer_dims, dim_err, fused::combine, ActivationPair, GemvOutput,
    KernelError, WidelyLinearLayer,
};
use crate::matrix::{pack_matrix, DenseTernaryMatrix, PackedTernaryMatrix, ScaleSet};
use crate::ternary::{decode_masks_portable, MaskPair, PackedWord};
use serde::Serialize;

/// Dynamic operation counts for one kernel invocation.
///
/// `masked_adds`/`masked_subs` count lanes actually selected by the add and
/// sub masks. When no weight is zero, their sum equals the number of add/sub
/// lane slots the instruction stream covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct OpCounts {
    pub masked_adds: u64,
    pub masked_subs: u64,
    pub inner_multiplies: u64,
    pub scale_multiplies: u64,
}

impl OpCounts {
    /// Total elementwise add/sub operations.
    pub fn elementwise_total(&self) -> u64 {
        self.masked_adds + self.masked_subs
    }

    /// Multiplications per elementwise add/sub, as a percentage:
    /// `100 * (inner + scale multiplies) / (adds + subs)`.
    pub fn multiply_fraction_percent(&self) -> f64 {
        let denom = self.elementwise_total();
        if denom == 0 {
            return 0.0;
        }
        100.0 * (self.inner_multiplies + self.scale_multiplies) as f64 / denom as f64
    }
}

/// Kernel shapes the op-count and roofline models describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KernelKind {
    Fp32Dense,
    TernarySingle,
    TernaryFused,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Fp32Dense => "fp32_dense",
            KernelKind::TernarySingle => "ternary_single",
            KernelKind::TernaryFused => "ternary_fused",
        }
    }
}

#[inline(always)]
fn masked_acc_counting(acc: &mut [f32; LANES], masks: MaskPair, x: &[f32], counts: &mut OpCounts) {
    masked_acc(acc, masks, x);
    counts.masked_adds += masks.k_pos.count_ones() as u64;
    counts.masked_subs += masks.k_neg.count_ones() as u64;
}

fn gemv_row_counting(row: &[PackedWord], x: &[f32], counts: &mut OpCounts) -> f32 {
    let mut acc = [0.0f32; LANES];
    for (j, word) in row.iter().enumerate() {
        let masks = decode_masks_portable(*word);
        masked_acc_counting(&mut acc, masks, &x[j * LANES..], counts);
    }
    hsum(&acc)
}

/// Reference single GEMV with operation counting. Output matches
/// [`super::ternary_gemv`] bitwise.
pub fn ternary_gemv_counting(
    a: &PackedTernaryMatrix,
    x: &[f32],
    scale: f32,
) -> Result<(Vec<f32>, OpCounts), KernelError> {
    check_gemv_dims(a, x)?;
    let mut counts = OpCounts::default();
    let mut y = Vec::with_capacity(a.n());
    for i in 0..a.n() {
        let dot = gemv_row_counting(a.row(i), x, &mut counts);
        counts.scale_multiplies += 1;
        y.push(scale * dot);
    }
    Ok((y, counts))
}

/// Reference fused widely-linear GEMV with operation counting. Output matches
/// [`super::fused_widely_linear`] bitwise.
pub fn fused_widely_linear_counting(
    layer: &WidelyLinearLayer,
    x: &ActivationPair,
) -> Result<(GemvOutput, OpCounts), KernelError> {
    check_layer_dims(layer, x)?;
    let n = layer.n();
    let x_re = x.x_re();
    let x_im = x.x_im();
    let mut counts = OpCounts::default();
    let mut y_re = Vec::with_capacity(n);
    let mut y_im = Vec::with_capacity(n);

    for i in 0..n {
        let u_re = layer.u_re().row(i);
        let u_im = layer.u_im().row(i);
        let w_re = layer.w_re().row(i);
        let w_im = layer.w_im().row(i);

        let mut a_re = [[0.0f32; LANES]; 4];
        let mut a_im = [[0.0f32; LANES]; 4];
        for j in 0..u_re.len() {
            let xr = &x_re[j * LANES..];
            let xi = &x_im[j * LANES..];

            let m = decode_masks_portable(u_re[j]);
            masked_acc_counting(&mut a_re[0], m, xr, &mut counts);
            masked_acc_counting(&mut a_im[0], m, xi, &mut counts);

            let m = decode_masks_portable(u_im[j]);
            masked_acc_counting(&mut a_re[1], m, xi, &mut counts);
            masked_acc_counting(&mut a_im[1], m, xr, &mut counts);

            let m = decode_masks_portable(w_re[j]);
            masked_acc_counting(&mut a_re[2], m, xr, &mut counts);
            masked_acc_counting(&mut a_im[2], m, xi, &mut counts);

            let m = decode_masks_portable(w_im[j]);
            masked_acc_counting(&mut a_re[3], m, xi, &mut counts);
            masked_acc_counting(&mut a_im[3], m, xr, &mut counts);
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
        // Four scale multiplies per output component.
        counts.scale_multiplies += 8;
        let (re, im) = combine(layer.scales(), h, g);
        y_re.push(re);
        y_im.push(im);
    }
    Ok((GemvOutput { y_re, y_im }, counts))
}

/// FP32 dense GEMV with operation counting; every weight-activation product
/// is an inner-loop multiply.
pub fn dense_gemv_counting(
    a: &[f32],
    n: usize,
    m: usize,
    x: &[f32],
) -> Result<(Vec<f32>, OpCounts), KernelError> {
    let y = super::dense::dense_gemv_f32(a, n, m, x)?;
    let counts = OpCounts {
        masked_adds: 0,
        masked_subs: 0,
        inner_multiplies: (n as u64) * (m as u64),
        scale_multiplies: 0,
    };
    Ok((y, counts))
}

/// Parity fixture: `+1` where `(i + j)` is even, `-1` otherwise. No zero
/// weights, so every lane slot is selected and the instrumented counts equal
/// the analytic slot totals.
fn parity_matrix(n: usize, m: usize) -> PackedTernaryMatrix {
    let dense = DenseTernaryMatrix::from_fn(n, m, |i, j| if (i + j) % 2 == 0 { 1 } else { -1 })
        .expect("parity pattern is ternary");
    pack_matrix(&dense)
}

/// Run the instrumented kernel of the given kind on an `n x m` dense-sign
/// fixture and report its operation counts. `m` is rounded up to a multiple
/// of 16 (the padded dimension kernels actually execute).
pub fn count_ops(n: usize, m: usize, kind: KernelKind) -> Result<OpCounts, KernelError> {
    if n == 0 || m == 0 {
        return Err(dim_err("count_ops requires n >= 1 and m >= 1".to_string()));
    }
    let m_padded = crate::matrix::pad_to_slots(m);
    match kind {
        KernelKind::Fp32Dense => {
            let a = vec![1.0f32; n * m_padded];
            let x = vec![1.0f32; m_padded];
            let (_, counts) = dense_gemv_counting(&a, n, m_padded, &x)?;
            Ok(counts)
        }
        KernelKind::TernarySingle => {
            let a = parity_matrix(n, m_padded);
            let x = vec![1.0f32; m_padded];
            let (_, counts) = ternary_gemv_counting(&a, &x, 1.0)?;
            Ok(counts)
        }
        KernelKind::TernaryFused => {
            let a = parity_matrix(n, m_padded);
            let layer = WidelyLinearLayer::new(a.clone(), a.clone(), a.clone(), a, ScaleSet::UNIT)?;
            let x = ActivationPair::from_logical(
                &vec![1.0f32; m_padded],
                &vec![1.0f32; m_padded],
                m_padded,
            )?;
            let (_, counts) = fused_widely_linear_counting(&layer, &x)?;
            Ok(counts)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{fused_widely_linear, ternary_gemv};

    #[test]
    fn all_zero_weights_select_no_lanes() {
        let z = PackedTernaryMatrix::zeros(16, 16);
        let layer =
            WidelyLinearLayer::new(z.clone(), z.clone(), z.clone(), z, ScaleSet::UNIT).unwrap();
        let x = ActivationPair::from_logical(&[1.0; 16], &[1.0; 16], 16).unwrap();
        let (_, counts) = fused_widely_linear_counting(&layer, &x).unwrap();
        assert_eq!(counts.masked_adds, 0);
        assert_eq!(counts.masked_subs, 0);
        assert_eq!(counts.inner_multiplies, 0);
        assert_eq!(counts.scale_multiplies, 128);
    }

    #[test]
    fn all_positive_single_row() {
        let dense = DenseTernaryMatrix::new(1, 16, vec![1; 16]).unwrap();
        let a = pack_matrix(&dense);
        let x = vec![1.0f32; 16];
        let (y, counts) = ternary_gemv_counting(&a, &x, 1.0).unwrap();
        assert_eq!(y, vec![16.0]);
        assert_eq!(counts.masked_adds, 16);
        assert_eq!(counts.masked_subs, 0);
        assert_eq!(counts.inner_multiplies, 0);
        assert_eq!(counts.scale_multiplies, 1);
    }

    #[test]
    fn counting_kernels_match_reference_bitwise() {
        let dense =
            DenseTernaryMatrix::from_fn(16, 32, |i, j| ((i * 3 + j * 7) % 3) as i8 - 1).unwrap();
        let a = pack_matrix(&dense);
        let x: Vec<f32> = (0..32).map(|i| (i as f32 * 0.21).sin()).collect();
        let (counted, _) = ternary_gemv_counting(&a, &x, 0.8).unwrap();
        assert_eq!(counted, ternary_gemv(&a, &x, 0.8).unwrap());

        let layer =
            WidelyLinearLayer::new(a.clone(), a.clone(), a.clone(), a, ScaleSet::UNIT).unwrap();
        let pair = ActivationPair::from_logical(&x, &x, 32).unwrap();
        let (counted, counts) = fused_widely_linear_counting(&layer, &pair).unwrap();
        let plain = fused_widely_linear(&layer, &pair).unwrap();
        assert_eq!(counted.y_re, plain.y_re);
        assert_eq!(counted.y_im, plain.y_im);
        assert_eq!(counts.inner_multiplies, 0);
    }

    #[test]
    fn fused_slot_totals_on_dense_signs() {
        let counts = count_ops(16, 16, KernelKind::TernaryFused).unwrap();
        assert_eq!(counts.elementwise_total(), 8 * 16 * 16);
        assert_eq!(counts.masked_adds, 4 * 16 * 16);
        assert_eq!(counts.masked_subs, 4 * 16 * 16);
        assert_eq!(counts.scale_multiplies, 8 * 16);
        assert_eq!(counts.inner_multiplies, 0);
    }

    #[test]
    fn single_slot_totals_on_dense_signs() {
        let counts = count_ops(8, 32, KernelKind::TernarySingle).unwrap();
        assert_eq!(counts.elementwise_total(), 8 * 32);
        assert_eq!(counts.scale_multiplies, 8);
    }

    #[test]
    fn dense_kind_counts_multiplies() {
        let counts = count_ops(4, 16, KernelKind::Fp32Dense).unwrap();
        assert_eq!(counts.inner_multiplies, 64);
        assert_eq!(counts.elementwise_total(), 0);
    }

    #[test]
    fn fraction_matches_inverse_input_dim() {
        let counts = count_ops(4, 64, KernelKind::TernaryFused).unwrap();
        let expect = 100.0 / 64.0;
        assert!((counts.multiply_fraction_percent() - expect).abs() < 1e-12);
    }
}
