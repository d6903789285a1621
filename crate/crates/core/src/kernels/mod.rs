//! GEMV kernels over packed ternary weights.
//!
//! The scalar reference kernels define the canonical semantics: chunks
//! ascending, lanes ascending, masked add before masked sub, one horizontal
//! sum per accumulator, and a single scale multiply per output element.
//! Accelerated variants may regroup accumulation and must agree with the
//! double-precision oracle within the documented tolerances.

mod counting;
mod dense;
mod fused;
mod gemv;
mod oracle;

pub use counting::{
    count_ops, dense_gemv_counting, fused_widely_linear_counting, ternary_gemv_counting,
    KernelKind, OpCounts,
};
pub use dense::dense_gemv_f32;
pub use fused::{
    fused_widely_linear, fused_widely_linear_with, unfused_widely_linear,
    unfused_widely_linear_with,
};
pub use gemv::{ternary_gemv, ternary_gemv_with, KernelVariant};
pub use oracle::{oracle_widely_linear, relative_l2, relative_l2_vec, OracleOutput};

pub(crate) use fused::{combine, fused_row};
pub(crate) use gemv::gemv_row;

use crate::matrix::{pad_to_slots, PackedTernaryMatrix, ScaleSet};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("kernel variant {0} is not available on this CPU")]
    VariantUnavailable(&'static str),
}

pub(crate) fn dim_err(msg: impl Into<String>) -> KernelError {
    KernelError::DimensionMismatch(msg.into())
}

/// One widely-linear layer's worth of weights: four packed matrices of
/// identical shape plus the per-tensor scales.
#[derive(Debug, Clone)]
pub struct WidelyLinearLayer {
    u_re: PackedTernaryMatrix,
    u_im: PackedTernaryMatrix,
    w_re: PackedTernaryMatrix,
    w_im: PackedTernaryMatrix,
    scales: ScaleSet,
}

impl WidelyLinearLayer {
    pub fn new(
        u_re: PackedTernaryMatrix,
        u_im: PackedTernaryMatrix,
        w_re: PackedTernaryMatrix,
        w_im: PackedTernaryMatrix,
        scales: ScaleSet,
    ) -> Result<Self, KernelError> {
        let shape = (u_re.n(), u_re.m_logical());
        for (name, m) in [("u_im", &u_im), ("w_re", &w_re), ("w_im", &w_im)] {
            if (m.n(), m.m_logical()) != shape {
                return Err(dim_err(format!(
                    "{} is {}x{}, expected {}x{}",
                    name,
                    m.n(),
                    m.m_logical(),
                    shape.0,
                    shape.1
                )));
            }
        }
        Ok(WidelyLinearLayer {
            u_re,
            u_im,
            w_re,
            w_im,
            scales,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.u_re.n()
    }

    #[inline]
    pub fn m_logical(&self) -> usize {
        self.u_re.m_logical()
    }

    #[inline]
    pub fn m_padded(&self) -> usize {
        self.u_re.m_padded()
    }

    pub fn u_re(&self) -> &PackedTernaryMatrix {
        &self.u_re
    }

    pub fn u_im(&self) -> &PackedTernaryMatrix {
        &self.u_im
    }

    pub fn w_re(&self) -> &PackedTernaryMatrix {
        &self.w_re
    }

    pub fn w_im(&self) -> &PackedTernaryMatrix {
        &self.w_im
    }

    pub fn scales(&self) -> ScaleSet {
        self.scales
    }

    /// Total packed weight bytes across the four matrices.
    pub fn packed_bytes(&self) -> usize {
        4 * self.u_re.packed_bytes()
    }
}

/// Real and imaginary activation vectors, zero-padded to the layer's padded
/// input dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationPair {
    x_re: Vec<f32>,
    x_im: Vec<f32>,
}

impl ActivationPair {
    /// Pad logical activations with zeros up to `m_padded` (a multiple of 16,
    /// at least the logical length).
    pub fn from_logical(x_re: &[f32], x_im: &[f32], m_padded: usize) -> Result<Self, KernelError> {
        if x_re.len() != x_im.len() {
            return Err(dim_err(format!(
                "activation components differ: {} vs {}",
                x_re.len(),
                x_im.len()
            )));
        }
        if m_padded < x_re.len() || !m_padded.is_multiple_of(16) {
            return Err(dim_err(format!(
                "padded length {} invalid for logical length {}",
                m_padded,
                x_re.len()
            )));
        }
        let mut re = Vec::with_capacity(m_padded);
        let mut im = Vec::with_capacity(m_padded);
        re.extend_from_slice(x_re);
        im.extend_from_slice(x_im);
        re.resize(m_padded, 0.0);
        im.resize(m_padded, 0.0);
        Ok(ActivationPair { x_re: re, x_im: im })
    }

    /// Real-valued input: `x_im` is all zeros.
    pub fn from_real(x_re: &[f32], m_padded: usize) -> Result<Self, KernelError> {
        Self::from_logical(x_re, &vec![0.0; x_re.len()], m_padded)
    }

    pub fn zeros(m_padded: usize) -> Self {
        ActivationPair {
            x_re: vec![0.0; m_padded],
            x_im: vec![0.0; m_padded],
        }
    }

    #[inline]
    pub fn padded_len(&self) -> usize {
        self.x_re.len()
    }

    #[inline]
    pub fn x_re(&self) -> &[f32] {
        &self.x_re
    }

    #[inline]
    pub fn x_im(&self) -> &[f32] {
        &self.x_im
    }
}

/// Real and imaginary outputs of a widely-linear GEMV.
#[derive(Debug, Clone, PartialEq)]
pub struct GemvOutput {
    pub y_re: Vec<f32>,
    pub y_im: Vec<f32>,
}

pub(crate) fn check_gemv_dims(a: &PackedTernaryMatrix, x: &[f32]) -> Result<(), KernelError> {
    if x.len() != a.m_padded() {
        return Err(dim_err(format!(
            "activation length {} != padded input dimension {}",
            x.len(),
            a.m_padded()
        )));
    }
    Ok(())
}

pub(crate) fn check_layer_dims(
    layer: &WidelyLinearLayer,
    x: &ActivationPair,
) -> Result<(), KernelError> {
    if x.padded_len() != layer.m_padded() {
        return Err(dim_err(format!(
            "activation length {} != padded input dimension {}",
            x.padded_len(),
            layer.m_padded()
        )));
    }
    Ok(())
}

/// Convenience: the padded activation length for a logical input dimension.
pub fn padded_len(m_logical: usize) -> usize {
    pad_to_slots(m_logical)
}
