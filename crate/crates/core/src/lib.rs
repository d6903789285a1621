//! Multiplication-free GEMV kernels for packed ternary weights.
//!
//! Weights in {-1, 0, +1} pack sixteen to a `u32`; decoding a word yields a
//! pair of 16-bit lane masks that drive masked add/sub accumulation, so the
//! inner loop of every GEMV contains zero multiplications. A widely-linear
//! complex layer (`y = U x + W conj(x)`) expands into eight real sub-GEMVs,
//! which the fused kernel executes in a single row-parallel pass. Around the
//! kernels sit an on-disk layer format, a roofline/op-count model, a
//! statistics-disciplined benchmark harness, and a single-token transformer
//! block demo.

pub mod bench;
pub mod gen;
pub mod io;
pub mod kernels;
pub mod matrix;
pub mod parallel;
pub mod pipeline;
pub mod roofline;
pub mod ternary;

pub use kernels::{
    dense_gemv_f32, fused_widely_linear, oracle_widely_linear, ternary_gemv, unfused_widely_linear,
    ActivationPair, GemvOutput, KernelError, KernelKind, KernelVariant, OpCounts,
    WidelyLinearLayer,
};
pub use matrix::{pack_matrix, DenseTernaryMatrix, PackedTernaryMatrix, ScaleSet};
pub use parallel::{parallel_fused, partition_rows, RowPartition};
pub use ternary::{
    decode_masks, decode_masks_portable, pack_slots, unpack_slots, MaskPair, PackedWord,
    TernaryWeight,
};
