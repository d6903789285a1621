//! Two-bit ternary encoding and mask decoding.
//!
//! Sixteen weights in {-1, 0, +1} pack into one `u32`: slot `k` owns bit
//! `2k` (negative indicator) and bit `2k+1` (positive indicator). The `(1,1)`
//! pattern is unused; validating decoders reject it. Decoding a word yields a
//! pair of 16-bit lane masks that drive masked add/sub accumulation, so the
//! weight-activation product never touches a multiplier.

use thiserror::Error;

/// Selection mask over the positive-indicator (odd) bits of a packed word.
pub const MASK_POSITIVE: u32 = 0xAAAA_AAAA;
/// Selection mask over the negative-indicator (even) bits of a packed word.
pub const MASK_NEGATIVE: u32 = 0x5555_5555;
/// Ternary slots per packed word; also the kernel chunk width in lanes.
pub const SLOTS_PER_WORD: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodingError {
    /// A slot carries the unused `(1,1)` indicator pattern.
    #[error("slot {slot} of word {word:#010x} has both indicator bits set")]
    InvalidEncoding { word: u32, slot: usize },
    #[error("{value} is not a ternary weight")]
    NotTernary { value: i8 },
    #[error("dense data length {got} does not match {n}x{m}")]
    DataLength { n: usize, m: usize, got: usize },
    #[error("word count {got} does not match {n} rows of {words_per_row} words")]
    WordCount {
        n: usize,
        words_per_row: usize,
        got: usize,
    },
    #[error("row {row} has a nonzero encoding in a padding slot")]
    NonzeroPadding { row: usize },
    #[error("scale {name} = {value} is not finite")]
    NonFiniteScale { name: &'static str, value: f32 },
}

/// A weight constrained to {-1, 0, +1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TernaryWeight(i8);

impl TernaryWeight {
    pub const NEG: Self = TernaryWeight(-1);
    pub const ZERO: Self = TernaryWeight(0);
    pub const POS: Self = TernaryWeight(1);

    pub fn new(value: i8) -> Result<Self, EncodingError> {
        match value {
            -1..=1 => Ok(TernaryWeight(value)),
            _ => Err(EncodingError::NotTernary { value }),
        }
    }

    #[inline]
    pub fn value(self) -> i8 {
        self.0
    }
}

impl TryFrom<i8> for TernaryWeight {
    type Error = EncodingError;

    fn try_from(value: i8) -> Result<Self, Self::Error> {
        TernaryWeight::new(value)
    }
}

/// One storage atom: sixteen 2-bit ternary slots in a `u32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[repr(transparent)]
pub struct PackedWord(u32);

impl PackedWord {
    pub const ZERO: Self = PackedWord(0);

    #[inline]
    pub const fn from_bits(bits: u32) -> Self {
        PackedWord(bits)
    }

    #[inline]
    pub const fn bits(self) -> u32 {
        self.0
    }

    /// True when no slot carries the invalid `(1,1)` pattern.
    #[inline]
    pub const fn is_valid(self) -> bool {
        self.0 & (self.0 >> 1) & MASK_NEGATIVE == 0
    }
}

/// Add/sub lane masks decoded from one packed word, LSB-first: bit `k` of
/// `k_pos` selects lane `k` for addition, bit `k` of `k_neg` for subtraction.
/// Words without `(1,1)` slots decode to disjoint masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskPair {
    pub k_pos: u16,
    pub k_neg: u16,
}

/// Pack sixteen ternary weights into one word: bit `2k+1` set iff `t[k]` is
/// +1, bit `2k` set iff `t[k]` is -1.
pub fn pack_slots(t: &[TernaryWeight; SLOTS_PER_WORD]) -> PackedWord {
    let mut bits = 0u32;
    for (k, w) in t.iter().enumerate() {
        match w.value() {
            1 => bits |= 1 << (2 * k + 1),
            -1 => bits |= 1 << (2 * k),
            _ => {}
        }
    }
    PackedWord(bits)
}

/// Inverse of [`pack_slots`]. Rejects words containing the `(1,1)` pattern.
pub fn unpack_slots(p: PackedWord) -> Result<[TernaryWeight; SLOTS_PER_WORD], EncodingError> {
    let mut out = [TernaryWeight::ZERO; SLOTS_PER_WORD];
    for (k, slot) in out.iter_mut().enumerate() {
        let pos = (p.0 >> (2 * k + 1)) & 1;
        let neg = (p.0 >> (2 * k)) & 1;
        *slot = match (pos, neg) {
            (0, 0) => TernaryWeight::ZERO,
            (1, 0) => TernaryWeight::POS,
            (0, 1) => TernaryWeight::NEG,
            _ => return Err(EncodingError::InvalidEncoding { word: p.0, slot: k }),
        };
    }
    Ok(out)
}

/// Portable bit-loop mask extraction. This is the canonical definition; every
/// accelerated decode path must agree with it bit-exactly on all words.
#[inline]
pub fn decode_masks_portable(p: PackedWord) -> MaskPair {
    let bits = p.bits();
    let mut k_pos = 0u16;
    let mut k_neg = 0u16;
    for k in 0..SLOTS_PER_WORD {
        k_pos |= (((bits >> (2 * k + 1)) & 1) as u16) << k;
        k_neg |= (((bits >> (2 * k)) & 1) as u16) << k;
    }
    MaskPair { k_pos, k_neg }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "bmi2")]
pub(crate) unsafe fn decode_masks_pext(p: PackedWord) -> MaskPair {
    use std::arch::x86_64::_pext_u32;
    MaskPair {
        k_pos: _pext_u32(p.bits(), MASK_POSITIVE) as u16,
        k_neg: _pext_u32(p.bits(), MASK_NEGATIVE) as u16,
    }
}

/// True when the hardware parallel-bit-extract decode path is usable.
#[inline]
pub fn pext_available() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::is_x86_feature_detected!("bmi2")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

/// Extract the add/sub lane masks of a packed word, using the BMI2 `pext`
/// instruction when the CPU has it and the bit-loop fallback otherwise.
/// Accepts any 32-bit word; validation is the caller's concern.
#[inline]
pub fn decode_masks(p: PackedWord) -> MaskPair {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("bmi2") {
            return unsafe { decode_masks_pext(p) };
        }
    }
    decode_masks_portable(p)
}
