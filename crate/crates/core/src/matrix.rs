//! Dense and packed row-major ternary matrices, plus the per-tensor scale
//! set of a widely-linear layer.
//!
//! Packed matrices pad the input dimension up to a multiple of 16 with the
//! zero encoding, so kernels always walk whole 16-lane chunks and never see a
//! tail loop. Dense matrices store `i8` values and exist for fixtures,
//! oracles, and pack/unpack roundtrips; they are not a wire format.

use crate::ternary::{
    pack_slots, unpack_slots, EncodingError, PackedWord, TernaryWeight, SLOTS_PER_WORD,
};

/// Row-major `i8` ternary matrix with entries in {-1, 0, +1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseTernaryMatrix {
    n: usize,
    m: usize,
    data: Vec<i8>,
}

impl DenseTernaryMatrix {
    pub fn new(n: usize, m: usize, data: Vec<i8>) -> Result<Self, EncodingError> {
        if data.len() != n * m {
            return Err(EncodingError::DataLength {
                n,
                m,
                got: data.len(),
            });
        }
        if let Some(&value) = data.iter().find(|v| !matches!(v, -1..=1)) {
            return Err(EncodingError::NotTernary { value });
        }
        Ok(DenseTernaryMatrix { n, m, data })
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        DenseTernaryMatrix {
            n,
            m,
            data: vec![0; n * m],
        }
    }

    /// Build entry-by-entry from `f(row, col)`.
    pub fn from_fn(
        n: usize,
        m: usize,
        mut f: impl FnMut(usize, usize) -> i8,
    ) -> Result<Self, EncodingError> {
        let mut data = Vec::with_capacity(n * m);
        for i in 0..n {
            for j in 0..m {
                data.push(f(i, j));
            }
        }
        DenseTernaryMatrix::new(n, m, data)
    }

    /// Identity pattern: +1 on the diagonal, zero elsewhere.
    pub fn identity(n: usize) -> Self {
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            out.data[i * n + i] = 1;
        }
        out
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.data[i * self.m + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[i8] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn data(&self) -> &[i8] {
        &self.data
    }
}

/// Row-major packed ternary matrix: `n` rows of `m_padded / 16` words.
///
/// Invariants held by construction: `m_padded = 16 * ceil(m_logical / 16)`,
/// padding slots encode zero, and the word buffer length is exactly
/// `n * m_padded / 16`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedTernaryMatrix {
    n: usize,
    m_logical: usize,
    words: Vec<PackedWord>,
}

impl PackedTernaryMatrix {
    /// Wrap raw words, checking shape and padding-slot invariants.
    pub fn from_words(
        n: usize,
        m_logical: usize,
        words: Vec<PackedWord>,
    ) -> Result<Self, EncodingError> {
        let words_per_row = words_per_row(m_logical);
        if words.len() != n * words_per_row {
            return Err(EncodingError::WordCount {
                n,
                words_per_row,
                got: words.len(),
            });
        }
        let pad_slots = words_per_row * SLOTS_PER_WORD - m_logical;
        if pad_slots > 0 {
            // Padding occupies the top `pad_slots` slots of each row's last word.
            let pad_mask = !0u32 << (2 * (SLOTS_PER_WORD - pad_slots));
            for row in 0..n {
                let last = words[row * words_per_row + words_per_row - 1];
                if last.bits() & pad_mask != 0 {
                    return Err(EncodingError::NonzeroPadding { row });
                }
            }
        }
        Ok(PackedTernaryMatrix {
            n,
            m_logical,
            words,
        })
    }

    pub fn zeros(n: usize, m_logical: usize) -> Self {
        PackedTernaryMatrix {
            n,
            m_logical,
            words: vec![PackedWord::ZERO; n * words_per_row(m_logical)],
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn m_logical(&self) -> usize {
        self.m_logical
    }

    #[inline]
    pub fn m_padded(&self) -> usize {
        self.words_per_row() * SLOTS_PER_WORD
    }

    #[inline]
    pub fn words_per_row(&self) -> usize {
        words_per_row(self.m_logical)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[PackedWord] {
        let w = self.words_per_row();
        &self.words[i * w..(i + 1) * w]
    }

    pub fn words(&self) -> &[PackedWord] {
        &self.words
    }

    /// Packed payload size in bytes: `n * ceil(m/16) * 4`.
    #[inline]
    pub fn packed_bytes(&self) -> usize {
        self.words.len() * 4
    }

    /// Unpack to a dense matrix, dropping padding columns. Rejects `(1,1)` slots.
    pub fn to_dense(&self) -> Result<DenseTernaryMatrix, EncodingError> {
        let mut data = Vec::with_capacity(self.n * self.m_logical);
        for i in 0..self.n {
            let mut col = 0;
            for word in self.row(i) {
                let slots = unpack_slots(*word)?;
                for t in slots {
                    if col < self.m_logical {
                        data.push(t.value());
                    }
                    col += 1;
                }
            }
        }
        DenseTernaryMatrix::new(self.n, self.m_logical, data)
    }
}

#[inline]
pub(crate) fn words_per_row(m_logical: usize) -> usize {
    m_logical.div_ceil(SLOTS_PER_WORD)
}

/// Round an input dimension up to the next multiple of 16.
#[inline]
pub fn pad_to_slots(m_logical: usize) -> usize {
    words_per_row(m_logical) * SLOTS_PER_WORD
}

/// Pack a dense ternary matrix row-major, padding each row to a whole number
/// of 16-slot words with the zero encoding.
pub fn pack_matrix(dense: &DenseTernaryMatrix) -> PackedTernaryMatrix {
    let n = dense.n();
    let m = dense.m();
    let wpr = words_per_row(m);
    let mut words = Vec::with_capacity(n * wpr);
    let mut slots = [TernaryWeight::ZERO; SLOTS_PER_WORD];
    for i in 0..n {
        let row = dense.row(i);
        for chunk in 0..wpr {
            let base = chunk * SLOTS_PER_WORD;
            for (k, slot) in slots.iter_mut().enumerate() {
                *slot = match row.get(base + k) {
                    Some(&v) => TernaryWeight::new(v).expect("dense matrix is validated"),
                    None => TernaryWeight::ZERO,
                };
            }
            words.push(pack_slots(&slots));
        }
    }
    PackedTernaryMatrix {
        n,
        m_logical: m,
        words,
    }
}

/// The four per-tensor scales that close the widely-linear combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleSet {
    pub s_u_re: f32,
    pub s_u_im: f32,
    pub s_w_re: f32,
    pub s_w_im: f32,
}

impl ScaleSet {
    pub const UNIT: ScaleSet = ScaleSet {
        s_u_re: 1.0,
        s_u_im: 1.0,
        s_w_re: 1.0,
        s_w_im: 1.0,
    };

    pub fn new(s_u_re: f32, s_u_im: f32, s_w_re: f32, s_w_im: f32) -> Result<Self, EncodingError> {
        for (name, value) in [
            ("s_u_re", s_u_re),
            ("s_u_im", s_u_im),
            ("s_w_re", s_w_re),
            ("s_w_im", s_w_im),
        ] {
            if !value.is_finite() {
                return Err(EncodingError::NonFiniteScale { name, value });
            }
        }
        Ok(ScaleSet {
            s_u_re,
            s_u_im,
            s_w_re,
            s_w_im,
        })
    }
}
