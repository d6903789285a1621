//! On-disk layer format and footprint accounting.
//!
//! A layer file is a 16-byte little-endian header followed by four packed
//! matrices:
//!
//! ```text
//! n:        u32   output dimension
//! m:        u32   input dimension
//! scale_re: f32
//! scale_im: f32
//! payload:  U_re, U_im, W_re, W_im — each n * ceil(m/16) * 4 bytes of words
//! ```
//!
//! There is no magic number or version field. The header carries two scales
//! while the kernel combination uses four; writes emit `scale_re = s_u_re`,
//! `scale_im = s_u_im` and flag the outcome as lossy when the `W` scales
//! differ, and reads populate `s_w_re = s_u_re = scale_re` (likewise for the
//! imaginary pair). Conventional file extension: `.tl2`.

use crate::kernels::WidelyLinearLayer;
use crate::matrix::{words_per_row, PackedTernaryMatrix, ScaleSet};
use crate::ternary::{EncodingError, PackedWord};
use serde::Serialize;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

pub const HEADER_BYTES: usize = 16;
/// Conventional extension for layer files ("ternary layer, 2-bit").
pub const FILE_EXTENSION: &str = "tl2";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("truncated file: expected {expected} bytes, got {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("sink failure: {0}")]
    Sink(#[from] std::io::Error),
}

/// The 16-byte little-endian file header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerHeader {
    pub n: u32,
    pub m: u32,
    pub scale_re: f32,
    pub scale_im: f32,
}

impl LayerHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_BYTES] {
        let mut out = [0u8; HEADER_BYTES];
        out[0..4].copy_from_slice(&self.n.to_le_bytes());
        out[4..8].copy_from_slice(&self.m.to_le_bytes());
        out[8..12].copy_from_slice(&self.scale_re.to_le_bytes());
        out[12..16].copy_from_slice(&self.scale_im.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8; HEADER_BYTES]) -> Result<Self, FormatError> {
        let header = LayerHeader {
            n: u32::from_le_bytes(bytes[0..4].try_into().unwrap()),
            m: u32::from_le_bytes(bytes[4..8].try_into().unwrap()),
            scale_re: f32::from_le_bytes(bytes[8..12].try_into().unwrap()),
            scale_im: f32::from_le_bytes(bytes[12..16].try_into().unwrap()),
        };
        if header.n == 0 || header.m == 0 {
            return Err(FormatError::MalformedHeader(format!(
                "zero dimension: n={}, m={}",
                header.n, header.m
            )));
        }
        if !header.scale_re.is_finite() || !header.scale_im.is_finite() {
            return Err(FormatError::MalformedHeader(format!(
                "non-finite scale: re={}, im={}",
                header.scale_re, header.scale_im
            )));
        }
        Ok(header)
    }

    /// Bytes of one packed matrix: `n * ceil(m/16) * 4`.
    pub fn matrix_bytes(&self) -> u64 {
        self.n as u64 * words_per_row(self.m as usize) as u64 * 4
    }

    /// Total file size: header plus four packed matrices.
    pub fn file_bytes(&self) -> u64 {
        HEADER_BYTES as u64 + 4 * self.matrix_bytes()
    }
}

/// Result of a layer write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteOutcome {
    pub bytes_written: u64,
    /// True when the four-scale set could not be represented exactly by the
    /// two-scale header (`s_w_re != s_u_re` or `s_w_im != s_u_im`).
    pub lossy_scales: bool,
}

/// Serialize a layer to the byte sink. Returns the byte count and whether
/// the two-scale header lost information.
pub fn write_layer<W: Write>(
    layer: &WidelyLinearLayer,
    mut sink: W,
) -> Result<WriteOutcome, FormatError> {
    if layer.n() == 0 || layer.m_logical() == 0 {
        return Err(FormatError::MalformedHeader(format!(
            "zero dimension: n={}, m={}",
            layer.n(),
            layer.m_logical()
        )));
    }
    let s = layer.scales();
    let header = LayerHeader {
        n: layer.n() as u32,
        m: layer.m_logical() as u32,
        scale_re: s.s_u_re,
        scale_im: s.s_u_im,
    };
    sink.write_all(&header.to_bytes())?;
    let mut bytes_written = HEADER_BYTES as u64;
    for matrix in [layer.u_re(), layer.u_im(), layer.w_re(), layer.w_im()] {
        for word in matrix.words() {
            sink.write_all(&word.bits().to_le_bytes())?;
        }
        bytes_written += matrix.packed_bytes() as u64;
    }
    let lossy_scales =
        s.s_w_re.to_bits() != s.s_u_re.to_bits() || s.s_w_im.to_bits() != s.s_u_im.to_bits();
    Ok(WriteOutcome {
        bytes_written,
        lossy_scales,
    })
}

fn parse_matrix(n: usize, m: usize, bytes: &[u8]) -> Result<PackedTernaryMatrix, FormatError> {
    let words = bytes
        .chunks_exact(4)
        .map(|c| PackedWord::from_bits(u32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok(PackedTernaryMatrix::from_words(n, m, words)?)
}

fn read_layer_impl(bytes: &[u8], strict: bool) -> Result<WidelyLinearLayer, FormatError> {
    if bytes.len() < HEADER_BYTES {
        return Err(FormatError::Truncated {
            expected: HEADER_BYTES as u64,
            actual: bytes.len() as u64,
        });
    }
    let header = LayerHeader::from_bytes(bytes[..HEADER_BYTES].try_into().unwrap())?;
    let expected = header.file_bytes();
    if bytes.len() as u64 != expected {
        return Err(FormatError::Truncated {
            expected,
            actual: bytes.len() as u64,
        });
    }
    let n = header.n as usize;
    let m = header.m as usize;
    let per_matrix = header.matrix_bytes() as usize;
    let mut matrices = Vec::with_capacity(4);
    for k in 0..4 {
        let start = HEADER_BYTES + k * per_matrix;
        let matrix = parse_matrix(n, m, &bytes[start..start + per_matrix])?;
        if strict {
            if let Some(bad) = matrix.words().iter().find(|w| !w.is_valid()) {
                let slot = (bad.bits() & (bad.bits() >> 1) & 0x5555_5555).trailing_zeros() / 2;
                return Err(FormatError::Encoding(EncodingError::InvalidEncoding {
                    word: bad.bits(),
                    slot: slot as usize,
                }));
            }
        }
        matrices.push(matrix);
    }
    let scales = ScaleSet::new(
        header.scale_re,
        header.scale_im,
        header.scale_re,
        header.scale_im,
    )?;
    let w_im = matrices.pop().unwrap();
    let w_re = matrices.pop().unwrap();
    let u_im = matrices.pop().unwrap();
    let u_re = matrices.pop().unwrap();
    WidelyLinearLayer::new(u_re, u_im, w_re, w_im, scales)
        .map_err(|e| FormatError::MalformedHeader(e.to_string()))
}

/// Reconstruct a layer from file bytes. Packed words are taken as-is;
/// kernels treat the unused `(1,1)` slot pattern as a net no-op.
pub fn read_layer(bytes: &[u8]) -> Result<WidelyLinearLayer, FormatError> {
    read_layer_impl(bytes, false)
}

/// As [`read_layer`], but reject any `(1,1)` slot in the payload.
pub fn read_layer_strict(bytes: &[u8]) -> Result<WidelyLinearLayer, FormatError> {
    read_layer_impl(bytes, true)
}

/// Write a layer to a file path.
pub fn write_layer_file<P: AsRef<Path>>(
    layer: &WidelyLinearLayer,
    path: P,
) -> Result<WriteOutcome, FormatError> {
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    let outcome = write_layer(layer, &mut writer)?;
    writer.flush()?;
    Ok(outcome)
}

/// Read a layer from a file path.
pub fn read_layer_file<P: AsRef<Path>>(path: P) -> Result<WidelyLinearLayer, FormatError> {
    let bytes = std::fs::read(path)?;
    read_layer(&bytes)
}

/// Storage precision of a model component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Precision {
    Ternary2Bit,
    Fp16,
    Fp32,
}

/// One model component: a set of matrix shapes repeated `count` times.
#[derive(Debug, Clone)]
pub struct ComponentConfig {
    pub name: String,
    /// (n, m) shapes within one repetition.
    pub shapes: Vec<(usize, usize)>,
    pub count: usize,
    pub precision: Precision,
}

/// Footprint of one component at its stored precision versus dense baselines.
#[derive(Debug, Clone, Serialize)]
pub struct FootprintRow {
    pub component: String,
    pub stored_bytes: u64,
    pub fp16_bytes: u64,
    pub fp32_bytes: u64,
    pub ratio_vs_fp16: f64,
    pub ratio_vs_fp32: f64,
}

fn packed_matrix_bytes(n: usize, m: usize) -> u64 {
    n as u64 * words_per_row(m) as u64 * 4
}

/// Per-component packed/FP16/FP32 sizes and compression ratios. The ternary
/// payload is exactly 1/8 of FP16 (1/16 of FP32) whenever 16 divides m.
pub fn footprint_report(components: &[ComponentConfig]) -> Vec<FootprintRow> {
    components
        .iter()
        .map(|c| {
            let mut stored = 0u64;
            let mut fp16 = 0u64;
            let mut fp32 = 0u64;
            for &(n, m) in &c.shapes {
                let params = n as u64 * m as u64;
                fp16 += 2 * params;
                fp32 += 4 * params;
                stored += match c.precision {
                    Precision::Ternary2Bit => packed_matrix_bytes(n, m),
                    Precision::Fp16 => 2 * params,
                    Precision::Fp32 => 4 * params,
                };
            }
            let count = c.count as u64;
            let (stored, fp16, fp32) = (stored * count, fp16 * count, fp32 * count);
            FootprintRow {
                component: c.name.clone(),
                stored_bytes: stored,
                fp16_bytes: fp16,
                fp32_bytes: fp32,
                ratio_vs_fp16: fp16 as f64 / stored as f64,
                ratio_vs_fp32: fp32 as f64 / stored as f64,
            }
        })
        .collect()
}

/// LLaMA-2-7B component shapes: 32 layers of attention (Q/K/V/O, 4096x4096)
/// and MLP (gate/up 11008x4096, down 4096x11008) ternary matrices, plus FP16
/// embedding and LM head (32000x4096).
pub fn llama2_7b_components() -> Vec<ComponentConfig> {
    vec![
        ComponentConfig {
            name: "attention_qkvo".to_string(),
            shapes: vec![(4096, 4096); 4],
            count: 32,
            precision: Precision::Ternary2Bit,
        },
        ComponentConfig {
            name: "mlp_gate_up_down".to_string(),
            shapes: vec![(11008, 4096), (11008, 4096), (4096, 11008)],
            count: 32,
            precision: Precision::Ternary2Bit,
        },
        ComponentConfig {
            name: "embedding_lm_head".to_string(),
            shapes: vec![(32000, 4096); 2],
            count: 1,
            precision: Precision::Fp16,
        },
    ]
}
