//! Seeded generators for layers, activations, and benchmark inputs.
//!
//! All randomness flows through ChaCha8 seeded with `seed_from_u64`, so a
//! seed identifies the same fixture on every platform and in every language
//! with a ChaCha8 implementation.

use crate::kernels::{ActivationPair, WidelyLinearLayer};
use crate::matrix::{pack_matrix, pad_to_slots, DenseTernaryMatrix, PackedTernaryMatrix, ScaleSet};
use crate::pipeline::BlockWeights;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The named PRNG behind every seeded fixture.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform over {-1, 0, +1}.
pub fn random_dense_ternary(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DenseTernaryMatrix {
    let data: Vec<i8> = (0..n * m).map(|_| rng.gen_range(-1..=1)).collect();
    DenseTernaryMatrix::new(n, m, data).expect("generated values are ternary")
}

pub fn random_packed(rng: &mut ChaCha8Rng, n: usize, m: usize) -> PackedTernaryMatrix {
    pack_matrix(&random_dense_ternary(rng, n, m))
}

/// Four independent scales uniform in [0.5, 2].
pub fn random_scales(rng: &mut ChaCha8Rng) -> ScaleSet {
    ScaleSet::new(
        rng.gen_range(0.5..=2.0),
        rng.gen_range(0.5..=2.0),
        rng.gen_range(0.5..=2.0),
        rng.gen_range(0.5..=2.0),
    )
    .expect("generated scales are finite")
}

/// Two scales applied to both U and W, representable by the two-scale file
/// header without loss.
pub fn random_scales_two(rng: &mut ChaCha8Rng) -> ScaleSet {
    let re = rng.gen_range(0.5..=2.0);
    let im = rng.gen_range(0.5..=2.0);
    ScaleSet::new(re, im, re, im).expect("generated scales are finite")
}

/// Random widely-linear layer together with its dense source matrices
/// (in U_re, U_im, W_re, W_im order), for oracle evaluation.
pub fn random_layer_with_dense(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
) -> (WidelyLinearLayer, [DenseTernaryMatrix; 4]) {
    let dense = [
        random_dense_ternary(rng, n, m),
        random_dense_ternary(rng, n, m),
        random_dense_ternary(rng, n, m),
        random_dense_ternary(rng, n, m),
    ];
    let scales = random_scales(rng);
    let layer = WidelyLinearLayer::new(
        pack_matrix(&dense[0]),
        pack_matrix(&dense[1]),
        pack_matrix(&dense[2]),
        pack_matrix(&dense[3]),
        scales,
    )
    .expect("matching dims by construction");
    (layer, dense)
}

pub fn random_layer(rng: &mut ChaCha8Rng, n: usize, m: usize) -> WidelyLinearLayer {
    random_layer_with_dense(rng, n, m).0
}

/// Random layer whose scales fit the two-scale file header exactly.
pub fn random_file_layer(rng: &mut ChaCha8Rng, n: usize, m: usize) -> WidelyLinearLayer {
    let scales = random_scales_two(rng);
    WidelyLinearLayer::new(
        random_packed(rng, n, m),
        random_packed(rng, n, m),
        random_packed(rng, n, m),
        random_packed(rng, n, m),
        scales,
    )
    .expect("matching dims by construction")
}

/// Activation pair uniform in [-1, 1], zero-padded to the layer width.
pub fn random_activations(rng: &mut ChaCha8Rng, layer: &WidelyLinearLayer) -> ActivationPair {
    let m = layer.m_logical();
    let re: Vec<f32> = (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let im: Vec<f32> = (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    ActivationPair::from_logical(&re, &im, layer.m_padded()).expect("padded length is valid")
}

/// Real-only activation pair (`x_im = 0`) uniform in [-1, 1].
pub fn random_real_activations(rng: &mut ChaCha8Rng, layer: &WidelyLinearLayer) -> ActivationPair {
    let m = layer.m_logical();
    let re: Vec<f32> = (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    ActivationPair::from_real(&re, layer.m_padded()).expect("padded length is valid")
}

/// Dense f32 matrix or vector entries uniform in [-1, 1].
pub fn random_f32(rng: &mut ChaCha8Rng, len: usize) -> Vec<f32> {
    (0..len).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

/// Random transformer block at the given dimensions.
pub fn random_block(rng: &mut ChaCha8Rng, d_model: usize, d_ff: usize) -> BlockWeights {
    let mut layer = |n, m| {
        let scales = random_scales(rng);
        WidelyLinearLayer::new(
            random_packed(rng, n, m),
            random_packed(rng, n, m),
            random_packed(rng, n, m),
            random_packed(rng, n, m),
            scales,
        )
        .expect("matching dims by construction")
    };
    let qkv = layer(3 * d_model, d_model);
    let o = layer(d_model, d_model);
    let gate_up = layer(2 * d_ff, d_model);
    let down = layer(d_model, d_ff);
    let mut rng2 = rng.clone();
    let gamma_attn = (0..d_model).map(|_| rng2.gen_range(0.5..=1.5)).collect();
    let gamma_mlp = (0..d_model).map(|_| rng2.gen_range(0.5..=1.5)).collect();
    BlockWeights::new(qkv, o, gate_up, down, gamma_attn, gamma_mlp)
        .expect("consistent dims by construction")
}

/// Real activation vector for a block input, uniform in [-1, 1].
pub fn random_block_input(rng: &mut ChaCha8Rng, d_model: usize) -> ActivationPair {
    let re = random_f32(rng, d_model);
    ActivationPair::from_real(&re, pad_to_slots(d_model)).expect("padded length is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_layer() {
        let a = random_layer(&mut rng(42), 8, 32);
        let b = random_layer(&mut rng(42), 8, 32);
        assert_eq!(a.u_re().words(), b.u_re().words());
        assert_eq!(a.w_im().words(), b.w_im().words());
        assert_eq!(a.scales(), b.scales());
    }

    #[test]
    fn different_seeds_differ() {
        let a = random_layer(&mut rng(1), 8, 32);
        let b = random_layer(&mut rng(2), 8, 32);
        assert_ne!(a.u_re().words(), b.u_re().words());
    }

    #[test]
    fn dense_matches_packed() {
        let (layer, dense) = random_layer_with_dense(&mut rng(7), 6, 20);
        assert_eq!(layer.u_re().to_dense().unwrap(), dense[0]);
        assert_eq!(layer.w_im().to_dense().unwrap(), dense[3]);
    }

    #[test]
    fn activations_respect_padding() {
        let layer = random_layer(&mut rng(3), 4, 20);
        let x = random_activations(&mut rng(4), &layer);
        assert_eq!(x.padded_len(), 32);
        assert!(x.x_re()[20..].iter().all(|&v| v == 0.0));
        assert!(x.x_im()[20..].iter().all(|&v| v == 0.0));
    }
}
