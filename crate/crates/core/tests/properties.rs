//! Property tests for the encoding, kernel, format, and statistics invariants.

use proptest::prelude::*;
use ternfuse::bench::compute_stats;
use ternfuse::io::write_layer;
use ternfuse::kernels::{fused_widely_linear, ActivationPair, WidelyLinearLayer};
use ternfuse::matrix::{pack_matrix, pad_to_slots, DenseTernaryMatrix, ScaleSet};
use ternfuse::parallel::{parallel_fused, partition_rows};
use ternfuse::ternary::{
    decode_masks, decode_masks_portable, pack_slots, unpack_slots, PackedWord, TernaryWeight,
};

fn trit() -> impl Strategy<Value = i8> {
    prop_oneof![Just(-1i8), Just(0i8), Just(1i8)]
}

fn trit_block() -> impl Strategy<Value = [i8; 16]> {
    prop::array::uniform16(trit())
}

proptest! {
    #[test]
    fn roundtrip_pack_unpack(values in trit_block()) {
        let t = values.map(|v| TernaryWeight::new(v).unwrap());
        prop_assert_eq!(unpack_slots(pack_slots(&t)).unwrap(), t);
    }

    #[test]
    fn masks_select_signs(values in trit_block()) {
        let t = values.map(|v| TernaryWeight::new(v).unwrap());
        let masks = decode_masks(pack_slots(&t));
        for (k, v) in values.iter().enumerate() {
            prop_assert_eq!(masks.k_pos >> k & 1 == 1, *v == 1);
            prop_assert_eq!(masks.k_neg >> k & 1 == 1, *v == -1);
        }
    }

    #[test]
    fn masks_disjoint(values in trit_block()) {
        let t = values.map(|v| TernaryWeight::new(v).unwrap());
        let masks = decode_masks(pack_slots(&t));
        prop_assert_eq!(masks.k_pos & masks.k_neg, 0);
    }

    #[test]
    fn decode_paths_agree_on_arbitrary_words(bits in any::<u32>()) {
        let p = PackedWord::from_bits(bits);
        prop_assert_eq!(decode_masks(p), decode_masks_portable(p));
    }

    #[test]
    fn packed_size_law(n in 1usize..24, m in 1usize..80) {
        let packed = pack_matrix(&DenseTernaryMatrix::zeros(n, m));
        prop_assert_eq!(packed.packed_bytes(), n * m.div_ceil(16) * 4);
        prop_assert_eq!(packed.m_padded() % 16, 0);
        prop_assert!(packed.m_padded() >= m);
    }

    #[test]
    fn file_size_law(n in 1usize..20, m in 1usize..60, seed in any::<u64>()) {
        let layer = ternfuse::gen::random_file_layer(&mut ternfuse::gen::rng(seed), n, m);
        let mut bytes = Vec::new();
        let outcome = write_layer(&layer, &mut bytes).unwrap();
        let expected = 16 + 4 * n as u64 * m.div_ceil(16) as u64 * 4;
        prop_assert_eq!(outcome.bytes_written, expected);
        prop_assert_eq!(bytes.len() as u64, expected);
    }

    #[test]
    fn partition_covers_disjointly(n in 0usize..500, t in 1usize..40) {
        let partition = partition_rows(n, t);
        prop_assert_eq!(partition.worker_count(), t);
        let mut counts = vec![0u8; n];
        let mut max_len = 0usize;
        let mut min_len = usize::MAX;
        for range in partition.ranges() {
            max_len = max_len.max(range.len());
            min_len = min_len.min(range.len());
            for i in range.clone() {
                counts[i] += 1;
            }
        }
        prop_assert!(counts.iter().all(|&c| c == 1));
        prop_assert!(max_len - min_len <= 1);
    }

    #[test]
    fn stats_permutation_invariant(mut samples in prop::collection::vec(0.0f64..1e6, 1..40), salt in any::<u64>()) {
        let a = compute_stats(&samples).unwrap();
        // Deterministic shuffle keyed by salt.
        let len = samples.len();
        for i in (1..len).rev() {
            let j = (salt as usize).wrapping_mul(i).wrapping_add(i * 7) % (i + 1);
            samples.swap(i, j);
        }
        let b = compute_stats(&samples).unwrap();
        prop_assert_eq!(a.mean_us, b.mean_us);
        prop_assert_eq!(a.std_us, b.std_us);
        prop_assert_eq!(a.median_us, b.median_us);
    }
}

/// Extend a dense matrix with explicit zero columns.
fn widen(dense: &DenseTernaryMatrix, new_m: usize) -> DenseTernaryMatrix {
    DenseTernaryMatrix::from_fn(dense.n(), new_m, |i, j| {
        if j < dense.m() {
            dense.get(i, j)
        } else {
            0
        }
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn padding_neutrality(
        n in 1usize..10,
        m in 1usize..40,
        extra in 1usize..20,
        seed in any::<u64>(),
    ) {
        let mut rng = ternfuse::gen::rng(seed);
        let (layer, dense) = ternfuse::gen::random_layer_with_dense(&mut rng, n, m);
        let x = ternfuse::gen::random_activations(&mut rng, &layer);
        let y = fused_widely_linear(&layer, &x).unwrap();

        // Same logical content with extra zero weight columns and zero
        // activation entries appended.
        let m2 = m + extra;
        let wide = WidelyLinearLayer::new(
            pack_matrix(&widen(&dense[0], m2)),
            pack_matrix(&widen(&dense[1], m2)),
            pack_matrix(&widen(&dense[2], m2)),
            pack_matrix(&widen(&dense[3], m2)),
            layer.scales(),
        )
        .unwrap();
        let x2 = ActivationPair::from_logical(
            &x.x_re()[..m],
            &x.x_im()[..m],
            pad_to_slots(m2),
        )
        .unwrap();
        let y2 = fused_widely_linear(&wide, &x2).unwrap();
        for i in 0..n {
            prop_assert_eq!(y.y_re[i].to_bits(), y2.y_re[i].to_bits());
            prop_assert_eq!(y.y_im[i].to_bits(), y2.y_im[i].to_bits());
        }
    }

    #[test]
    fn worker_count_never_changes_bits(
        n in 1usize..40,
        m in 1usize..40,
        workers in 1usize..6,
        seed in any::<u64>(),
    ) {
        let mut rng = ternfuse::gen::rng(seed);
        let layer = ternfuse::gen::random_layer(&mut rng, n, m);
        let x = ternfuse::gen::random_activations(&mut rng, &layer);
        let serial = fused_widely_linear(&layer, &x).unwrap();
        let parallel = parallel_fused(&layer, &x, workers).unwrap();
        for i in 0..n {
            prop_assert_eq!(serial.y_re[i].to_bits(), parallel.y_re[i].to_bits());
            prop_assert_eq!(serial.y_im[i].to_bits(), parallel.y_im[i].to_bits());
        }
    }

    #[test]
    fn scale_set_never_constructs_non_finite(
        re in any::<f32>(),
        im in any::<f32>(),
    ) {
        match ScaleSet::new(re, im, re, im) {
            Ok(s) => {
                prop_assert!(s.s_u_re.is_finite() && s.s_u_im.is_finite());
            }
            Err(_) => {
                prop_assert!(!re.is_finite() || !im.is_finite());
            }
        }
    }
}
