//! FP32 dense GEMV, the timing baseline.

use super::{dim_err, KernelError};

/// `y[i] = sum_j a[i*m + j] * x[j]`, accumulated left-to-right in f32.
///
/// Canonical-order scalar loop; this is the baseline the ternary kernels are
/// benchmarked against, not a correctness oracle.
pub fn dense_gemv_f32(a: &[f32], n: usize, m: usize, x: &[f32]) -> Result<Vec<f32>, KernelError> {
    if a.len() != n * m {
        return Err(dim_err(format!(
            "matrix has {} entries, expected {}x{}",
            a.len(),
            n,
            m
        )));
    }
    if x.len() != m {
        return Err(dim_err(format!(
            "vector length {} != input dimension {}",
            x.len(),
            m
        )));
    }
    let mut y = Vec::with_capacity(n);
    for row in a.chunks_exact(m) {
        let mut acc = 0.0f32;
        for (w, xv) in row.iter().zip(x) {
            acc += w * xv;
        }
        y.push(acc);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix_gives_zero() {
        let y = dense_gemv_f32(&[0.0; 12], 3, 4, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(y, vec![0.0; 3]);
    }

    #[test]
    fn identity_passes_through() {
        let a = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let x = [2.5, -1.0, 4.0];
        assert_eq!(dense_gemv_f32(&a, 3, 3, &x).unwrap(), x.to_vec());
    }

    #[test]
    fn hand_computed_3x3() {
        let a = [1.0, 2.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 3.0];
        let y = dense_gemv_f32(&a, 3, 3, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(y, vec![3.0, 1.0, 3.0]);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        assert!(dense_gemv_f32(&[0.0; 6], 2, 3, &[0.0; 2]).is_err());
        assert!(dense_gemv_f32(&[0.0; 5], 2, 3, &[0.0; 3]).is_err());
    }
}
