//! Double-precision ground truth for the widely-linear combination.
//!
//! Evaluates the layer math term by term over dense ternary matrices with
//! canonical left-to-right summation in f64. Every production kernel is
//! checked against this path; it deliberately shares no code with them.

use super::{dim_err, ActivationPair, KernelError};
use crate::matrix::{DenseTernaryMatrix, ScaleSet};

/// Widely-linear outputs computed in binary64.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutput {
    pub y_re: Vec<f64>,
    pub y_im: Vec<f64>,
}

fn dot_f64(row: &[i8], x: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (&w, &xv) in row.iter().zip(x) {
        acc += w as f64 * xv as f64;
    }
    acc
}

/// Direct evaluation of
///
/// ```text
/// y_re = s_u_re*(U_re x_re) - s_u_im*(U_im x_im) + s_w_re*(W_re x_re) + s_w_im*(W_im x_im)
/// y_im = s_u_re*(U_re x_im) + s_u_im*(U_im x_re) + s_w_re*(W_re x_im) - s_w_im*(W_im x_re)
/// ```
///
/// over the logical (unpadded) input dimension.
pub fn oracle_widely_linear(
    u_re: &DenseTernaryMatrix,
    u_im: &DenseTernaryMatrix,
    w_re: &DenseTernaryMatrix,
    w_im: &DenseTernaryMatrix,
    scales: ScaleSet,
    x: &ActivationPair,
) -> Result<OracleOutput, KernelError> {
    let (n, m) = (u_re.n(), u_re.m());
    for (name, mat) in [("u_im", u_im), ("w_re", w_re), ("w_im", w_im)] {
        if (mat.n(), mat.m()) != (n, m) {
            return Err(dim_err(format!(
                "{} is {}x{}, expected {}x{}",
                name,
                mat.n(),
                mat.m(),
                n,
                m
            )));
        }
    }
    if x.padded_len() < m {
        return Err(dim_err(format!(
            "activation length {} < input dimension {}",
            x.padded_len(),
            m
        )));
    }
    let x_re = &x.x_re()[..m];
    let x_im = &x.x_im()[..m];
    let s_u_re = scales.s_u_re as f64;
    let s_u_im = scales.s_u_im as f64;
    let s_w_re = scales.s_w_re as f64;
    let s_w_im = scales.s_w_im as f64;

    let mut y_re = Vec::with_capacity(n);
    let mut y_im = Vec::with_capacity(n);
    for i in 0..n {
        let t1 = dot_f64(u_re.row(i), x_re);
        let t2 = dot_f64(u_im.row(i), x_im);
        let t3 = dot_f64(w_re.row(i), x_re);
        let t4 = dot_f64(w_im.row(i), x_im);
        y_re.push(s_u_re * t1 - s_u_im * t2 + s_w_re * t3 + s_w_im * t4);

        let g1 = dot_f64(u_re.row(i), x_im);
        let g2 = dot_f64(u_im.row(i), x_re);
        let g3 = dot_f64(w_re.row(i), x_im);
        let g4 = dot_f64(w_im.row(i), x_re);
        y_im.push(s_u_re * g1 + s_u_im * g2 + s_w_re * g3 - s_w_im * g4);
    }
    Ok(OracleOutput { y_re, y_im })
}

/// Relative L2 error of an f32 vector against an f64 reference, with the
/// denominator floored at 1e-30.
pub fn relative_l2_vec(actual: &[f32], oracle: &[f64]) -> f64 {
    assert_eq!(
        actual.len(),
        oracle.len(),
        "relative_l2_vec length mismatch"
    );
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (&a, &o) in actual.iter().zip(oracle) {
        let d = a as f64 - o;
        num += d * d;
        den += o * o;
    }
    num.sqrt() / den.sqrt().max(1e-30)
}

/// Relative L2 error over the concatenated (re, im) output pair.
pub fn relative_l2(actual_re: &[f32], actual_im: &[f32], oracle: &OracleOutput) -> f64 {
    assert_eq!(actual_re.len(), oracle.y_re.len());
    assert_eq!(actual_im.len(), oracle.y_im.len());
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (&a, &o) in actual_re.iter().zip(&oracle.y_re) {
        let d = a as f64 - o;
        num += d * d;
        den += o * o;
    }
    for (&a, &o) in actual_im.iter().zip(&oracle.y_im) {
        let d = a as f64 - o;
        num += d * d;
        den += o * o;
    }
    num.sqrt() / den.sqrt().max(1e-30)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: i8) -> DenseTernaryMatrix {
        DenseTernaryMatrix::new(1, 1, vec![v]).unwrap()
    }

    #[test]
    fn zero_matrices_give_zero() {
        let z = DenseTernaryMatrix::zeros(3, 4);
        let x = ActivationPair::from_logical(&[1.0; 4], &[2.0; 4], 16).unwrap();
        let y = oracle_widely_linear(&z, &z, &z, &z, ScaleSet::UNIT, &x).unwrap();
        assert_eq!(y.y_re, vec![0.0; 3]);
        assert_eq!(y.y_im, vec![0.0; 3]);
    }

    #[test]
    fn hand_computed_1x1() {
        let x = ActivationPair::from_logical(&[2.0], &[3.0], 16).unwrap();
        let y = oracle_widely_linear(
            &single(1),
            &single(-1),
            &single(1),
            &single(1),
            ScaleSet::UNIT,
            &x,
        )
        .unwrap();
        assert_eq!(y.y_re, vec![10.0]);
        assert_eq!(y.y_im, vec![2.0]);
    }

    #[test]
    fn real_only_degenerate_case() {
        // x_im = 0 and U_im = W_im = 0 gives y_re = (s_u_re + s_w_re) * (A x_re)
        // when U_re = W_re = A, and y_im = s_u_re * (A * 0) ... = 0 only when the
        // imaginary path inputs vanish; here U_re = W_re = 0 as well for y_im = 0.
        let z = DenseTernaryMatrix::zeros(2, 3);
        let x = ActivationPair::from_logical(&[1.0, -2.0, 0.5], &[0.0; 3], 16).unwrap();
        let y = oracle_widely_linear(&z, &z, &z, &z, ScaleSet::UNIT, &x).unwrap();
        assert_eq!(y.y_re, vec![0.0; 2]);
        assert_eq!(y.y_im, vec![0.0; 2]);

        let a = DenseTernaryMatrix::new(2, 3, vec![1, 0, -1, 0, 1, 1]).unwrap();
        let zero_im = DenseTernaryMatrix::zeros(2, 3);
        let s = ScaleSet::new(0.5, 0.0, 1.5, 0.0).unwrap();
        let y = oracle_widely_linear(&a, &zero_im, &a, &zero_im, s, &x).unwrap();
        for i in 0..2 {
            let dot: f64 = a
                .row(i)
                .iter()
                .zip(x.x_re())
                .map(|(&w, &v)| w as f64 * v as f64)
                .sum();
            assert_eq!(y.y_re[i], 2.0 * dot);
            assert_eq!(y.y_im[i], 0.0);
        }
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let a = DenseTernaryMatrix::zeros(2, 3);
        let b = DenseTernaryMatrix::zeros(2, 4);
        let x = ActivationPair::zeros(16);
        assert!(oracle_widely_linear(&a, &b, &a, &a, ScaleSet::UNIT, &x).is_err());
    }

    #[test]
    fn relative_l2_floors_denominator() {
        let err = relative_l2_vec(&[1e-6], &[0.0]);
        assert!(err.is_finite());
        assert!(err > 0.0);
    }
}
