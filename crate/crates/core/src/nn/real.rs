use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point element type of the network: `f32` for training and
/// inference, `f64` for gradient checks.
pub trait Real:
    Float + NumAssign + FromPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    /// Type code used in model files.
    const DTYPE: u8;

    /// `C = alpha * op(A) * op(B) + beta * C`, all row-major. `op(A)` is
    /// `m x k` (stored `k x m` when `trans_a`), `op(B)` is `k x n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        trans_a: bool,
        trans_b: bool,
        m: usize,
        n: usize,
        k: usize,
        alpha: Self,
        a: &[Self],
        b: &[Self],
        beta: Self,
        c: &mut [Self],
    );

    fn tanh_in_place(xs: &mut [Self]);

    fn sigmoid_in_place(xs: &mut [Self]);

    fn write_le(self, out: &mut Vec<u8>);

    fn read_le(bytes: &[u8]) -> Self;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).unwrap()
    }
}

fn check_gemm<T>(trans_a: bool, m: usize, n: usize, k: usize, a: &[T], b: &[T], c: &[T]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm operand too small");
    let _ = trans_a;
}

/// Strides of a row-major operand, possibly transposed.
fn strides(trans: bool, cols_stored: usize) -> (isize, isize) {
    if trans {
        (1, cols_stored as isize)
    } else {
        (cols_stored as isize, 1)
    }
}

impl Real for f32 {
    const DTYPE: u8 = 1;

    fn gemm(ta: bool, tb: bool, m: usize, n: usize, k: usize, alpha: f32, a: &[f32], b: &[f32], beta: f32, c: &mut [f32]) {
        check_gemm(ta, m, n, k, a, b, c);
        if m == 0 || n == 0 {
            return;
        }
        let (rsa, csa) = strides(ta, if ta { m } else { k });
        let (rsb, csb) = strides(tb, if tb { k } else { n });
        // SAFETY: bounds checked above; strides describe the slices exactly.
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, alpha, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }

    fn tanh_in_place(xs: &mut [f32]) {
        for x in xs {
            *x = fast_tanh(*x);
        }
    }

    fn sigmoid_in_place(xs: &mut [f32]) {
        for x in xs {
            *x = 0.5 + 0.5 * fast_tanh(0.5 * *x);
        }
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> f32 {
        f32::from_le_bytes(bytes.try_into().unwrap())
    }
}

impl Real for f64 {
    const DTYPE: u8 = 2;

    fn gemm(ta: bool, tb: bool, m: usize, n: usize, k: usize, alpha: f64, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
        check_gemm(ta, m, n, k, a, b, c);
        if m == 0 || n == 0 {
            return;
        }
        let (rsa, csa) = strides(ta, if ta { m } else { k });
        let (rsb, csb) = strides(tb, if tb { k } else { n });
        // SAFETY: bounds checked above; strides describe the slices exactly.
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, alpha, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }

    fn tanh_in_place(xs: &mut [f64]) {
        for x in xs {
            *x = x.tanh();
        }
    }

    fn sigmoid_in_place(xs: &mut [f64]) {
        for x in xs {
            *x = 1.0 / (1.0 + (-*x).exp());
        }
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> f64 {
        f64::from_le_bytes(bytes.try_into().unwrap())
    }
}

/// Rational approximation of tanh, within a few ulp in single
/// precision and branch-free so loops over it vectorize.
#[inline(always)]
pub fn fast_tanh(x: f32) -> f32 {
    const CLAMP: f32 = 7.905_311;
    const A1: f32 = 4.893_524_6e-3;
    const A3: f32 = 6.372_619e-4;
    const A5: f32 = 1.485_722_4e-5;
    const A7: f32 = 5.122_297e-8;
    const A9: f32 = -8.604_671_5e-11;
    const A11: f32 = 2.000_188e-13;
    const A13: f32 = -2.760_768_5e-16;
    const B0: f32 = 4.893_525e-3;
    const B2: f32 = 2.268_434_6e-3;
    const B4: f32 = 1.185_347e-4;
    const B6: f32 = 1.198_258_4e-6;
    let x = x.clamp(-CLAMP, CLAMP);
    let x2 = x * x;
    let mut p = A13;
    p = p * x2 + A11;
    p = p * x2 + A9;
    p = p * x2 + A7;
    p = p * x2 + A5;
    p = p * x2 + A3;
    p = p * x2 + A1;
    p *= x;
    let mut q = B6;
    q = q * x2 + B4;
    q = q * x2 + B2;
    q = q * x2 + B0;
    p / q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_tanh_matches_std() {
        let mut worst = 0.0f64;
        for i in -20_000..=20_000 {
            let x = i as f32 * 1e-3;
            worst = worst.max((fast_tanh(x) as f64 - (x as f64).tanh()).abs());
        }
        assert!(worst < 5e-7, "{worst}");
        let mut s = [-3.0f32, 0.0, 3.0];
        f32::sigmoid_in_place(&mut s);
        for (got, x) in s.iter().zip([-3.0f64, 0.0, 3.0]) {
            assert!((*got as f64 - 1.0 / (1.0 + (-x).exp())).abs() < 1e-6);
        }
    }

    #[test]
    fn gemm_transposes() {
        // A = [[1,2,3],[4,5,6]], B = [[1,0],[0,1],[1,1]]
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut c = [0.0; 4];
        f64::gemm(false, false, 2, 2, 3, 1.0, &a, &b, 0.0, &mut c);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
        // A^T stored as 3x2, B^T stored as 2x3.
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let bt = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let mut d = [1.0; 4];
        f64::gemm(true, true, 2, 2, 3, 2.0, &at, &bt, 1.0, &mut d);
        assert_eq!(d, [9.0, 11.0, 21.0, 23.0]);
        let mut e = [0.0f32; 4];
        f32::gemm(false, true, 2, 2, 3, 1.0, &a.map(|x| x as f32), &bt.map(|x| x as f32), 0.0, &mut e);
        assert_eq!(e, [4.0, 5.0, 10.0, 11.0]);
    }
}
