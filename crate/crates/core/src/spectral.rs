//! Exact DFT, FFT acceleration, and circulant-algebra primitives.
//!
//! Sign convention (load-bearing, do not change casually): the forward
//! transform is
//!
//! ```text
//! X(k) = sum_j x_j * exp(+2*pi*i*j*k/B)
//! ```
//!
//! and the inverse carries `exp(-2*pi*i*j*k/B)` together with the `1/B`
//! factor, so `idft(dft(x)) == x`. With this choice the eigenvalues of a
//! circulant matrix are exactly `dft(first column)`, and the weight-gradient
//! cross-correlation identity `corr(u, v) = ifft(conj(fft(u)) * fft(v))`
//! holds as written; flipping the sign would silently conjugate that
//! identity.
//!
//! Power-of-two lengths take the radix-2 path; everything else falls back to
//! the direct O(B^2) transform, which is plenty for the block sizes used
//! here (B <= 16).

use crate::error::{Error, Result};
use crate::linalg::Mat;

// ---------------------------------------------------------------------------
// Complex scalar
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    pub fn from_re(re: f64) -> Self {
        Complex { re, im: 0.0 }
    }

    /// exp(i * theta)
    pub fn cis(theta: f64) -> Self {
        Complex {
            re: theta.cos(),
            im: theta.sin(),
        }
    }

    pub fn conj(self) -> Self {
        Complex {
            re: self.re,
            im: -self.im,
        }
    }

    pub fn abs_sq(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn abs(self) -> f64 {
        self.abs_sq().sqrt()
    }

    pub fn scale(self, s: f64) -> Self {
        Complex {
            re: self.re * s,
            im: self.im * s,
        }
    }
}

impl std::ops::Add for Complex {
    type Output = Complex;
    fn add(self, rhs: Complex) -> Complex {
        Complex::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl std::ops::AddAssign for Complex {
    fn add_assign(&mut self, rhs: Complex) {
        self.re += rhs.re;
        self.im += rhs.im;
    }
}

impl std::ops::Sub for Complex {
    type Output = Complex;
    fn sub(self, rhs: Complex) -> Complex {
        Complex::new(self.re - rhs.re, self.im - rhs.im)
    }
}

impl std::ops::Mul for Complex {
    type Output = Complex;
    fn mul(self, rhs: Complex) -> Complex {
        Complex::new(
            self.re * rhs.re - self.im * rhs.im,
            self.re * rhs.im + self.im * rhs.re,
        )
    }
}

pub fn to_complex(x: &[f64]) -> Vec<Complex> {
    x.iter().map(|&v| Complex::from_re(v)).collect()
}

// ---------------------------------------------------------------------------
// Direct transforms (reference path)
// ---------------------------------------------------------------------------

fn check_nonempty(len: usize) -> Result<()> {
    if len == 0 {
        return Err(Error::invalid("transform input must be non-empty"));
    }
    Ok(())
}

/// Direct O(B^2) forward DFT, `X(k) = sum_j x_j e^{+2 pi i jk/B}`.
pub fn dft(x: &[Complex]) -> Result<Vec<Complex>> {
    check_nonempty(x.len())?;
    let b = x.len();
    let mut out = vec![Complex::ZERO; b];
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = Complex::ZERO;
        for (j, &v) in x.iter().enumerate() {
            let theta = 2.0 * std::f64::consts::PI * (j * k % b) as f64 / b as f64;
            acc += v * Complex::cis(theta);
        }
        *o = acc;
    }
    Ok(out)
}

/// Direct inverse DFT with the 1/B normalization.
pub fn idft(x: &[Complex]) -> Result<Vec<Complex>> {
    check_nonempty(x.len())?;
    let b = x.len();
    let mut out = vec![Complex::ZERO; b];
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = Complex::ZERO;
        for (j, &v) in x.iter().enumerate() {
            let theta = -2.0 * std::f64::consts::PI * (j * k % b) as f64 / b as f64;
            acc += v * Complex::cis(theta);
        }
        *o = acc.scale(1.0 / b as f64);
    }
    Ok(out)
}

pub fn dft_real(x: &[f64]) -> Result<Vec<Complex>> {
    dft(&to_complex(x))
}

// ---------------------------------------------------------------------------
// FFT (radix-2 with direct fallback)
// ---------------------------------------------------------------------------

/// In-place radix-2 butterfly pass; `sign` is +1 forward, -1 inverse.
fn fft_pow2_in_place(data: &mut [Complex], sign: f64) {
    let n = data.len();
    debug_assert!(n.is_power_of_two());

    // bit-reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j ^= bit;
        if i < j {
            data.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let base = sign * 2.0 * std::f64::consts::PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = Complex::cis(base * k as f64);
                let u = data[start + k];
                let v = w * data[start + k + half];
                data[start + k] = u + v;
                data[start + k + half] = u - v;
            }
        }
        len <<= 1;
    }
}

/// Fast forward transform; agrees with `dft` to ~1e-15 relative.
pub fn fft(x: &[Complex]) -> Result<Vec<Complex>> {
    check_nonempty(x.len())?;
    if x.len().is_power_of_two() {
        let mut data = x.to_vec();
        fft_pow2_in_place(&mut data, 1.0);
        Ok(data)
    } else {
        dft(x)
    }
}

/// Fast inverse transform; `ifft(fft(x)) == x`.
pub fn ifft(x: &[Complex]) -> Result<Vec<Complex>> {
    check_nonempty(x.len())?;
    if x.len().is_power_of_two() {
        let mut data = x.to_vec();
        fft_pow2_in_place(&mut data, -1.0);
        let scale = 1.0 / data.len() as f64;
        for v in data.iter_mut() {
            *v = v.scale(scale);
        }
        Ok(data)
    } else {
        idft(x)
    }
}

pub fn fft_real(x: &[f64]) -> Result<Vec<Complex>> {
    fft(&to_complex(x))
}

// ---------------------------------------------------------------------------
// Circulant algebra
// ---------------------------------------------------------------------------

fn check_equal_len(a: &[f64], b: &[f64], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "{what}: length mismatch {} vs {}",
            a.len(),
            b.len()
        )));
    }
    check_nonempty(a.len())
}

/// Circular convolution `y_k = sum_l c_((k-l) mod B) x_l` via FFT.
///
/// This is multiplication by the circulant matrix whose first column is `c`.
pub fn circulant_matvec(c: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_equal_len(c, x, "circulant_matvec")?;
    let fc = fft_real(c)?;
    let fx = fft_real(x)?;
    let prod: Vec<Complex> = fc.iter().zip(&fx).map(|(&a, &b)| a * b).collect();
    Ok(ifft(&prod)?.into_iter().map(|v| v.re).collect())
}

/// Direct O(B^2) reference for `circulant_matvec`, kept for oracle tests.
pub fn circulant_matvec_direct(c: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_equal_len(c, x, "circulant_matvec")?;
    let b = c.len();
    let mut y = vec![0.0; b];
    for (k, yk) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (l, &xl) in x.iter().enumerate() {
            acc += c[(b + k - l) % b] * xl;
        }
        *yk = acc;
    }
    Ok(y)
}

/// Circular cross-correlation `r_m = sum_k u_k v_((k+m) mod B)`,
/// equal to `ifft(conj(fft(u)) * fft(v))` under this module's convention.
pub fn circulant_corr(u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_equal_len(u, v, "circulant_corr")?;
    let fu = fft_real(u)?;
    let fv = fft_real(v)?;
    let prod: Vec<Complex> = fu.iter().zip(&fv).map(|(&a, &b)| a.conj() * b).collect();
    Ok(ifft(&prod)?.into_iter().map(|v| v.re).collect())
}

/// Direct O(B^2) reference for `circulant_corr`.
pub fn circulant_corr_direct(u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_equal_len(u, v, "circulant_corr")?;
    let b = u.len();
    let mut r = vec![0.0; b];
    for (m, rm) in r.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, &uk) in u.iter().enumerate() {
            acc += uk * v[(k + m) % b];
        }
        *rm = acc;
    }
    Ok(r)
}

/// Index-reversed coefficients, `out_m = c_((B-m) mod B)`; `out_0 = c_0`.
///
/// Multiplying by the circulant of the reversed coefficients is
/// multiplication by the transpose of the original circulant.
pub fn reverse_coeffs(c: &[f64]) -> Vec<f64> {
    let b = c.len();
    (0..b).map(|m| c[(b - m) % b]).collect()
}

/// Materialize the full B x B circulant matrix, entry (k, l) = c_((k-l) mod B).
/// Test and oracle utility.
pub fn materialize_circulant(c: &[f64]) -> Mat {
    let b = c.len();
    let mut m = Mat::zeros(b, b);
    for k in 0..b {
        for l in 0..b {
            m.set(k, l, c[(b + k - l) % b]);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn max_abs_diff(a: &[Complex], b: &[Complex]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (*x - *y).abs())
            .fold(0.0, f64::max)
    }

    fn max_mag(a: &[Complex]) -> f64 {
        a.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    #[test]
    fn dft_impulse_has_flat_spectrum() {
        let x = [1.0, 0.0, 0.0, 0.0];
        let out = dft_real(&x).unwrap();
        for v in out {
            assert!((v.re - 1.0).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
    }

    #[test]
    fn dft_symmetric_real_input() {
        // x symmetric => spectrum real; values from the direct summation.
        let out = dft_real(&[2.0, 1.0, 0.0, 1.0]).unwrap();
        let expected = [4.0, 2.0, 0.0, 2.0];
        for (v, e) in out.iter().zip(expected) {
            assert!((v.re - e).abs() < 1e-12, "{v:?} vs {e}");
            assert!(v.im.abs() < 1e-12);
        }
    }

    #[test]
    fn dft_constant_signal_is_dc_only() {
        let a = 0.7;
        let out = dft_real(&[a; 4]).unwrap();
        assert!((out[0].re - 4.0 * a).abs() < 1e-12);
        for v in &out[1..] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn dft_empty_input_rejected() {
        assert!(dft(&[]).is_err());
        assert!(fft(&[]).is_err());
        assert!(ifft(&[]).is_err());
    }

    #[test]
    fn dft_length_one_is_identity() {
        let out = dft_real(&[3.25]).unwrap();
        assert_eq!(out[0], Complex::from_re(3.25));
        let back = idft(&out).unwrap();
        assert!((back[0].re - 3.25).abs() < 1e-15);
    }

    #[test]
    fn fft_matches_dft_pow2_and_odd() {
        let mut rng = Rng::from_seed(1);
        for b in [3usize, 8] {
            let x: Vec<f64> = (0..b).map(|_| rng.normal()).collect();
            let fast = fft_real(&x).unwrap();
            let slow = dft_real(&x).unwrap();
            let rel = max_abs_diff(&fast, &slow) / max_mag(&slow);
            assert!(rel <= 1e-10, "B={b} rel={rel}");
        }
    }

    #[test]
    fn ifft_fft_roundtrip() {
        let mut rng = Rng::from_seed(2);
        for b in [1usize, 2, 3, 4, 5, 7, 8, 16] {
            let x: Vec<f64> = (0..b).map(|_| rng.normal()).collect();
            let back = ifft(&fft_real(&x).unwrap()).unwrap();
            for (orig, got) in x.iter().zip(&back) {
                assert!((orig - got.re).abs() < 1e-10 && got.im.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn parseval_identity() {
        // sum_k |X(k)|^2 = B * sum_j x_j^2 under the unscaled forward DFT.
        let mut rng = Rng::from_seed(3);
        for b in 1..=16usize {
            let x: Vec<f64> = (0..b).map(|_| rng.normal()).collect();
            let spec = fft_real(&x).unwrap();
            let lhs: f64 = spec.iter().map(|v| v.abs_sq()).sum();
            let rhs: f64 = b as f64 * x.iter().map(|v| v * v).sum::<f64>();
            assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0), "B={b}");
        }
    }

    #[test]
    fn circulant_identity_block() {
        let c = [1.0, 0.0, 0.0, 0.0];
        let x = [0.3, -1.2, 4.0, 0.5];
        let y = circulant_matvec(&c, &x).unwrap();
        for (a, b) in y.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn circulant_shift_block() {
        // c = e_1 performs a one-step cyclic shift.
        let c = [0.0, 1.0, 0.0, 0.0];
        let y = circulant_matvec(&c, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let expected = [4.0, 1.0, 2.0, 3.0];
        for (a, b) in y.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn circulant_matvec_fft_equals_direct() {
        let mut rng = Rng::from_seed(4);
        for b in [1usize, 2, 3, 4, 5, 7, 8, 16] {
            let c: Vec<f64> = (0..b).map(|_| rng.normal()).collect();
            let x: Vec<f64> = (0..b).map(|_| rng.normal()).collect();
            let fast = circulant_matvec(&c, &x).unwrap();
            let slow = circulant_matvec_direct(&c, &x).unwrap();
            let scale = slow.iter().map(|v| v.abs()).fold(1e-30, f64::max);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() / scale <= 1e-10);
            }
        }
    }

    #[test]
    fn circulant_matvec_length_mismatch() {
        assert!(circulant_matvec(&[1.0, 2.0], &[1.0]).is_err());
        assert!(circulant_corr(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn corr_with_impulse_recovers_signal() {
        let u = [1.0, 0.0, 0.0, 0.0];
        let v = [0.5, -2.0, 3.0, 7.0];
        let r = circulant_corr(&u, &v).unwrap();
        for (a, b) in r.iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn corr_constant_autocorrelation() {
        let u = [1.0, 1.0, 1.0, 1.0];
        let r = circulant_corr(&u, &u).unwrap();
        for a in r {
            assert!((a - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn corr_fft_equals_direct() {
        let mut rng = Rng::from_seed(5);
        for b in [2usize, 3, 4, 8] {
            let u: Vec<f64> = (0..b).map(|_| rng.normal()).collect();
            let v: Vec<f64> = (0..b).map(|_| rng.normal()).collect();
            let fast = circulant_corr(&u, &v).unwrap();
            let slow = circulant_corr_direct(&u, &v).unwrap();
            let scale = slow.iter().map(|x| x.abs()).fold(1e-30, f64::max);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() / scale <= 1e-10);
            }
        }
    }

    #[test]
    fn reverse_coeffs_index_formula() {
        let c = [10.0, 11.0, 12.0, 13.0];
        assert_eq!(reverse_coeffs(&c), vec![10.0, 13.0, 12.0, 11.0]);
        assert_eq!(reverse_coeffs(&[5.0]), vec![5.0]);
    }

    #[test]
    fn reverse_is_involution() {
        let mut rng = Rng::from_seed(6);
        for b in [1usize, 2, 5, 8] {
            let c: Vec<f64> = (0..b).map(|_| rng.normal()).collect();
            assert_eq!(reverse_coeffs(&reverse_coeffs(&c)), c);
        }
    }

    #[test]
    fn reversed_coeffs_give_transpose_action() {
        let mut rng = Rng::from_seed(7);
        for b in [2usize, 3, 4, 8] {
            let c: Vec<f64> = (0..b).map(|_| rng.normal()).collect();
            let x: Vec<f64> = (0..b).map(|_| rng.normal()).collect();
            let via_reverse = circulant_matvec(&reverse_coeffs(&c), &x).unwrap();
            let mt = materialize_circulant(&c).transpose();
            let via_matrix = mt.matvec(&x);
            for (a, mref) in via_reverse.iter().zip(&via_matrix) {
                assert!((a - mref).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn materialize_identity_and_b2() {
        let id = materialize_circulant(&[1.0, 0.0, 0.0]);
        for k in 0..3 {
            for l in 0..3 {
                let want = if k == l { 1.0 } else { 0.0 };
                assert_eq!(id.get(k, l), want);
            }
        }
        let m = materialize_circulant(&[3.0, 4.0]);
        assert_eq!(
            (m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1)),
            (3.0, 4.0, 4.0, 3.0)
        );
    }

    #[test]
    fn convolution_theorem_all_block_sizes() {
        let mut rng = Rng::from_seed(8);
        for b in [1usize, 2, 3, 4, 5, 7, 8, 16] {
            let c: Vec<f64> = (0..b).map(|_| rng.normal()).collect();
            let x: Vec<f64> = (0..b).map(|_| rng.normal()).collect();
            let lhs = circulant_matvec(&c, &x).unwrap();
            let rhs = circulant_matvec_direct(&c, &x).unwrap();
            let scale = rhs.iter().map(|v| v.abs()).fold(1e-30, f64::max);
            for (a, b) in lhs.iter().zip(&rhs) {
                assert!((a - b).abs() / scale <= 1e-10);
            }
        }
    }

    #[test]
    fn circulant_eigenvectors_are_conjugate_dft_columns() {
        // C f_k = dft(c)_k f_k with f_k(j) = exp(-2 pi i jk / B); the
        // conjugation matches the e^{+} forward convention.
        let mut rng = Rng::from_seed(9);
        for b in [2usize, 3, 4, 8] {
            let c: Vec<f64> = (0..b).map(|_| rng.normal()).collect();
            let mat = materialize_circulant(&c);
            let lambda = dft_real(&c).unwrap();
            #[allow(clippy::needless_range_loop)]
            for k in 0..b {
                let fk: Vec<Complex> = (0..b)
                    .map(|j| {
                        Complex::cis(-2.0 * std::f64::consts::PI * (j * k % b) as f64 / b as f64)
                    })
                    .collect();
                for row in 0..b {
                    let mut acc = Complex::ZERO;
                    for (col, &fv) in fk.iter().enumerate() {
                        acc += fv.scale(mat.get(row, col));
                    }
                    let want = lambda[k] * fk[row];
                    assert!((acc - want).abs() < 1e-8, "B={b} k={k} row={row}");
                }
            }
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn signal() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(-100.0..100.0f64, 1..=16)
        }

        proptest! {
            #[test]
            fn roundtrip_recovers_signal(x in signal()) {
                let back = ifft(&fft_real(&x).unwrap()).unwrap();
                let scale = x.iter().map(|v| v.abs()).fold(1.0f64, f64::max);
                for (orig, got) in x.iter().zip(&back) {
                    prop_assert!((orig - got.re).abs() <= 1e-10 * scale);
                    prop_assert!(got.im.abs() <= 1e-10 * scale);
                }
            }

            #[test]
            fn parseval_holds(x in signal()) {
                let spec = fft_real(&x).unwrap();
                let lhs: f64 = spec.iter().map(|v| v.abs_sq()).sum();
                let rhs: f64 = x.len() as f64 * x.iter().map(|v| v * v).sum::<f64>();
                prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
            }

            #[test]
            fn convolution_theorem_holds(pair in signal().prop_flat_map(|c| {
                let b = c.len();
                (Just(c), prop::collection::vec(-100.0..100.0f64, b..=b))
            })) {
                let (c, x) = pair;
                let fast = circulant_matvec(&c, &x).unwrap();
                let slow = circulant_matvec_direct(&c, &x).unwrap();
                let scale = slow.iter().map(|v| v.abs()).fold(1.0f64, f64::max);
                for (a, b) in fast.iter().zip(&slow) {
                    prop_assert!((a - b).abs() <= 1e-10 * scale);
                }
            }

            #[test]
            fn reverse_involution(c in signal()) {
                prop_assert_eq!(reverse_coeffs(&reverse_coeffs(&c)), c);
            }
        }
    }

    #[test]
    fn materialized_eigenvalues_match_dft_magnitudes() {
        // |eigenvalues| of the materialized circulant == |dft(c)| as multisets;
        // checked through the symmetric eigensolver on C^T C, whose
        // eigenvalues are |dft(c)|^2.
        let mut rng = Rng::from_seed(10);
        for b in [2usize, 4, 8] {
            let c: Vec<f64> = (0..b).map(|_| rng.normal()).collect();
            let m = materialize_circulant(&c);
            let gram = m.transpose().matmul(&m);
            let mut eig = crate::linalg::jacobi_eigenvalues(&gram).unwrap();
            let mut want: Vec<f64> = dft_real(&c).unwrap().iter().map(|v| v.abs_sq()).collect();
            eig.sort_by(f64::total_cmp);
            want.sort_by(f64::total_cmp);
            for (a, w) in eig.iter().zip(&want) {
                assert!((a - w).abs() < 1e-8 * w.abs().max(1.0), "B={b}");
            }
        }
    }
}
