//! Radix-2 FFT, generic over the scalar type so dual numbers propagate
//! through spectral derivatives unchanged (the transform is linear; all
//! twiddles are f64 constants).

use crate::numerics::dual::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex<S> {
    pub re: S,
    pub im: S,
}

impl<S: Scalar> Complex<S> {
    #[inline]
    pub fn new(re: S, im: S) -> Self {
        Complex { re, im }
    }

    pub fn zero() -> Self {
        Complex {
            re: S::from_f64(0.0),
            im: S::from_f64(0.0),
        }
    }

    pub fn from_real(re: S) -> Self {
        Complex {
            re,
            im: S::from_f64(0.0),
        }
    }

    #[inline]
    pub fn add(self, o: Self) -> Self {
        Complex::new(self.re + o.re, self.im + o.im)
    }

    #[inline]
    pub fn sub(self, o: Self) -> Self {
        Complex::new(self.re - o.re, self.im - o.im)
    }

    /// Multiply by a constant complex twiddle (wr + i·wi).
    #[inline]
    pub fn mul_twiddle(self, wr: f64, wi: f64) -> Self {
        Complex::new(
            self.re.scale(wr) - self.im.scale(wi),
            self.re.scale(wi) + self.im.scale(wr),
        )
    }

    /// Multiply by a real constant.
    #[inline]
    pub fn scale(self, c: f64) -> Self {
        Complex::new(self.re.scale(c), self.im.scale(c))
    }

    /// Multiply by i·c.
    #[inline]
    pub fn mul_i_scaled(self, c: f64) -> Self {
        Complex::new(-self.im.scale(c), self.re.scale(c))
    }
}

fn bit_reverse_permute<S: Copy>(buf: &mut [Complex<S>]) {
    let n = buf.len();
    let mut j = 0usize;
    for i in 0..n {
        if i < j {
            buf.swap(i, j);
        }
        let mut m = n >> 1;
        while m >= 1 && j & m != 0 {
            j ^= m;
            m >>= 1;
        }
        j |= m;
    }
}

/// In-place decimation-in-time FFT. `inverse` applies the conjugate
/// transform and the 1/n normalization. Length must be a power of two.
pub fn fft_in_place<S: Scalar>(buf: &mut [Complex<S>], inverse: bool) {
    let n = buf.len();
    assert!(n.is_power_of_two(), "fft length must be a power of two");
    bit_reverse_permute(buf);
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * std::f64::consts::PI / len as f64;
        let half = len / 2;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let wr = (ang * k as f64).cos();
                let wi = (ang * k as f64).sin();
                let u = buf[start + k];
                let t = buf[start + k + half].mul_twiddle(wr, wi);
                buf[start + k] = u.add(t);
                buf[start + k + half] = u.sub(t);
            }
        }
        len <<= 1;
    }
    if inverse {
        let inv = 1.0 / n as f64;
        for c in buf.iter_mut() {
            *c = c.scale(inv);
        }
    }
}

/// Forward FFT of a real signal.
pub fn fft_real<S: Scalar>(signal: &[S]) -> Vec<Complex<S>> {
    let mut buf: Vec<Complex<S>> = signal.iter().map(|&x| Complex::from_real(x)).collect();
    fft_in_place(&mut buf, false);
    buf
}

/// Inverse FFT, returning only the real parts.
pub fn ifft_real_part<S: Scalar>(spectrum: &[Complex<S>]) -> Vec<S> {
    let mut buf = spectrum.to_vec();
    fft_in_place(&mut buf, true);
    buf.into_iter().map(|c| c.re).collect()
}
