//! Exact-length discrete Fourier transform.
//!
//! Power-of-two lengths use an iterative radix-2 kernel. Every other length
//! goes through Bluestein's chirp-z reformulation on top of that kernel, so
//! the result is the exact length-N DFT (no zero padding of the signal).
//! Very short transforms are evaluated directly.

use num_complex::Complex;

use crate::scalar::Real;

/// Lengths at or below this are evaluated with the direct sum.
const DIRECT_MAX: usize = 16;

/// Precomputed plan for a forward DFT of one fixed length.
#[derive(Debug, Clone)]
pub struct FftPlan<T> {
    len: usize,
    kind: PlanKind<T>,
}

#[derive(Debug, Clone)]
enum PlanKind<T> {
    Direct { twiddles: Vec<Complex<T>> },
    Radix2(Radix2<T>),
    Bluestein(Box<Bluestein<T>>),
}

impl<T: Real> FftPlan<T> {
    /// Plan a transform of `len` points. `len` must be non-zero.
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "transform length must be non-zero");
        let kind = if len <= DIRECT_MAX {
            PlanKind::Direct {
                twiddles: unit_roots(len, false),
            }
        } else if len.is_power_of_two() {
            PlanKind::Radix2(Radix2::new(len))
        } else {
            PlanKind::Bluestein(Box::new(Bluestein::new(len)))
        };
        Self { len, kind }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place forward transform, `A(k) = sum_n a(n) exp(-i 2 pi k n / N)`.
    pub fn forward(&self, buf: &mut [Complex<T>]) {
        assert_eq!(buf.len(), self.len, "buffer length differs from plan");
        match &self.kind {
            PlanKind::Direct { twiddles } => {
                let out = direct(buf, twiddles);
                buf.copy_from_slice(&out);
            }
            PlanKind::Radix2(r) => r.run(buf, false),
            PlanKind::Bluestein(b) => b.run(buf),
        }
    }
}

/// `exp(∓ i 2 pi j / n)` for j in 0..n, each evaluated from its own angle.
fn unit_roots<T: Real>(n: usize, inverse: bool) -> Vec<Complex<T>> {
    let sign = if inverse { 1.0 } else { -1.0 };
    (0..n)
        .map(|j| {
            let theta = sign * 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            Complex::new(T::lit(theta.cos()), T::lit(theta.sin()))
        })
        .collect()
}

fn direct<T: Real>(input: &[Complex<T>], roots: &[Complex<T>]) -> Vec<Complex<T>> {
    let n = input.len();
    (0..n)
        .map(|k| {
            let mut acc = Complex::new(T::zero(), T::zero());
            for (j, &x) in input.iter().enumerate() {
                acc += x * roots[(k * j) % n];
            }
            acc
        })
        .collect()
}

#[derive(Debug, Clone)]
struct Radix2<T> {
    len: usize,
    /// Forward roots exp(-i 2 pi j / len) for j < len / 2.
    roots: Vec<Complex<T>>,
    bitrev: Vec<usize>,
}

impl<T: Real> Radix2<T> {
    fn new(len: usize) -> Self {
        debug_assert!(len.is_power_of_two());
        let bits = len.trailing_zeros();
        let bitrev = (0..len)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        let mut roots = unit_roots(len, false);
        roots.truncate(len / 2);
        Self { len, roots, bitrev }
    }

    fn run(&self, buf: &mut [Complex<T>], inverse: bool) {
        let n = self.len;
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut half = 1;
        while half < n {
            let stride = n / (2 * half);
            for start in (0..n).step_by(2 * half) {
                for j in 0..half {
                    let mut w = self.roots[j * stride];
                    if inverse {
                        w = w.conj();
                    }
                    let a = buf[start + j];
                    let b = buf[start + j + half] * w;
                    buf[start + j] = a + b;
                    buf[start + j + half] = a - b;
                }
            }
            half *= 2;
        }
    }
}

/// Chirp-z evaluation of an arbitrary-length DFT as a circular convolution.
#[derive(Debug, Clone)]
struct Bluestein<T> {
    len: usize,
    /// exp(-i pi n^2 / N)
    chirp: Vec<Complex<T>>,
    /// Transform of the zero-extended conjugate chirp.
    kernel_hat: Vec<Complex<T>>,
    inner: Radix2<T>,
}

impl<T: Real> Bluestein<T> {
    fn new(len: usize) -> Self {
        let m = (2 * len - 1).next_power_of_two();
        let two_n = 2 * len as u128;
        // n^2 is reduced mod 2N before the angle is formed so large n stays exact.
        let chirp: Vec<Complex<T>> = (0..len)
            .map(|n| {
                let r = ((n as u128 * n as u128) % two_n) as f64;
                let theta = -std::f64::consts::PI * r / len as f64;
                Complex::new(T::lit(theta.cos()), T::lit(theta.sin()))
            })
            .collect();
        let inner = Radix2::new(m);
        let mut kernel = vec![Complex::new(T::zero(), T::zero()); m];
        kernel[0] = chirp[0].conj();
        for n in 1..len {
            kernel[n] = chirp[n].conj();
            kernel[m - n] = chirp[n].conj();
        }
        inner.run(&mut kernel, false);
        Self {
            len,
            chirp,
            kernel_hat: kernel,
            inner,
        }
    }

    fn run(&self, buf: &mut [Complex<T>]) {
        let m = self.inner.len;
        let mut work = vec![Complex::new(T::zero(), T::zero()); m];
        for n in 0..self.len {
            work[n] = buf[n] * self.chirp[n];
        }
        self.inner.run(&mut work, false);
        for (w, k) in work.iter_mut().zip(&self.kernel_hat) {
            *w *= *k;
        }
        self.inner.run(&mut work, true);
        let scale = T::one() / T::of_usize(m);
        for k in 0..self.len {
            buf[k] = work[k] * scale * self.chirp[k];
        }
    }
}

/// Inverse transform without the 1/N factor, used by the profile synthesizer.
pub(crate) fn inverse_unscaled_pow2<T: Real>(buf: &mut [Complex<T>]) {
    let r = Radix2::new(buf.len());
    r.run(buf, true);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[Complex<f64>]) -> Vec<Complex<f64>> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter().enumerate().fold(Complex::new(0.0, 0.0), |acc, (j, &v)| {
                    let th = -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
                    acc + v * Complex::new(th.cos(), th.sin())
                })
            })
            .collect()
    }

    fn check(n: usize) {
        let x: Vec<Complex<f64>> = (0..n)
            .map(|i| Complex::new(((i * 7 + 3) % 11) as f64 - 5.0, ((i * 5) % 3) as f64))
            .collect();
        let expect = naive(&x);
        let mut got = x.clone();
        FftPlan::new(n).forward(&mut got);
        let scale = expect.iter().map(|c| c.norm()).fold(1.0, f64::max);
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).norm() / scale < 1e-12, "n={n}");
        }
    }

    #[test]
    fn all_plan_kinds_match_definition() {
        for n in [1, 2, 3, 5, 16, 17, 32, 97, 100, 128, 1000] {
            check(n);
        }
    }

    #[test]
    fn inverse_pow2_undoes_forward() {
        let x: Vec<Complex<f64>> = (0..64).map(|i| Complex::new(i as f64, 0.5)).collect();
        let mut y = x.clone();
        FftPlan::new(64).forward(&mut y);
        inverse_unscaled_pow2(&mut y);
        for (a, b) in y.iter().zip(&x) {
            assert!((a / 64.0 - b).norm() < 1e-12);
        }
    }
}
