//! Truncated power series arithmetic.
//!
//! Used for the smooth-origin expansion of warped-product profiles and for
//! propagating ODE jets (Taylor coefficients) away from stored samples.

use std::ops::{Add, Mul, Neg, Sub};

/// Power series `Σ c_k t^k`, truncated at a fixed length.
#[derive(Clone, Debug, PartialEq)]
pub struct Series(pub Vec<f64>);

impl Series {
    pub fn zeros(len: usize) -> Self {
        Series(vec![0.0; len])
    }

    pub fn constant(len: usize, c: f64) -> Self {
        let mut s = Self::zeros(len);
        s.0[0] = c;
        s
    }

    /// The series of `t ↦ t0 + t`.
    pub fn variable(len: usize, t0: f64) -> Self {
        let mut s = Self::constant(len, t0);
        if len > 1 {
            s.0[1] = 1.0;
        }
        s
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.0.get(k).copied().unwrap_or(0.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        Series(self.0.iter().map(|v| v * c).collect())
    }

    pub fn add_const(&self, c: f64) -> Self {
        let mut s = self.clone();
        s.0[0] += c;
        s
    }

    pub fn derivative(&self) -> Self {
        let n = self.len();
        let mut out = Self::zeros(n);
        for k in 1..n {
            out.0[k - 1] = k as f64 * self.0[k];
        }
        out
    }

    /// Antiderivative with constant term `c0`; the top coefficient is dropped.
    pub fn integral(&self, c0: f64) -> Self {
        let n = self.len();
        let mut out = Self::zeros(n);
        out.0[0] = c0;
        for k in 1..n {
            out.0[k] = self.0[k - 1] / k as f64;
        }
        out
    }

    /// Multiplicative inverse; requires a nonzero constant term.
    pub fn recip(&self) -> Self {
        let n = self.len();
        let a0 = self.0[0];
        let mut out = Self::zeros(n);
        out.0[0] = 1.0 / a0;
        for k in 1..n {
            let mut s = 0.0;
            for i in 1..=k {
                s += self.0[i] * out.0[k - i];
            }
            out.0[k] = -s / a0;
        }
        out
    }

    pub fn div(&self, other: &Series) -> Self {
        self * &other.recip()
    }

    /// Divide by `t^k`, assuming the first `k` coefficients vanish. The
    /// vacated top coefficients are set to zero.
    pub fn shift_down(&self, k: usize) -> Self {
        let n = self.len();
        let mut out = Self::zeros(n);
        for i in k..n {
            out.0[i - k] = self.0[i];
        }
        out
    }

    /// Value and first two derivatives at `t`.
    pub fn eval2(&self, t: f64) -> [f64; 3] {
        let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
        for &c in self.0.iter().rev() {
            d2 = d2 * t + 2.0 * d1;
            d1 = d1 * t + v;
            v = v * t + c;
        }
        [v, d1, d2]
    }

    /// The even coefficients `c_0, c_2, c_4, …`, i.e. the series in `q = t²`.
    pub fn even_part(&self) -> Self {
        Series(self.0.iter().step_by(2).copied().collect())
    }
}

impl<'a> Add<&'a Series> for &'a Series {
    type Output = Series;
    fn add(self, rhs: &Series) -> Series {
        Series(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl<'a> Sub<&'a Series> for &'a Series {
    type Output = Series;
    fn sub(self, rhs: &Series) -> Series {
        Series(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl<'a> Mul<&'a Series> for &'a Series {
    type Output = Series;
    fn mul(self, rhs: &Series) -> Series {
        let n = self.len().min(rhs.len());
        let mut out = Series::zeros(n);
        for i in 0..n {
            let a = self.0[i];
            if a == 0.0 {
                continue;
            }
            for j in 0..n - i {
                out.0[i + j] += a * rhs.0[j];
            }
        }
        out
    }
}

impl Neg for &Series {
    type Output = Series;
    fn neg(self) -> Series {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recip_of_one_minus_t_is_geometric() {
        let s = Series(vec![1.0, -1.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.recip().0, vec![1.0; 5]);
    }

    #[test]
    fn eval2_matches_polynomial_derivatives() {
        // 1 + 2t + 3t² at t = 0.5
        let s = Series(vec![1.0, 2.0, 3.0]);
        let [v, d1, d2] = s.eval2(0.5);
        assert!((v - 2.75).abs() < 1e-15);
        assert!((d1 - 5.0).abs() < 1e-15);
        assert!((d2 - 6.0).abs() < 1e-15);
    }

    #[test]
    fn integral_inverts_derivative() {
        let s = Series(vec![0.5, 1.0, -2.0, 3.0, 0.0]);
        let back = s.derivative().integral(0.5);
        assert_eq!(back, s);
    }
}
