//! Small dense coordinate tensors.
//!
//! Index conventions used across the crate:
//! * `Tensor3` holding metric first partials: `dg[(k, i, j)] = ∂_k g_ij`.
//! * `Tensor3` holding Christoffel symbols: `gamma[(k, i, j)] = Γ^k_ij`.
//! * `Tensor4` holding metric second partials: `d2g[(k, l, i, j)] = ∂_k ∂_l g_ij`.
//! * `Tensor4` holding the curvature tensor: `rm[(i, j, k, l)] = ⟨R(∂_i, ∂_j)∂_k, ∂_l⟩`.

use std::ops::{Index, IndexMut};

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Contract the last two slots with `u` and `v`: `out_a = T[a][i][j] u^i v^j`.
    pub fn contract_last(&self, u: &[f64], v: &[f64]) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(n, |a, _| {
            let mut s = 0.0;
            for i in 0..n {
                let ui = u[i];
                if ui == 0.0 {
                    continue;
                }
                let row = (a * n + i) * n;
                for j in 0..n {
                    s += self.data[row + j] * ui * v[j];
                }
            }
            s
        })
    }

    /// The matrix `T[k]` (slice with the first index fixed).
    pub fn slab(&self, k: usize) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, j| self.data[(k * n + i) * n + j])
    }
}

impl Index<(usize, usize, usize)> for Tensor3 {
    type Output = f64;
    #[inline]
    fn index(&self, (a, b, c): (usize, usize, usize)) -> &f64 {
        &self.data[(a * self.n + b) * self.n + c]
    }
}

impl IndexMut<(usize, usize, usize)> for Tensor3 {
    #[inline]
    fn index_mut(&mut self, (a, b, c): (usize, usize, usize)) -> &mut f64 {
        &mut self.data[(a * self.n + b) * self.n + c]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `T[k][l]` as an n×n matrix.
    pub fn slab(&self, k: usize, l: usize) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, j| self[(k, l, i, j)])
    }
}

impl Index<(usize, usize, usize, usize)> for Tensor4 {
    type Output = f64;
    #[inline]
    fn index(&self, (a, b, c, d): (usize, usize, usize, usize)) -> &f64 {
        let n = self.n;
        &self.data[((a * n + b) * n + c) * n + d]
    }
}

impl IndexMut<(usize, usize, usize, usize)> for Tensor4 {
    #[inline]
    fn index_mut(&mut self, (a, b, c, d): (usize, usize, usize, usize)) -> &mut f64 {
        let n = self.n;
        &mut self.data[((a * n + b) * n + c) * n + d]
    }
}

/// Value, coordinate gradient and coordinate Hessian of a scalar function.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarJet {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl ScalarJet {
    pub fn constant(n: usize, value: f64) -> Self {
        Self {
            value,
            grad: DVector::zeros(n),
            hess: DMatrix::zeros(n, n),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            value: c * self.value,
            grad: &self.grad * c,
            hess: &self.hess * c,
        }
    }

    /// Jet of a function `F(q)` of `q = |x|²`, given `F`, `F_q`, `F_qq`.
    pub fn from_q_function(x: &[f64], f: f64, f_q: f64, f_qq: f64) -> Self {
        let n = x.len();
        let grad = DVector::from_fn(n, |k, _| 2.0 * f_q * x[k]);
        let hess = DMatrix::from_fn(n, n, |k, l| {
            let d = if k == l { 2.0 * f_q } else { 0.0 };
            4.0 * f_qq * x[k] * x[l] + d
        });
        Self {
            value: f,
            grad,
            hess,
        }
    }
}

/// g-inner product `uᵀ g v`.
#[inline]
pub fn g_dot(g: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let n = u.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += u[i] * g[(i, j)] * v[j];
        }
    }
    s
}
