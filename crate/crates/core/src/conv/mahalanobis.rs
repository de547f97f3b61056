use super::FeaStConvParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Reference points `z_m` and a shared positive-definite metric `Σ`.
#[derive(Clone, Debug, PartialEq)]
pub struct MahalanobisParams<T> {
    m: usize,
    d: usize,
    z: Vec<T>,
    sigma: Vec<T>,
}

impl<T: Scalar> MahalanobisParams<T> {
    /// `z` is `M × D` row-major, `sigma` is `D × D` row-major.
    pub fn new(m: usize, d: usize, z: Vec<T>, sigma: Vec<T>) -> Result<Self> {
        if z.len() != m * d || sigma.len() != d * d {
            return Err(Error::dims("Mahalanobis blocks do not match (M, D)"));
        }
        let tol = T::of(1e-12);
        for r in 0..d {
            for c in 0..r {
                if (sigma[r * d + c] - sigma[c * d + r]).abs() > tol {
                    return Err(Error::NotPositiveDefinite);
                }
            }
        }
        if !cholesky_succeeds(&sigma, d) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { m, d, z, sigma })
    }

    pub fn n_centers(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn center(&self, m: usize) -> &[T] {
        &self.z[m * self.d..(m + 1) * self.d]
    }

    /// `(x - z_m)ᵀ Σ (x - z_m)`.
    pub fn distance(&self, x: &[T], m: usize) -> T {
        let d = self.d;
        let diff: Vec<T> = x.iter().zip(self.center(m)).map(|(&a, &b)| a - b).collect();
        let mut s = T::zero();
        for r in 0..d {
            let mut row = T::zero();
            for c in 0..d {
                row += self.sigma[r * d + c] * diff[c];
            }
            s += diff[r] * row;
        }
        s
    }

    fn sigma_z(&self, m: usize) -> Vec<T> {
        let d = self.d;
        let z = self.center(m);
        (0..d)
            .map(|r| (0..d).map(|c| self.sigma[r * d + c] * z[c]).sum())
            .collect()
    }
}

/// Symmetric positive definiteness via an attempted Cholesky factorization.
fn cholesky_succeeds<T: Scalar>(a: &[T], d: usize) -> bool {
    let mut l = vec![T::zero(); d * d];
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= l[j * d + k] * l[j * d + k];
        }
        if !(diag > T::zero()) {
            return false;
        }
        let ljj = diag.sqrt();
        l[j * d + j] = ljj;
        for i in j + 1..d {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            l[i * d + j] = s / ljj;
        }
    }
    true
}

/// Assignment parameters equivalent to a softmax over negative Mahalanobis
/// distances of centered neighbor features.
///
/// Expanding `-d_Σ(x_j - x_i, z_m)` gives linear coefficients
/// `u_m = -2Σz_m`, `v_m = -u_m` and offset `c_m = -z_mᵀΣz_m`; the quadratic
/// term does not depend on `m` and cancels in the softmax. The returned
/// parameters are translation-invariant with zero `W` and `b` of width `e`.
pub fn from_mahalanobis<T: Scalar>(mp: &MahalanobisParams<T>, e: usize) -> FeaStConvParams<T> {
    let (m, d) = (mp.m, mp.d);
    let mut p = FeaStConvParams::zeros(m, d, e, true);
    for k in 0..m {
        let sz = mp.sigma_z(k);
        let zsz: T = sz.iter().zip(mp.center(k)).map(|(&a, &b)| a * b).sum();
        p.c_mut()[k] = -zsz;
        for (u, s) in p.u_mut()[k * d..(k + 1) * d].iter_mut().zip(&sz) {
            *u = -(*s + *s);
        }
    }
    p
}
