use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::block::{Block, BlockMut, Parameters};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::scalar::Scalar;

/// Per-node affine map `y = W x + b` (a 1×1 convolution).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearParams<T> {
    d: usize,
    e: usize,
    w: Vec<T>,
    b: Vec<T>,
}

impl<T: Scalar> LinearParams<T> {
    pub fn zeros(d: usize, e: usize) -> Self {
        Self { d, e, w: vec![T::zero(); e * d], b: vec![T::zero(); e] }
    }

    pub fn identity(d: usize) -> Self {
        let mut p = Self::zeros(d, d);
        for k in 0..d {
            p.w[k * d + k] = T::one();
        }
        p
    }

    /// He-style init, `W ~ N(0, 2/D)`, zero bias.
    pub fn init(d: usize, e: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, (2.0 / d as f64).sqrt()).unwrap();
        let mut p = Self::zeros(d, e);
        p.w.iter_mut().for_each(|x| *x = T::of(dist.sample(&mut rng)));
        p
    }

    pub fn from_parts(d: usize, e: usize, w: Vec<T>, b: Vec<T>) -> Result<Self> {
        if w.len() != e * d || b.len() != e {
            return Err(Error::dims("linear parameter blocks do not match (D, E)"));
        }
        Ok(Self { d, e, w, b })
    }

    pub fn in_dim(&self) -> usize {
        self.d
    }

    pub fn out_dim(&self) -> usize {
        self.e
    }

    /// Row-major `E × D` weight matrix.
    pub fn w(&self) -> &[T] {
        &self.w
    }

    pub fn w_mut(&mut self) -> &mut [T] {
        &mut self.w
    }

    pub fn b(&self) -> &[T] {
        &self.b
    }

    pub fn b_mut(&mut self) -> &mut [T] {
        &mut self.b
    }
}

impl<T: Scalar> Parameters<T> for LinearParams<T> {
    fn blocks(&self) -> Vec<Block<'_, T>> {
        vec![
            Block { name: "w", shape: vec![self.e, self.d], values: &self.w, decay: true },
            Block { name: "b", shape: vec![self.e], values: &self.b, decay: false },
        ]
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_, T>> {
        vec![
            BlockMut { name: "w", shape: vec![self.e, self.d], values: &mut self.w, decay: true },
            BlockMut { name: "b", shape: vec![self.e], values: &mut self.b, decay: false },
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearGrads<T> {
    pub dx: FeatureMatrix<T>,
    pub dparams: LinearParams<T>,
}

pub fn linear_forward<T: Scalar>(p: &LinearParams<T>, x: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
    if x.cols() != p.d {
        return Err(Error::dims(format!("linear layer expects {} columns, got {}", p.d, x.cols())));
    }
    let (d, e) = (p.d, p.e);
    let mut y = FeatureMatrix::zeros(x.rows(), e);
    for i in 0..x.rows() {
        let xi = x.row(i);
        for (o, yo) in y.row_mut(i).iter_mut().enumerate() {
            let w = &p.w[o * d..(o + 1) * d];
            let mut s = p.b[o];
            for k in 0..d {
                s += w[k] * xi[k];
            }
            *yo = s;
        }
    }
    Ok(y)
}

pub fn linear_backward<T: Scalar>(
    p: &LinearParams<T>,
    x: &FeatureMatrix<T>,
    dy: &FeatureMatrix<T>,
) -> Result<LinearGrads<T>> {
    if x.cols() != p.d || dy.cols() != p.e || dy.rows() != x.rows() {
        return Err(Error::dims("linear backward shapes"));
    }
    let (d, e) = (p.d, p.e);
    let mut dx = FeatureMatrix::zeros(x.rows(), d);
    let mut g = LinearParams::zeros(d, e);
    for i in 0..x.rows() {
        let (xi, dyi) = (x.row(i), dy.row(i));
        let dxi = dx.row_mut(i);
        for o in 0..e {
            let go = dyi[o];
            if go.is_zero() {
                continue;
            }
            g.b[o] += go;
            let w = &p.w[o * d..(o + 1) * d];
            let dw = &mut g.w[o * d..(o + 1) * d];
            for k in 0..d {
                dw[k] += go * xi[k];
                dxi[k] += go * w[k];
            }
        }
    }
    Ok(LinearGrads { dx, dparams: g })
}
