//! Pooling over a binary-tree node ordering: fine positions `2p` and
//! `2p + 1` share the coarse parent `p`.

use serde::{Deserialize, Serialize};

use crate::block::{Block, BlockMut, Parameters};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::scalar::Scalar;

/// Fine-level fake-node mask of one pooling step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolMap {
    fake: Vec<bool>,
}

impl PoolMap {
    pub fn new(fake: Vec<bool>) -> Result<Self> {
        if !fake.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("pooling needs an even fine length, got {}", fake.len())));
        }
        Ok(Self { fake })
    }

    /// Pool map without padding.
    pub fn dense(fine_len: usize) -> Result<Self> {
        Self::new(vec![false; fine_len])
    }

    pub fn fine_len(&self) -> usize {
        self.fake.len()
    }

    pub fn coarse_len(&self) -> usize {
        self.fake.len() / 2
    }

    pub fn is_fake(&self, pos: usize) -> bool {
        self.fake[pos]
    }

    pub fn fake_mask(&self) -> &[bool] {
        &self.fake
    }
}

/// Winning fine position per coarse row and channel, `None` when both
/// children are fake.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolArgmax {
    cols: usize,
    fine_len: usize,
    winners: Vec<Option<usize>>,
}

/// Per-channel max over each pair of children. Fake children never win; a
/// pair of two fakes yields a zero row.
pub fn max_pool<T: Scalar>(x: &FeatureMatrix<T>, pm: &PoolMap) -> Result<(FeatureMatrix<T>, PoolArgmax)> {
    if x.rows() != pm.fine_len() {
        return Err(Error::dims(format!("{} rows for an ordering of length {}", x.rows(), pm.fine_len())));
    }
    let cols = x.cols();
    let mut y = FeatureMatrix::zeros(pm.coarse_len(), cols);
    let mut winners = vec![None; pm.coarse_len() * cols];
    for p in 0..pm.coarse_len() {
        let (a, b) = (2 * p, 2 * p + 1);
        let yr = y.row_mut(p);
        for k in 0..cols {
            let win = match (pm.fake[a], pm.fake[b]) {
                (false, false) => Some(if x.get(b, k) > x.get(a, k) { b } else { a }),
                (false, true) => Some(a),
                (true, false) => Some(b),
                (true, true) => None,
            };
            if let Some(w) = win {
                yr[k] = x.get(w, k);
            }
            winners[p * cols + k] = win;
        }
    }
    Ok((y, PoolArgmax { cols, fine_len: pm.fine_len(), winners }))
}

/// Routes each coarse gradient to its winning fine position.
pub fn max_pool_backward<T: Scalar>(dy: &FeatureMatrix<T>, arg: &PoolArgmax) -> Result<FeatureMatrix<T>> {
    if dy.cols() != arg.cols || dy.rows() * 2 != arg.fine_len {
        return Err(Error::dims("max-pool backward shapes"));
    }
    let mut dx = FeatureMatrix::zeros(arg.fine_len, arg.cols);
    for p in 0..dy.rows() {
        for k in 0..arg.cols {
            if let Some(w) = arg.winners[p * arg.cols + k] {
                let v = dx.get(w, k) + dy.get(p, k);
                dx.set(w, k, v);
            }
        }
    }
    Ok(dx)
}

/// Depthwise width-2, stride-2 transposed convolution.
///
/// `kernel` is `2 × C`: row 0 scales the first child, row 1 the second.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnpoolParams<T> {
    channels: usize,
    kernel: Vec<T>,
    bias: Vec<T>,
}

impl<T: Scalar> UnpoolParams<T> {
    pub fn new(kernel0: Vec<T>, kernel1: Vec<T>, bias: Vec<T>) -> Result<Self> {
        let c = bias.len();
        if kernel0.len() != c || kernel1.len() != c {
            return Err(Error::dims("unpool kernel rows must match the bias width"));
        }
        Ok(Self { channels: c, kernel: [kernel0, kernel1].concat(), bias })
    }

    /// Copy-unpooling kernel (both children receive the parent) and zero bias.
    pub fn copy(channels: usize) -> Self {
        Self { channels, kernel: vec![T::one(); 2 * channels], bias: vec![T::zero(); channels] }
    }

    pub fn zeros(channels: usize) -> Self {
        Self { channels, kernel: vec![T::zero(); 2 * channels], bias: vec![T::zero(); channels] }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn kernel(&self, child: usize) -> &[T] {
        &self.kernel[child * self.channels..(child + 1) * self.channels]
    }

    pub fn kernel_mut(&mut self, child: usize) -> &mut [T] {
        &mut self.kernel[child * self.channels..(child + 1) * self.channels]
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }
}

impl<T: Scalar> Parameters<T> for UnpoolParams<T> {
    fn blocks(&self) -> Vec<Block<'_, T>> {
        vec![
            Block { name: "kernel", shape: vec![2, self.channels], values: &self.kernel, decay: true },
            Block { name: "bias", shape: vec![self.channels], values: &self.bias, decay: false },
        ]
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_, T>> {
        vec![
            BlockMut { name: "kernel", shape: vec![2, self.channels], values: &mut self.kernel, decay: true },
            BlockMut { name: "bias", shape: vec![self.channels], values: &mut self.bias, decay: false },
        ]
    }
}

/// Emits two fine rows per coarse row; fake fine positions are zeroed.
pub fn unpool<T: Scalar>(x: &FeatureMatrix<T>, up: &UnpoolParams<T>, pm: &PoolMap) -> Result<FeatureMatrix<T>> {
    if x.rows() != pm.coarse_len() || x.cols() != up.channels {
        return Err(Error::dims(format!(
            "unpool input is {}x{}, expected {}x{}",
            x.rows(),
            x.cols(),
            pm.coarse_len(),
            up.channels
        )));
    }
    let mut y = FeatureMatrix::zeros(pm.fine_len(), up.channels);
    for p in 0..x.rows() {
        let xp = x.row(p);
        for child in 0..2 {
            let pos = 2 * p + child;
            if pm.fake[pos] {
                continue;
            }
            let k = up.kernel(child);
            for ((yo, &xv), (&kv, &bv)) in y.row_mut(pos).iter_mut().zip(xp).zip(k.iter().zip(&up.bias)) {
                *yo = kv * xv + bv;
            }
        }
    }
    Ok(y)
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnpoolGrads<T> {
    pub dx: FeatureMatrix<T>,
    pub dparams: UnpoolParams<T>,
}

pub fn unpool_backward<T: Scalar>(
    x: &FeatureMatrix<T>,
    up: &UnpoolParams<T>,
    pm: &PoolMap,
    dy: &FeatureMatrix<T>,
) -> Result<UnpoolGrads<T>> {
    if dy.rows() != pm.fine_len() || dy.cols() != up.channels || x.rows() != pm.coarse_len() {
        return Err(Error::dims("unpool backward shapes"));
    }
    let c = up.channels;
    let mut dx = FeatureMatrix::zeros(x.rows(), c);
    let mut g = UnpoolParams::zeros(c);
    for p in 0..x.rows() {
        for child in 0..2 {
            let pos = 2 * p + child;
            if pm.fake[pos] {
                continue;
            }
            let dyr = dy.row(pos);
            for k in 0..c {
                dx.row_mut(p)[k] += up.kernel(child)[k] * dyr[k];
                g.kernel[child * c + k] += x.get(p, k) * dyr[k];
                g.bias[k] += dyr[k];
            }
        }
    }
    Ok(UnpoolGrads { dx, dparams: g })
}
