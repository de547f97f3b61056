use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::scalar::Scalar;

pub fn relu_forward<T: Scalar>(x: &FeatureMatrix<T>) -> FeatureMatrix<T> {
    let mut y = x.clone();
    y.as_mut_slice().iter_mut().for_each(|v| *v = v.max(T::zero()));
    y
}

/// Passes `dy` where `x > 0`; the subgradient at zero is zero.
pub fn relu_backward<T: Scalar>(x: &FeatureMatrix<T>, dy: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
    if (x.rows(), x.cols()) != (dy.rows(), dy.cols()) {
        return Err(Error::dims("relu backward shapes"));
    }
    let mut dx = dy.clone();
    for (g, &v) in dx.as_mut_slice().iter_mut().zip(x.as_slice()) {
        if v <= T::zero() {
            *g = T::zero();
        }
    }
    Ok(dx)
}
