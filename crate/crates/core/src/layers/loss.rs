use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::scalar::Scalar;

/// Classes a node may be assigned to; excluded classes get logit `-inf`.
#[derive(Clone, Copy, Debug, Default)]
pub enum ClassMask<'a> {
    #[default]
    All,
    /// One mask shared by every node (e.g. a shape category's part labels).
    Shared(&'a [bool]),
    PerNode(&'a [Vec<bool>]),
}

impl<'a> ClassMask<'a> {
    fn row(&self, i: usize) -> Option<&'a [bool]> {
        match *self {
            ClassMask::All => None,
            ClassMask::Shared(m) => Some(m),
            ClassMask::PerNode(m) => Some(&m[i]),
        }
    }
}

/// Mean softmax cross-entropy over nodes and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &FeatureMatrix<T>,
    targets: &[usize],
    mask: ClassMask<'_>,
) -> Result<(T, FeatureMatrix<T>)> {
    let (n, c) = (logits.rows(), logits.cols());
    if targets.len() != n {
        return Err(Error::LengthMismatch { what: "targets vs logit rows", left: targets.len(), right: n });
    }
    match mask {
        ClassMask::Shared(m) if m.len() != c => return Err(Error::dims("class mask width")),
        ClassMask::PerNode(m) if m.len() != n || m.iter().any(|r| r.len() != c) => {
            return Err(Error::dims("per-node class mask shape"))
        }
        _ => {}
    }
    if n == 0 {
        return Ok((T::zero(), FeatureMatrix::zeros(0, c)));
    }
    let inv_n = T::one() / T::of(n as f64);
    let mut grad = FeatureMatrix::zeros(n, c);
    let mut total = T::zero();
    for (i, &t) in targets.iter().enumerate() {
        let allowed = mask.row(i);
        let ok = |k: usize| allowed.is_none_or(|m| m[k]);
        if t >= c || !ok(t) {
            return Err(Error::TargetOutsideMask { node: i, target: t });
        }
        let row = logits.row(i);
        let max = (0..c).filter(|&k| ok(k)).map(|k| row[k]).fold(T::neg_infinity(), T::max);
        let g = grad.row_mut(i);
        let mut sum = T::zero();
        for k in 0..c {
            if ok(k) {
                g[k] = (row[k] - max).exp();
                sum += g[k];
            }
        }
        total += sum.ln() - (row[t] - max);
        for k in 0..c {
            g[k] = g[k] / sum * inv_n;
        }
        g[t] -= inv_n;
    }
    Ok((total * inv_n, grad))
}
