//! Feature-steered graph convolution.
//!
//! Each neighbor `j` of node `i` is softly assigned to `M` weight matrices
//! through a softmax over linear logits
//!
//! ```text
//! q_m(x_i, x_j) ∝ exp(u_m·x_i + v_m·x_j + c_m)
//! y_i = b + Σ_m (1/|N_i|) Σ_{j∈N_i} q_m(x_i, x_j) W_m x_j
//! ```
//!
//! In translation-invariant mode `v_m = -u_m`, so the logits reduce to
//! `u_m·(x_i - x_j) + c_m` and depend only on feature differences.

mod grid;
mod mahalanobis;
mod params;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::FeatureMatrix;
use crate::scalar::Scalar;

pub use grid::{grid_reference_conv, Grid};
pub use mahalanobis::{from_mahalanobis, MahalanobisParams};
pub use params::{parameter_count, ConvInit, FeaStConvParams};

/// Soft assignments `q(i, j) ∈ Δ^M` for every ordered pair with `j ∈ N_i`,
/// laid out in CSR order (node `i`, then its sorted neighbors).
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentMatrix<T> {
    m: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    q: Vec<T>,
}

impl<T: Scalar> AssignmentMatrix<T> {
    #[inline]
    pub fn n_matrices(&self) -> usize {
        self.m
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Assignment vector of the `k`-th neighbor of node `i`.
    #[inline]
    pub fn by_slot(&self, i: usize, k: usize) -> &[T] {
        let p = self.offsets[i] + k;
        &self.q[p * self.m..(p + 1) * self.m]
    }

    /// Assignment vector of pair `(i, j)`, if `j ∈ N_i`.
    pub fn get(&self, i: usize, j: usize) -> Option<&[T]> {
        let nb = &self.neighbors[self.offsets[i]..self.offsets[i + 1]];
        nb.binary_search(&j).ok().map(|k| self.by_slot(i, k))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &[T])> {
        (0..self.n_nodes()).flat_map(move |i| {
            (self.offsets[i]..self.offsets[i + 1]).map(move |p| (i, self.neighbors[p], &self.q[p * self.m..(p + 1) * self.m]))
        })
    }
}

/// Exact gradients of `L = Σ_i dY_i · y_i` for one convolution.
///
/// `dparams` has the same layout as the forward parameters; in
/// translation-invariant mode it has no `v` block and `u` carries the
/// combined gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle<T> {
    pub dx: FeatureMatrix<T>,
    pub dparams: FeaStConvParams<T>,
}

fn check_inputs<T: Scalar>(p: &FeaStConvParams<T>, x: &FeatureMatrix<T>, graph: &Graph) -> Result<()> {
    if x.cols() != p.in_dim() {
        return Err(Error::dims(format!("features have {} columns, convolution expects {}", x.cols(), p.in_dim())));
    }
    if x.rows() != graph.n() {
        return Err(Error::dims(format!("{} feature rows for a {}-node graph", x.rows(), graph.n())));
    }
    Ok(())
}

/// Writes the normalized assignments of pair `(x_i, x_j)` into `q`.
#[inline]
fn assign_pair<T: Scalar>(p: &FeaStConvParams<T>, xi: &[T], xj: &[T], q: &mut [T]) {
    let d = p.in_dim();
    match p.v() {
        Some(v) => {
            for (m, qm) in q.iter_mut().enumerate() {
                let um = &p.u()[m * d..(m + 1) * d];
                let vm = &v[m * d..(m + 1) * d];
                let mut l = p.c()[m];
                for k in 0..d {
                    l += um[k] * xi[k] + vm[k] * xj[k];
                }
                *qm = l;
            }
        }
        None => {
            for (m, qm) in q.iter_mut().enumerate() {
                let um = &p.u()[m * d..(m + 1) * d];
                let mut l = p.c()[m];
                for k in 0..d {
                    l += um[k] * (xi[k] - xj[k]);
                }
                *qm = l;
            }
        }
    }
    softmax_in_place(q);
}

/// Numerically stable softmax: the largest logit is subtracted first.
pub(crate) fn softmax_in_place<T: Scalar>(z: &mut [T]) {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Soft assignments for every neighbor pair of the graph.
pub fn compute_assignments<T: Scalar>(
    params: &FeaStConvParams<T>,
    x: &FeatureMatrix<T>,
    graph: &Graph,
) -> Result<AssignmentMatrix<T>> {
    check_inputs(params, x, graph)?;
    let m = params.n_matrices();
    let mut offsets = Vec::with_capacity(graph.n() + 1);
    offsets.push(0);
    let mut neighbors = Vec::new();
    for i in 0..graph.n() {
        neighbors.extend_from_slice(graph.neighbors(i));
        offsets.push(neighbors.len());
    }
    let mut q = vec![T::zero(); neighbors.len() * m];
    for i in 0..graph.n() {
        for p in offsets[i]..offsets[i + 1] {
            let j = neighbors[p];
            assign_pair(params, x.row(i), x.row(j), &mut q[p * m..(p + 1) * m]);
        }
    }
    Ok(AssignmentMatrix { m, offsets, neighbors, q })
}

/// Forward pass. Output has `E` columns, one row per node.
pub fn forward<T: Scalar>(params: &FeaStConvParams<T>, x: &FeatureMatrix<T>, graph: &Graph) -> Result<FeatureMatrix<T>> {
    check_inputs(params, x, graph)?;
    let (m, d, e) = (params.n_matrices(), params.in_dim(), params.out_dim());
    let mut y = FeatureMatrix::zeros(graph.n(), e);
    if e == 0 {
        return Ok(y);
    }
    y.as_mut_slice().par_chunks_mut(e).enumerate().for_each_init(
        || (vec![T::zero(); m], vec![T::zero(); m * d]),
        |(q, agg), (i, yi)| {
            // agg[m] = Σ_j q_m(x_i, x_j) x_j
            agg.iter_mut().for_each(|a| *a = T::zero());
            let xi = x.row(i);
            let nb = graph.neighbors(i);
            for &j in nb {
                let xj = x.row(j);
                assign_pair(params, xi, xj, q);
                for (mm, &qm) in q.iter().enumerate() {
                    let a = &mut agg[mm * d..(mm + 1) * d];
                    for k in 0..d {
                        a[k] += qm * xj[k];
                    }
                }
            }
            let inv = T::one() / T::of(nb.len() as f64);
            for (o, out) in yi.iter_mut().enumerate() {
                let mut s = T::zero();
                for mm in 0..m {
                    let w = &params.w_m(mm)[o * d..(o + 1) * d];
                    let a = &agg[mm * d..(mm + 1) * d];
                    for k in 0..d {
                        s += w[k] * a[k];
                    }
                }
                *out = params.b()[o] + s * inv;
            }
        },
    );
    Ok(y)
}

/// Reverse pass through the convolution, including the softmax coupling of
/// the assignments across `m`.
pub fn backward<T: Scalar>(
    params: &FeaStConvParams<T>,
    x: &FeatureMatrix<T>,
    graph: &Graph,
    dy: &FeatureMatrix<T>,
) -> Result<GradientBundle<T>> {
    check_inputs(params, x, graph)?;
    let (m, d, e) = (params.n_matrices(), params.in_dim(), params.out_dim());
    if dy.rows() != graph.n() || dy.cols() != e {
        return Err(Error::dims(format!(
            "output gradient is {}x{}, expected {}x{e}",
            dy.rows(),
            dy.cols(),
            graph.n()
        )));
    }
    let ti = params.translation_invariant();
    let mut dx = FeatureMatrix::zeros(graph.n(), d);
    let mut grads = FeaStConvParams::zeros(m, d, e, ti);

    let mut g = vec![T::zero(); e];
    let mut h = vec![T::zero(); m * d];
    let mut agg = vec![T::zero(); m * d];
    let mut q = vec![T::zero(); m];
    let mut dl = vec![T::zero(); m];
    let mut dxi = vec![T::zero(); d];

    for i in 0..graph.n() {
        let dyi = dy.row(i);
        for (db, &v) in grads.b_mut().iter_mut().zip(dyi) {
            *db += v;
        }
        if dyi.iter().all(|v| v.is_zero()) {
            continue;
        }
        let nb = graph.neighbors(i);
        let inv = T::one() / T::of(nb.len() as f64);
        for (gk, &v) in g.iter_mut().zip(dyi) {
            *gk = v * inv;
        }
        // h_m = W_m^T g
        for mm in 0..m {
            let wm = params.w_m(mm);
            let hm = &mut h[mm * d..(mm + 1) * d];
            hm.iter_mut().for_each(|v| *v = T::zero());
            for (o, &go) in g.iter().enumerate() {
                let row = &wm[o * d..(o + 1) * d];
                for k in 0..d {
                    hm[k] += row[k] * go;
                }
            }
        }

        let xi = x.row(i);
        agg.iter_mut().for_each(|a| *a = T::zero());
        dxi.iter_mut().for_each(|v| *v = T::zero());
        for &j in nb {
            let xj = x.row(j);
            assign_pair(params, xi, xj, &mut q);

            // dq_m = h_m·x_j, then the softmax Jacobian
            let mut s = T::zero();
            for mm in 0..m {
                let hm = &h[mm * d..(mm + 1) * d];
                let mut dq = T::zero();
                for k in 0..d {
                    dq += hm[k] * xj[k];
                }
                dl[mm] = dq;
                s += q[mm] * dq;
            }
            for mm in 0..m {
                dl[mm] = q[mm] * (dl[mm] - s);
            }

            let dxj = dx.row_mut(j);
            for mm in 0..m {
                let (qm, dlm) = (q[mm], dl[mm]);
                let hm = &h[mm * d..(mm + 1) * d];
                let am = &mut agg[mm * d..(mm + 1) * d];
                for k in 0..d {
                    am[k] += qm * xj[k];
                    dxj[k] += qm * hm[k];
                }
                grads.c_mut()[mm] += dlm;
                let um = &params.u()[mm * d..(mm + 1) * d];
                match params.v() {
                    Some(v) => {
                        let vm = &v[mm * d..(mm + 1) * d];
                        for k in 0..d {
                            dxi[k] += dlm * um[k];
                            dxj[k] += dlm * vm[k];
                        }
                        let du = &mut grads.u_mut()[mm * d..(mm + 1) * d];
                        for k in 0..d {
                            du[k] += dlm * xi[k];
                        }
                        let dv = &mut grads.v_mut().expect("non-TI gradients carry v")[mm * d..(mm + 1) * d];
                        for k in 0..d {
                            dv[k] += dlm * xj[k];
                        }
                    }
                    None => {
                        for k in 0..d {
                            dxi[k] += dlm * um[k];
                            dxj[k] -= dlm * um[k];
                        }
                        let du = &mut grads.u_mut()[mm * d..(mm + 1) * d];
                        for k in 0..d {
                            du[k] += dlm * (xi[k] - xj[k]);
                        }
                    }
                }
            }
        }
        for (a, &b) in dx.row_mut(i).iter_mut().zip(&dxi) {
            *a += b;
        }
        // dW_m += g ⊗ agg_m
        for mm in 0..m {
            let am = &agg[mm * d..(mm + 1) * d];
            let dw = grads.w_m_mut(mm);
            for (o, &go) in g.iter().enumerate() {
                let row = &mut dw[o * d..(o + 1) * d];
                for k in 0..d {
                    row[k] += go * am[k];
                }
            }
        }
    }
    Ok(GradientBundle { dx, dparams: grads })
}
