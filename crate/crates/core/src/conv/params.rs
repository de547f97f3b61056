use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::block::{Block, BlockMut, Parameters};
use crate::scalar::Scalar;

/// Variance of the random weight matrices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvInit {
    /// `2/(D·M)`: fan-in scaled by the expected assignment mass `1/M`.
    #[default]
    MassScaled,
    /// `2·M/D`: keeps the output variance of a rectified layer when the
    /// assignments are close to uniform.
    VariancePreserving,
}

impl ConvInit {
    pub fn weight_variance(self, m: usize, d: usize) -> f64 {
        match self {
            ConvInit::MassScaled => 2.0 / (d * m) as f64,
            ConvInit::VariancePreserving => 2.0 * m as f64 / d as f64,
        }
    }
}

/// Parameters of one feature-steered convolution.
///
/// `w` holds `M` row-major `E × D` matrices back to back. In
/// translation-invariant mode `v` is absent and read as `-u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaStConvParams<T> {
    m: usize,
    d: usize,
    e: usize,
    w: Vec<T>,
    u: Vec<T>,
    v: Option<Vec<T>>,
    c: Vec<T>,
    b: Vec<T>,
}

impl<T: Scalar> FeaStConvParams<T> {
    pub fn zeros(m: usize, d: usize, e: usize, translation_invariant: bool) -> Self {
        let z = |n| vec![T::zero(); n];
        Self {
            m,
            d,
            e,
            w: z(m * e * d),
            u: z(m * d),
            v: (!translation_invariant).then(|| z(m * d)),
            c: z(m),
            b: z(e),
        }
    }

    /// Random initialization: `W ~ N(0, 2/(D·M))`, `u, v ~ N(0, 1/D)`,
    /// `c = b = 0`.
    pub fn init(m: usize, d: usize, e: usize, seed: u64, translation_invariant: bool) -> Self {
        Self::init_with(ConvInit::MassScaled, m, d, e, seed, translation_invariant)
    }

    /// Like [`init`](Self::init) with a chosen weight variance.
    pub fn init_with(scheme: ConvInit, m: usize, d: usize, e: usize, seed: u64, translation_invariant: bool) -> Self {
        assert!(m >= 1 && d >= 1 && e >= 1, "convolution dimensions must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(m, d, e, translation_invariant);
        let w_dist = Normal::new(0.0, scheme.weight_variance(m, d).sqrt()).unwrap();
        let uv_dist = Normal::new(0.0, (1.0 / d as f64).sqrt()).unwrap();
        p.w.iter_mut().for_each(|x| *x = T::of(w_dist.sample(&mut rng)));
        p.u.iter_mut().for_each(|x| *x = T::of(uv_dist.sample(&mut rng)));
        if let Some(v) = p.v.as_mut() {
            v.iter_mut().for_each(|x| *x = T::of(uv_dist.sample(&mut rng)));
        }
        p
    }

    /// Assembles parameters from raw blocks; `v = None` selects
    /// translation-invariant mode.
    pub fn from_parts(
        m: usize,
        d: usize,
        e: usize,
        w: Vec<T>,
        u: Vec<T>,
        v: Option<Vec<T>>,
        c: Vec<T>,
        b: Vec<T>,
    ) -> crate::Result<Self> {
        let ok = w.len() == m * e * d
            && u.len() == m * d
            && v.as_ref().is_none_or(|v| v.len() == m * d)
            && c.len() == m
            && b.len() == e;
        if !ok {
            return Err(crate::Error::dims("convolution parameter blocks do not match (M, D, E)"));
        }
        let p = Self { m, d, e, w, u, v, c, b };
        if p.blocks().iter().any(|b| b.values.iter().any(|x| !x.is_finite())) {
            return Err(crate::Error::InvalidArgument("convolution parameters must be finite".into()));
        }
        Ok(p)
    }

    #[inline]
    pub fn n_matrices(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.e
    }

    #[inline]
    pub fn translation_invariant(&self) -> bool {
        self.v.is_none()
    }

    /// `W_m` as a row-major `E × D` slice.
    #[inline]
    pub fn w_m(&self, m: usize) -> &[T] {
        let sz = self.e * self.d;
        &self.w[m * sz..(m + 1) * sz]
    }

    #[inline]
    pub fn w_m_mut(&mut self, m: usize) -> &mut [T] {
        let sz = self.e * self.d;
        &mut self.w[m * sz..(m + 1) * sz]
    }

    #[inline]
    pub fn u(&self) -> &[T] {
        &self.u
    }

    #[inline]
    pub fn u_mut(&mut self) -> &mut [T] {
        &mut self.u
    }

    /// Stored `v`; `None` in translation-invariant mode.
    #[inline]
    pub fn v(&self) -> Option<&[T]> {
        self.v.as_deref()
    }

    #[inline]
    pub fn v_mut(&mut self) -> Option<&mut [T]> {
        self.v.as_deref_mut()
    }

    /// `v` as used by the logits, deriving `-u` when not stored.
    pub fn effective_v(&self) -> Vec<T> {
        match &self.v {
            Some(v) => v.clone(),
            None => self.u.iter().map(|&x| -x).collect(),
        }
    }

    #[inline]
    pub fn c(&self) -> &[T] {
        &self.c
    }

    #[inline]
    pub fn c_mut(&mut self) -> &mut [T] {
        &mut self.c
    }

    #[inline]
    pub fn b(&self) -> &[T] {
        &self.b
    }

    #[inline]
    pub fn b_mut(&mut self) -> &mut [T] {
        &mut self.b
    }
}

impl<T: Scalar> Parameters<T> for FeaStConvParams<T> {
    fn blocks(&self) -> Vec<Block<'_, T>> {
        let (m, d, e) = (self.m, self.d, self.e);
        let mut out = vec![
            Block { name: "w", shape: vec![m, e, d], values: &self.w, decay: true },
            Block { name: "u", shape: vec![m, d], values: &self.u, decay: true },
        ];
        if let Some(v) = &self.v {
            out.push(Block { name: "v", shape: vec![m, d], values: v, decay: true });
        }
        out.push(Block { name: "c", shape: vec![m], values: &self.c, decay: false });
        out.push(Block { name: "b", shape: vec![e], values: &self.b, decay: false });
        out
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_, T>> {
        let (m, d, e) = (self.m, self.d, self.e);
        let mut out = vec![
            BlockMut { name: "w", shape: vec![m, e, d], values: &mut self.w, decay: true },
            BlockMut { name: "u", shape: vec![m, d], values: &mut self.u, decay: true },
        ];
        if let Some(v) = &mut self.v {
            out.push(BlockMut { name: "v", shape: vec![m, d], values: v, decay: true });
        }
        out.push(BlockMut { name: "c", shape: vec![m], values: &mut self.c, decay: false });
        out.push(BlockMut { name: "b", shape: vec![e], values: &mut self.b, decay: false });
        out
    }
}

/// Trainable parameter count: `MDE + 2MD + M + E`, or `MDE + MD + M + E`
/// when `v` is tied to `-u`.
pub fn parameter_count(m: usize, d: usize, e: usize, translation_invariant: bool) -> usize {
    let uv = if translation_invariant { m * d } else { 2 * m * d };
    m * d * e + uv + m + e
}
