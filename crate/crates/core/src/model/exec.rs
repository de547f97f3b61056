use super::params::{LayerParams, ModelParams};
use super::spec::{LayerSpec, ModelSpec};
use crate::coarsen::{reorder_features, restore_features, CoarseningHierarchy};
use crate::conv;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::layers::{
    global_max_concat, global_max_concat_backward, linear_backward, linear_forward, max_pool, max_pool_backward,
    relu_backward, relu_forward, unpool, unpool_backward, GlobalMaxArgs, PoolArgmax,
};
use crate::matrix::FeatureMatrix;
use crate::scalar::Scalar;

/// Activations kept by [`model_forward`] for the reverse pass.
///
/// `acts[0]` is the (tree-ordered, when pooling) input and `acts[k + 1]`
/// the output of layer `k`.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    acts: Vec<FeatureMatrix<T>>,
    pool: Vec<Option<PoolArgmax>>,
    gmax: Vec<Option<GlobalMaxArgs>>,
    tree_ordered: bool,
}

impl<T: Scalar> ForwardCache<T> {
    /// Output of layer `k` (tree-ordered when the model pools).
    pub fn activation(&self, k: usize) -> &FeatureMatrix<T> {
        &self.acts[k + 1]
    }
}

struct Levels<'a> {
    graph: &'a Graph,
    hierarchy: Option<&'a CoarseningHierarchy>,
}

impl<'a> Levels<'a> {
    fn resolve(spec: &ModelSpec, graph: &'a Graph, hierarchy: Option<&'a CoarseningHierarchy>) -> Result<Self> {
        let depth = spec.depth();
        if depth == 0 {
            return Ok(Self { graph, hierarchy: None });
        }
        let h = hierarchy.ok_or_else(|| {
            Error::InvalidArgument("model pools over a coarsening hierarchy but none was given".into())
        })?;
        if h.levels() < depth {
            return Err(Error::InvalidArgument(format!(
                "model needs {depth} coarsening levels, hierarchy has {}",
                h.levels()
            )));
        }
        if h.real_count(0) != graph.n() {
            return Err(Error::dims("hierarchy level 0 does not match the input graph"));
        }
        Ok(Self { graph, hierarchy: Some(h) })
    }

    fn graph(&self, level: usize) -> &Graph {
        match self.hierarchy {
            Some(h) => h.ordered_graph(level),
            None => self.graph,
        }
    }

    fn hierarchy(&self) -> &CoarseningHierarchy {
        self.hierarchy.expect("pooling layers resolved a hierarchy")
    }
}

/// Runs the model body, returning per-node logits in input order.
pub fn model_forward<T: Scalar>(
    spec: &ModelSpec,
    params: &ModelParams<T>,
    x: &FeatureMatrix<T>,
    graph: &Graph,
    hierarchy: Option<&CoarseningHierarchy>,
) -> Result<(FeatureMatrix<T>, ForwardCache<T>)> {
    let shapes = spec.shapes()?;
    params.check_against(spec)?;
    if x.cols() != spec.input_width {
        return Err(Error::dims(format!("input has {} columns, model expects {}", x.cols(), spec.input_width)));
    }
    if x.rows() != graph.n() {
        return Err(Error::dims(format!("{} input rows for a {}-node graph", x.rows(), graph.n())));
    }
    let lv = Levels::resolve(spec, graph, hierarchy)?;
    let tree_ordered = lv.hierarchy.is_some();
    let input = match lv.hierarchy {
        Some(h) => reorder_features(x, h.ordering(0), h.fake_mask(0))?,
        None => x.clone(),
    };

    let n_layers = spec.layers.len();
    let mut acts = Vec::with_capacity(n_layers + 1);
    acts.push(input);
    let mut pool = vec![None; n_layers];
    let mut gmax = vec![None; n_layers];
    let mut level = 0usize;
    for (k, layer) in spec.layers.iter().enumerate() {
        let xin = &acts[k];
        let out = match (layer, &params.layers[k]) {
            (LayerSpec::Lin { .. }, LayerParams::Linear(p)) => linear_forward(p, xin)?,
            (LayerSpec::Conv { .. }, LayerParams::Conv(p)) => conv::forward(p, xin, lv.graph(level))?,
            (LayerSpec::Relu, _) => relu_forward(xin),
            (LayerSpec::Pool, _) => {
                let (y, arg) = max_pool(xin, &lv.hierarchy().pool_map(level))?;
                pool[k] = Some(arg);
                y
            }
            (LayerSpec::Unpool, LayerParams::Unpool(p)) => unpool(xin, p, &lv.hierarchy().pool_map(level - 1))?,
            (LayerSpec::SkipConcat { from }, _) => FeatureMatrix::hcat(&[xin, &acts[from + 1]])?,
            (LayerSpec::GlobalMaxConcat { from }, _) => {
                let parts: Vec<&FeatureMatrix<T>> = from.iter().map(|&f| &acts[f + 1]).collect();
                let (y, args) = global_max_concat(&parts)?;
                gmax[k] = Some(args);
                y
            }
            _ => return Err(Error::dims(format!("layer {k}: parameters do not match the layer kind"))),
        };
        level = shapes[k].level;
        acts.push(out);
    }

    let last = acts.last().expect("input activation");
    let logits = match lv.hierarchy {
        Some(h) => restore_features(last, h.ordering(0), h.fake_mask(0))?,
        None => last.clone(),
    };
    Ok((logits, ForwardCache { acts, pool, gmax, tree_ordered }))
}

/// Reverse pass: gradients for every parameter block and for the input.
pub fn model_backward<T: Scalar>(
    spec: &ModelSpec,
    params: &ModelParams<T>,
    graph: &Graph,
    hierarchy: Option<&CoarseningHierarchy>,
    cache: &ForwardCache<T>,
    dlogits: &FeatureMatrix<T>,
) -> Result<(ModelParams<T>, FeatureMatrix<T>)> {
    let shapes = spec.shapes()?;
    let lv = Levels::resolve(spec, graph, hierarchy)?;
    if lv.hierarchy.is_some() != cache.tree_ordered || cache.acts.len() != spec.layers.len() + 1 {
        return Err(Error::InvalidArgument("forward cache does not belong to this model".into()));
    }
    if dlogits.rows() != graph.n() || dlogits.cols() != spec.classes {
        return Err(Error::dims("logit gradient shape"));
    }

    let mut grads = params.zeros_like();
    let mut dacts: Vec<Option<FeatureMatrix<T>>> = vec![None; cache.acts.len()];
    let top = match lv.hierarchy {
        Some(h) => reorder_features(dlogits, h.ordering(0), h.fake_mask(0))?,
        None => dlogits.clone(),
    };
    dacts[spec.layers.len()] = Some(top);

    fn accumulate<T: Scalar>(slot: &mut Option<FeatureMatrix<T>>, g: FeatureMatrix<T>) {
        match slot {
            Some(acc) => acc.add_assign(&g),
            None => *slot = Some(g),
        }
    }

    for k in (0..spec.layers.len()).rev() {
        let Some(dy) = dacts[k + 1].take() else {
            continue;
        };
        let xin = &cache.acts[k];
        let in_level = if k == 0 { 0 } else { shapes[k - 1].level };
        match (&spec.layers[k], &params.layers[k], &mut grads.layers[k]) {
            (LayerSpec::Lin { .. }, LayerParams::Linear(p), LayerParams::Linear(g)) => {
                let r = linear_backward(p, xin, &dy)?;
                *g = r.dparams;
                accumulate(&mut dacts[k], r.dx);
            }
            (LayerSpec::Conv { .. }, LayerParams::Conv(p), LayerParams::Conv(g)) => {
                let r = conv::backward(p, xin, lv.graph(in_level), &dy)?;
                *g = r.dparams;
                accumulate(&mut dacts[k], r.dx);
            }
            (LayerSpec::Relu, _, _) => accumulate(&mut dacts[k], relu_backward(xin, &dy)?),
            (LayerSpec::Pool, _, _) => {
                let arg = cache.pool[k].as_ref().expect("pool argmax cached");
                accumulate(&mut dacts[k], max_pool_backward(&dy, arg)?);
            }
            (LayerSpec::Unpool, LayerParams::Unpool(p), LayerParams::Unpool(g)) => {
                let r = unpool_backward(xin, p, &lv.hierarchy().pool_map(in_level - 1), &dy)?;
                *g = r.dparams;
                accumulate(&mut dacts[k], r.dx);
            }
            (LayerSpec::SkipConcat { from }, _, _) => {
                let mut parts = dy.hsplit(&[xin.cols(), cache.acts[from + 1].cols()]);
                let skip = parts.pop().unwrap();
                accumulate(&mut dacts[from + 1], skip);
                accumulate(&mut dacts[k], parts.pop().unwrap());
            }
            (LayerSpec::GlobalMaxConcat { from }, _, _) => {
                let args = cache.gmax[k].as_ref().expect("global max args cached");
                for (&f, g) in from.iter().zip(global_max_concat_backward(&dy, args)?) {
                    accumulate(&mut dacts[f + 1], g);
                }
            }
            _ => return Err(Error::dims(format!("layer {k}: parameters do not match the layer kind"))),
        }
    }

    let dx0 = dacts[0]
        .take()
        .unwrap_or_else(|| FeatureMatrix::zeros(cache.acts[0].rows(), cache.acts[0].cols()));
    let dx = match lv.hierarchy {
        Some(h) => restore_features(&dx0, h.ordering(0), h.fake_mask(0))?,
        None => dx0,
    };
    Ok((grads, dx))
}
