//! Randomized central-difference checks of every backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::block::Parameters;
use crate::coarsen::CoarseningHierarchy;
use crate::conv::{self, FeaStConvParams};
use crate::error::Result;
use crate::graph::Graph;
use crate::layers::{
    global_max_concat, global_max_concat_backward, linear_backward, linear_forward, max_pool, max_pool_backward,
    relu_backward, relu_forward, softmax_cross_entropy, unpool, unpool_backward, ClassMask, LinearParams, PoolMap,
    UnpoolParams,
};
use crate::matrix::FeatureMatrix;
use crate::model::{model_backward, model_forward, LayerSpec, ModelParams, ModelSpec};
use crate::seed::sub_seed;

/// Denominator floor of [`relative_error`], as a fraction of `max(1, |L|)`.
///
/// Central differences of `L` carry round-off near `ulp(L) / h`, about
/// `1e-10 |L|` at the default step; gradient entries below the floor are
/// compared on an absolute scale well above that noise.
pub const REL_FLOOR: f64 = 1e-3;

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(floor)
}

/// Floor used for a loss whose value at the unperturbed point is `l0`.
pub fn floor_for(l0: f64) -> f64 {
    REL_FLOOR * l0.abs().max(1.0)
}

fn step(theta: f64) -> f64 {
    1e-6 * theta.abs().max(1.0)
}

/// Worst relative error between `analytic` and central differences of
/// `loss` over every entry of every block of `params`.
pub fn check_blocks<P: Parameters<f64> + Clone>(params: &P, analytic: &P, mut loss: impl FnMut(&P) -> f64) -> f64 {
    let grads: Vec<Vec<f64>> = analytic.blocks().iter().map(|b| b.values.to_vec()).collect();
    let floor = floor_for(loss(params));
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for (bi, g) in grads.iter().enumerate() {
        for (k, &a) in g.iter().enumerate() {
            let theta = probe.blocks()[bi].values[k];
            let h = step(theta);
            probe.blocks_mut()[bi].values[k] = theta + h;
            let up = loss(&probe);
            probe.blocks_mut()[bi].values[k] = theta - h;
            let down = loss(&probe);
            probe.blocks_mut()[bi].values[k] = theta;
            worst = worst.max(relative_error(a, (up - down) / (2.0 * h), floor));
        }
    }
    worst
}

/// Same as [`check_blocks`] for a feature matrix.
pub fn check_matrix(
    x: &FeatureMatrix<f64>,
    analytic: &FeatureMatrix<f64>,
    mut loss: impl FnMut(&FeatureMatrix<f64>) -> f64,
) -> f64 {
    let floor = floor_for(loss(x));
    let mut probe = x.clone();
    let mut worst = 0.0f64;
    for k in 0..x.as_slice().len() {
        let theta = x.as_slice()[k];
        let h = step(theta);
        probe.as_mut_slice()[k] = theta + h;
        let up = loss(&probe);
        probe.as_mut_slice()[k] = theta - h;
        let down = loss(&probe);
        probe.as_mut_slice()[k] = theta;
        worst = worst.max(relative_error(analytic.as_slice()[k], (up - down) / (2.0 * h), floor));
    }
    worst
}

fn dot(a: &FeatureMatrix<f64>, b: &FeatureMatrix<f64>) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Conv,
    ConvTi,
    Linear,
    Relu,
    MaxPool,
    Unpool,
    GlobalMax,
    CrossEntropy,
    ModelSingle,
    ModelMulti,
    ModelPart,
}

impl CheckKind {
    pub const ALL: [CheckKind; 11] = [
        CheckKind::Conv,
        CheckKind::ConvTi,
        CheckKind::Linear,
        CheckKind::Relu,
        CheckKind::MaxPool,
        CheckKind::Unpool,
        CheckKind::GlobalMax,
        CheckKind::CrossEntropy,
        CheckKind::ModelSingle,
        CheckKind::ModelMulti,
        CheckKind::ModelPart,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Conv => "conv",
            CheckKind::ConvTi => "conv_ti",
            CheckKind::Linear => "linear",
            CheckKind::Relu => "relu",
            CheckKind::MaxPool => "max_pool",
            CheckKind::Unpool => "unpool",
            CheckKind::GlobalMax => "global_max",
            CheckKind::CrossEntropy => "cross_entropy",
            CheckKind::ModelSingle => "model_single",
            CheckKind::ModelMulti => "model_multi",
            CheckKind::ModelPart => "model_part",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn is_model(self) -> bool {
        matches!(self, CheckKind::ModelSingle | CheckKind::ModelMulti | CheckKind::ModelPart)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    pub seed: u64,
    /// Random instances per layer kind.
    pub trials: usize,
    /// Tolerance for single layers.
    pub tolerance: f64,
    /// Tolerance for whole-model checks.
    pub model_tolerance: f64,
    /// Test hook: perturb the analytic gradient of this kind.
    pub corrupt: Option<CheckKind>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { seed: 0, trials: 10, tolerance: 1e-5, model_tolerance: 1e-4, corrupt: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindReport {
    pub kind: CheckKind,
    pub trials: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub rows: Vec<KindReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn failing(&self) -> Vec<CheckKind> {
        self.rows.iter().filter(|r| !r.passed).map(|r| r.kind).collect()
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> FeatureMatrix<f64> {
    FeatureMatrix::from_fn(rows, cols, |_, _| normal(rng))
}

/// Random self-inclusive graph, connected through a random spanning path.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Graph {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let mut edges: Vec<(usize, usize)> = perm.windows(2).map(|w| (w[0], w[1])).collect();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, &edges).expect("indices in range")
}

/// Random convolution parameters with every block nonzero.
pub fn random_conv(rng: &mut ChaCha8Rng, m: usize, d: usize, e: usize, ti: bool) -> FeaStConvParams<f64> {
    let mut p = FeaStConvParams::init(m, d, e, rng.random(), ti);
    for b in p.blocks_mut() {
        b.values.iter_mut().for_each(|v| *v = normal(rng));
    }
    p
}

fn randomize<P: Parameters<f64>>(p: &mut P, rng: &mut ChaCha8Rng, scale: f64) {
    for b in p.blocks_mut() {
        b.values.iter_mut().for_each(|v| *v = scale * normal(rng));
    }
}

fn corrupt<P: Parameters<f64>>(p: &mut P) {
    if let Some(v) = p.blocks_mut().into_iter().flat_map(|b| b.values.iter_mut()).next() {
        *v += 1e-2 * (1.0 + v.abs());
    }
}

fn corrupt_matrix(x: &mut FeatureMatrix<f64>) {
    if let Some(v) = x.as_mut_slice().first_mut() {
        *v += 1e-2 * (1.0 + v.abs());
    }
}

/// Worst relative error of one random instance of `kind`.
pub fn check_instance(kind: CheckKind, seed: u64, inject: bool) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;
    match kind {
        CheckKind::Conv | CheckKind::ConvTi => {
            let n = rng.random_range(2..=30);
            let (d, e, m) = (rng.random_range(1..=8), rng.random_range(1..=8), rng.random_range(1..=4));
            let graph = random_graph(rng, n, 0.15);
            let p = random_conv(rng, m, d, e, kind == CheckKind::ConvTi);
            let x = random_matrix(rng, n, d);
            let r = random_matrix(rng, n, e);
            let mut g = conv::backward(&p, &x, &graph, &r)?;
            if inject {
                corrupt(&mut g.dparams);
            }
            let wp = check_blocks(&p, &g.dparams, |q| dot(&r, &conv::forward(q, &x, &graph).unwrap()));
            let wx = check_matrix(&x, &g.dx, |y| dot(&r, &conv::forward(&p, y, &graph).unwrap()));
            Ok(wp.max(wx))
        }
        CheckKind::Linear => {
            let n = rng.random_range(1..=20);
            let (d, e) = (rng.random_range(1..=8), rng.random_range(1..=8));
            let mut p = LinearParams::zeros(d, e);
            randomize(&mut p, rng, 1.0);
            let x = random_matrix(rng, n, d);
            let r = random_matrix(rng, n, e);
            let mut g = linear_backward(&p, &x, &r)?;
            if inject {
                corrupt(&mut g.dparams);
            }
            let wp = check_blocks(&p, &g.dparams, |q| dot(&r, &linear_forward(q, &x).unwrap()));
            let wx = check_matrix(&x, &g.dx, |y| dot(&r, &linear_forward(&p, y).unwrap()));
            Ok(wp.max(wx))
        }
        CheckKind::Relu => {
            let (n, d) = (rng.random_range(1..=20), rng.random_range(1..=8));
            // Keep inputs away from the kink.
            let x = FeatureMatrix::from_fn(n, d, |_, _| {
                let v: f64 = normal(rng);
                v + 0.1 * v.signum()
            });
            let r = random_matrix(rng, n, d);
            let mut dx = relu_backward(&x, &r)?;
            if inject {
                corrupt_matrix(&mut dx);
            }
            Ok(check_matrix(&x, &dx, |y| dot(&r, &relu_forward(y))))
        }
        CheckKind::MaxPool => {
            let (pairs, d) = (rng.random_range(1..=10), rng.random_range(1..=6));
            let fake: Vec<bool> = (0..pairs).flat_map(|_| [false, rng.random_bool(0.3)]).collect();
            let pm = PoolMap::new(fake)?;
            let x = random_matrix(rng, 2 * pairs, d);
            let r = random_matrix(rng, pairs, d);
            let (_, arg) = max_pool(&x, &pm)?;
            let mut dx = max_pool_backward(&r, &arg)?;
            if inject {
                corrupt_matrix(&mut dx);
            }
            Ok(check_matrix(&x, &dx, |y| dot(&r, &max_pool(y, &pm).unwrap().0)))
        }
        CheckKind::Unpool => {
            let (pairs, c) = (rng.random_range(1..=10), rng.random_range(1..=6));
            let fake: Vec<bool> = (0..pairs).flat_map(|_| [false, rng.random_bool(0.3)]).collect();
            let pm = PoolMap::new(fake)?;
            let mut p = UnpoolParams::zeros(c);
            randomize(&mut p, rng, 1.0);
            let x = random_matrix(rng, pairs, c);
            let r = random_matrix(rng, 2 * pairs, c);
            let mut g = unpool_backward(&x, &p, &pm, &r)?;
            if inject {
                corrupt(&mut g.dparams);
            }
            let wp = check_blocks(&p, &g.dparams, |q| dot(&r, &unpool(&x, q, &pm).unwrap()));
            let wx = check_matrix(&x, &g.dx, |y| dot(&r, &unpool(y, &p, &pm).unwrap()));
            Ok(wp.max(wx))
        }
        CheckKind::GlobalMax => {
            let n = rng.random_range(1..=12);
            let k = rng.random_range(1..=3);
            let xs: Vec<FeatureMatrix<f64>> = (0..k)
                .map(|_| {
                    let cols = rng.random_range(1..=5);
                    random_matrix(rng, n, cols)
                })
                .collect();
            let refs: Vec<&FeatureMatrix<f64>> = xs.iter().collect();
            let (y, args) = global_max_concat(&refs)?;
            let r = random_matrix(rng, n, y.cols());
            let mut dxs = global_max_concat_backward(&r, &args)?;
            if inject {
                corrupt_matrix(&mut dxs[0]);
            }
            let mut worst = 0.0f64;
            for t in 0..k {
                let w = check_matrix(&xs[t], &dxs[t], |probe| {
                    let mut parts = refs.clone();
                    parts[t] = probe;
                    dot(&r, &global_max_concat(&parts).unwrap().0)
                });
                worst = worst.max(w);
            }
            Ok(worst)
        }
        CheckKind::CrossEntropy => {
            let (n, c) = (rng.random_range(1..=12), rng.random_range(2..=8));
            let mut mask: Vec<bool> = (0..c).map(|_| rng.random_bool(0.7)).collect();
            mask[0] = true;
            let allowed: Vec<usize> = (0..c).filter(|&k| mask[k]).collect();
            let targets: Vec<usize> = (0..n).map(|_| allowed[rng.random_range(0..allowed.len())]).collect();
            let x = random_matrix(rng, n, c);
            let (_, mut dx) = softmax_cross_entropy(&x, &targets, ClassMask::Shared(&mask))?;
            if inject {
                corrupt_matrix(&mut dx);
            }
            Ok(check_matrix(&x, &dx, |y| softmax_cross_entropy(y, &targets, ClassMask::Shared(&mask)).unwrap().0))
        }
        CheckKind::ModelSingle | CheckKind::ModelMulti | CheckKind::ModelPart => check_model(kind, rng, inject),
    }
}

fn tiny_spec(kind: CheckKind, rng: &mut ChaCha8Rng, d_in: usize, classes: usize) -> ModelSpec {
    use LayerSpec::*;
    let mut w = || rng.random_range(2..=6);
    let (w0, w1, w2, w3) = (w(), w(), w(), w());
    let m = rng.random_range(1..=3);
    let ti = rng.random_bool(0.5);
    let conv = |out| Conv { out, m, translation_invariant: ti };
    let layers = match kind {
        CheckKind::ModelSingle => vec![Lin { out: w0 }, Relu, conv(w1), Relu, conv(w2), Relu, Lin { out: classes }],
        CheckKind::ModelMulti => vec![
            Lin { out: w0 },
            Relu,
            conv(w1),
            Relu,
            Pool,
            conv(w2),
            Relu,
            Unpool,
            SkipConcat { from: 3 },
            conv(w3),
            Relu,
            Lin { out: classes },
        ],
        _ => vec![
            Lin { out: w0 },
            Relu,
            conv(w1),
            Relu,
            Lin { out: w2 },
            Relu,
            GlobalMaxConcat { from: vec![1, 3, 5] },
            Lin { out: w3 },
            Relu,
            Lin { out: classes },
        ],
    };
    ModelSpec { input_width: d_in, classes, layers }
}

fn check_model(kind: CheckKind, rng: &mut ChaCha8Rng, inject: bool) -> Result<f64> {
    let n = rng.random_range(4..=15);
    let (d_in, classes) = (rng.random_range(1..=4), rng.random_range(2..=5));
    let graph = random_graph(rng, n, 0.2);
    let spec = tiny_spec(kind, rng, d_in, classes);
    let hierarchy = if kind == CheckKind::ModelMulti { Some(CoarseningHierarchy::build(&graph, 1)?) } else { None };
    let mut params = ModelParams::init(&spec, rng.random())?;
    for l in &mut params.layers {
        // Non-default unpool kernels and nonzero offsets exercise every path.
        for b in l.blocks_mut() {
            if b.name != "w" {
                b.values.iter_mut().for_each(|v| *v = 0.5 * normal(rng));
            }
        }
    }
    let x = random_matrix(rng, n, d_in);
    let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let h = hierarchy.as_ref();
    let loss = |p: &ModelParams<f64>, x: &FeatureMatrix<f64>| {
        let (logits, _) = model_forward(&spec, p, x, &graph, h).unwrap();
        softmax_cross_entropy(&logits, &targets, ClassMask::All).unwrap().0
    };
    let (logits, cache) = model_forward(&spec, &params, &x, &graph, h)?;
    let (_, dlogits) = softmax_cross_entropy(&logits, &targets, ClassMask::All)?;
    let (mut g, dx) = model_backward(&spec, &params, &graph, h, &cache, &dlogits)?;
    if inject {
        corrupt(&mut g);
    }
    let wp = check_blocks(&params, &g, |p| loss(p, &x));
    let wx = check_matrix(&x, &dx, |y| loss(&params, y));
    Ok(wp.max(wx))
}

/// Runs `cfg.trials` instances of every kind.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut rows = Vec::with_capacity(CheckKind::ALL.len());
    for (ki, kind) in CheckKind::ALL.into_iter().enumerate() {
        let tolerance = if kind.is_model() { cfg.model_tolerance } else { cfg.tolerance };
        let mut worst = 0.0f64;
        for t in 0..cfg.trials {
            let seed = sub_seed(sub_seed(cfg.seed, ki as u64), t as u64);
            worst = worst.max(check_instance(kind, seed, cfg.corrupt == Some(kind))?);
        }
        rows.push(KindReport { kind, trials: cfg.trials, worst, tolerance, passed: worst <= tolerance });
    }
    Ok(GradcheckReport { rows })
}
