//! Acceptance suite. Runs every criterion sequentially on a one-thread pool
//! (several criteria carry wall-clock budgets) and prints one line each.
//!
//! `cargo test -p feastnet --test acceptance -- 3 7` runs only criteria 3 and 7.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use feastnet::coarsen::{graclus_step, CoarseningHierarchy};
use feastnet::conv::{
    backward, compute_assignments, forward, from_mahalanobis, grid_reference_conv, parameter_count, ConvInit,
    FeaStConvParams, Grid, MahalanobisParams,
};
use feastnet::eval::{geodesic_error_curve, geodesic_errors, miou};
use feastnet::layers::{softmax_cross_entropy, ClassMask};
use feastnet::model::{build_single_scale, model_backward, model_forward, ArchConfig, LayerSpec, ModelParams, ModelSpec};
use feastnet::toy::{toy_task, ToyConfig, ToyTask};
use feastnet::trainer::{read_checkpoint, write_checkpoint, Sample, TrainConfig, Trainer};
use feastnet::{FeatureMatrix, Graph, Mesh, Parameters};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok { Ok(()) } else { Err(msg()) }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> FeatureMatrix<f64> {
    let v = (0..rows * cols).map(|_| normal(rng)).collect();
    FeatureMatrix::from_vec(rows, cols, v).unwrap()
}

/// Connected random graph: spanning path plus edges with probability `p`.
fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Graph {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
    for i in 0..n {
        for j in i + 2..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

fn randomize<P: Parameters<f64>>(p: &mut P, rng: &mut ChaCha8Rng, scale: f64) {
    for b in p.blocks_mut() {
        for v in b.values.iter_mut() {
            *v = scale * normal(rng);
        }
    }
}

fn dot(a: &FeatureMatrix<f64>, b: &FeatureMatrix<f64>) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// finite differences

/// Central-difference error with an absolute floor scaled to the loss:
/// round-off in `(L(θ+h) - L(θ-h)) / 2h` is about `ulp(L) / h`.
fn rel_err(analytic: f64, numeric: f64, l0: f64) -> f64 {
    let floor = 1e-3 * l0.abs().max(1.0);
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn step(v: f64) -> f64 {
    1e-6 * v.abs().max(1.0)
}

fn fd_params<P: Parameters<f64> + Clone>(p: &P, analytic: &P, loss: impl Fn(&P) -> f64) -> f64 {
    let l0 = loss(p);
    let grads: Vec<f64> = analytic.blocks().iter().flat_map(|b| b.values.to_vec()).collect();
    let n = grads.len();
    assert_eq!(n, p.num_parameters());
    let mut worst = 0.0f64;
    for k in 0..n {
        let probe = |delta: f64| {
            let mut q = p.clone();
            let mut idx = k;
            for b in q.blocks_mut() {
                if idx < b.values.len() {
                    b.values[idx] += delta;
                    break;
                }
                idx -= b.values.len();
            }
            loss(&q)
        };
        let theta: f64 = p.blocks().iter().flat_map(|b| b.values.iter().copied()).nth(k).unwrap();
        let h = step(theta);
        let numeric = (probe(h) - probe(-h)) / (2.0 * h);
        worst = worst.max(rel_err(grads[k], numeric, l0));
    }
    worst
}

fn fd_input(x: &FeatureMatrix<f64>, analytic: &FeatureMatrix<f64>, loss: impl Fn(&FeatureMatrix<f64>) -> f64) -> f64 {
    let l0 = loss(x);
    let mut worst = 0.0f64;
    for k in 0..x.as_slice().len() {
        let h = step(x.as_slice()[k]);
        let mut a = x.clone();
        a.as_mut_slice()[k] += h;
        let mut b = x.clone();
        b.as_mut_slice()[k] -= h;
        let numeric = (loss(&a) - loss(&b)) / (2.0 * h);
        worst = worst.max(rel_err(analytic.as_slice()[k], numeric, l0));
    }
    worst
}

fn conv_instance(seed: u64, ti: bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=30);
    let (d, e, m) = (rng.random_range(1..=8), rng.random_range(1..=8), rng.random_range(1..=4));
    let graph = random_graph(&mut rng, n, 0.15);
    let mut p = FeaStConvParams::zeros(m, d, e, ti);
    randomize(&mut p, &mut rng, 0.7);
    let x = random_matrix(&mut rng, n, d);
    let r = random_matrix(&mut rng, n, e);
    let g = backward(&p, &x, &graph, &r).unwrap();
    let wp = fd_params(&p, &g.dparams, |q| dot(&r, &forward(q, &x, &graph).unwrap()));
    let wx = fd_input(&x, &g.dx, |y| dot(&r, &forward(&p, y, &graph).unwrap()));
    wp.max(wx)
}

fn conv(out: usize, m: usize, ti: bool) -> LayerSpec {
    LayerSpec::Conv { out, m, translation_invariant: ti }
}

fn model_instance(kind: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = rng.random_range(2..=5);
    let (layers, n, levels) = match kind {
        0 => (
            vec![LayerSpec::Lin { out: 4 }, LayerSpec::Relu, conv(5, 3, true), LayerSpec::Relu, conv(4, 2, false), LayerSpec::Relu, LayerSpec::Lin { out: classes }],
            12,
            0,
        ),
        1 => (
            vec![
                LayerSpec::Lin { out: 4 },
                LayerSpec::Relu,
                conv(5, 2, true),
                LayerSpec::Relu,
                LayerSpec::Pool,
                conv(5, 2, true),
                LayerSpec::Relu,
                LayerSpec::Unpool,
                LayerSpec::SkipConcat { from: 3 },
                conv(4, 2, false),
                LayerSpec::Relu,
                LayerSpec::Lin { out: classes },
            ],
            15,
            1,
        ),
        _ => (
            vec![
                LayerSpec::Lin { out: 4 },
                LayerSpec::Relu,
                conv(5, 2, true),
                LayerSpec::Relu,
                conv(3, 2, false),
                LayerSpec::Relu,
                LayerSpec::GlobalMaxConcat { from: vec![1, 3, 5] },
                LayerSpec::Lin { out: classes },
            ],
            10,
            0,
        ),
    };
    let spec = ModelSpec { input_width: 3, classes, layers };
    let graph = random_graph(&mut rng, n, 0.2);
    let hierarchy = (levels > 0).then(|| CoarseningHierarchy::build(&graph, levels).unwrap());
    let mut params = ModelParams::init(&spec, rng.random()).unwrap();
    randomize(&mut params, &mut rng, 0.6);
    let x = random_matrix(&mut rng, n, 3);
    let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();

    let loss = |p: &ModelParams<f64>| {
        let (logits, _) = model_forward(&spec, p, &x, &graph, hierarchy.as_ref()).unwrap();
        softmax_cross_entropy(&logits, &targets, ClassMask::All).unwrap().0
    };
    let (logits, cache) = model_forward(&spec, &params, &x, &graph, hierarchy.as_ref()).unwrap();
    let (_, dlogits) = softmax_cross_entropy(&logits, &targets, ClassMask::All).unwrap();
    let (grads, dx) = model_backward(&spec, &params, &graph, hierarchy.as_ref(), &cache, &dlogits).unwrap();
    let wp = fd_params(&params, &grads, loss);
    let wx = fd_input(&x, &dx, |y| {
        let (logits, _) = model_forward(&spec, &params, y, &graph, hierarchy.as_ref()).unwrap();
        softmax_cross_entropy(&logits, &targets, ClassMask::All).unwrap().0
    });
    wp.max(wx)
}

fn c1_gradients() -> Outcome {
    let t = Instant::now();
    let conv_worst = (0..50u64).map(|s| conv_instance(0xC0 + s, s % 2 == 1)).fold(0.0, f64::max);
    let mut model_worst = 0.0f64;
    for kind in 0..3 {
        for s in 0..4u64 {
            model_worst = model_worst.max(model_instance(kind, 0x3D + 17 * s + kind as u64));
        }
    }
    let elapsed = t.elapsed();
    ensure(conv_worst <= 1e-5, || format!("conv worst {conv_worst:.2e} > 1e-5"))?;
    ensure(model_worst <= 1e-4, || format!("model worst {model_worst:.2e} > 1e-4"))?;
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!("50 conv instances worst {conv_worst:.2e}, 12 models worst {model_worst:.2e}, {elapsed:.1?}"))
}

// ---------------------------------------------------------------------------

fn c2_grid_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (h, w) = (8usize, 8usize);
    let image = Grid { height: h, width: w, channels: 1, values: (0..h * w).map(|_| normal(&mut rng)).collect() };
    let filters: Vec<Vec<f64>> = (0..9).map(|_| vec![normal(&mut rng)]).collect();
    let bias = [normal(&mut rng)];

    // Zero-padded border so every image pixel sees its full 3x3 window.
    let (ph, pw) = (h + 2, w + 2);
    let id = |r: usize, c: usize| r * pw + c;
    let mut edges = Vec::new();
    for r in 0..ph {
        for c in 0..pw {
            for (dr, dc) in [(0, 1), (1, -1), (1, 0), (1, 1)] {
                let (rr, cc) = (r as isize + dr, c as isize + dc);
                if rr < ph as isize && cc >= 0 && cc < pw as isize {
                    edges.push((id(r, c), id(rr as usize, cc as usize)));
                }
            }
        }
    }
    let graph = Graph::from_edges(ph * pw, &edges).unwrap();
    let x = FeatureMatrix::from_fn(ph * pw, 3, |i, k| {
        let (r, c) = (i / pw, i % pw);
        match k {
            0 if (1..=h).contains(&r) && (1..=w).contains(&c) => image.pixel(r - 1, c - 1)[0],
            0 => 0.0,
            1 => r as f64,
            _ => c as f64,
        }
    });

    // z_m are the window offsets; the metric acts on the coordinates only
    // (a vanishing value-channel entry keeps it positive definite).
    let s = 1e4;
    let z: Vec<f64> = (0..9).flat_map(|m| [0.0, (m / 3) as f64 - 1.0, (m % 3) as f64 - 1.0]).collect();
    let sigma = vec![s * 1e-12, 0.0, 0.0, 0.0, s, 0.0, 0.0, 0.0, s];
    let mp = MahalanobisParams::new(9, 3, z, sigma).map_err(|e| e.to_string())?;
    let mut p = from_mahalanobis(&mp, 1);
    // Interior nodes average over nine neighbors.
    for (m, f) in filters.iter().enumerate() {
        p.w_m_mut(m).copy_from_slice(&[9.0 * f[0], 0.0, 0.0]);
    }
    p.b_mut().copy_from_slice(&bias);
    let y = forward(&p, &x, &graph).map_err(|e| e.to_string())?;

    let reference = grid_reference_conv(&filters, 3, 3, &bias, &image).map_err(|e| e.to_string())?;
    // Test-side direct convolution as a second reference.
    let direct = |r: usize, c: usize| {
        let mut acc = bias[0];
        for (m, f) in filters.iter().enumerate() {
            let (rr, cc) = (r as isize + (m / 3) as isize - 1, c as isize + (m % 3) as isize - 1);
            if (0..h as isize).contains(&rr) && (0..w as isize).contains(&cc) {
                acc += f[0] * image.pixel(rr as usize, cc as usize)[0];
            }
        }
        acc
    };
    let mut dev = 0.0f64;
    let mut ref_dev = 0.0f64;
    for r in 0..h {
        for c in 0..w {
            let yg = y.get(id(r + 1, c + 1), 0);
            dev = dev.max((yg - reference.pixel(r, c)[0]).abs());
            ref_dev = ref_dev.max((direct(r, c) - reference.pixel(r, c)[0]).abs());
        }
    }
    ensure(ref_dev <= 1e-12, || format!("reference conv disagrees with direct oracle by {ref_dev:e}"))?;
    ensure(dev <= 1e-8, || format!("max abs deviation {dev:e} > 1e-8"))?;
    Ok(format!("8x8 grid, s = 1e4: max abs deviation {dev:.1e}"))
}

fn c3_mahalanobis() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (m, d) = (rng.random_range(1..=5), rng.random_range(1..=6));
        let n = rng.random_range(2..=15);
        let a = random_matrix(&mut rng, d, d);
        // Σ = A Aᵀ / d + 0.1 I
        let sigma: Vec<f64> = (0..d * d)
            .map(|rc| {
                let (r, c) = (rc / d, rc % d);
                let s: f64 = (0..d).map(|k| a.get(r, k) * a.get(c, k)).sum::<f64>() / d as f64;
                s + if r == c { 0.1 } else { 0.0 }
            })
            .collect();
        let z: Vec<f64> = (0..m * d).map(|_| normal(&mut rng)).collect();
        let mp = MahalanobisParams::new(m, d, z.clone(), sigma.clone()).map_err(|e| e.to_string())?;
        let graph = random_graph(&mut rng, n, 0.3);
        let x = random_matrix(&mut rng, n, d);
        let q = compute_assignments(&from_mahalanobis(&mp, 2), &x, &graph).map_err(|e| e.to_string())?;
        for (i, j, qm) in q.iter() {
            let logits: Vec<f64> = (0..m)
                .map(|k| {
                    let diff: Vec<f64> = (0..d).map(|t| x.get(j, t) - x.get(i, t) - z[k * d + t]).collect();
                    let mut dist = 0.0;
                    for r in 0..d {
                        for c in 0..d {
                            dist += diff[r] * sigma[r * d + c] * diff[c];
                        }
                    }
                    -dist
                })
                .collect();
            let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let ex: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
            let total: f64 = ex.iter().sum();
            for k in 0..m {
                worst = worst.max((qm[k] - ex[k] / total).abs());
            }
        }
    }
    ensure(worst <= 1e-12, || format!("max abs deviation {worst:e} > 1e-12"))?;
    Ok(format!("100 instances, max abs deviation {worst:.1e}"))
}

fn c4_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut sum_dev, mut mass_dev) = (0.0f64, 0.0f64);
    let (mut min_deg, mut max_deg) = (usize::MAX, 0usize);
    for _ in 0..20 {
        // Hub of degree 50, a pendant path, and a sparse random remainder.
        let n = 120;
        let mut edges: Vec<(usize, usize)> = (1..=50).map(|j| (0, j)).collect();
        edges.extend((51..n - 1).map(|i| (i, i + 1)));
        for _ in 0..40 {
            let (i, j) = (rng.random_range(1..=50), rng.random_range(1..=50));
            if i != j {
                edges.push((i, j));
            }
        }
        let graph = Graph::from_edges(n, &edges).unwrap();
        for i in 0..n {
            let k = graph.neighbors(i).len() - 1;
            min_deg = min_deg.min(k);
            max_deg = max_deg.max(k);
        }
        let (m, d) = (rng.random_range(1..=6), rng.random_range(1..=5));
        let mut p = FeaStConvParams::zeros(m, d, 1, rng.random_bool(0.5));
        randomize(&mut p, &mut rng, 3.0);
        let x = random_matrix(&mut rng, n, d);
        let q = compute_assignments(&p, &x, &graph).map_err(|e| e.to_string())?;
        let mut mass = vec![0.0f64; n];
        for (i, _, qm) in q.iter() {
            let s: f64 = qm.iter().sum();
            sum_dev = sum_dev.max((s - 1.0).abs());
            mass[i] += s / graph.neighbors(i).len() as f64;
        }
        for v in mass {
            mass_dev = mass_dev.max((v - 1.0).abs());
        }
    }
    ensure(min_deg == 1 && max_deg == 50, || format!("degree range {min_deg}..{max_deg}, wanted 1..50"))?;
    ensure(sum_dev <= 1e-12, || format!("Σ_m q deviates by {sum_dev:e}"))?;
    ensure(mass_dev <= 1e-12, || format!("per-node mass deviates by {mass_dev:e}"))?;
    Ok(format!("degrees {min_deg}-{max_deg}: Σq dev {sum_dev:.1e}, node mass dev {mass_dev:.1e}"))
}

fn c5_parameter_count() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let (m, d, e) = (rng.random_range(1..=32), rng.random_range(1..=128), rng.random_range(1..=128));
        for ti in [false, true] {
            let p = FeaStConvParams::<f64>::zeros(m, d, e, ti);
            let mut enumerated = 0usize;
            for b in p.blocks() {
                ensure(b.shape.iter().product::<usize>() == b.values.len(), || format!("block {} shape", b.name))?;
                enumerated += b.values.iter().count();
            }
            let counted = parameter_count(m, d, e, ti);
            ensure(counted == enumerated, || format!("(M,D,E,TI)=({m},{d},{e},{ti}): {counted} vs {enumerated} enumerated"))?;
        }
        // the u, v overhead on top of the weights
        let full = FeaStConvParams::<f64>::zeros(m, d, e, false);
        let wuv: usize = full.blocks().iter().filter(|b| matches!(b.name, "w" | "u" | "v")).map(|b| b.values.len()).sum();
        ensure(wuv * e == (m * d * e) * (e + 2), || format!("(E+2)/E ratio fails at ({m},{d},{e})"))?;
    }
    Ok("20 (M,D,E) triples, both modes, exact".into())
}

fn c6_coarsening() -> Outcome {
    // worked example: path 0-1-2-3
    let path = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
    let (coarse, matching) = graclus_step(&path);
    ensure(matching.members == vec![vec![0, 1], vec![2, 3]], || format!("path matching {:?}", matching.members))?;
    ensure(
        coarse.n() == 2 && coarse.weight(0, 1) == Some(1.0) && coarse.weight(0, 0) == Some(1.0) && coarse.weight(1, 1) == Some(1.0),
        || format!("path coarse graph {coarse:?}"),
    )?;
    let h = CoarseningHierarchy::build(&path, 1).map_err(|e| e.to_string())?;
    ensure(h.ordering(0) == [0, 1, 2, 3], || format!("path ordering {:?}", h.ordering(0)))?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut slowest = Duration::ZERO;
    for n in [500usize, 2000, 7000] {
        // random spanning tree plus extra edges, small integer weights so sums are exact
        let mut edges: Vec<(usize, usize, f64)> = (1..n).map(|i| (rng.random_range(0..i), i, rng.random_range(1..=5) as f64)).collect();
        for _ in 0..2 * n {
            let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
            if i != j {
                edges.push((i, j, rng.random_range(1..=5) as f64));
            }
        }
        let graph = Graph::from_weighted_edges(n, &edges).unwrap();
        let t = Instant::now();
        let h = CoarseningHierarchy::build(&graph, 3).map_err(|e| e.to_string())?;
        slowest = slowest.max(t.elapsed());

        for l in 0..3 {
            let (fine, coarse) = (h.graph(l), h.graph(l + 1));
            let matching = h.matching(l);
            // oracle: contract the fine graph by cluster id
            let mut want: BTreeMap<(usize, usize), f64> = BTreeMap::new();
            let mut fine_total = 0.0;
            for i in 0..fine.n() {
                for (&j, &w) in fine.neighbors(i).iter().zip(fine.weights(i)) {
                    if j >= i && w > 0.0 {
                        fine_total += w;
                        let (a, b) = (matching.cluster_of[i], matching.cluster_of[j]);
                        *want.entry((a.min(b), a.max(b))).or_default() += w;
                    }
                }
            }
            let mut coarse_total = 0.0;
            for a in 0..coarse.n() {
                for (&b, &w) in coarse.neighbors(a).iter().zip(coarse.weights(a)) {
                    if b >= a {
                        coarse_total += w;
                        ensure(want.get(&(a, b)).copied().unwrap_or(0.0) == w, || format!("n={n} level {l}: coarse weight ({a},{b})"))?;
                    }
                }
            }
            ensure(fine_total == coarse_total, || format!("n={n} level {l}: weight {fine_total} vs {coarse_total}"))?;
            // pairs 2p, 2p+1 of level l are exactly cluster p of level l+1
            let (fo, co) = (h.ordering(l), h.ordering(l + 1));
            ensure(fo.len() == 2 * co.len(), || format!("n={n} level {l}: padded sizes"))?;
            for (p, &c) in co.iter().enumerate() {
                let mut kids: Vec<usize> = [fo[2 * p], fo[2 * p + 1]].into_iter().filter(|&v| v < fine.n()).collect();
                kids.sort_unstable();
                let mut members = if c < coarse.n() { matching.members[c].clone() } else { Vec::new() };
                members.sort_unstable();
                ensure(kids == members, || format!("n={n} level {l}: position {p} holds {kids:?}, cluster {members:?}"))?;
                if let [a, b] = members[..] {
                    ensure(fine.weight(a, b).is_some_and(|w| w > 0.0), || format!("n={n}: matched non-neighbors {a},{b}"))?;
                }
            }
        }
    }
    ensure(slowest < Duration::from_secs(5), || format!("3-level build took {slowest:?}"))?;
    Ok(format!("path example ok; up to 7000 nodes, slowest build {slowest:.2?}"))
}

// ---------------------------------------------------------------------------
// toy training

/// Test-side accuracy: arg-max of the logits against the targets.
fn oracle_accuracy(spec: &ModelSpec, params: &ModelParams<f64>, samples: &[Sample<f64>]) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for s in samples {
        let logits = s.forward(spec, params).unwrap();
        for (i, &t) in s.targets.iter().enumerate() {
            let row = logits.row(i);
            let best = (0..row.len()).fold(0, |b, k| if row[k] > row[b] { k } else { b });
            hits += (best == t) as usize;
            total += 1;
        }
    }
    hits as f64 / total as f64
}

fn toy_arch(m: usize, ti: bool) -> ArchConfig {
    ArchConfig { m, translation_invariant: ti, width_scale: 0.5, conv_init: ConvInit::VariancePreserving }
}

fn toy_train_cfg(epochs: usize, seed: u64, noise_levels: Vec<f64>) -> TrainConfig {
    TrainConfig { learning_rate: 0.1, weight_decay: 1e-4, epochs, seed, noise_levels, ..TrainConfig::default() }
}

/// Trains on the task's training set; returns (spec, params).
fn fit(task: &ToyTask<f64>, arch: &ArchConfig, cfg: &TrainConfig) -> (ModelSpec, ModelParams<f64>) {
    let (spec, params) = build_single_scale(3, task.classes(), arch, cfg.seed).unwrap();
    let mut t = Trainer::new(spec, params, cfg.clone()).unwrap();
    t.run(&task.train, None, None).unwrap();
    (t.spec, t.params)
}

fn c7_toy_overfit() -> Outcome {
    let task = toy_task::<f64>(&ToyConfig::default(), 1).map_err(|e| e.to_string())?;
    ensure(task.classes() == 162, || format!("{} vertices", task.classes()))?;
    let cfg = toy_train_cfg(500, 1, vec![]);
    let (spec, params) = build_single_scale(3, task.classes(), &toy_arch(8, true), cfg.seed).unwrap();
    let mut trainer = Trainer::new(spec, params, cfg).unwrap();
    let t = Instant::now();
    let mut acc = 0.0;
    while trainer.epoch < 500 {
        trainer.run_epoch(&task.train).map_err(|e| e.to_string())?;
        acc = oracle_accuracy(&trainer.spec, &trainer.params, &task.train);
        if acc >= 0.99 {
            break;
        }
    }
    let elapsed = t.elapsed();
    ensure(acc >= 0.99, || format!("training accuracy {acc:.4} after 500 epochs"))?;
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!("train accuracy {acc:.4} at epoch {}, {elapsed:.1?}", trainer.epoch))
}

const ABLATION_SEED: u64 = 1;
const ABLATION_EPOCHS: usize = 150;

fn c8_translation_ablation() -> Outcome {
    let toy = ToyConfig { n_train: 6, center: false, train_translation: 0.2, test_translation: 0.2, ..ToyConfig::default() };
    let task = toy_task::<f64>(&toy, ABLATION_SEED).map_err(|e| e.to_string())?;
    let cfg = toy_train_cfg(ABLATION_EPOCHS, ABLATION_SEED, vec![]);
    let (s_ti, p_ti) = fit(&task, &toy_arch(8, true), &cfg);
    let (s_nt, p_nt) = fit(&task, &toy_arch(8, false), &cfg);
    let (ti, nt) = (oracle_accuracy(&s_ti, &p_ti, &task.test), oracle_accuracy(&s_nt, &p_nt, &task.test));
    ensure(ti - nt >= 0.20, || format!("TI {ti:.3} vs non-TI {nt:.3}: gap below 20 points"))?;
    Ok(format!("test accuracy TI {ti:.3} vs non-TI {nt:.3} (+{:.1} points)", 100.0 * (ti - nt)))
}

fn c9_m_ablation() -> Outcome {
    let task = toy_task::<f64>(&ToyConfig { n_train: 6, ..ToyConfig::default() }, ABLATION_SEED).map_err(|e| e.to_string())?;
    let cfg = toy_train_cfg(ABLATION_EPOCHS, ABLATION_SEED, vec![]);
    let (s8, p8) = fit(&task, &toy_arch(8, true), &cfg);
    let (s1, p1) = fit(&task, &toy_arch(1, true), &cfg);
    let (a8, a1) = (oracle_accuracy(&s8, &p8, &task.test), oracle_accuracy(&s1, &p1, &task.test));
    ensure(a8 >= a1, || format!("M=8 {a8:.3} < M=1 {a1:.3}"))?;
    Ok(format!("test accuracy M=8 {a8:.3} vs M=1 {a1:.3}"))
}

fn c10_noise() -> Outcome {
    let toy = ToyConfig { n_train: 6, test_noise: 0.1, ..ToyConfig::default() };
    let task = toy_task::<f64>(&toy, ABLATION_SEED).map_err(|e| e.to_string())?;
    let noisy_cfg = toy_train_cfg(ABLATION_EPOCHS, ABLATION_SEED, vec![0.01, 0.05, 0.1, 0.15, 0.2]);
    let clean_cfg = toy_train_cfg(ABLATION_EPOCHS, ABLATION_SEED, vec![]);
    let (sn, pn) = fit(&task, &toy_arch(8, true), &noisy_cfg);
    let (sc, pc) = fit(&task, &toy_arch(8, true), &clean_cfg);
    let (an, ac) = (oracle_accuracy(&sn, &pn, &task.test), oracle_accuracy(&sc, &pc, &task.test));
    ensure(an > ac, || format!("noise-trained {an:.3} <= clean-trained {ac:.3}"))?;
    Ok(format!("accuracy at sigma 0.1: noise-trained {an:.3} vs clean-trained {ac:.3}"))
}

// ---------------------------------------------------------------------------

fn c11_scaling() -> Outcome {
    let (m, d, e, k) = (8usize, 16usize, 16usize, 8usize);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = FeaStConvParams::init(m, d, e, 11, false);
    let sizes = [1000usize, 2000, 4000];
    let cases: Vec<(Graph, FeatureMatrix<f64>)> = sizes
        .iter()
        .map(|&n| {
            // k/2 random partners per node: mean neighborhood size ~k
            let mut edges = Vec::new();
            for i in 0..n {
                for _ in 0..k / 2 {
                    let j = rng.random_range(0..n);
                    if j != i {
                        edges.push((i, j));
                    }
                }
            }
            (Graph::from_edges(n, &edges).unwrap(), random_matrix(&mut rng, n, d))
        })
        .collect();
    let mut times = vec![Vec::new(); sizes.len()];
    // Sizes are interleaved so drift in machine load hits all of them alike.
    for rep in 0..25 {
        for (c, (graph, x)) in cases.iter().enumerate() {
            let t = Instant::now();
            for _ in 0..4 {
                std::hint::black_box(forward(&p, x, graph).unwrap());
            }
            if rep >= 4 {
                times[c].push(t.elapsed());
            }
        }
    }
    let medians: Vec<(usize, f64, Duration)> = times
        .iter_mut()
        .zip(&cases)
        .map(|(ts, (graph, _))| {
            ts.sort();
            (graph.n(), graph.mean_neighbors(), ts[ts.len() / 2])
        })
        .collect();
    let ratios: Vec<f64> = medians.windows(2).map(|w| w[1].2.as_secs_f64() / w[0].2.as_secs_f64()).collect();
    let detail = medians.iter().map(|(n, k, t)| format!("N={n} K={k:.1} {t:.2?}")).collect::<Vec<_>>().join(", ");
    ensure(ratios.iter().all(|r| (1.6..=2.6).contains(r)), || format!("ratios {ratios:.2?} ({detail})"))?;
    Ok(format!("doubling ratios {:.2} and {:.2} ({detail})", ratios[0], ratios[1]))
}

fn strip(n: usize) -> Mesh<f64> {
    // Row 0 is a unit-spaced path; row 1 is far enough away never to shortcut it.
    let mut v: Vec<[f64; 3]> = (0..n).map(|i| [i as f64, 0.0, 0.0]).collect();
    v.extend((0..n).map(|i| [i as f64 + 0.5, 10.0, 0.0]));
    let mut f = Vec::new();
    for i in 0..n - 1 {
        f.push([i, i + 1, n + i]);
        f.push([i + 1, n + i + 1, n + i]);
    }
    Mesh::new(v, f).unwrap()
}

/// All-pairs shortest paths over mesh edges (Floyd-Warshall).
fn floyd(mesh: &Mesh<f64>) -> Vec<Vec<f64>> {
    let n = mesh.n_vertices();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    let v = mesh.vertices();
    for f in mesh.faces() {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            let len = (0..3).map(|k| (v[a][k] - v[b][k]).powi(2)).sum::<f64>().sqrt();
            d[a][b] = d[a][b].min(len);
            d[b][a] = d[b][a].min(len);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

fn c12_metrics() -> Outcome {
    // mIoU: brute-force set counting
    let (pred, gt) = ([0usize, 0, 0, 1, 1], [0usize, 0, 1, 0, 1]);
    let iou = |part: usize| {
        let p: Vec<usize> = (0..5).filter(|&i| pred[i] == part).collect();
        let g: Vec<usize> = (0..5).filter(|&i| gt[i] == part).collect();
        let inter = p.iter().filter(|i| g.contains(i)).count();
        let union = p.len() + g.len() - inter;
        inter as f64 / union as f64
    };
    let oracle = (iou(0) + iou(1)) / 2.0;
    let (per_part, mean) = miou(&pred, &gt, &[0, 1]).map_err(|e| e.to_string())?;
    ensure(per_part == vec![iou(0), iou(1)] && mean == oracle, || format!("mIoU {per_part:?} {mean} vs oracle {oracle}"))?;
    ensure((mean - 5.0 / 12.0).abs() <= f64::EPSILON, || format!("mIoU {mean} != 5/12"))?;

    // geodesic errors on the path row of a strip mesh
    let n = 9;
    let mesh = strip(n);
    let dist = floyd(&mesh);
    let gt: Vec<usize> = (0..n).collect();
    let pred: Vec<usize> = vec![0, 2, 2, 0, 4, 8, 6, 7, 5];
    let errs = geodesic_errors(&pred, &gt, &mesh).map_err(|e| e.to_string())?;
    let want: Vec<f64> = pred.iter().zip(&gt).map(|(&p, &g)| dist[g][p]).collect();
    ensure(errs == want, || format!("geodesic errors {errs:?} vs oracle {want:?}"))?;
    ensure(want == vec![0.0, 1.0, 0.0, 3.0, 0.0, 3.0, 0.0, 0.0, 3.0], || format!("path distances {want:?}"))?;
    let thresholds = [0.0, 0.5, 1.0, 2.5, 3.0];
    let curve = geodesic_error_curve(&pred, &gt, &mesh, &thresholds).map_err(|e| e.to_string())?;
    let want_curve: Vec<(f64, f64)> =
        thresholds.iter().map(|&t| (t, want.iter().filter(|&&e| e <= t).count() as f64 / n as f64)).collect();
    ensure(curve.points == want_curve, || format!("curve {:?} vs oracle {want_curve:?}", curve.points))?;
    Ok("mIoU = 5/12; strip-mesh geodesic errors and curve match Floyd-Warshall exactly".into())
}

fn c13_determinism() -> Outcome {
    let toy = ToyConfig { subdivisions: 1, n_train: 3, ..ToyConfig::default() };
    let task = toy_task::<f64>(&toy, 13).map_err(|e| e.to_string())?;
    let arch = ArchConfig { m: 3, translation_invariant: true, width_scale: 0.25, conv_init: ConvInit::MassScaled };
    let cfg = TrainConfig { learning_rate: 0.05, epochs: 6, seed: 13, noise_levels: vec![0.0, 0.05], ..TrainConfig::default() };
    let run = |epochs: usize, from: Option<Vec<u8>>| -> (Vec<u8>, Vec<u8>) {
        let cfg = TrainConfig { epochs, ..cfg.clone() };
        let mut t = match from {
            Some(bytes) => Trainer::resume(read_checkpoint(&bytes).unwrap(), cfg).unwrap(),
            None => {
                let (spec, params) = build_single_scale(3, task.classes(), &arch, cfg.seed).unwrap();
                Trainer::new(spec, params, cfg).unwrap()
            }
        };
        let mut log = Vec::new();
        t.run(&task.train, Some(&mut log), None).unwrap();
        (write_checkpoint(&t.checkpoint()).unwrap(), log)
    };
    let (ckpt_a, log_a) = run(6, None);
    let (ckpt_b, log_b) = run(6, None);
    ensure(ckpt_a == ckpt_b, || "checkpoints of identical runs differ".into())?;
    ensure(log_a == log_b && !log_a.is_empty(), || "logs of identical runs differ".into())?;

    let back = read_checkpoint::<f64>(&ckpt_a).map_err(|e| e.to_string())?;
    ensure(write_checkpoint(&back).unwrap() == ckpt_a, || "checkpoint round trip not bit-exact".into())?;
    ensure(back.epoch == 6 && back.history.len() == 6 && back.rng_seed == 13, || "restored metadata".into())?;

    let (half, log_1) = run(3, None);
    let (resumed, log_2) = run(6, Some(half));
    ensure(resumed == ckpt_a, || "resumed run differs from uninterrupted run".into())?;
    ensure([log_1, log_2].concat() == log_a, || "resumed log differs".into())?;
    Ok(format!("two runs bit-identical ({} byte checkpoint), round trip exact, 3+3 resume == 6", ckpt_a.len()))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 13] = [
        (1, "gradient suite", c1_gradients),
        (2, "grid recovery", c2_grid_recovery),
        (3, "Mahalanobis equivalence", c3_mahalanobis),
        (4, "normalization identities", c4_normalization),
        (5, "parameter accounting", c5_parameter_count),
        (6, "coarsening", c6_coarsening),
        (7, "toy overfit", c7_toy_overfit),
        (8, "translation-invariance ablation", c8_translation_ablation),
        (9, "M ablation", c9_m_ablation),
        (10, "noise robustness", c10_noise),
        (11, "complexity scaling", c11_scaling),
        (12, "metric oracles", c12_metrics),
        (13, "determinism", c13_determinism),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if std::env::args().any(|a| a == "--list") {
        for (id, name, _) in &criteria {
            println!("{id}: {name}: test");
        }
        return;
    }

    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let mut failed = Vec::new();
    pool.install(|| {
        for (id, name, run) in criteria {
            if !selected.is_empty() && !selected.contains(&id) {
                continue;
            }
            let t = Instant::now();
            let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                Err(format!("panicked: {}", msg.unwrap_or_default()))
            });
            let secs = t.elapsed().as_secs_f64();
            match outcome {
                Ok(detail) => println!("PASS  {id:>2} {name}: {detail} [{secs:.1}s]"),
                Err(detail) => {
                    println!("FAIL  {id:>2} {name}: {detail} [{secs:.1}s]");
                    failed.push(id);
                }
            }
        }
    });
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
