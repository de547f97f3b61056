//! Built-in synthetic correspondence task: a subdivided icosphere and
//! smoothly deformed copies of it, with identity vertex correspondence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coarsen::CoarseningHierarchy;
use crate::error::Result;
use crate::graph::{one_ring, Graph, Mesh};
use crate::scalar::Scalar;
use crate::seed::{streams, sub_seed};
use crate::trainer::Sample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    /// Loop subdivisions of the icosahedron; 2 gives 162 vertices.
    pub subdivisions: usize,
    /// Displacement amplitude of the smooth deformation (unit sphere).
    pub amplitude: f64,
    /// Training shapes: the undeformed sphere followed by deformed copies.
    pub n_train: usize,
    pub n_test: usize,
    /// Each copy is shifted by an offset uniform in `[-t, t]^3`.
    pub train_translation: f64,
    pub test_translation: f64,
    /// Relative vertex noise applied to test copies.
    pub test_noise: f64,
    /// Feed centroid-relative coordinates.
    pub center: bool,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            subdivisions: 2,
            amplitude: 0.15,
            n_train: 2,
            n_test: 4,
            train_translation: 0.0,
            test_translation: 0.0,
            test_noise: 0.0,
            center: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ToyTask<T> {
    pub reference: Mesh<T>,
    pub graph: Graph,
    pub train: Vec<Sample<T>>,
    pub test: Vec<Sample<T>>,
}

impl<T: Scalar> ToyTask<T> {
    pub fn classes(&self) -> usize {
        self.reference.n_vertices()
    }

    /// Attaches one coarsening hierarchy (shared topology) to every sample.
    pub fn with_hierarchy(mut self, levels: usize) -> Result<Self> {
        let h = CoarseningHierarchy::build(&self.graph, levels)?;
        for s in self.train.iter_mut().chain(self.test.iter_mut()) {
            s.hierarchy = Some(h.clone());
        }
        Ok(self)
    }
}

/// Unit icosphere after `subdivisions` rounds of 4-to-1 face splitting.
pub fn icosphere<T: Scalar>(subdivisions: usize) -> Mesh<T> {
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = vec![
        [-1.0, p, 0.0],
        [1.0, p, 0.0],
        [-1.0, -p, 0.0],
        [1.0, -p, 0.0],
        [0.0, -1.0, p],
        [0.0, 1.0, p],
        [0.0, -1.0, -p],
        [0.0, 1.0, -p],
        [p, 0.0, -1.0],
        [p, 0.0, 1.0],
        [-p, 0.0, -1.0],
        [-p, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    let normalize = |v: [f64; 3]| {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    };
    verts.iter_mut().for_each(|v| *v = normalize(*v));
    for _ in 0..subdivisions {
        let mut midpoint = std::collections::HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (va, vb) = (verts[a], verts[b]);
                verts.push(normalize([va[0] + vb[0], va[1] + vb[1], va[2] + vb[2]]));
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = verts.into_iter().map(|v| v.map(T::of)).collect();
    Mesh::new(vertices, faces).expect("icosphere is a valid mesh")
}

fn unit_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-9 {
            return v.map(|x| x / n);
        }
    }
}

/// Sum of three random sinusoidal displacement waves.
pub fn deform<T: Scalar>(mesh: &Mesh<T>, amplitude: f64, seed: u64) -> Mesh<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<_> = (0..3)
        .map(|_| {
            let dir = unit_vector(&mut rng);
            let disp = unit_vector(&mut rng);
            let freq = rng.random_range(1.0..2.5);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            (dir, disp, freq, phase)
        })
        .collect();
    let vertices = mesh
        .vertices()
        .iter()
        .map(|v| {
            let p = v.map(|x| x.as_f64());
            let mut out = p;
            for (dir, disp, freq, phase) in &waves {
                let s = amplitude * (freq * (dir[0] * p[0] + dir[1] * p[1] + dir[2] * p[2]) + phase).sin();
                for a in 0..3 {
                    out[a] += s * disp[a];
                }
            }
            out.map(T::of)
        })
        .collect();
    mesh.with_vertices(vertices).expect("deformation keeps the topology")
}

fn random_offset(rng: &mut ChaCha8Rng, t: f64) -> [f64; 3] {
    if t == 0.0 {
        return [0.0; 3];
    }
    std::array::from_fn(|_| rng.random_range(-t..=t))
}

/// Generates the task deterministically from `seed`.
pub fn toy_task<T: Scalar>(cfg: &ToyConfig, seed: u64) -> Result<ToyTask<T>> {
    let reference = icosphere::<T>(cfg.subdivisions);
    let graph = one_ring(&reference);
    let n = reference.n_vertices();
    let targets: Vec<usize> = (0..n).collect();
    let base = sub_seed(seed, streams::DATA);
    let mut rng = ChaCha8Rng::seed_from_u64(base);

    let make = |mesh: Mesh<T>, offset: [f64; 3]| {
        let mesh = if offset == [0.0; 3] { mesh } else { mesh.translated(offset.map(T::of)) };
        Sample::from_mesh(mesh, targets.clone(), cfg.center)
    };
    let mut train = Vec::with_capacity(cfg.n_train);
    for k in 0..cfg.n_train {
        let mesh = if k == 0 { reference.clone() } else { deform(&reference, cfg.amplitude, rng.random()) };
        let offset = random_offset(&mut rng, cfg.train_translation);
        train.push(make(mesh, offset));
    }
    let mut test = Vec::with_capacity(cfg.n_test);
    for _ in 0..cfg.n_test {
        let mesh = deform(&reference, cfg.amplitude, rng.random());
        let offset = random_offset(&mut rng, cfg.test_translation);
        let noise_seed: u64 = rng.random();
        let s = make(mesh, offset).with_noise(cfg.test_noise, noise_seed)?;
        test.push(s);
    }
    Ok(ToyTask { reference, graph, train, test })
}
