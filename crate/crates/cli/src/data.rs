//! Dataset assembly for the three tasks.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use feastnet::coarsen::CoarseningHierarchy;
use feastnet::graph::{knn_graph, load_labeled_points_path, load_off_path, Mesh};
use feastnet::toy::{toy_task, ToyTask};
use feastnet::trainer::Sample;

use crate::config::FileConfig;
use crate::Task;

/// Data-path flags shared by `train`, `eval` and `sweep`.
#[derive(Args, Clone, Debug, Default)]
pub struct DataArgs {
    /// OFF meshes in vertex correspondence (correspondence task).
    #[arg(long, num_args = 1..)]
    pub meshes: Vec<PathBuf>,
    /// Held-out OFF meshes (sweep).
    #[arg(long, num_args = 1..)]
    pub test_meshes: Vec<PathBuf>,
    /// Point files, one "x y z" per line (part labeling).
    #[arg(long, num_args = 1..)]
    pub points: Vec<PathBuf>,
    /// Label files parallel to --points.
    #[arg(long, num_args = 1..)]
    pub labels: Vec<PathBuf>,
    /// Comma-separated part labels of the shape category.
    #[arg(long, value_delimiter = ',')]
    pub parts: Vec<usize>,
    /// Which toy split to use.
    #[arg(long, value_enum, default_value_t = Split::Train)]
    pub split: Split,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Split {
    #[default]
    Train,
    Test,
}

pub struct Dataset {
    pub samples: Vec<Sample<f64>>,
    pub classes: usize,
    /// Mesh on which geodesic errors are measured.
    pub reference: Option<Mesh<f64>>,
    /// Category part labels (part labeling).
    pub parts: Option<Vec<usize>>,
}

pub fn load_meshes(paths: &[PathBuf], center: bool) -> Result<Vec<Sample<f64>>> {
    ensure!(!paths.is_empty(), "no meshes given (use --meshes)");
    let mut samples = Vec::with_capacity(paths.len());
    let mut n = None;
    for p in paths {
        let mesh: Mesh<f64> = load_off_path(p).with_context(|| format!("loading {}", p.display()))?;
        let nv = mesh.n_vertices();
        if *n.get_or_insert(nv) != nv {
            bail!("{} has {nv} vertices; correspondence meshes must share one vertex count", p.display());
        }
        samples.push(Sample::from_mesh(mesh, (0..nv).collect(), center));
    }
    Ok(samples)
}

fn load_clouds(args: &DataArgs, cfg: &FileConfig) -> Result<Dataset> {
    ensure!(!args.points.is_empty(), "no point clouds given (use --points and --labels)");
    ensure!(args.points.len() == args.labels.len(), "--points and --labels must pair up");
    ensure!(!args.parts.is_empty(), "--parts must list the category's labels");
    let classes = cfg.model.classes;
    if let Some(&p) = args.parts.iter().find(|&&p| p >= classes) {
        bail!("part label {p} is outside the {classes} model classes");
    }
    let mut mask = vec![false; classes];
    args.parts.iter().for_each(|&p| mask[p] = true);
    let mut samples = Vec::new();
    for (pp, lp) in args.points.iter().zip(&args.labels) {
        let cloud = load_labeled_points_path::<f64>(pp, lp, 0).with_context(|| format!("loading {}", pp.display()))?;
        cloud.check_labels(&args.parts)?;
        let graph = knn_graph(&cloud.points, cfg.model.knn_k)?;
        let mut features = cloud.xyz_features();
        if cfg.model.center {
            center_rows(&mut features);
        }
        samples.push(Sample {
            graph,
            features,
            targets: cloud.labels.clone(),
            class_mask: Some(mask.clone()),
            mesh: None,
            center: cfg.model.center,
            hierarchy: None,
        });
    }
    Ok(Dataset { samples, classes, reference: None, parts: Some(args.parts.clone()) })
}

fn center_rows(x: &mut feastnet::FeatureMatrix<f64>) {
    let (n, d) = (x.rows(), x.cols());
    for k in 0..d {
        let mean = (0..n).map(|i| x.get(i, k)).sum::<f64>() / n.max(1) as f64;
        for i in 0..n {
            x.set(i, k, x.get(i, k) - mean);
        }
    }
}

pub fn toy(cfg: &FileConfig) -> Result<ToyTask<f64>> {
    Ok(toy_task(&cfg.toy, cfg.train.seed)?)
}

/// Samples for one task; `levels > 0` attaches coarsening hierarchies.
pub fn load(task: Task, args: &DataArgs, cfg: &FileConfig, levels: usize) -> Result<Dataset> {
    let mut ds = match task {
        Task::Toy => {
            let t = toy(cfg)?;
            let classes = t.classes();
            let samples = match args.split {
                Split::Train => t.train,
                Split::Test => t.test,
            };
            Dataset { samples, classes, reference: Some(t.reference), parts: None }
        }
        Task::Correspondence => {
            let samples = load_meshes(&args.meshes, cfg.model.center)?;
            let classes = samples[0].targets.len();
            let reference = samples[0].mesh.clone();
            Dataset { samples, classes, reference, parts: None }
        }
        Task::Partlabel => load_clouds(args, cfg)?,
    };
    attach_hierarchies(&mut ds.samples, levels)?;
    Ok(ds)
}

pub fn attach_hierarchies(samples: &mut [Sample<f64>], levels: usize) -> Result<()> {
    if levels == 0 {
        return Ok(());
    }
    let mut cache: Vec<CoarseningHierarchy> = Vec::new();
    for s in samples.iter_mut() {
        // Correspondence meshes share a topology; reuse the hierarchy when the graph matches.
        let h = match cache.iter().find(|h| h.graph(0) == &s.graph) {
            Some(h) => h.clone(),
            None => {
                let h = CoarseningHierarchy::build(&s.graph, levels)?;
                cache.push(h.clone());
                h
            }
        };
        s.hierarchy = Some(h);
    }
    Ok(())
}

/// Reads an OFF mesh (1-ring graph) or a whitespace edge list.
///
/// Edge lists hold `i j` or `i j w` per line; `#` starts a comment and an
/// optional leading line with a single integer fixes the node count.
pub fn load_graph(path: &Path) -> Result<feastnet::Graph> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("off")) {
        let mesh: Mesh<f64> = load_off_path(path).with_context(|| format!("loading {}", path.display()))?;
        return Ok(feastnet::graph::one_ring(&mesh));
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut declared = None;
    let mut edges = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| s.parse::<usize>().with_context(|| format!("line {}: bad index {s:?}", ln + 1));
        match tok.len() {
            1 if edges.is_empty() && declared.is_none() => declared = Some(parse(tok[0])?),
            2 | 3 => {
                let w = match tok.get(2) {
                    Some(w) => w.parse::<f64>().with_context(|| format!("line {}: bad weight", ln + 1))?,
                    None => 1.0,
                };
                edges.push((parse(tok[0])?, parse(tok[1])?, w));
            }
            _ => bail!("line {}: expected `i j [w]`", ln + 1),
        }
    }
    let n = declared.unwrap_or_else(|| edges.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0));
    Ok(feastnet::Graph::from_weighted_edges(n, &edges)?)
}
