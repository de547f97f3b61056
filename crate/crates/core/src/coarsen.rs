//! Greedy Graclus coarsening and the binary-tree node ordering that turns
//! graph pooling into 1D pooling over consecutive pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::layers::PoolMap;
use crate::matrix::FeatureMatrix;
use crate::scalar::Scalar;

/// Clusters of one or two fine nodes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    pub cluster_of: Vec<usize>,
    pub members: Vec<Vec<usize>>,
}

impl Matching {
    pub fn n_clusters(&self) -> usize {
        self.members.len()
    }
}

/// One greedy matching pass followed by graph contraction.
///
/// Nodes are visited in ascending order; an unmarked node is merged with the
/// unmarked neighbor maximizing `w_ij (1/d_i + 1/d_j)`, lowest index on ties.
/// Coarse edge weights are sums of fine weights, and intra-cluster weight is
/// kept as a self-loop so total weight is conserved.
pub fn graclus_step(graph: &Graph) -> (Graph, Matching) {
    let n = graph.n();
    let deg = graph.degrees();
    let mut cluster_of = vec![usize::MAX; n];
    let mut members = Vec::new();
    for i in 0..n {
        if cluster_of[i] != usize::MAX {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (&j, &w) in graph.neighbors(i).iter().zip(graph.weights(i)) {
            if j == i || cluster_of[j] != usize::MAX || w <= 0.0 {
                continue;
            }
            let cut = w * (1.0 / deg[i] + 1.0 / deg[j]);
            if best.is_none_or(|(_, b)| cut > b) {
                best = Some((j, cut));
            }
        }
        let c = members.len();
        cluster_of[i] = c;
        match best {
            Some((j, _)) => {
                cluster_of[j] = c;
                members.push(vec![i, j]);
            }
            None => members.push(vec![i]),
        }
    }

    let mut edges = Vec::new();
    for i in 0..n {
        for (&j, &w) in graph.neighbors(i).iter().zip(graph.weights(i)) {
            if j >= i && w > 0.0 {
                edges.push((cluster_of[i], cluster_of[j], w));
            }
        }
    }
    let coarse = Graph::from_weighted_edges(members.len(), &edges).expect("cluster ids are in range");
    (coarse, Matching { cluster_of, members })
}

/// Multi-level coarsening with a padded binary-tree ordering per level.
///
/// At level `l`, position `k` of `orderings[l]` holds a node id; ids at or
/// above `graphs[l].n()` are fake padding nodes. Positions `2p` and `2p + 1`
/// at level `l` are the children of position `p` at level `l + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseningHierarchy {
    graphs: Vec<Graph>,
    matchings: Vec<Matching>,
    orderings: Vec<Vec<usize>>,
    fake_masks: Vec<Vec<bool>>,
    #[serde(skip)]
    ordered: Vec<Graph>,
}

impl CoarseningHierarchy {
    /// Coarsens `levels` times. Fails if a level to be coarsened has fewer
    /// than two nodes.
    pub fn build(graph: &Graph, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::InvalidArgument("hierarchy needs at least one level".into()));
        }
        let mut graphs = vec![graph.clone()];
        let mut matchings = Vec::with_capacity(levels);
        for level in 0..levels {
            let g = graphs.last().unwrap();
            if g.n() < 2 {
                return Err(Error::HierarchyTooDeep { level, nodes: g.n() });
            }
            let (coarse, matching) = graclus_step(g);
            graphs.push(coarse);
            matchings.push(matching);
        }

        // top-down: the coarsest level keeps its natural order
        let top = graphs[levels].n();
        let mut orderings = vec![Vec::new(); levels + 1];
        orderings[levels] = (0..top).collect();
        for l in (0..levels).rev() {
            let n_fine = graphs[l].n();
            let n_coarse = graphs[l + 1].n();
            let mut next_fake = n_fine;
            let mut fake = || {
                next_fake += 1;
                next_fake - 1
            };
            let mut order = Vec::with_capacity(2 * orderings[l + 1].len());
            for &c in &orderings[l + 1] {
                if c >= n_coarse {
                    order.push(fake());
                    order.push(fake());
                    continue;
                }
                let mut m = matchings[l].members[c].clone();
                m.sort_unstable();
                order.push(m[0]);
                order.push(if m.len() == 2 { m[1] } else { fake() });
            }
            orderings[l] = order;
        }
        let fake_masks = orderings
            .iter()
            .zip(&graphs)
            .map(|(o, g)| o.iter().map(|&v| v >= g.n()).collect())
            .collect();
        let mut h = Self { graphs, matchings, orderings, fake_masks, ordered: Vec::new() };
        h.rebuild_ordered();
        Ok(h)
    }

    fn rebuild_ordered(&mut self) {
        self.ordered = self.graphs.iter().zip(&self.orderings).map(|(g, o)| g.permuted(o)).collect();
    }

    /// Number of coarsening steps (the hierarchy has `levels() + 1` graphs).
    pub fn levels(&self) -> usize {
        self.matchings.len()
    }

    pub fn graph(&self, level: usize) -> &Graph {
        &self.graphs[level]
    }

    /// Level graph relabeled into tree order, with isolated fake nodes.
    pub fn ordered_graph(&self, level: usize) -> &Graph {
        &self.ordered[level]
    }

    pub fn matching(&self, level: usize) -> &Matching {
        &self.matchings[level]
    }

    pub fn ordering(&self, level: usize) -> &[usize] {
        &self.orderings[level]
    }

    pub fn fake_mask(&self, level: usize) -> &[bool] {
        &self.fake_masks[level]
    }

    pub fn real_count(&self, level: usize) -> usize {
        self.graphs[level].n()
    }

    pub fn padded_count(&self, level: usize) -> usize {
        self.orderings[level].len()
    }

    /// Pool map from `level` to `level + 1`.
    pub fn pool_map(&self, level: usize) -> PoolMap {
        PoolMap::new(self.fake_masks[level].clone()).expect("tree orderings have even length below the top")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut h: Self = serde_json::from_str(s)?;
        h.validate()?;
        h.rebuild_ordered();
        Ok(h)
    }

    fn validate(&self) -> Result<()> {
        let l = self.levels();
        let bad = |m: &str| Err(Error::InvalidArgument(format!("hierarchy: {m}")));
        if self.graphs.len() != l + 1 || self.orderings.len() != l + 1 || self.fake_masks.len() != l + 1 {
            return bad("level counts disagree");
        }
        for k in 0..=l {
            self.graphs[k].validate()?;
            if self.fake_masks[k].len() != self.orderings[k].len() {
                return bad("fake mask length");
            }
            let mut seen = self.orderings[k].clone();
            seen.sort_unstable();
            if seen.iter().enumerate().any(|(a, &b)| a != b) || seen.len() < self.graphs[k].n() {
                return bad("ordering is not a permutation");
            }
            if k < l && self.orderings[k].len() != 2 * self.orderings[k + 1].len() {
                return bad("ordering lengths do not halve");
            }
        }
        Ok(())
    }

    /// Summary counts for logging: `(real, padded)` nodes per level.
    pub fn node_counts(&self) -> Vec<(usize, usize)> {
        (0..=self.levels()).map(|l| (self.real_count(l), self.padded_count(l))).collect()
    }
}

/// Permutes rows into tree order, inserting zero rows at fake positions.
pub fn reorder_features<T: Scalar>(x: &FeatureMatrix<T>, ordering: &[usize], fake_mask: &[bool]) -> Result<FeatureMatrix<T>> {
    let n_real = fake_mask.iter().filter(|f| !**f).count();
    if x.rows() != n_real || ordering.len() != fake_mask.len() {
        return Err(Error::dims(format!("{} rows for a level with {n_real} real nodes", x.rows())));
    }
    let mut out = FeatureMatrix::zeros(ordering.len(), x.cols());
    for (pos, (&node, &fake)) in ordering.iter().zip(fake_mask).enumerate() {
        if !fake {
            out.row_mut(pos).copy_from_slice(x.row(node));
        }
    }
    Ok(out)
}

/// Inverse of [`reorder_features`] on real rows.
pub fn restore_features<T: Scalar>(x: &FeatureMatrix<T>, ordering: &[usize], fake_mask: &[bool]) -> Result<FeatureMatrix<T>> {
    if x.rows() != ordering.len() || ordering.len() != fake_mask.len() {
        return Err(Error::dims("restore: row count differs from ordering length"));
    }
    let n_real = fake_mask.iter().filter(|f| !**f).count();
    let mut out = FeatureMatrix::zeros(n_real, x.cols());
    for (pos, (&node, &fake)) in ordering.iter().zip(fake_mask).enumerate() {
        if !fake {
            out.row_mut(node).copy_from_slice(x.row(pos));
        }
    }
    Ok(out)
}
