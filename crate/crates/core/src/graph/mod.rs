//! Self-inclusive neighborhood graphs and their construction from meshes
//! and point clouds.

mod geodesic;
mod knn;
mod mesh;
mod points;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use geodesic::{geodesic_distances, is_connected};
pub use knn::knn_graph;
pub use mesh::{add_vertex_noise, load_off, load_off_path, one_ring, Mesh};
pub use points::{load_labeled_points, load_labeled_points_path, LabeledPointCloud};

/// Undirected weighted graph stored as sorted, self-inclusive adjacency lists.
///
/// `neighbors[i]` always contains `i`. The weight stored for the self entry
/// is the self-loop weight, zero for freshly constructed graphs and the
/// merged intra-cluster weight on coarsened ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    neighbors: Vec<Vec<usize>>,
    weights: Vec<Vec<f64>>,
}

impl Graph {
    /// Graph with no edges: every neighborhood is `{i}`.
    pub fn isolated(n: usize) -> Self {
        Self {
            neighbors: (0..n).map(|i| vec![i]).collect(),
            weights: vec![vec![0.0]; n],
        }
    }

    /// Builds a graph from undirected edges `(i, j, w)`.
    ///
    /// Repeated edges accumulate their weights; `(i, i, w)` adds to the
    /// self-loop weight of `i`.
    pub fn from_weighted_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut pairs: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * edges.len() + n);
        pairs.extend((0..n).map(|i| (i, i, 0.0)));
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidArgument(format!("edge weight {w} must be nonnegative")));
            }
            pairs.push((i, j, w));
            if i != j {
                pairs.push((j, i, w));
            }
        }
        pairs.sort_by_key(|a| (a.0, a.1));

        let mut neighbors = vec![Vec::new(); n];
        let mut weights = vec![Vec::new(); n];
        for (i, j, w) in pairs {
            let nb = &mut neighbors[i];
            if nb.last() == Some(&j) {
                *weights[i].last_mut().unwrap() += w;
            } else {
                nb.push(j);
                weights[i].push(w);
            }
        }
        Ok(Self { neighbors, weights })
    }

    /// Builds a unit-weight graph from undirected edges; duplicates collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut e: Vec<(usize, usize)> = edges
            .iter()
            .filter(|(i, j)| i != j)
            .map(|&(i, j)| (i.min(j), i.max(j)))
            .collect();
        e.sort_unstable();
        e.dedup();
        let weighted: Vec<_> = e.into_iter().map(|(i, j)| (i, j, 1.0)).collect();
        Self::from_weighted_edges(n, &weighted)
    }

    /// Builds a graph from explicit self-inclusive adjacency lists.
    pub fn from_adjacency(neighbors: Vec<Vec<usize>>, weights: Vec<Vec<f64>>) -> Result<Self> {
        let g = Self { neighbors, weights };
        g.validate()?;
        Ok(g)
    }

    /// Checks self-inclusion, sortedness, range, and symmetry.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.weights.len() != n {
            return Err(Error::InvalidArgument("weights/neighbors length mismatch".into()));
        }
        for i in 0..n {
            let nb = &self.neighbors[i];
            if self.weights[i].len() != nb.len() {
                return Err(Error::InvalidArgument(format!("node {i}: weight list length")));
            }
            if !nb.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::InvalidArgument(format!("node {i}: neighbors not sorted/unique")));
            }
            if nb.binary_search(&i).is_err() {
                return Err(Error::InvalidArgument(format!("node {i}: missing self entry")));
            }
            for (&j, &w) in nb.iter().zip(&self.weights[i]) {
                if j >= n {
                    return Err(Error::InvalidArgument(format!("node {i}: neighbor {j} out of range")));
                }
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(Error::InvalidArgument(format!("node {i}: bad weight {w}")));
                }
                if self.weight(j, i) != Some(w) {
                    return Err(Error::InvalidArgument(format!("asymmetric edge ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    /// Sorted neighborhood `N_i`, including `i`.
    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    #[inline]
    pub fn weights(&self, i: usize) -> &[f64] {
        &self.weights[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let k = self.neighbors[i].binary_search(&j).ok()?;
        Some(self.weights[i][k])
    }

    /// `d_i = Σ_j w_ij`, self-loop weight included.
    pub fn degree(&self, i: usize) -> f64 {
        self.weights[i].iter().sum()
    }

    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.degree(i)).collect()
    }

    /// Sum of edge weights, each undirected edge and self-loop counted once.
    pub fn total_weight(&self) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n() {
            for (&j, &w) in self.neighbors[i].iter().zip(&self.weights[i]) {
                if j >= i {
                    total += w;
                }
            }
        }
        total
    }

    /// Undirected edges `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n()).flat_map(move |i| {
            self.neighbors[i]
                .iter()
                .zip(&self.weights[i])
                .filter(move |(&j, _)| j > i)
                .map(move |(&j, &w)| (i, j, w))
        })
    }

    /// Mean number of neighbors excluding the node itself (`K`).
    pub fn mean_neighbors(&self) -> f64 {
        if self.n() == 0 {
            return 0.0;
        }
        let total: usize = self.neighbors.iter().map(|nb| nb.len() - 1).sum();
        total as f64 / self.n() as f64
    }

    /// Relabels nodes so that new node `k` is old node `order[k]`.
    ///
    /// `order` may be longer than `n`: entries `>= n` become isolated
    /// padding nodes.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let n = self.n();
        let mut new_index = vec![usize::MAX; n];
        for (k, &old) in order.iter().enumerate() {
            if old < n {
                new_index[old] = k;
            }
        }
        let mut neighbors = Vec::with_capacity(order.len());
        let mut weights = Vec::with_capacity(order.len());
        for (k, &old) in order.iter().enumerate() {
            if old >= n {
                neighbors.push(vec![k]);
                weights.push(vec![0.0]);
                continue;
            }
            let mut row: Vec<(usize, f64)> = self.neighbors[old]
                .iter()
                .zip(&self.weights[old])
                .map(|(&j, &w)| (new_index[j], w))
                .collect();
            debug_assert!(row.iter().all(|&(j, _)| j != usize::MAX), "order must cover every node");
            row.sort_by_key(|&(j, _)| j);
            neighbors.push(row.iter().map(|&(j, _)| j).collect());
            weights.push(row.iter().map(|&(_, w)| w).collect());
        }
        Self { neighbors, weights }
    }

    /// Expands every neighborhood to all nodes within `k` hops.
    ///
    /// Expanded neighborhoods get unit weight for new edges; existing edge
    /// weights are kept.
    pub fn ring_k(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("ring size k must be at least 1".into()));
        }
        if k == 1 {
            return Ok(self.clone());
        }
        let n = self.n();
        let mut hops = vec![usize::MAX; n];
        let mut queue = VecDeque::new();
        let mut neighbors = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for s in 0..n {
            let mut reached = vec![s];
            hops[s] = 0;
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                if hops[u] == k {
                    continue;
                }
                for &v in self.neighbors(u) {
                    if hops[v] == usize::MAX {
                        hops[v] = hops[u] + 1;
                        reached.push(v);
                        queue.push_back(v);
                    }
                }
            }
            reached.sort_unstable();
            for &v in &reached {
                hops[v] = usize::MAX;
            }
            let w = reached
                .iter()
                .map(|&j| self.weight(s, j).unwrap_or(1.0))
                .collect();
            neighbors.push(reached);
            weights.push(w);
        }
        Ok(Self { neighbors, weights })
    }
}
