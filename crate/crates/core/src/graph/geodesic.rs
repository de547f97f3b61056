use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{one_ring, Graph, Mesh};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

struct Entry<T> {
    dist: T,
    node: usize,
}

impl<T: Scalar> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Entry<T> {}

impl<T: Scalar> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Entry<T> {
    // min-heap on distance, then node index
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Shortest-path distances from `source` over the mesh edge graph with
/// Euclidean edge lengths. Unreachable vertices get `+inf`.
pub fn geodesic_distances<T: Scalar>(mesh: &Mesh<T>, source: usize) -> Result<Vec<T>> {
    let n = mesh.n_vertices();
    if source >= n {
        return Err(Error::InvalidArgument(format!("source {source} out of range for {n} vertices")));
    }
    let graph = one_ring(mesh);
    let mut dist = vec![T::infinity(); n];
    let mut heap = BinaryHeap::new();
    dist[source] = T::zero();
    heap.push(Entry { dist: T::zero(), node: source });
    while let Some(Entry { dist: d, node: u }) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &v in graph.neighbors(u) {
            if v == u {
                continue;
            }
            let nd = d + mesh.edge_length(u, v);
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Entry { dist: nd, node: v });
            }
        }
    }
    Ok(dist)
}

/// True when every node is reachable from node 0 (vacuously true if empty).
pub fn is_connected(graph: &Graph) -> bool {
    let n = graph.n();
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in graph.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}
