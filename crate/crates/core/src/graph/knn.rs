use rayon::prelude::*;

use super::Graph;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Symmetrized k-nearest-neighbor graph over 3D points.
///
/// Each point links to its `k` nearest other points (Euclidean distance,
/// ties to the lower index); the result is the union of those links in both
/// directions plus self entries.
pub fn knn_graph<T: Scalar>(points: &[[T; 3]], k: usize) -> Result<Graph> {
    let n = points.len();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if n <= k {
        return Err(Error::InvalidArgument(format!("knn with k = {k} needs more than {k} points, got {n}")));
    }
    let sq = |a: &[T; 3], b: &[T; 3]| {
        (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
    };
    let nearest: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(T, usize)> = (0..n).filter(|&j| j != i).map(|j| (sq(&points[i], &points[j]), j)).collect();
            let by_dist = |a: &(T, usize), b: &(T, usize)| {
                a.0.partial_cmp(&b.0).expect("finite coordinates").then(a.1.cmp(&b.1))
            };
            cand.select_nth_unstable_by(k - 1, by_dist);
            cand.truncate(k);
            cand.into_iter().map(|(_, j)| j).collect()
        })
        .collect();
    let edges: Vec<(usize, usize)> = nearest
        .iter()
        .enumerate()
        .flat_map(|(i, nb)| nb.iter().map(move |&j| (i, j)))
        .collect();
    Graph::from_edges(n, &edges)
}
