use std::io::Read;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Graph;
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::scalar::Scalar;

/// Triangle mesh: vertex positions plus vertex-index triples.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh<T> {
    vertices: Vec<[T; 3]>,
    faces: Vec<[usize; 3]>,
}

impl<T: Scalar> Mesh<T> {
    pub fn new(vertices: Vec<[T; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (line, f) in faces.iter().enumerate() {
            if let Some(&index) = f.iter().find(|&&v| v >= n) {
                return Err(Error::IndexOutOfRange { index, len: n, line });
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::DegenerateFace(*f));
            }
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("vertex coordinates must be finite".into()));
        }
        Ok(Self { vertices, faces })
    }

    #[inline]
    pub fn vertices(&self) -> &[[T; 3]] {
        &self.vertices
    }

    #[inline]
    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    #[inline]
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Vertex coordinates as an `N × 3` feature matrix.
    pub fn xyz_features(&self) -> FeatureMatrix<T> {
        FeatureMatrix::from_fn(self.vertices.len(), 3, |i, j| self.vertices[i][j])
    }

    pub fn centroid(&self) -> [T; 3] {
        let mut c = [T::zero(); 3];
        if self.vertices.is_empty() {
            return c;
        }
        for v in &self.vertices {
            for k in 0..3 {
                c[k] += v[k];
            }
        }
        let n = T::of(self.vertices.len() as f64);
        c.map(|x| x / n)
    }

    /// Copy translated so the vertex centroid sits at the origin.
    pub fn centered(&self) -> Self {
        let c = self.centroid();
        self.translated([-c[0], -c[1], -c[2]])
    }

    pub fn translated(&self, t: [T; 3]) -> Self {
        let vertices = self.vertices.iter().map(|v| [v[0] + t[0], v[1] + t[1], v[2] + t[2]]).collect();
        Self { vertices, faces: self.faces.clone() }
    }

    pub fn with_vertices(&self, vertices: Vec<[T; 3]>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::LengthMismatch {
                what: "vertex count",
                left: vertices.len(),
                right: self.vertices.len(),
            });
        }
        Ok(Self { vertices, faces: self.faces.clone() })
    }

    /// Unique undirected edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    pub fn edge_length(&self, i: usize, j: usize) -> T {
        let (a, b) = (&self.vertices[i], &self.vertices[j]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    /// Mean length of the edges incident to each vertex (zero when isolated).
    pub fn local_edge_means(&self) -> Vec<T> {
        let n = self.n_vertices();
        let mut sum = vec![T::zero(); n];
        let mut count = vec![0usize; n];
        for (i, j) in self.edges() {
            let l = self.edge_length(i, j);
            sum[i] += l;
            sum[j] += l;
            count[i] += 1;
            count[j] += 1;
        }
        sum.into_iter()
            .zip(count)
            .map(|(s, c)| if c == 0 { T::zero() } else { s / T::of(c as f64) })
            .collect()
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_token<N: std::str::FromStr>(tok: &str, line: usize) -> Result<N> {
    tok.parse()
        .map_err(|_| Error::Parse { line, msg: format!("unexpected token {tok:?}") })
}

/// Parses an ASCII OFF mesh. Polygons with more than three corners are
/// fan-triangulated.
pub fn load_off<T: Scalar, R: Read>(mut reader: R) -> Result<Mesh<T>> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
    let mut lines = content_lines(&text);

    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::MalformedHeader("empty stream".into()))?;
    let mut htoks = header.split_whitespace();
    if htoks.next() != Some("OFF") {
        return Err(Error::MalformedHeader(format!("expected \"OFF\" at line {hline}, found {header:?}")));
    }
    let rest: Vec<&str> = htoks.collect();
    let (cline, counts): (usize, Vec<&str>) = if rest.is_empty() {
        let (l, s) = lines
            .next()
            .ok_or_else(|| Error::Truncated("missing element counts".into()))?;
        (l, s.split_whitespace().collect())
    } else {
        (hline, rest)
    };
    if counts.len() < 2 {
        return Err(Error::MalformedHeader(format!("line {cline}: expected vertex and face counts")));
    }
    let nv: usize = parse_token(counts[0], cline)?;
    let nf: usize = parse_token(counts[1], cline)?;

    let mut vertices = Vec::with_capacity(nv);
    for k in 0..nv {
        let (line, s) = lines
            .next()
            .ok_or_else(|| Error::Truncated(format!("expected {nv} vertices, found {k}")))?;
        let toks: Vec<&str> = s.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(Error::Parse { line, msg: "vertex needs three coordinates".into() });
        }
        let mut v = [T::zero(); 3];
        for (slot, tok) in v.iter_mut().zip(&toks) {
            *slot = T::of(parse_token::<f64>(tok, line)?);
        }
        vertices.push(v);
    }

    let mut faces = Vec::with_capacity(nf);
    for k in 0..nf {
        let (line, s) = lines
            .next()
            .ok_or_else(|| Error::Truncated(format!("expected {nf} faces, found {k}")))?;
        let toks: Vec<&str> = s.split_whitespace().collect();
        let corners: usize = parse_token(toks[0], line)?;
        if corners < 3 || toks.len() < corners + 1 {
            return Err(Error::Parse { line, msg: format!("face declares {corners} corners") });
        }
        let idx = toks[1..=corners]
            .iter()
            .map(|t| parse_token::<usize>(t, line))
            .collect::<Result<Vec<_>>>()?;
        if let Some(&index) = idx.iter().find(|&&i| i >= nv) {
            return Err(Error::IndexOutOfRange { index, len: nv, line });
        }
        for t in 1..corners - 1 {
            faces.push([idx[0], idx[t], idx[t + 1]]);
        }
    }
    Mesh::new(vertices, faces)
}

pub fn load_off_path<T: Scalar>(path: impl AsRef<Path>) -> Result<Mesh<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_off(std::io::BufReader::new(file))
}

/// 1-ring graph: each vertex joined to every vertex it shares a face edge with.
pub fn one_ring<T: Scalar>(mesh: &Mesh<T>) -> Graph {
    Graph::from_edges(mesh.n_vertices(), &mesh.edges()).expect("mesh invariants bound all indices")
}

/// Displaces each vertex by isotropic Gaussian noise whose per-axis standard
/// deviation is `sigma_rel` times the vertex's mean incident edge length.
pub fn add_vertex_noise<T: Scalar>(mesh: &Mesh<T>, sigma_rel: f64, seed: u64) -> Result<Mesh<T>> {
    if !(sigma_rel >= 0.0 && sigma_rel.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise level {sigma_rel} must be nonnegative")));
    }
    if sigma_rel == 0.0 {
        return Ok(mesh.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scales = mesh.local_edge_means();
    let vertices = mesh
        .vertices
        .iter()
        .zip(scales)
        .map(|(v, s)| {
            let sigma = s.as_f64() * sigma_rel;
            v.map(|x| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x + T::of(sigma * z)
            })
        })
        .collect();
    Ok(Mesh { vertices, faces: mesh.faces.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRIANGLE: &str = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";

    #[test]
    fn minimal_off() {
        let m: Mesh<f64> = load_off(TRIANGLE.as_bytes()).unwrap();
        assert_eq!(m.n_vertices(), 3);
        assert_eq!(m.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn off_with_comments_and_inline_counts() {
        let src = "# exported\nOFF 4 1 0\n0 0 0\n1 0 0\n1 1 0 # corner\n0 1 0\n4 0 1 2 3\n";
        let m: Mesh<f64> = load_off(src.as_bytes()).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn off_errors_are_distinct() {
        let bad_header = load_off::<f64, _>("FFO\n3 1 0\n".as_bytes()).unwrap_err();
        assert!(matches!(bad_header, Error::MalformedHeader(_)));

        let oob = TRIANGLE.replace("3 0 1 2", "3 0 1 5");
        let err = load_off::<f64, _>(oob.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { index: 5, len: 3, .. }));

        let truncated = "OFF\n3 1 0\n0 0 0\n1 0 0\n";
        let err = load_off::<f64, _>(truncated.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Truncated(_)));

        let junk = TRIANGLE.replace("1 0 0", "1 x 0");
        let err = load_off::<f64, _>(junk.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }));
    }

    #[test]
    fn degenerate_face_rejected() {
        let src = TRIANGLE.replace("3 0 1 2", "3 0 1 1");
        assert!(matches!(load_off::<f64, _>(src.as_bytes()), Err(Error::DegenerateFace(_))));
    }

    #[test]
    fn one_ring_examples() {
        let m: Mesh<f64> = load_off(TRIANGLE.as_bytes()).unwrap();
        let g = one_ring(&m);
        for i in 0..3 {
            assert_eq!(g.neighbors(i), &[0, 1, 2]);
        }

        let v = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]];
        let m = Mesh::new(v.clone(), vec![[0, 1, 2], [1, 2, 3]]).unwrap();
        let g = one_ring(&m);
        assert_eq!(g.neighbors(0), &[0, 1, 2]);
        assert_eq!(g.neighbors(1), &[0, 1, 2, 3]);
        assert_eq!(g.neighbors(3), &[1, 2, 3]);

        let m = Mesh::new(v, vec![]).unwrap();
        let g = one_ring(&m);
        for i in 0..4 {
            assert_eq!(g.neighbors(i), &[i]);
        }
    }

    #[test]
    fn noise_zero_and_determinism() {
        let m: Mesh<f64> = load_off(TRIANGLE.as_bytes()).unwrap();
        assert_eq!(add_vertex_noise(&m, 0.0, 7).unwrap(), m);
        let a = add_vertex_noise(&m, 0.1, 7).unwrap();
        let b = add_vertex_noise(&m, 0.1, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, m);
        assert_eq!(a.faces(), m.faces());
        assert!(add_vertex_noise(&m, -0.1, 7).is_err());
    }

    #[test]
    fn centering() {
        let m: Mesh<f64> = load_off(TRIANGLE.as_bytes()).unwrap();
        let c = m.translated([5.0, -2.0, 1.0]).centered().centroid();
        assert!(c.iter().all(|x| x.abs() < 1e-12));
    }
}
