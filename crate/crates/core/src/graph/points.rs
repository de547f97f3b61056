use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::scalar::Scalar;

/// Point cloud with per-point part labels and a shape-category id.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPointCloud<T> {
    pub points: Vec<[T; 3]>,
    pub labels: Vec<usize>,
    pub category: usize,
}

impl<T: Scalar> LabeledPointCloud<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks every label against the category's permitted label set.
    pub fn check_labels(&self, allowed: &[usize]) -> Result<()> {
        match self.labels.iter().find(|l| !allowed.contains(l)) {
            Some(&label) => Err(Error::LabelOutsideCategory { label }),
            None => Ok(()),
        }
    }

    pub fn xyz_features(&self) -> FeatureMatrix<T> {
        FeatureMatrix::from_fn(self.points.len(), 3, |i, j| self.points[i][j])
    }
}

fn read_text<R: Read>(mut r: R) -> Result<String> {
    let mut s = String::new();
    r.read_to_string(&mut s)
        .map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
    Ok(s)
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Reads `x y z` lines and a parallel file of integer labels.
pub fn load_labeled_points<T: Scalar, P: Read, L: Read>(
    points: P,
    labels: L,
    category: usize,
) -> Result<LabeledPointCloud<T>> {
    let ptext = read_text(points)?;
    let ltext = read_text(labels)?;

    let mut pts = Vec::new();
    for (line, s) in data_lines(&ptext) {
        let toks: Vec<&str> = s.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(Error::Parse { line, msg: "expected three coordinates".into() });
        }
        let mut p = [T::zero(); 3];
        for (slot, tok) in p.iter_mut().zip(&toks) {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Parse { line, msg: format!("unexpected token {tok:?}") })?;
            *slot = T::of(v);
        }
        pts.push(p);
    }

    let mut labs = Vec::new();
    for (line, s) in data_lines(&ltext) {
        let l: usize = s
            .parse()
            .map_err(|_| Error::Parse { line, msg: format!("unexpected token {s:?}") })?;
        labs.push(l);
    }

    if pts.len() != labs.len() {
        return Err(Error::LengthMismatch { what: "points vs labels", left: pts.len(), right: labs.len() });
    }
    Ok(LabeledPointCloud { points: pts, labels: labs, category })
}

pub fn load_labeled_points_path<T: Scalar>(
    points: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    category: usize,
) -> Result<LabeledPointCloud<T>> {
    let open = |p: &Path| std::fs::File::open(p).map_err(|e| Error::io(p, e));
    load_labeled_points(open(points.as_ref())?, open(labels.as_ref())?, category)
}
