use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::scalar::Scalar;

/// Row holding the graph-wide maximum of each channel of the last input.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalMaxArgs {
    pub widths: Vec<usize>,
    pub argmax: Vec<usize>,
}

/// Concatenates all inputs per node and appends the per-channel global max
/// of the last input, broadcast to every row.
pub fn global_max_concat<T: Scalar>(layers: &[&FeatureMatrix<T>]) -> Result<(FeatureMatrix<T>, GlobalMaxArgs)> {
    let last = layers.last().ok_or_else(|| Error::InvalidArgument("no layers to concatenate".into()))?;
    let n = last.rows();
    if layers.iter().any(|l| l.rows() != n) {
        return Err(Error::dims("global max concat: row counts differ"));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("global max over an empty graph".into()));
    }
    let argmax: Vec<usize> = (0..last.cols())
        .map(|k| {
            let mut best = 0;
            for i in 1..n {
                if last.get(i, k) > last.get(best, k) {
                    best = i;
                }
            }
            best
        })
        .collect();
    let pooled = FeatureMatrix::from_fn(n, last.cols(), |_, k| last.get(argmax[k], k));
    let mut parts: Vec<&FeatureMatrix<T>> = layers.to_vec();
    parts.push(&pooled);
    let out = FeatureMatrix::hcat(&parts)?;
    let mut widths: Vec<usize> = layers.iter().map(|l| l.cols()).collect();
    widths.push(last.cols());
    Ok((out, GlobalMaxArgs { widths, argmax }))
}

/// Splits `dy` back into per-input gradients; the broadcast block's
/// gradient is summed over rows and routed to each channel's argmax row.
pub fn global_max_concat_backward<T: Scalar>(dy: &FeatureMatrix<T>, args: &GlobalMaxArgs) -> Result<Vec<FeatureMatrix<T>>> {
    if dy.cols() != args.widths.iter().sum::<usize>() {
        return Err(Error::dims("global max concat backward width"));
    }
    let mut parts = dy.hsplit(&args.widths);
    let pooled = parts.pop().expect("broadcast block");
    let last = parts.last_mut().expect("at least one input");
    for (k, &row) in args.argmax.iter().enumerate() {
        let s: T = (0..pooled.rows()).map(|i| pooled.get(i, k)).sum();
        let v = last.get(row, k) + s;
        last.set(row, k, v);
    }
    Ok(parts)
}
