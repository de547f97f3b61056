use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One layer of a model body.
///
/// `Pool` moves features one level coarser in the attached hierarchy and
/// `Unpool` one level finer. `SkipConcat` appends the output of an earlier
/// layer living at the same level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Lin { out: usize },
    Conv { out: usize, m: usize, translation_invariant: bool },
    Relu,
    Pool,
    Unpool,
    SkipConcat { from: usize },
    GlobalMaxConcat { from: Vec<usize> },
}

/// Layer sequence plus input and output widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_width: usize,
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
}

/// Width and hierarchy level of a layer's output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub in_width: usize,
    pub out_width: usize,
    pub level: usize,
}

impl ModelSpec {
    /// Validates the layer sequence and returns per-layer shapes.
    pub fn shapes(&self) -> Result<Vec<LayerShape>> {
        let bad = |k: usize, msg: String| Err(Error::InvalidArgument(format!("layer {k}: {msg}")));
        let mut shapes: Vec<LayerShape> = Vec::with_capacity(self.layers.len());
        let (mut width, mut level) = (self.input_width, 0usize);
        if width == 0 {
            return Err(Error::InvalidArgument("input width must be positive".into()));
        }
        let pooled = self.depth() > 0;
        for (k, layer) in self.layers.iter().enumerate() {
            let in_width = width;
            match layer {
                LayerSpec::Lin { out } | LayerSpec::Conv { out, .. } => {
                    if *out == 0 {
                        return bad(k, "zero output width".into());
                    }
                    if let LayerSpec::Conv { m: 0, .. } = layer {
                        return bad(k, "convolution needs M >= 1".into());
                    }
                    width = *out;
                }
                LayerSpec::Relu => {}
                LayerSpec::Pool => level += 1,
                LayerSpec::Unpool => {
                    if level == 0 {
                        return bad(k, "unpool below level 0".into());
                    }
                    level -= 1;
                }
                LayerSpec::SkipConcat { from } => {
                    if *from >= k {
                        return bad(k, format!("skip source {from} is not an earlier layer"));
                    }
                    if shapes[*from].level != level {
                        return bad(k, format!("skip source {from} lives at level {}, not {level}", shapes[*from].level));
                    }
                    width += shapes[*from].out_width;
                }
                LayerSpec::GlobalMaxConcat { from } => {
                    if pooled {
                        return bad(k, "global max concat cannot be mixed with pooling".into());
                    }
                    let Some(&last) = from.last() else {
                        return bad(k, "empty concat list".into());
                    };
                    if from.iter().any(|&f| f >= k) {
                        return bad(k, "concat sources must be earlier layers".into());
                    }
                    width = from.iter().map(|&f| shapes[f].out_width).sum::<usize>() + shapes[last].out_width;
                }
            }
            shapes.push(LayerShape { in_width, out_width: width, level });
        }
        if level != 0 {
            return Err(Error::InvalidArgument(format!("model ends at level {level}; outputs must be per input node")));
        }
        if width != self.classes {
            return Err(Error::InvalidArgument(format!("final width {width} differs from class count {}", self.classes)));
        }
        Ok(shapes)
    }

    /// Deepest hierarchy level reached by the body (0 when no pooling).
    pub fn depth(&self) -> usize {
        let (mut level, mut max) = (0usize, 0usize);
        for layer in &self.layers {
            match layer {
                LayerSpec::Pool => {
                    level += 1;
                    max = max.max(level);
                }
                LayerSpec::Unpool => level = level.saturating_sub(1),
                _ => {}
            }
        }
        max
    }

    /// Output widths of the parameterized layers, in order.
    pub fn widths(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Lin { out } | LayerSpec::Conv { out, .. } => Some(*out),
                _ => None,
            })
            .collect()
    }

    /// Compact layer string such as `Lin16+Conv32+...`.
    pub fn describe(&self) -> String {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Lin { out } => Some(format!("Lin{out}")),
                LayerSpec::Conv { out, .. } => Some(format!("Conv{out}")),
                LayerSpec::Pool => Some("Pool".into()),
                LayerSpec::Unpool => Some("Unpool".into()),
                LayerSpec::SkipConcat { from } => Some(format!("Skip({from})")),
                LayerSpec::GlobalMaxConcat { .. } => Some("MaxPool".into()),
                LayerSpec::Relu => None,
            })
            .collect::<Vec<_>>()
            .join("+")
    }
}
