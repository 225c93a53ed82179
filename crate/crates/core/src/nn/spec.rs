//! Layer and network descriptions, shape composition and parameter shapes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    None,
    ReLU,
    Softmax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LayerKind {
    /// Token lookup: `(B, L)` indices to `(B, L, dim)`.
    Embedding { vocab_size: usize, dim: usize },
    /// `(B, inputs)` to `(B, units)`.
    Dense { inputs: usize, units: usize },
    /// Mean over the sequence axis: `(B, L, C)` to `(B, C)`.
    GlobalAveragePool1D,
    /// Same-length zero-padded convolution: `(B, L, in_channels)` to `(B, L, filters)`.
    Conv1D {
        in_channels: usize,
        filters: usize,
        kernel: usize,
    },
    /// Bidirectional LSTM returning the concatenated final hidden states: `(B, L, inputs)` to `(B, 2 * hidden)`.
    BiLstm { inputs: usize, hidden: usize },
    /// Inverted dropout; identity at inference.
    Dropout { rate: f64 },
    /// Parameter-free activation layer.
    Activation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn embedding(vocab_size: usize, dim: usize) -> Self {
        Self::plain(LayerKind::Embedding { vocab_size, dim })
    }

    pub fn dense(inputs: usize, units: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Dense { inputs, units },
            activation,
        }
    }

    pub fn global_average_pool() -> Self {
        Self::plain(LayerKind::GlobalAveragePool1D)
    }

    pub fn conv1d(in_channels: usize, filters: usize, kernel: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Conv1D {
                in_channels,
                filters,
                kernel,
            },
            activation,
        }
    }

    pub fn bilstm(inputs: usize, hidden: usize) -> Self {
        Self::plain(LayerKind::BiLstm { inputs, hidden })
    }

    pub fn dropout(rate: f64) -> Self {
        Self::plain(LayerKind::Dropout { rate })
    }

    pub fn activation(activation: Activation) -> Self {
        Self {
            kind: LayerKind::Activation,
            activation,
        }
    }

    fn plain(kind: LayerKind) -> Self {
        Self {
            kind,
            activation: Activation::None,
        }
    }

    /// Short lowercase name used in summaries, e.g. `dense` or `conv1d`.
    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            LayerKind::Embedding { .. } => "embedding",
            LayerKind::Dense { .. } => "dense",
            LayerKind::GlobalAveragePool1D => "global_average_pooling1d",
            LayerKind::Conv1D { .. } => "conv1d",
            LayerKind::BiLstm { .. } => "bidirectional",
            LayerKind::Dropout { .. } => "dropout",
            LayerKind::Activation => "activation",
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::Composition {
                layer: index,
                reason: reason.to_string(),
            })
        };
        match self.kind {
            LayerKind::Embedding { vocab_size, dim } if vocab_size == 0 || dim == 0 => {
                bad("embedding dimensions must be >= 1")
            }
            LayerKind::Dense { inputs, units } if inputs == 0 || units == 0 => {
                bad("dense dimensions must be >= 1")
            }
            LayerKind::Conv1D {
                in_channels,
                filters,
                kernel,
            } if in_channels == 0 || filters == 0 || kernel == 0 => {
                bad("conv1d dimensions must be >= 1")
            }
            LayerKind::BiLstm { inputs, hidden } if inputs == 0 || hidden == 0 => {
                bad("bilstm dimensions must be >= 1")
            }
            LayerKind::Dropout { rate } if !(0.0..1.0).contains(&rate) => {
                bad("dropout rate must lie in [0, 1)")
            }
            _ => Ok(()),
        }
    }

    /// Output shape (without batch axis) for a given input shape.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        self.validate(index)?;
        let mismatch = |expected: String| Error::Composition {
            layer: index,
            reason: format!(
                "{} expects input {}, got {:?}",
                self.kind_name(),
                expected,
                input
            ),
        };
        match self.kind {
            LayerKind::Embedding { dim, .. } => match input {
                [len] => Ok(vec![*len, dim]),
                _ => Err(mismatch("(L)".into())),
            },
            LayerKind::Dense { inputs, units } => match input {
                [m] if *m == inputs => Ok(vec![units]),
                _ => Err(mismatch(format!("({inputs})"))),
            },
            LayerKind::GlobalAveragePool1D => match input {
                [len, c] if *len > 0 => Ok(vec![*c]),
                _ => Err(mismatch("(L, C) with L >= 1".into())),
            },
            LayerKind::Conv1D {
                in_channels,
                filters,
                ..
            } => match input {
                [len, c] if *c == in_channels => Ok(vec![*len, filters]),
                _ => Err(mismatch(format!("(L, {in_channels})"))),
            },
            LayerKind::BiLstm { inputs, hidden } => match input {
                [len, e] if *e == inputs && *len > 0 => Ok(vec![2 * hidden]),
                _ => Err(mismatch(format!("(L, {inputs}) with L >= 1"))),
            },
            LayerKind::Dropout { .. } | LayerKind::Activation => {
                if self.activation == Activation::Softmax && input.is_empty() {
                    return Err(mismatch("a non-empty last axis".into()));
                }
                Ok(input.to_vec())
            }
        }
    }

    /// Shapes of this layer's parameter tensors, in storage order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match self.kind {
            LayerKind::Embedding { vocab_size, dim } => vec![vec![vocab_size, dim]],
            LayerKind::Dense { inputs, units } => vec![vec![inputs, units], vec![units]],
            LayerKind::Conv1D {
                in_channels,
                filters,
                kernel,
            } => vec![vec![kernel, in_channels, filters], vec![filters]],
            LayerKind::BiLstm { inputs, hidden } => {
                // forward direction then backward direction: input kernel, recurrent kernel, bias
                let one = [vec![inputs, 4 * hidden], vec![hidden, 4 * hidden], vec![4 * hidden]];
                one.iter().chain(one.iter()).cloned().collect()
            }
            LayerKind::GlobalAveragePool1D | LayerKind::Dropout { .. } | LayerKind::Activation => {
                Vec::new()
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum()
    }
}

/// An ordered stack of layers ending in a softmax over `n_classes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub input_shape: Vec<usize>,
    pub n_classes: usize,
}

/// One row of a layer summary table.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSummary {
    pub name: String,
    pub output_shape: Vec<usize>,
    pub params: usize,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, n_classes: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = Self {
            layers,
            input_shape,
            n_classes,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks shape composition, the final softmax and the output width.
    pub fn validate(&self) -> Result<()> {
        let shapes = self.output_shapes()?;
        let last = self
            .layers
            .last()
            .ok_or_else(|| Error::InvalidShape("network has no layers".into()))?;
        let index = self.layers.len() - 1;
        if last.activation != Activation::Softmax {
            return Err(Error::Composition {
                layer: index,
                reason: "final activation must be softmax".into(),
            });
        }
        let out = &shapes[index];
        if out.as_slice() != [self.n_classes] {
            return Err(Error::Composition {
                layer: index,
                reason: format!("final output {:?} does not match {} classes", out, self.n_classes),
            });
        }
        Ok(())
    }

    /// Per-layer output shapes without the batch axis.
    pub fn output_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut current = self.input_shape.clone();
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            current = layer.output_shape(i, &current)?;
            shapes.push(current.clone());
        }
        Ok(shapes)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    pub fn has_recurrent_layer(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l.kind, LayerKind::BiLstm { .. }))
    }

    /// Layer rows named in the `kind_N` style of common framework summaries.
    pub fn summary(&self) -> Result<Vec<LayerSummary>> {
        let shapes = self.output_shapes()?;
        let mut counters = std::collections::HashMap::new();
        Ok(self
            .layers
            .iter()
            .zip(shapes)
            .map(|(layer, output_shape)| {
                let n = counters.entry(layer.kind_name()).or_insert(0usize);
                let name = if *n == 0 {
                    layer.kind_name().to_string()
                } else {
                    format!("{}_{}", layer.kind_name(), n)
                };
                *n += 1;
                LayerSummary {
                    name,
                    output_shape,
                    params: layer.param_count(),
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mlp(input: usize, hidden: usize, classes: usize) -> Result<NetworkSpec> {
        NetworkSpec::new(
            vec![input],
            classes,
            vec![
                LayerSpec::dense(input, hidden, Activation::ReLU),
                LayerSpec::dense(hidden, classes, Activation::Softmax),
            ],
        )
    }

    #[test]
    fn dense_param_counts() {
        let spec = mlp(5, 50, 15).unwrap();
        assert_eq!(spec.param_count(), 5 * 50 + 50 + 50 * 15 + 15);
    }

    #[test]
    fn mismatched_dense_names_layer() {
        let err = NetworkSpec::new(
            vec![4],
            3,
            vec![
                LayerSpec::dense(4, 8, Activation::ReLU),
                LayerSpec::dense(7, 3, Activation::Softmax),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Composition { layer: 1, .. }), "{err}");
    }

    #[test]
    fn final_softmax_required() {
        let err = NetworkSpec::new(vec![4], 3, vec![LayerSpec::dense(4, 3, Activation::ReLU)]);
        assert!(matches!(err, Err(Error::Composition { layer: 0, .. })));
    }

    #[test]
    fn output_width_must_match_classes() {
        assert!(mlp(4, 8, 3).is_ok());
        let err = NetworkSpec::new(vec![4], 5, vec![LayerSpec::dense(4, 3, Activation::Softmax)]);
        assert!(err.is_err());
    }

    #[test]
    fn dropout_rate_bounds() {
        let layers = |rate| {
            vec![
                LayerSpec::dropout(rate),
                LayerSpec::dense(4, 2, Activation::Softmax),
            ]
        };
        assert!(NetworkSpec::new(vec![4], 2, layers(0.0)).is_ok());
        assert!(NetworkSpec::new(vec![4], 2, layers(1.0)).is_err());
        assert!(NetworkSpec::new(vec![4], 2, layers(-0.1)).is_err());
    }

    #[test]
    fn bilstm_param_count_formula() {
        let layer = LayerSpec::bilstm(64, 64);
        assert_eq!(layer.param_count(), 2 * 4 * (64 * (64 + 64) + 64));
        assert_eq!(layer.param_count(), 66048);
    }

    #[test]
    fn conv_and_pool_shapes() {
        let spec = NetworkSpec::new(
            vec![10],
            3,
            vec![
                LayerSpec::embedding(20, 4),
                LayerSpec::conv1d(4, 6, 3, Activation::ReLU),
                LayerSpec::global_average_pool(),
                LayerSpec::dense(6, 3, Activation::Softmax),
            ],
        )
        .unwrap();
        assert_eq!(
            spec.output_shapes().unwrap(),
            vec![vec![10, 4], vec![10, 6], vec![6], vec![3]]
        );
        let names: Vec<_> = spec.summary().unwrap().into_iter().map(|r| r.name).collect();
        assert_eq!(names, ["embedding", "conv1d", "global_average_pooling1d", "dense"]);
    }
}
