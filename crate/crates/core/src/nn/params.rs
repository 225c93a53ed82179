use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::{LayerKind, NetworkSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Weight and bias tensors for every layer, indexed by layer position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    layers: Vec<Vec<Tensor>>,
}

impl Parameters {
    /// Zero-filled parameters shaped after `spec`.
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            layers: spec
                .layers
                .iter()
                .map(|l| l.param_shapes().iter().map(|s| Tensor::zeros(s)).collect())
                .collect(),
        }
    }

    /// Glorot-uniform weights, zero biases (LSTM forget-gate biases start at one).
    pub fn init(spec: &NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros(spec);
        for (layer, tensors) in spec.layers.iter().zip(params.layers.iter_mut()) {
            match layer.kind {
                LayerKind::Embedding { vocab_size, dim } => {
                    glorot(&mut rng, &mut tensors[0], vocab_size, dim);
                }
                LayerKind::Dense { inputs, units } => {
                    glorot(&mut rng, &mut tensors[0], inputs, units);
                }
                LayerKind::Conv1D {
                    in_channels,
                    filters,
                    kernel,
                } => {
                    glorot(&mut rng, &mut tensors[0], kernel * in_channels, kernel * filters);
                }
                LayerKind::BiLstm { inputs, hidden } => {
                    for dir in tensors.chunks_mut(3) {
                        glorot(&mut rng, &mut dir[0], inputs, 4 * hidden);
                        glorot(&mut rng, &mut dir[1], hidden, 4 * hidden);
                        dir[2].data_mut()[hidden..2 * hidden].fill(1.0);
                    }
                }
                LayerKind::GlobalAveragePool1D | LayerKind::Dropout { .. } | LayerKind::Activation => {}
            }
        }
        params
    }

    pub fn from_layers(layers: Vec<Vec<Tensor>>) -> Self {
        Self { layers }
    }

    pub fn layer(&self, index: usize) -> &[Tensor] {
        &self.layers[index]
    }

    pub fn layer_mut(&mut self, index: usize) -> &mut [Tensor] {
        &mut self.layers[index]
    }

    pub fn layers(&self) -> &[Vec<Tensor>] {
        &self.layers
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flatten()
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flatten()
    }

    /// Total number of scalars.
    pub fn count(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().all(Tensor::all_finite)
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors().map(Tensor::sum_squares).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.data_mut().iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Fails unless tensor shapes agree with `spec` one for one.
    pub fn check_against(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layers.len() != spec.layers.len() {
            return Err(Error::InvalidShape(format!(
                "parameters cover {} layers, spec has {}",
                self.layers.len(),
                spec.layers.len()
            )));
        }
        for (i, (layer, tensors)) in spec.layers.iter().zip(&self.layers).enumerate() {
            let expected = layer.param_shapes();
            let actual: Vec<Vec<usize>> = tensors.iter().map(|t| t.shape().to_vec()).collect();
            if expected != actual {
                return Err(Error::Composition {
                    layer: i,
                    reason: format!("parameter shapes {actual:?}, expected {expected:?}"),
                });
            }
        }
        Ok(())
    }
}

fn glorot(rng: &mut ChaCha8Rng, tensor: &mut Tensor, fan_in: usize, fan_out: usize) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for x in tensor.data_mut() {
        *x = rng.gen_range(-limit..limit);
    }
}
