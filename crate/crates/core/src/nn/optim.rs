use serde::{Deserialize, Serialize};

use super::params::Parameters;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Algorithm {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    Sgd,
}

impl Default for Algorithm {
    fn default() -> Self {
        Algorithm::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer with per-parameter moment accumulators shaped like the model.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    first: Parameters,
    second: Parameters,
    step: u64,
}

impl OptimizerState {
    pub fn new(algorithm: Algorithm, learning_rate: f64, params: &Parameters) -> Self {
        let zeros = || {
            let mut p = params.clone();
            p.scale(0.0);
            p
        };
        Self {
            algorithm,
            learning_rate,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. Non-finite gradients abort without touching the parameters.
    pub fn step(&mut self, params: &mut Parameters, grads: &Parameters) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::diverged("non-finite gradient"));
        }
        if params.count() != grads.count() {
            return Err(Error::InvalidShape(format!(
                "{} parameters but {} gradients",
                params.count(),
                grads.count()
            )));
        }
        self.step += 1;
        let lr = self.learning_rate;
        match self.algorithm {
            Algorithm::Sgd => {
                for (p, g) in params.tensors_mut().zip(grads.tensors()) {
                    p.data_mut().iter_mut().zip(g.data()).for_each(|(p, g)| *p -= lr * g);
                }
            }
            Algorithm::Adam { beta1, beta2, epsilon } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let tensors = params
                    .tensors_mut()
                    .zip(grads.tensors())
                    .zip(self.first.tensors_mut().zip(self.second.tensors_mut()));
                for ((p, g), (m, v)) in tensors {
                    let iter = p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
                    for ((p, &g), (m, v)) in iter {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Parameters, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;
    use approx::assert_abs_diff_eq;

    fn scalar(v: f64) -> Parameters {
        Parameters::from_layers(vec![vec![Tensor::from_vec(vec![v])]])
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = Parameters::from_layers(vec![vec![Tensor::from_vec(vec![0.5, -2.0])]]);
        let g = Parameters::from_layers(vec![vec![Tensor::zeros(&[2])]]);
        let before = p.clone();
        let mut opt = OptimizerState::new(Algorithm::default(), 1e-3, &p);
        for _ in 0..3 {
            opt.step(&mut p, &g).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(opt.step_count(), 3);
    }

    #[test]
    fn adam_first_step() {
        // m_hat = g, v_hat = g^2 after bias correction, so the step is lr * g / (|g| + eps)
        let mut p = scalar(0.0);
        let mut opt = OptimizerState::new(Algorithm::default(), 0.001, &p);
        opt.step(&mut p, &scalar(1.0)).unwrap();
        assert_abs_diff_eq!(p.layer(0)[0].data()[0], -0.001, epsilon = 1e-10);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn sgd_two_steps() {
        let mut p = scalar(1.0);
        let mut opt = OptimizerState::new(Algorithm::Sgd, 0.1, &p);
        opt.step(&mut p, &scalar(1.0)).unwrap();
        opt.step(&mut p, &scalar(1.0)).unwrap();
        assert_abs_diff_eq!(p.layer(0)[0].data()[0], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn non_finite_gradient_diverges() {
        let mut p = scalar(1.0);
        let mut opt = OptimizerState::new(Algorithm::default(), 0.1, &p);
        let err = opt.step(&mut p, &scalar(f64::NAN)).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
        assert_eq!(p, scalar(1.0));
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = Parameters::from_layers(vec![vec![Tensor::from_vec(vec![3.0, 4.0])]]);
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert_abs_diff_eq!(g.global_norm(), 1.0, epsilon = 1e-12);
        let mut small = Parameters::from_layers(vec![vec![Tensor::from_vec(vec![0.3])]]);
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small.layer(0)[0].data(), &[0.3]);
    }
}
