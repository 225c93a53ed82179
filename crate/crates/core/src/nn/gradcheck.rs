//! Central finite-difference comparison of analytic gradients.

use super::network::{self, Mode};
use super::params::Parameters;
use super::spec::NetworkSpec;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Largest entrywise discrepancy found by [`grad_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(layer, tensor, entry)` of the worst entry.
    pub worst: (usize, usize, usize),
    pub checked: usize,
}

/// Compares every analytic gradient entry against
/// `(L(θ + eps) - L(θ - eps)) / (2 eps)`, returning the maximum of
/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check(
    spec: &NetworkSpec,
    params: &Parameters,
    batch: &Tensor,
    targets: &[usize],
    eps: f64,
    mode: Mode,
) -> Result<GradCheckReport> {
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::InvalidConfig(format!("eps {eps} outside (0, 1e-2]")));
    }
    let (_, analytic) = network::backward(spec, params, batch, targets, mode)?;
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: (0, 0, 0),
        checked: 0,
    };
    for layer in 0..spec.layers.len() {
        for tensor in 0..params.layer(layer).len() {
            for entry in 0..params.layer(layer)[tensor].len() {
                let original = params.layer(layer)[tensor].data()[entry];
                probe.layer_mut(layer)[tensor].data_mut()[entry] = original + eps;
                let plus = network::loss(spec, &probe, batch, targets, mode)?;
                probe.layer_mut(layer)[tensor].data_mut()[entry] = original - eps;
                let minus = network::loss(spec, &probe, batch, targets, mode)?;
                probe.layer_mut(layer)[tensor].data_mut()[entry] = original;

                let numeric = (plus - minus) / (2.0 * eps);
                let a = analytic.layer(layer)[tensor].data()[entry];
                let rel = relative_error(a, numeric);
                if rel > report.max_relative_error {
                    report.max_relative_error = rel;
                    report.worst = (layer, tensor, entry);
                }
                report.checked += 1;
            }
        }
    }
    Ok(report)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::{Activation, LayerSpec};

    #[test]
    fn rejects_bad_eps() {
        let spec = NetworkSpec::new(vec![2], 2, vec![LayerSpec::dense(2, 2, Activation::Softmax)]).unwrap();
        let p = Parameters::init(&spec, 0);
        let batch = Tensor::new(vec![1, 2], vec![0.1, 0.2]).unwrap();
        assert!(grad_check(&spec, &p, &batch, &[0], 0.0, Mode::Eval).is_err());
        assert!(grad_check(&spec, &p, &batch, &[0], 0.1, Mode::Eval).is_err());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
    }
}
