//! Analytic gradients against central finite differences for every layer kind.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use userprof::nn::{grad_check, Activation, LayerSpec, Mode, NetworkSpec, Parameters, Tensor};

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_tokens(rng: &mut ChaCha8Rng, batch: usize, len: usize, vocab: usize) -> Tensor {
    let data = (0..batch * len).map(|_| rng.gen_range(0..vocab) as f64).collect();
    Tensor::new(vec![batch, len], data).unwrap()
}

fn targets(rng: &mut ChaCha8Rng, batch: usize, classes: usize) -> Vec<usize> {
    (0..batch).map(|_| rng.gen_range(0..classes)).collect()
}

fn check(spec: &NetworkSpec, seed: u64, batch: Tensor, mode: Mode) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    // perturb biases away from zero so ReLU kinks and symmetric cases are unlikely
    let mut params = Parameters::init(spec, seed);
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
    }
    let y = targets(&mut rng, batch.dim(0), spec.n_classes);
    let report = grad_check(spec, &params, &batch, &y, EPS, mode).unwrap();
    assert!(report.checked == spec.param_count());
    report.max_relative_error
}

fn assert_all_seeds(name: &str, f: impl Fn(u64) -> f64) {
    for seed in 0..5 {
        let err = f(seed);
        println!("{name} seed {seed}: max relative error {err:.3e}");
        assert!(err < TOL, "{name} seed {seed}: {err}");
    }
}

#[test]
fn dense_relu_softmax() {
    let spec = NetworkSpec::new(
        vec![4],
        3,
        vec![
            LayerSpec::dense(4, 5, Activation::ReLU),
            LayerSpec::dense(5, 3, Activation::Softmax),
        ],
    )
    .unwrap();
    assert_all_seeds("dense", |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        check(&spec, seed, random_tensor(&mut rng, &[3, 4]), Mode::Eval)
    });
}

#[test]
fn embedding_and_global_average_pool() {
    let spec = NetworkSpec::new(
        vec![6],
        3,
        vec![
            LayerSpec::embedding(7, 4),
            LayerSpec::global_average_pool(),
            LayerSpec::dense(4, 3, Activation::Softmax),
        ],
    )
    .unwrap();
    assert_all_seeds("embedding+pool", |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        check(&spec, seed, random_tokens(&mut rng, 3, 6, 7), Mode::Eval)
    });
}

#[test]
fn conv1d_kernel_five() {
    let spec = NetworkSpec::new(
        vec![7, 3],
        3,
        vec![
            LayerSpec::conv1d(3, 4, 5, Activation::ReLU),
            LayerSpec::global_average_pool(),
            LayerSpec::dense(4, 3, Activation::Softmax),
        ],
    )
    .unwrap();
    assert_all_seeds("conv1d", |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        check(&spec, seed, random_tensor(&mut rng, &[3, 7, 3]), Mode::Eval)
    });
}

#[test]
fn conv1d_even_kernel() {
    let spec = NetworkSpec::new(
        vec![5, 2],
        2,
        vec![
            LayerSpec::conv1d(2, 3, 4, Activation::None),
            LayerSpec::global_average_pool(),
            LayerSpec::dense(3, 2, Activation::Softmax),
        ],
    )
    .unwrap();
    assert_all_seeds("conv1d-even", |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        check(&spec, seed, random_tensor(&mut rng, &[3, 5, 2]), Mode::Eval)
    });
}

#[test]
fn bilstm_sequence_length_four() {
    let spec = NetworkSpec::new(
        vec![4, 3],
        3,
        vec![LayerSpec::bilstm(3, 4), LayerSpec::dense(8, 3, Activation::Softmax)],
    )
    .unwrap();
    assert_all_seeds("bilstm", |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        check(&spec, seed, random_tensor(&mut rng, &[3, 4, 3]), Mode::Eval)
    });
}

#[test]
fn embedding_into_bilstm() {
    let spec = NetworkSpec::new(
        vec![4],
        2,
        vec![
            LayerSpec::embedding(6, 3),
            LayerSpec::bilstm(3, 2),
            LayerSpec::dense(4, 4, Activation::ReLU),
            LayerSpec::dense(4, 2, Activation::Softmax),
        ],
    )
    .unwrap();
    assert_all_seeds("embedding+bilstm", |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        check(&spec, seed, random_tokens(&mut rng, 3, 4, 6), Mode::Eval)
    });
}

#[test]
fn dropout_inference_path() {
    let spec = NetworkSpec::new(
        vec![4],
        3,
        vec![
            LayerSpec::dense(4, 6, Activation::ReLU),
            LayerSpec::dropout(0.5),
            LayerSpec::dense(6, 3, Activation::Softmax),
        ],
    )
    .unwrap();
    assert_all_seeds("dropout-off", |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        check(&spec, seed, random_tensor(&mut rng, &[3, 4]), Mode::Eval)
    });
}

#[test]
fn dropout_training_path_with_fixed_mask() {
    let spec = NetworkSpec::new(
        vec![4],
        3,
        vec![
            LayerSpec::dense(4, 6, Activation::ReLU),
            LayerSpec::dropout(0.3),
            LayerSpec::dense(6, 3, Activation::Softmax),
        ],
    )
    .unwrap();
    assert_all_seeds("dropout-on", |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        check(&spec, seed, random_tensor(&mut rng, &[3, 4]), Mode::Train { seed: 77 + seed })
    });
}

#[test]
fn intermediate_softmax_activation() {
    let spec = NetworkSpec::new(
        vec![3],
        2,
        vec![
            LayerSpec::dense(3, 4, Activation::None),
            LayerSpec::activation(Activation::Softmax),
            LayerSpec::dense(4, 2, Activation::Softmax),
        ],
    )
    .unwrap();
    assert_all_seeds("softmax-activation", |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        check(&spec, seed, random_tensor(&mut rng, &[3, 3]), Mode::Eval)
    });
}
