use userprof::glove::{
    glove_gradient, glove_loss, nearest_neighbors, train_glove, CooccurrenceMatrix, GloveConfig, GloveParams, Weighting,
};
use userprof::text::{TextPipeline, Vocabulary};

/// Four content words, repeated so counts are well above one.
fn toy_matrix() -> CooccurrenceMatrix {
    let doc: Vec<u32> = [2, 3, 4, 5, 3, 2, 5, 4].repeat(16);
    CooccurrenceMatrix::build(&[doc], 6, 2).unwrap()
}

#[test]
fn gradient_matches_finite_differences() {
    let gm = CooccurrenceMatrix::build(&[vec![2, 3, 4, 5, 6, 2, 4, 6, 3, 5]], 7, 3).unwrap();
    let params = GloveParams::init(7, 3, 5);
    let w = Weighting::default();
    let analytic = glove_gradient(&params, &gm, w).unwrap();
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    let fields: [fn(&mut GloveParams) -> &mut Vec<f64>; 4] = [
        |p| &mut p.word,
        |p| &mut p.context,
        |p| &mut p.word_bias,
        |p| &mut p.context_bias,
    ];
    let mut grad_copy = analytic.clone();
    for field in fields {
        let n = field(&mut params.clone()).len();
        for k in 0..n {
            let mut plus = params.clone();
            field(&mut plus)[k] += eps;
            let mut minus = params.clone();
            field(&mut minus)[k] -= eps;
            let numeric = (glove_loss(&plus, &gm, w).unwrap() - glove_loss(&minus, &gm, w).unwrap()) / (2.0 * eps);
            let a = field(&mut grad_copy)[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    println!("glove gradient max relative error {worst:.3e}");
    assert!(worst < 1e-5, "{worst}");
}

#[test]
fn toy_corpus_loss_drops_ninety_percent() {
    let gm = toy_matrix();
    let config = GloveConfig {
        dim: 8,
        epochs: 50,
        seed: 3,
        ..GloveConfig::default()
    };
    let fit = train_glove(&gm, &config).unwrap();
    println!("initial {:.4} final {:.4}", fit.initial_loss, fit.final_loss());
    assert!(fit.final_loss() < 0.1 * fit.initial_loss);
    assert!(fit.final_loss() <= fit.initial_loss);
    for e in 0..fit.epoch_losses.len() - 5 {
        assert!(fit.epoch_losses[e + 5] < fit.epoch_losses[e], "epoch {e}");
    }
}

#[test]
fn identical_seeds_identical_params() {
    let gm = toy_matrix();
    let config = GloveConfig {
        dim: 4,
        epochs: 5,
        seed: 9,
        ..GloveConfig::default()
    };
    assert_eq!(train_glove(&gm, &config).unwrap(), train_glove(&gm, &config).unwrap());
}

#[test]
fn shared_contexts_make_neighbors() {
    let mut texts = Vec::new();
    for (i, ctx) in ["fur whiskers purr", "bark fetch fur", "pet vet fur", "paws tail whiskers"]
        .iter()
        .enumerate()
    {
        for animal in ["cat", "dog"] {
            texts.push(format!("{ctx} {animal} {ctx} {animal} {}", if i % 2 == 0 { "home" } else { "garden" }));
        }
    }
    for ctx in ["engine wheels fuel", "road garage motor", "fuel motor highway"] {
        texts.push(format!("{ctx} car {ctx} car"));
    }
    let pipeline = TextPipeline::fit(&texts, 100).unwrap();
    let vocab: &Vocabulary = &pipeline.vocabulary;
    let corpus: Vec<Vec<u32>> = texts
        .iter()
        .map(|t| pipeline.tokens(t).iter().map(|w| vocab.index_of(w)).collect())
        .collect();
    let gm = CooccurrenceMatrix::build(&corpus, vocab.len(), 3).unwrap();
    let fit = train_glove(
        &gm,
        &GloveConfig {
            dim: 10,
            epochs: 300,
            seed: 1,
            ..GloveConfig::default()
        },
    )
    .unwrap();
    let cat = vocab.index_of("cat") as usize;
    let dog = vocab.index_of("dog") as usize;
    let car = vocab.index_of("car") as usize;
    let ranked = nearest_neighbors(&fit.params, cat, vocab.len()).unwrap();
    let pos = |w: usize| ranked.iter().position(|&(i, _)| i == w).unwrap();
    println!("dog at {}, car at {}", pos(dog), pos(car));
    assert!(pos(dog) < pos(car));
}
