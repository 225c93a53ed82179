//! GloVe word vectors: co-occurrence counting and the weighted least-squares fit.
//!
//! The fitted model approximates `w_i · c_j + b_i + c_b_j ≈ ln X_ij` for every
//! observed pair, with separate word and context vectors that are summed to
//! form the final embedding.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{Vocabulary, OOV_INDEX, PAD_INDEX};

pub const DEFAULT_WINDOW: usize = 10;
pub const DEFAULT_GM_MAX: f64 = 100.0;
pub const DEFAULT_ALPHA: f64 = 0.75;
pub const DEFAULT_LEARNING_RATE: f64 = 0.05;

/// Sparse symmetric-window co-occurrence counts, stored sorted by `(i, j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceMatrix {
    n_vocab: usize,
    window: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl CooccurrenceMatrix {
    /// Every token pair at distance `1..=window` inside a document adds
    /// `1/distance` in both directions. Padding and unknown-token indices are skipped.
    pub fn build(corpus: &[Vec<u32>], n_vocab: usize, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidConfig("co-occurrence window must be >= 1".into()));
        }
        let mut counts: HashMap<(u32, u32), f64> = HashMap::new();
        for doc in corpus {
            if let Some(&bad) = doc.iter().find(|&&t| t as usize >= n_vocab) {
                return Err(Error::IndexOutOfRange {
                    index: bad as usize,
                    bound: n_vocab,
                });
            }
            for (pos, &center) in doc.iter().enumerate() {
                if is_reserved(center) {
                    continue;
                }
                for offset in 1..=window.min(doc.len() - 1 - pos) {
                    let context = doc[pos + offset];
                    if is_reserved(context) {
                        continue;
                    }
                    let w = 1.0 / offset as f64;
                    *counts.entry((center, context)).or_default() += w;
                    *counts.entry((context, center)).or_default() += w;
                }
            }
        }
        let mut entries: Vec<(u32, u32, f64)> = counts.into_iter().map(|((i, j), x)| (i, j, x)).collect();
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        Ok(Self {
            n_vocab,
            window,
            entries,
        })
    }

    pub fn n_vocab(&self) -> usize {
        self.n_vocab
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: u32, j: u32) -> f64 {
        self.entries
            .binary_search_by_key(&(i, j), |&(a, b, _)| (a, b))
            .map_or(0.0, |k| self.entries[k].2)
    }

    pub fn max_count(&self) -> f64 {
        self.entries.iter().map(|e| e.2).fold(0.0, f64::max)
    }
}

fn is_reserved(index: u32) -> bool {
    index == PAD_INDEX || index == OOV_INDEX
}

/// `(x / gm_max)^alpha` below `gm_max`, `1` at or above it.
pub fn weight_f(x: f64, gm_max: f64, alpha: f64) -> f64 {
    if x < gm_max {
        (x / gm_max).powf(alpha)
    } else {
        1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weighting {
    pub gm_max: f64,
    pub alpha: f64,
}

impl Default for Weighting {
    fn default() -> Self {
        Self {
            gm_max: DEFAULT_GM_MAX,
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl Weighting {
    pub fn weight(&self, x: f64) -> f64 {
        weight_f(x, self.gm_max, self.alpha)
    }
}

/// Word and context vectors (row-major `n_vocab x dim`) plus their biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GloveParams {
    pub dim: usize,
    pub word: Vec<f64>,
    pub context: Vec<f64>,
    pub word_bias: Vec<f64>,
    pub context_bias: Vec<f64>,
}

impl GloveParams {
    /// Every value uniform in `[-0.5/dim, 0.5/dim]`.
    pub fn init(n_vocab: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 0.5 / dim as f64;
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-bound..=bound)).collect() };
        Self {
            dim,
            word: draw(n_vocab * dim),
            context: draw(n_vocab * dim),
            word_bias: draw(n_vocab),
            context_bias: draw(n_vocab),
        }
    }

    pub fn zeros(n_vocab: usize, dim: usize) -> Self {
        Self {
            dim,
            word: vec![0.0; n_vocab * dim],
            context: vec![0.0; n_vocab * dim],
            word_bias: vec![0.0; n_vocab],
            context_bias: vec![0.0; n_vocab],
        }
    }

    pub fn n_vocab(&self) -> usize {
        self.word_bias.len()
    }

    pub fn word_vector(&self, i: usize) -> &[f64] {
        &self.word[i * self.dim..(i + 1) * self.dim]
    }

    pub fn context_vector(&self, j: usize) -> &[f64] {
        &self.context[j * self.dim..(j + 1) * self.dim]
    }

    /// Final embedding of word `i`: word vector plus context vector.
    pub fn embedding(&self, i: usize) -> Vec<f64> {
        self.word_vector(i)
            .iter()
            .zip(self.context_vector(i))
            .map(|(a, b)| a + b)
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        [&self.word, &self.context, &self.word_bias, &self.context_bias]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    fn residual(&self, i: usize, j: usize, x: f64) -> f64 {
        let dot: f64 = self
            .word_vector(i)
            .iter()
            .zip(self.context_vector(j))
            .map(|(a, b)| a * b)
            .sum();
        dot + self.word_bias[i] + self.context_bias[j] - x.ln()
    }
}

fn check_dims(params: &GloveParams, gm: &CooccurrenceMatrix) -> Result<()> {
    if params.n_vocab() != gm.n_vocab() {
        return Err(Error::InvalidShape(format!(
            "parameters cover {} words, matrix {}",
            params.n_vocab(),
            gm.n_vocab()
        )));
    }
    Ok(())
}

/// Weighted squared error summed over the stored pairs.
pub fn glove_loss(params: &GloveParams, gm: &CooccurrenceMatrix, weighting: Weighting) -> Result<f64> {
    check_dims(params, gm)?;
    Ok(gm
        .entries()
        .iter()
        .map(|&(i, j, x)| {
            let r = params.residual(i as usize, j as usize, x);
            weighting.weight(x) * r * r
        })
        .sum())
}

/// Full gradient of [`glove_loss`], shaped like the parameters.
pub fn glove_gradient(params: &GloveParams, gm: &CooccurrenceMatrix, weighting: Weighting) -> Result<GloveParams> {
    check_dims(params, gm)?;
    let d = params.dim;
    let mut grad = GloveParams::zeros(params.n_vocab(), d);
    for &(i, j, x) in gm.entries() {
        let (i, j) = (i as usize, j as usize);
        let g = 2.0 * weighting.weight(x) * params.residual(i, j, x);
        for k in 0..d {
            grad.word[i * d + k] += g * params.context[j * d + k];
            grad.context[j * d + k] += g * params.word[i * d + k];
        }
        grad.word_bias[i] += g;
        grad.context_bias[j] += g;
    }
    Ok(grad)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GloveConfig {
    pub dim: usize,
    pub epochs: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub weighting: Weighting,
}

impl Default for GloveConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            epochs: 25,
            seed: 42,
            learning_rate: DEFAULT_LEARNING_RATE,
            weighting: Weighting::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GloveFit {
    pub params: GloveParams,
    pub initial_loss: f64,
    /// Loss after each epoch.
    pub epoch_losses: Vec<f64>,
}

impl GloveFit {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(self.initial_loss)
    }
}

/// AdaGrad over shuffled nonzero entries, one update per entry per epoch.
/// Squared-gradient accumulators start at one.
pub fn train_glove(gm: &CooccurrenceMatrix, config: &GloveConfig) -> Result<GloveFit> {
    if config.dim == 0 || config.epochs == 0 {
        return Err(Error::InvalidConfig("dim and epochs must be >= 1".into()));
    }
    let d = config.dim;
    let lr = config.learning_rate;
    let mut params = GloveParams::init(gm.n_vocab(), d, config.seed);
    let initial_loss = glove_loss(&params, gm, config.weighting)?;
    let mut sq = GloveParams::zeros(gm.n_vocab(), d);
    for v in [&mut sq.word, &mut sq.context, &mut sq.word_bias, &mut sq.context_bias] {
        v.fill(1.0);
    }
    let mut order: Vec<usize> = (0..gm.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for &e in &order {
            let (i, j, x) = gm.entries()[e];
            let (i, j) = (i as usize, j as usize);
            let fdiff = config.weighting.weight(x) * params.residual(i, j, x);
            if !fdiff.is_finite() {
                return Err(Error::diverged(format!("non-finite residual for pair ({i}, {j})")).at_epoch(epoch));
            }
            for k in 0..d {
                let (wi, cj) = (i * d + k, j * d + k);
                let g_word = fdiff * params.context[cj];
                let g_context = fdiff * params.word[wi];
                params.word[wi] -= lr * g_word / sq.word[wi].sqrt();
                params.context[cj] -= lr * g_context / sq.context[cj].sqrt();
                sq.word[wi] += g_word * g_word;
                sq.context[cj] += g_context * g_context;
            }
            params.word_bias[i] -= lr * fdiff / sq.word_bias[i].sqrt();
            params.context_bias[j] -= lr * fdiff / sq.context_bias[j].sqrt();
            sq.word_bias[i] += fdiff * fdiff;
            sq.context_bias[j] += fdiff * fdiff;
        }
        let loss = glove_loss(&params, gm, config.weighting)?;
        if !loss.is_finite() {
            return Err(Error::diverged(format!("loss {loss}")).at_epoch(epoch));
        }
        epoch_losses.push(loss);
    }
    Ok(GloveFit {
        params,
        initial_loss,
        epoch_losses,
    })
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// The `k` words most cosine-similar to `word` (query excluded), ties by index.
pub fn nearest_neighbors(params: &GloveParams, word: usize, k: usize) -> Result<Vec<(usize, f64)>> {
    let n = params.n_vocab();
    if word >= n {
        return Err(Error::IndexOutOfRange { index: word, bound: n });
    }
    let query = params.embedding(word);
    let mut scored: Vec<(usize, f64)> = (0..n)
        .filter(|&i| i != word)
        .map(|i| (i, cosine(&query, &params.embedding(i))))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

/// `token v1 v2 ... vd` per line for every vocabulary entry.
pub fn export_text(params: &GloveParams, vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for i in 0..params.n_vocab().min(vocab.len()) {
        out.push_str(vocab.token(i as u32).unwrap_or_default());
        for v in params.embedding(i) {
            let _ = write!(out, " {v:.6}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn weighting_examples() {
        assert_eq!(weight_f(100.0, 100.0, 0.75), 1.0);
        assert_eq!(weight_f(200.0, 100.0, 0.75), 1.0);
        assert_abs_diff_eq!(weight_f(1.0, 100.0, 0.75), 0.031_622_776_601_683_79, epsilon = 1e-9);
        assert_eq!(weight_f(0.0, 100.0, 0.75), 0.0);
    }

    #[test]
    fn adjacent_pair() {
        let gm = CooccurrenceMatrix::build(&[vec![2, 3]], 4, 1).unwrap();
        assert_eq!(gm.get(2, 3), 1.0);
        assert_eq!(gm.get(3, 2), 1.0);
        assert_eq!(gm.len(), 2);
    }

    #[test]
    fn distance_weighting() {
        let gm = CooccurrenceMatrix::build(&[vec![2, 3, 4]], 5, 2).unwrap();
        assert_eq!(gm.get(2, 4), 0.5);
        assert_eq!(gm.get(2, 3), 1.0);
        let narrow = CooccurrenceMatrix::build(&[vec![2, 3, 4]], 5, 1).unwrap();
        assert_eq!(narrow.get(2, 4), 0.0);
    }

    #[test]
    fn reserved_indices_skipped() {
        let gm = CooccurrenceMatrix::build(&[vec![2, OOV_INDEX, 3, PAD_INDEX]], 4, 2).unwrap();
        assert_eq!(gm.get(2, 3), 0.5);
        assert!(gm.entries().iter().all(|&(i, j, _)| i > 1 && j > 1));
    }

    #[test]
    fn empty_corpus() {
        let gm = CooccurrenceMatrix::build(&[], 4, 10).unwrap();
        assert!(gm.is_empty());
        let fit = train_glove(
            &gm,
            &GloveConfig {
                dim: 3,
                epochs: 2,
                ..GloveConfig::default()
            },
        )
        .unwrap();
        assert_eq!(fit.params, GloveParams::init(4, 3, 42));
        assert_eq!(fit.final_loss(), 0.0);
    }

    #[test]
    fn out_of_range_token() {
        assert!(CooccurrenceMatrix::build(&[vec![2, 9]], 4, 1).is_err());
        assert!(CooccurrenceMatrix::build(&[vec![2, 3]], 4, 0).is_err());
    }

    #[test]
    fn loss_hand_values() {
        // single pair with count 1: ln 1 = 0, zero parameters, zero residual
        let one = CooccurrenceMatrix {
            n_vocab: 3,
            window: 1,
            entries: vec![(2, 2, 1.0)],
        };
        let zero = GloveParams::zeros(3, 2);
        assert_eq!(glove_loss(&zero, &one, Weighting::default()).unwrap(), 0.0);

        let e = CooccurrenceMatrix {
            n_vocab: 3,
            window: 1,
            entries: vec![(2, 2, std::f64::consts::E)],
        };
        let expected = (std::f64::consts::E / 100.0).powf(0.75);
        assert_abs_diff_eq!(glove_loss(&zero, &e, Weighting::default()).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn exact_fit_has_zero_loss() {
        let gm = CooccurrenceMatrix::build(&[vec![2, 3]], 4, 1).unwrap();
        let mut p = GloveParams::init(4, 3, 1);
        p.word.fill(0.0);
        p.context_bias.fill(0.0);
        p.word_bias[2] = 1f64.ln();
        p.word_bias[3] = 1f64.ln();
        assert_eq!(glove_loss(&p, &gm, Weighting::default()).unwrap(), 0.0);
        p.word_bias[3] = 0.25;
        assert!(glove_loss(&p, &gm, Weighting::default()).unwrap() > 0.0);
    }

    #[test]
    fn neighbors_edge_cases() {
        let mut p = GloveParams::zeros(4, 2);
        p.word = vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0];
        assert!(nearest_neighbors(&p, 0, 0).unwrap().is_empty());
        let n = nearest_neighbors(&p, 0, 10).unwrap();
        assert_eq!(n.len(), 3);
        assert_eq!(n[0].0, 2);
        assert_abs_diff_eq!(n[0].1, 1.0, epsilon = 1e-12);
        assert_eq!(n[2].0, 1);
    }

    #[test]
    fn export_format() {
        let vocab = Vocabulary::build(&[vec!["a"]], 3).unwrap();
        let mut p = GloveParams::zeros(3, 2);
        p.word[4] = 0.5;
        let text = export_text(&p, &vocab);
        assert_eq!(text.lines().nth(2).unwrap(), "a 0.500000 0.000000");
    }

    proptest! {
        #[test]
        fn matrix_is_symmetric(docs in prop::collection::vec(prop::collection::vec(0u32..8, 0..15), 0..5), window in 1usize..5) {
            let gm = CooccurrenceMatrix::build(&docs, 8, window).unwrap();
            for &(i, j, x) in gm.entries() {
                prop_assert!(x > 0.0);
                prop_assert_eq!(gm.get(j, i), x);
            }
        }

        #[test]
        fn weighting_bounded_and_monotone(a in 0.0f64..500.0, b in 0.0f64..500.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let w = Weighting::default();
            prop_assert!(w.weight(lo) <= w.weight(hi));
            prop_assert!((0.0..=1.0).contains(&w.weight(hi)));
        }
    }
}
