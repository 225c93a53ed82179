//! Phase one: classifying a document into one of five domains.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glove::GloveParams;
use crate::nn::{
    self, evaluate, fit, predict_classes, Activation, Dataset, LayerKind, LayerSpec, NetworkSpec, Parameters, Tensor,
    TrainConfig, TrainingCurve,
};
use crate::text::{TextPipeline, TokenSequence, DEFAULT_VOCAB_SIZE, SEQUENCE_LEN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DomainLabel {
    Business,
    Entertainment,
    Politics,
    Sport,
    Technology,
}

impl DomainLabel {
    pub const ALL: [DomainLabel; 5] = [
        DomainLabel::Business,
        DomainLabel::Entertainment,
        DomainLabel::Politics,
        DomainLabel::Sport,
        DomainLabel::Technology,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            DomainLabel::Business => "Business",
            DomainLabel::Entertainment => "Entertainment",
            DomainLabel::Politics => "Politics",
            DomainLabel::Sport => "Sport",
            DomainLabel::Technology => "Technology",
        }
    }
}

impl fmt::Display for DomainLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DomainLabel {
    type Err = Error;

    /// Case-insensitive; accepts the `tech` folder name used by the BBC corpus.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "business" => Ok(DomainLabel::Business),
            "entertainment" => Ok(DomainLabel::Entertainment),
            "politics" => Ok(DomainLabel::Politics),
            "sport" => Ok(DomainLabel::Sport),
            "tech" | "technology" => Ok(DomainLabel::Technology),
            other => Err(Error::Data(format!("unknown domain {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DomainVariant {
    #[serde(rename = "M1_ANN")]
    M1Ann,
    #[serde(rename = "M2_LSTM")]
    M2Lstm,
    #[serde(rename = "M2_LSTM_DROPOUT")]
    M2LstmDropout,
    #[serde(rename = "M3_CNN")]
    M3Cnn,
}

impl DomainVariant {
    pub const ALL: [DomainVariant; 4] = [
        DomainVariant::M1Ann,
        DomainVariant::M2Lstm,
        DomainVariant::M2LstmDropout,
        DomainVariant::M3Cnn,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            DomainVariant::M1Ann => "M1_ANN",
            DomainVariant::M2Lstm => "M2_LSTM",
            DomainVariant::M2LstmDropout => "M2_LSTM_DROPOUT",
            DomainVariant::M3Cnn => "M3_CNN",
        }
    }

    pub fn is_recurrent(self) -> bool {
        matches!(self, DomainVariant::M2Lstm | DomainVariant::M2LstmDropout)
    }

    /// Default training setup: 30 epochs, global-norm clipping at 5 for the recurrent models.
    pub fn default_train_config(self) -> TrainConfig {
        TrainConfig {
            epochs: 30,
            clip_norm: self.is_recurrent().then_some(5.0),
            ..TrainConfig::default()
        }
    }
}

impl fmt::Display for DomainVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for DomainVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown domain model variant {s:?}")))
    }
}

/// Sizes shared by the domain architectures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainDims {
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub sequence_len: usize,
    pub dropout: f64,
    /// Six output units as in the published layer tables instead of five.
    pub table_faithful: bool,
}

impl Default for DomainDims {
    fn default() -> Self {
        Self {
            vocab_size: DEFAULT_VOCAB_SIZE,
            embedding_dim: 64,
            sequence_len: SEQUENCE_LEN,
            dropout: 0.5,
            table_faithful: false,
        }
    }
}

impl DomainDims {
    pub fn table_faithful() -> Self {
        Self {
            table_faithful: true,
            ..Self::default()
        }
    }

    pub fn outputs(&self) -> usize {
        if self.table_faithful {
            6
        } else {
            DomainLabel::ALL.len()
        }
    }
}

/// Layer stack for each variant:
///
/// * `M1_ANN`: embedding, global average pool, dense 130, dense 70, softmax
/// * `M2_LSTM`: embedding, BiLSTM (64 per direction), dense 128, dense 64, softmax
/// * `M2_LSTM_DROPOUT`: as `M2_LSTM` with dropout after dense 128
/// * `M3_CNN`: embedding, conv1d (128 filters, width 5), global average pool, dense 64, softmax
pub fn build_domain_model(variant: DomainVariant, dims: &DomainDims) -> Result<NetworkSpec> {
    let e = dims.embedding_dim;
    let out = dims.outputs();
    let mut layers = vec![LayerSpec::embedding(dims.vocab_size, e)];
    match variant {
        DomainVariant::M1Ann => layers.extend([
            LayerSpec::global_average_pool(),
            LayerSpec::dense(e, 130, Activation::ReLU),
            LayerSpec::dense(130, 70, Activation::ReLU),
            LayerSpec::dense(70, out, Activation::Softmax),
        ]),
        DomainVariant::M2Lstm | DomainVariant::M2LstmDropout => {
            layers.push(LayerSpec::bilstm(e, 64));
            layers.push(LayerSpec::dense(128, 128, Activation::ReLU));
            if variant == DomainVariant::M2LstmDropout {
                layers.push(LayerSpec::dropout(dims.dropout));
            }
            layers.push(LayerSpec::dense(128, 64, Activation::ReLU));
            layers.push(LayerSpec::dense(64, out, Activation::Softmax));
        }
        DomainVariant::M3Cnn => layers.extend([
            LayerSpec::conv1d(e, 128, 5, Activation::ReLU),
            LayerSpec::global_average_pool(),
            LayerSpec::dense(128, 64, Activation::ReLU),
            LayerSpec::dense(64, out, Activation::Softmax),
        ]),
    }
    NetworkSpec::new(vec![dims.sequence_len], out, layers)
}

/// Stacks encoded documents and their labels into a training set.
pub fn domain_dataset(sequences: &[TokenSequence], labels: &[DomainLabel]) -> Result<Dataset> {
    if sequences.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} sequences but {} labels",
            sequences.len(),
            labels.len()
        )));
    }
    let len = sequences.first().map_or(0, |s| s.indices.len());
    let mut data = Vec::with_capacity(sequences.len() * len);
    for s in sequences {
        if s.indices.len() != len {
            return Err(Error::Data("sequences differ in length".into()));
        }
        data.extend(s.indices.iter().map(|&i| i as f64));
    }
    let inputs = Tensor::new(vec![sequences.len(), len], data)?;
    Dataset::new(inputs, labels.iter().map(|l| l.index()).collect())
}

/// Copies GloVe embeddings (word plus context vector) into the embedding layer.
pub fn init_embedding_from_glove(spec: &NetworkSpec, params: &mut Parameters, glove: &GloveParams) -> Result<()> {
    let Some(LayerKind::Embedding { vocab_size, dim }) = spec.layers.first().map(|l| &l.kind) else {
        return Err(Error::InvalidConfig("first layer is not an embedding".into()));
    };
    if glove.dim != *dim {
        return Err(Error::InvalidShape(format!(
            "GloVe dimension {} does not match embedding dimension {dim}",
            glove.dim
        )));
    }
    let table = params.layer_mut(0)[0].data_mut();
    for i in 0..glove.n_vocab().min(*vocab_size) {
        table[i * dim..(i + 1) * dim].copy_from_slice(&glove.embedding(i));
    }
    Ok(())
}

/// Trains a domain model from `init` (or a seeded initialization).
pub fn train_domain(
    spec: &NetworkSpec,
    train: &Dataset,
    test: &Dataset,
    config: &TrainConfig,
    init: Option<Parameters>,
) -> Result<(Parameters, TrainingCurve)> {
    let params = init.unwrap_or_else(|| Parameters::init(spec, config.seed));
    fit(spec, params, train, test, config)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainPrediction {
    pub label: DomainLabel,
    /// Full softmax output; a table-faithful model has an extra unlabeled sixth entry.
    pub probabilities: Vec<f64>,
}

impl DomainPrediction {
    /// `(label, probability)` for the five labeled classes.
    pub fn labeled(&self) -> Vec<(DomainLabel, f64)> {
        DomainLabel::ALL
            .iter()
            .map(|&l| (l, self.probabilities[l.index()]))
            .collect()
    }
}

/// Argmax over the labeled classes, lowest index first on ties. Text that
/// cleans to nothing is still classified from an all-padding sequence.
pub fn predict_domain(spec: &NetworkSpec, params: &Parameters, pipeline: &TextPipeline, text: &str) -> Result<DomainPrediction> {
    let seq = pipeline.encode(text);
    let batch = Tensor::new(vec![1, seq.indices.len()], seq.as_f64())?;
    let probs = nn::predict(spec, params, &batch)?.into_data();
    let labeled = &probs[..DomainLabel::ALL.len()];
    let label = DomainLabel::from_index(nn::argmax(labeled)).expect("five labeled classes");
    Ok(DomainPrediction {
        label,
        probabilities: probs,
    })
}

/// Fraction of predictions equal to their label.
pub fn accuracy(predicted: &[usize], actual: &[usize]) -> Result<f64> {
    if predicted.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty set".into()));
    }
    if predicted.len() != actual.len() {
        return Err(Error::InvalidShape(format!(
            "{} predictions for {} labels",
            predicted.len(),
            actual.len()
        )));
    }
    let correct = predicted.iter().zip(actual).filter(|(p, a)| p == a).count();
    Ok(correct as f64 / predicted.len() as f64)
}

pub fn evaluate_accuracy(spec: &NetworkSpec, params: &Parameters, set: &Dataset) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty set".into()));
    }
    let predicted = predict_classes(spec, params, set, 64)?;
    accuracy(&predicted, set.targets())
}

/// Accuracy and mean cross-entropy in one pass.
pub fn evaluate_with_loss(spec: &NetworkSpec, params: &Parameters, set: &Dataset) -> Result<(f64, f64)> {
    evaluate(spec, params, set, 64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_parsing() {
        assert_eq!("tech".parse::<DomainLabel>().unwrap(), DomainLabel::Technology);
        assert_eq!("Sport".parse::<DomainLabel>().unwrap(), DomainLabel::Sport);
        assert!("weather".parse::<DomainLabel>().is_err());
        assert_eq!(DomainLabel::ALL.len(), 5);
        for l in DomainLabel::ALL {
            assert_eq!(DomainLabel::from_index(l.index()), Some(l));
        }
    }

    #[test]
    fn variant_tags_round_trip() {
        for v in DomainVariant::ALL {
            assert_eq!(v.tag().parse::<DomainVariant>().unwrap(), v);
        }
        assert!("M4".parse::<DomainVariant>().is_err());
    }

    #[test]
    fn accuracy_counts() {
        let actual: Vec<usize> = (0..445).map(|i| i % 5).collect();
        let mut predicted = actual.clone();
        for p in predicted.iter_mut().take(13) {
            *p = (*p + 1) % 5;
        }
        let acc = accuracy(&predicted, &actual).unwrap();
        assert_eq!(acc, 432.0 / 445.0);
        assert_eq!(format!("{:.2}", acc * 100.0), "97.08");
        assert_eq!(accuracy(&actual, &actual).unwrap(), 1.0);
        let wrong: Vec<usize> = actual.iter().map(|a| (a + 1) % 5).collect();
        assert_eq!(accuracy(&wrong, &actual).unwrap(), 0.0);
        assert!(matches!(accuracy(&[], &[]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn dropout_adds_no_parameters() {
        let dims = DomainDims::table_faithful();
        let plain = build_domain_model(DomainVariant::M2Lstm, &dims).unwrap();
        let dropped = build_domain_model(DomainVariant::M2LstmDropout, &dims).unwrap();
        assert_eq!(plain.param_count(), dropped.param_count());
        assert_eq!(dropped.layers.len(), plain.layers.len() + 1);
    }

    #[test]
    fn production_models_have_five_outputs() {
        for v in DomainVariant::ALL {
            let spec = build_domain_model(v, &DomainDims::default()).unwrap();
            assert_eq!(spec.n_classes, 5);
        }
    }
}
