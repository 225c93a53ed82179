//! Dataset ingestion, splitting, model files and end-to-end experiment runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{build_domain_model, domain_dataset, init_embedding_from_glove, train_domain, DomainDims, DomainLabel, DomainVariant};
use crate::error::{Error, Result};
use crate::glove::{train_glove, CooccurrenceMatrix, GloveConfig, DEFAULT_WINDOW};
use crate::interest::{
    build_interest_model, feature_dim, generate_synthetic_users, read_users_csv, train_interest, InterestVariant, UserEncoder,
    UserRecord,
};
use crate::nn::{NetworkSpec, Parameters, Tensor, TrainConfig, TrainingCurve};
use crate::text::{RawDocument, TextPipeline, TokenSequence, DEFAULT_VOCAB_SIZE};

/// Category folders of the BBC news corpus, in label order.
pub const BBC_FOLDERS: [&str; 5] = ["business", "entertainment", "politics", "sport", "tech"];

/// Reads `<root>/<category>/<file>` into labeled documents sorted by
/// category and file name. Invalid UTF-8 is replaced.
pub fn ingest_bbc(root: &Path) -> Result<Vec<RawDocument>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(root)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            found.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    found.sort();
    if found != BBC_FOLDERS {
        return Err(Error::Data(format!(
            "expected category folders {BBC_FOLDERS:?} under {}, found {found:?}",
            root.display()
        )));
    }
    let mut docs = Vec::new();
    for category in BBC_FOLDERS {
        let mut files = Vec::new();
        for entry in fs::read_dir(root.join(category))? {
            let entry = entry?;
            if entry.file_type()?.is_file() {
                files.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        files.sort();
        for name in files {
            let bytes = fs::read(root.join(category).join(&name))?;
            docs.push(RawDocument {
                id: format!("{category}/{name}"),
                text: String::from_utf8_lossy(&bytes).into_owned(),
                label: Some(category.to_string()),
            });
        }
    }
    Ok(docs)
}

/// `(train, test)` sizes: `floor(n * fraction)` clamped so both sides are non-empty.
pub fn split_sizes(n: usize, fraction: f64) -> Result<(usize, usize)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("split fraction must be in (0, 1), got {fraction}")));
    }
    if n < 2 {
        return Err(Error::Data(format!("need at least 2 items to split, got {n}")));
    }
    let train = ((n as f64 * fraction + 1e-9).floor() as usize).clamp(1, n - 1);
    Ok((train, n - train))
}

/// Seeded shuffle, then the first `floor(n * fraction)` items train.
pub fn split_dataset<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    let (n_train, _) = split_sizes(items.len(), fraction)?;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect();
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

/// Like [`split_dataset`] but every class keeps roughly the same proportion.
/// Leftover train slots go to the classes with the largest fractional quota.
/// Output keeps the input order within each side.
pub fn split_stratified<T: Clone, K: Ord + Clone>(
    items: &[T],
    key: impl Fn(&T) -> K,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    let (n_train, _) = split_sizes(items.len(), fraction)?;
    let mut classes: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        classes.entry(key(item)).or_default().push(i);
    }
    let mut quotas: Vec<(usize, f64)> = classes
        .values()
        .map(|members| {
            let exact = members.len() as f64 * fraction;
            (exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let mut short = n_train - quotas.iter().map(|q| q.0).sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..quotas.len()).collect();
    by_remainder.sort_by(|&a, &b| quotas[b].1.total_cmp(&quotas[a].1));
    for c in by_remainder {
        if short == 0 {
            break;
        }
        quotas[c].0 += 1;
        short -= 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; items.len()];
    for (members, (quota, _)) in classes.into_values().zip(quotas) {
        let mut members = members;
        members.shuffle(&mut rng);
        for &i in &members[..quota.min(members.len())] {
            in_train[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (item, t) in items.iter().zip(in_train) {
        if t {
            train.push(item.clone());
        } else {
            test.push(item.clone());
        }
    }
    Ok((train, test))
}

const TOPIC_WORDS: [&[&str]; 5] = [
    &["market", "shares", "profit", "bank", "economy", "growth", "investor", "company", "sales", "firm", "prices", "trade", "deal", "chief", "executive", "quarter", "oil", "dollar", "rates", "inflation"],
    &["film", "music", "award", "actor", "singer", "album", "star", "festival", "comedy", "director", "oscar", "band", "show", "chart", "theatre", "movie", "actress", "box", "office", "premiere"],
    &["government", "minister", "election", "party", "labour", "tory", "vote", "parliament", "policy", "campaign", "leader", "tax", "blair", "brown", "mps", "council", "reform", "bill", "secretary", "opposition"],
    &["match", "team", "cup", "coach", "player", "goal", "league", "win", "season", "injury", "club", "champion", "game", "striker", "rugby", "tennis", "final", "squad", "victory", "race"],
    &["software", "computer", "internet", "phone", "mobile", "digital", "technology", "users", "online", "network", "video", "games", "broadband", "microsoft", "apple", "security", "virus", "website", "data", "devices"],
];

const FILLER_WORDS: [&str; 30] = [
    "said", "year", "people", "time", "new", "last", "told", "week", "also", "first", "many", "made", "world", "month",
    "next", "three", "months", "years", "number", "part", "report", "public", "group", "back", "news", "expected", "set",
    "plans", "move", "early",
];

/// A seeded toy news corpus with BBC-style labels, `per_class` documents per
/// category, for smoke runs when the real corpus is not available.
pub fn synthetic_news(per_class: usize, seed: u64) -> Vec<RawDocument> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::with_capacity(5 * per_class);
    for (c, folder) in BBC_FOLDERS.iter().enumerate() {
        for i in 0..per_class {
            let len = rng.gen_range(40..120);
            let words: Vec<&str> = (0..len)
                .map(|_| {
                    if rng.gen_bool(0.35) {
                        TOPIC_WORDS[c][rng.gen_range(0..TOPIC_WORDS[c].len())]
                    } else if rng.gen_bool(0.1) {
                        let other = rng.gen_range(0..5);
                        TOPIC_WORDS[other][rng.gen_range(0..TOPIC_WORDS[other].len())]
                    } else {
                        FILLER_WORDS[rng.gen_range(0..FILLER_WORDS.len())]
                    }
                })
                .collect();
            docs.push(RawDocument {
                id: format!("{folder}/{:03}.txt", i + 1),
                text: words.join(" ") + ".",
                label: Some(folder.to_string()),
            });
        }
    }
    docs
}

/// Writes documents as `<root>/<label>/<file>` so [`ingest_bbc`] can read them back.
pub fn write_bbc_layout(root: &Path, docs: &[RawDocument]) -> Result<()> {
    for folder in BBC_FOLDERS {
        fs::create_dir_all(root.join(folder))?;
    }
    for d in docs {
        fs::write(root.join(&d.id), &d.text)?;
    }
    Ok(())
}

pub const MODEL_MAGIC: &[u8; 4] = b"PFLM";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Domain,
    Interest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    pub epochs: usize,
    pub train_acc: f64,
    pub test_acc: f64,
}

pub const RESULTS_HEADER: &str = "model,epochs,train_acc,test_acc";

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        format!("{},{},{:.6},{:.6}", self.model, self.epochs, self.train_acc, self.test_acc)
    }
}

/// Appends a row to a results CSV, writing the header first if the file is new.
pub fn append_results(path: &Path, row: &MetricsRow) -> Result<()> {
    let fresh = !path.exists() || fs::metadata(path)?.len() == 0;
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{RESULTS_HEADER}")?;
    }
    writeln!(f, "{}", row.to_csv_line())?;
    Ok(())
}

/// Everything needed to use a trained model besides its weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub kind: ModelKind,
    pub variant: String,
    pub table_faithful: bool,
    pub spec: NetworkSpec,
    pub pipeline: Option<TextPipeline>,
    pub encoder: Option<UserEncoder>,
    pub metrics: Option<MetricsRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub header: ModelHeader,
    pub params: Parameters,
}

impl ModelFile {
    /// Magic, version (u32 LE), header length (u32 LE), JSON header, then
    /// every weight as f32 LE in layer order.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.params.check_against(&self.header.spec)?;
        let header = serde_json::to_vec(&self.header)?;
        let header_len = u32::try_from(header.len()).map_err(|_| Error::Format("header too large".into()))?;
        let mut out = Vec::with_capacity(12 + header.len() + 4 * self.params.count());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&header);
        for t in self.params.tensors() {
            for &w in t.data() {
                out.extend_from_slice(&(w as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MODEL_MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        if bytes.len() < 12 {
            return Err(Error::Length {
                expected: 12,
                found: bytes.len(),
            });
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        let version = word(4);
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported version {version} (expected {MODEL_VERSION})")));
        }
        let header_end = 12 + word(8) as usize;
        if bytes.len() < header_end {
            return Err(Error::Length {
                expected: header_end,
                found: bytes.len(),
            });
        }
        let header: ModelHeader = serde_json::from_slice(&bytes[12..header_end])?;
        header.spec.validate()?;
        let expected = header_end + 4 * header.spec.param_count();
        if bytes.len() < expected {
            return Err(Error::Length {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - expected)));
        }
        let mut weights = bytes[header_end..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64);
        let mut layers = Vec::with_capacity(header.spec.layers.len());
        for layer in &header.spec.layers {
            let mut tensors = Vec::new();
            for shape in layer.param_shapes() {
                let n = shape.iter().product();
                tensors.push(Tensor::new(shape, weights.by_ref().take(n).collect())?);
            }
            layers.push(tensors);
        }
        Ok(Self {
            header,
            params: Parameters::from_layers(layers),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Keras-style layer table with a total line.
pub fn parameter_table(spec: &NetworkSpec) -> Result<String> {
    let rows = spec.summary()?;
    let mut out = format!("{:<28}{:<18}{:>10}\n", "Layer (type)", "Output Shape", "Param");
    for r in &rows {
        let shape = r.output_shape.iter().map(usize::to_string).collect::<Vec<_>>().join(", ");
        let _ = writeln!(out, "{:<28}{:<18}{:>10}", r.name, format!("({shape})"), r.params);
    }
    let _ = writeln!(out, "Total params: {}", spec.param_count());
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GloveSettings {
    pub epochs: usize,
    pub window: usize,
}

impl Default for GloveSettings {
    fn default() -> Self {
        Self {
            epochs: GloveConfig::default().epochs,
            window: DEFAULT_WINDOW,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// 1 for domains, 2 for interests.
    pub phase: u8,
    pub variant: String,
    pub seed: u64,
    /// Overrides the variant's default epoch count.
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    /// BBC root for phase 1; users CSV for phase 2 (synthetic users if absent).
    pub data: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub table_faithful: bool,
    pub split_fraction: f64,
    pub stratified: bool,
    pub vocab_size: usize,
    /// Initialize the embedding layer from GloVe vectors trained on the training split.
    pub glove: Option<GloveSettings>,
    pub n_users: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            phase: 1,
            variant: DomainVariant::M1Ann.tag().into(),
            seed: 42,
            epochs: None,
            batch_size: None,
            learning_rate: None,
            data: None,
            out_dir: PathBuf::from("out"),
            table_faithful: false,
            split_fraction: 0.8,
            stratified: false,
            vocab_size: DEFAULT_VOCAB_SIZE,
            glove: None,
            n_users: 10_000,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        match self.phase {
            1 => {
                self.variant.parse::<DomainVariant>()?;
            }
            2 => {
                self.variant.parse::<InterestVariant>()?;
            }
            p => return Err(Error::InvalidConfig(format!("phase must be 1 or 2, got {p}"))),
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!("split fraction must be in (0, 1), got {}", self.split_fraction)));
        }
        if let Some(path) = &self.data {
            if !path.exists() {
                return Err(Error::Data(format!("{} does not exist", path.display())));
            }
        }
        self.train_config()?.validate()
    }

    /// The variant's defaults with any overrides applied.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut c = match self.phase {
            1 => self.variant.parse::<DomainVariant>()?.default_train_config(),
            _ => self.variant.parse::<InterestVariant>()?.default_train_config(),
        };
        c.seed = self.seed;
        if let Some(e) = self.epochs {
            c.epochs = e;
        }
        if let Some(b) = self.batch_size {
            c.batch_size = b;
        }
        if let Some(lr) = self.learning_rate {
            c.learning_rate = lr;
        }
        Ok(c)
    }

    pub fn curve_path(&self) -> PathBuf {
        self.out_dir.join(format!("{}_curve.csv", self.variant))
    }

    pub fn model_path(&self) -> PathBuf {
        self.out_dir.join(format!("{}.pflm", self.variant))
    }

    pub fn results_path(&self) -> PathBuf {
        self.out_dir.join("results.csv")
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub metrics: MetricsRow,
    pub curve: TrainingCurve,
    pub model: ModelFile,
}

trait Staged<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> Staged<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}

/// Loads the configured data, trains, evaluates and writes the curve CSV,
/// a results row and the model file under `out_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate().stage("config")?;
    let output = match config.phase {
        1 => {
            let root = config
                .data
                .as_deref()
                .ok_or_else(|| Error::InvalidConfig("phase 1 needs a BBC data directory".into()))
                .stage("config")?;
            let docs = ingest_bbc(root).stage("ingest")?;
            train_domain_experiment(config, &docs)?
        }
        _ => {
            let users = match &config.data {
                Some(path) => read_users_csv(fs::File::open(path)?).stage("ingest")?,
                None => generate_synthetic_users(config.n_users, config.seed).stage("ingest")?,
            };
            train_interest_experiment(config, &users)?
        }
    };
    write_outputs(config, &output).stage("write")?;
    Ok(output)
}

pub fn write_outputs(config: &ExperimentConfig, output: &ExperimentOutput) -> Result<()> {
    fs::create_dir_all(&config.out_dir)?;
    fs::write(config.curve_path(), output.curve.to_csv())?;
    output.model.save(&config.model_path())?;
    append_results(&config.results_path(), &output.metrics)
}

fn metrics_row(tag: &str, curve: &TrainingCurve) -> MetricsRow {
    let last = curve.last().expect("at least one epoch");
    MetricsRow {
        model: tag.to_string(),
        epochs: curve.rows.len(),
        train_acc: last.train_accuracy,
        test_acc: last.test_accuracy,
    }
}

fn labels_of(docs: &[RawDocument]) -> Result<Vec<DomainLabel>> {
    docs.iter()
        .map(|d| {
            d.label
                .as_deref()
                .ok_or_else(|| Error::Data(format!("document {} has no label", d.id)))?
                .parse()
        })
        .collect()
}

/// Phase one on documents already in memory; writes nothing.
pub fn train_domain_experiment(config: &ExperimentConfig, docs: &[RawDocument]) -> Result<ExperimentOutput> {
    let variant: DomainVariant = config.variant.parse().stage("config")?;
    let train_config = config.train_config().stage("config")?;
    let (train_docs, test_docs) = if config.stratified {
        split_stratified(docs, |d| d.label.clone(), config.split_fraction, config.seed)
    } else {
        split_dataset(docs, config.split_fraction, config.seed)
    }
    .stage("split")?;

    let texts: Vec<&str> = train_docs.iter().map(|d| d.text.as_str()).collect();
    let pipeline = TextPipeline::fit(&texts, config.vocab_size).stage("prep")?;
    let encode = |set: &[RawDocument]| -> Result<(Vec<TokenSequence>, Vec<DomainLabel>)> {
        Ok((set.iter().map(|d| pipeline.encode(&d.text)).collect(), labels_of(set)?))
    };
    let (train_seqs, train_labels) = encode(&train_docs).stage("prep")?;
    let (test_seqs, test_labels) = encode(&test_docs).stage("prep")?;
    let train_set = domain_dataset(&train_seqs, &train_labels).stage("prep")?;
    let test_set = domain_dataset(&test_seqs, &test_labels).stage("prep")?;

    let dims = DomainDims {
        vocab_size: config.vocab_size,
        table_faithful: config.table_faithful,
        ..DomainDims::default()
    };
    let spec = build_domain_model(variant, &dims).stage("build")?;
    let mut params = Parameters::init(&spec, train_config.seed);
    if let Some(g) = &config.glove {
        let corpus: Vec<Vec<u32>> = train_seqs.iter().map(|s| s.indices[..s.true_length].to_vec()).collect();
        let gm = CooccurrenceMatrix::build(&corpus, pipeline.vocabulary.len(), g.window).stage("glove")?;
        let glove_config = GloveConfig {
            dim: dims.embedding_dim,
            epochs: g.epochs,
            seed: config.seed,
            ..GloveConfig::default()
        };
        let fit = train_glove(&gm, &glove_config).stage("glove")?;
        init_embedding_from_glove(&spec, &mut params, &fit.params).stage("glove")?;
    }
    let (params, curve) = train_domain(&spec, &train_set, &test_set, &train_config, Some(params)).stage("train")?;
    let metrics = metrics_row(variant.tag(), &curve);
    Ok(ExperimentOutput {
        model: ModelFile {
            header: ModelHeader {
                kind: ModelKind::Domain,
                variant: variant.tag().into(),
                table_faithful: config.table_faithful,
                spec,
                pipeline: Some(pipeline),
                encoder: None,
                metrics: Some(metrics.clone()),
            },
            params,
        },
        metrics,
        curve,
    })
}

/// Phase two on user records already in memory; writes nothing.
pub fn train_interest_experiment(config: &ExperimentConfig, users: &[UserRecord]) -> Result<ExperimentOutput> {
    let variant: InterestVariant = config.variant.parse().stage("config")?;
    let train_config = config.train_config().stage("config")?;
    let (train_users, test_users) = if config.stratified {
        split_stratified(users, |u| u.interest, config.split_fraction, config.seed)
    } else {
        split_dataset(users, config.split_fraction, config.seed)
    }
    .stage("split")?;
    let encoder = UserEncoder::fit(&train_users).stage("prep")?;
    let dim = feature_dim(variant, config.table_faithful);
    let train_set = encoder.dataset(&train_users, dim).stage("prep")?;
    let test_set = encoder.dataset(&test_users, dim).stage("prep")?;
    let spec = build_interest_model(variant, config.table_faithful).stage("build")?;
    let (params, curve) = train_interest(&spec, &train_set, &test_set, &train_config, None).stage("train")?;
    let metrics = metrics_row(variant.tag(), &curve);
    Ok(ExperimentOutput {
        model: ModelFile {
            header: ModelHeader {
                kind: ModelKind::Interest,
                variant: variant.tag().into(),
                table_faithful: config.table_faithful,
                spec,
                pipeline: None,
                encoder: Some(encoder),
                metrics: Some(metrics.clone()),
            },
            params,
        },
        metrics,
        curve,
    })
}
