//! User profiles built from implicit feedback, and personalized reranking.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{predict_domain, DomainLabel};
use crate::error::{Error, Result};
use crate::interest::UserRecord;
use crate::nn::{NetworkSpec, Parameters};
use crate::text::{clean, tokenize, RawDocument, Stopwords, TextPipeline};

pub const READING_THRESHOLD_SECS: f64 = 30.0;
pub const EMA_LAMBDA: f64 = 0.2;
pub const TOP_CONCEPTS: usize = 4;

/// `(concept, probability)` pairs for one document.
pub type ConceptScores = Vec<(String, f64)>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    /// Concept weights, each in [0, 1].
    pub weights: BTreeMap<String, f64>,
    pub record: Option<UserRecord>,
    pub event_count: u64,
}

impl UserProfile {
    pub fn new(user_id: impl Into<String>) -> Self {
        Self {
            user_id: user_id.into(),
            weights: BTreeMap::new(),
            record: None,
            event_count: 0,
        }
    }

    /// Stored weight, 0 when absent.
    pub fn weight(&self, concept: &str) -> f64 {
        self.weights.get(concept).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (c, &u) in &self.weights {
            if !(0.0..=1.0).contains(&u) {
                return Err(Error::Data(format!("profile {}: weight {u} for {c} outside [0, 1]", self.user_id)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub user_id: String,
    pub document_id: String,
    pub clicked: bool,
    pub reading_time_secs: f64,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl FeedbackEvent {
    pub fn validate(&self) -> Result<()> {
        if !self.reading_time_secs.is_finite() || self.reading_time_secs < 0.0 {
            return Err(Error::Data(format!("negative or non-finite reading time {}", self.reading_time_secs)));
        }
        Ok(())
    }
}

/// Something that can say which concepts a document is about.
pub trait DocumentClassifier {
    /// Concept probabilities for the document, `None` if unavailable.
    fn classify(&self, document_id: &str) -> Option<ConceptScores>;
}

impl<F> DocumentClassifier for F
where
    F: Fn(&str) -> Option<ConceptScores>,
{
    fn classify(&self, document_id: &str) -> Option<ConceptScores> {
        self(document_id)
    }
}

/// A trained domain model together with the documents it can look up.
pub struct DomainModelClassifier<'a> {
    pub spec: &'a NetworkSpec,
    pub params: &'a Parameters,
    pub pipeline: &'a TextPipeline,
    pub documents: HashMap<String, String>,
}

impl DocumentClassifier for DomainModelClassifier<'_> {
    fn classify(&self, document_id: &str) -> Option<ConceptScores> {
        let text = self.documents.get(document_id)?;
        let pred = predict_domain(self.spec, self.params, self.pipeline, text).ok()?;
        Some(
            pred.labeled()
                .into_iter()
                .map(|(l, p)| (l.name().to_string(), p))
                .collect(),
        )
    }
}

/// Highest-probability concept, first listed on ties.
fn best_concept(scores: &[(String, f64)]) -> Option<&str> {
    let mut best: Option<&(String, f64)> = None;
    for s in scores {
        if best.is_none_or(|b| s.1 > b.1) {
            best = Some(s);
        }
    }
    best.map(|b| b.0.as_str())
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeedbackOutcome {
    /// Not a click, or read for less than the threshold.
    Ignored,
    Updated { concept: String, weight: f64 },
    /// Classifier unavailable; kept for a later retry.
    Queued,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeedbackUpdater {
    pub threshold_secs: f64,
    pub lambda: f64,
    queue: Vec<FeedbackEvent>,
}

impl Default for FeedbackUpdater {
    fn default() -> Self {
        Self {
            threshold_secs: READING_THRESHOLD_SECS,
            lambda: EMA_LAMBDA,
            queue: Vec::new(),
        }
    }
}

impl FeedbackUpdater {
    pub fn new(threshold_secs: f64, lambda: f64) -> Result<Self> {
        if !(threshold_secs >= 0.0) || !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "need threshold >= 0 and lambda in (0, 1], got {threshold_secs} and {lambda}"
            )));
        }
        Ok(Self {
            threshold_secs,
            lambda,
            queue: Vec::new(),
        })
    }

    /// Adds an event to the retry queue, e.g. one persisted by an earlier run.
    pub fn enqueue(&mut self, event: FeedbackEvent) {
        self.queue.push(event);
    }

    pub fn queued(&self) -> &[FeedbackEvent] {
        &self.queue
    }

    /// Applies one event: a click read for at least the threshold moves the
    /// weight of the document's top concept toward 1 by `u += lambda * (1 - u)`.
    pub fn record(
        &mut self,
        profile: &mut UserProfile,
        event: &FeedbackEvent,
        classifier: &dyn DocumentClassifier,
    ) -> Result<FeedbackOutcome> {
        event.validate()?;
        if event.user_id != profile.user_id {
            return Err(Error::Data(format!(
                "event for user {} applied to profile {}",
                event.user_id, profile.user_id
            )));
        }
        if !event.clicked || event.reading_time_secs < self.threshold_secs {
            return Ok(FeedbackOutcome::Ignored);
        }
        let Some(scores) = classifier.classify(&event.document_id) else {
            self.queue.push(event.clone());
            return Ok(FeedbackOutcome::Queued);
        };
        let Some(concept) = best_concept(&scores) else {
            return Ok(FeedbackOutcome::Ignored);
        };
        let u = profile.weights.entry(concept.to_string()).or_insert(0.0);
        *u = ((1.0 - self.lambda) * *u + self.lambda).clamp(0.0, 1.0);
        let weight = *u;
        profile.event_count += 1;
        Ok(FeedbackOutcome::Updated {
            concept: concept.to_string(),
            weight,
        })
    }

    /// Retries queued events for this profile's user, in arrival order.
    pub fn retry_queued(&mut self, profile: &mut UserProfile, classifier: &dyn DocumentClassifier) -> Result<Vec<FeedbackOutcome>> {
        let (mine, others): (Vec<_>, Vec<_>) = std::mem::take(&mut self.queue)
            .into_iter()
            .partition(|e| e.user_id == profile.user_id);
        self.queue = others;
        mine.iter().map(|e| self.record(profile, e, classifier)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptWeight {
    pub concept: String,
    pub similarity: f64,
    pub u: f64,
}

/// The `k` concepts the document is most similar to, with the profile's weight for each.
pub fn top_concepts(profile: &UserProfile, scores: &[(String, f64)], k: usize) -> Vec<ConceptWeight> {
    let mut sorted: Vec<&(String, f64)> = scores.iter().collect();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1));
    sorted
        .into_iter()
        .take(k)
        .map(|(c, p)| ConceptWeight {
            concept: c.clone(),
            similarity: *p,
            u: profile.weight(c),
        })
        .collect()
}

/// `wt * (0.5 + (u1 + u2 + u3 + u4) / 4)`.
pub fn personalized_score(wt: f64, u: [f64; TOP_CONCEPTS]) -> f64 {
    wt * (0.5 + 0.25 * u.iter().sum::<f64>())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub document_id: String,
    pub baseline_score: f64,
    pub score: f64,
    pub concepts: Vec<String>,
}

/// Rescores each result with its top four concepts and sorts by the new
/// score, keeping baseline order on ties.
pub fn rerank(results: &[(String, f64)], profile: &UserProfile, classifier: &dyn DocumentClassifier) -> Result<Vec<RankedResult>> {
    let mut ranked = Vec::with_capacity(results.len());
    for (doc, wt) in results {
        if !(*wt >= 0.0) {
            return Err(Error::Data(format!("document {doc}: negative baseline score {wt}")));
        }
        let scores = classifier
            .classify(doc)
            .ok_or_else(|| Error::Data(format!("document {doc} could not be classified")))?;
        let top = top_concepts(profile, &scores, TOP_CONCEPTS);
        let mut u = [0.0; TOP_CONCEPTS];
        for (slot, c) in u.iter_mut().zip(&top) {
            *slot = c.u;
        }
        ranked.push(RankedResult {
            document_id: doc.clone(),
            baseline_score: *wt,
            score: personalized_score(*wt, u),
            concepts: top.into_iter().map(|c| c.concept).collect(),
        });
    }
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(ranked)
}

/// TF-IDF index over cleaned documents, the baseline search engine.
#[derive(Clone, Debug)]
pub struct SearchIndex {
    stopwords: Stopwords,
    ids: Vec<String>,
    terms: HashMap<String, usize>,
    idf: Vec<f64>,
    /// L2-normalized sparse vectors, sorted by term.
    vectors: Vec<Vec<(usize, f64)>>,
}

impl SearchIndex {
    pub fn build(documents: &[RawDocument], stopwords: Stopwords) -> Self {
        let mut terms: HashMap<String, usize> = HashMap::new();
        let mut counts: Vec<BTreeMap<usize, f64>> = Vec::with_capacity(documents.len());
        for doc in documents {
            let mut tf = BTreeMap::new();
            for t in tokenize(&clean(&doc.text, &stopwords)) {
                let next = terms.len();
                let id = *terms.entry(t).or_insert(next);
                *tf.entry(id).or_insert(0.0) += 1.0;
            }
            counts.push(tf);
        }
        let mut df = vec![0usize; terms.len()];
        for tf in &counts {
            for &t in tf.keys() {
                df[t] += 1;
            }
        }
        let n = documents.len() as f64;
        let idf: Vec<f64> = df.iter().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
        let vectors = counts.iter().map(|tf| weigh(tf, &idf)).collect();
        Self {
            stopwords,
            ids: documents.iter().map(|d| d.id.clone()).collect(),
            terms,
            idf,
            vectors,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Top `k` documents by cosine similarity in [0, 1]; zero scores are dropped,
    /// ties keep corpus order.
    pub fn search(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        let mut tf = BTreeMap::new();
        for t in tokenize(&clean(query, &self.stopwords)) {
            if let Some(&id) = self.terms.get(&t) {
                *tf.entry(id).or_insert(0.0) += 1.0;
            }
        }
        if tf.is_empty() || k == 0 {
            return Vec::new();
        }
        let q = weigh(&tf, &self.idf);
        let mut hits: Vec<(usize, f64)> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, d)| (i, sparse_dot(&q, d).clamp(0.0, 1.0)))
            .filter(|&(_, s)| s > 0.0)
            .collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1));
        hits.truncate(k);
        hits.into_iter().map(|(i, s)| (self.ids[i].clone(), s)).collect()
    }
}

fn weigh(tf: &BTreeMap<usize, f64>, idf: &[f64]) -> Vec<(usize, f64)> {
    let v: Vec<(usize, f64)> = tf.iter().map(|(&t, &c)| (t, c * idf[t])).collect();
    let norm = v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v;
    }
    v.into_iter().map(|(t, w)| (t, w / norm)).collect()
}

fn sparse_dot(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    s
}

/// Convenience: TF-IDF search over a corpus indexed on the fly.
pub fn baseline_search(query: &str, corpus: &[RawDocument], k: usize) -> Vec<(String, f64)> {
    SearchIndex::build(corpus, Stopwords::english()).search(query, k)
}

fn profile_path(dir: &Path, user_id: &str) -> Result<PathBuf> {
    let ok = !user_id.is_empty()
        && !user_id.starts_with('.')
        && user_id.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c));
    if !ok {
        return Err(Error::Data(format!("user id {user_id:?} is not usable as a file name")));
    }
    Ok(dir.join(format!("{user_id}.json")))
}

/// Writes `<dir>/<user_id>.json`, creating the directory if needed.
pub fn save_profile(dir: &Path, profile: &UserProfile) -> Result<PathBuf> {
    profile.validate()?;
    let path = profile_path(dir, &profile.user_id)?;
    fs::create_dir_all(dir)?;
    fs::write(&path, serde_json::to_string_pretty(profile)? + "\n")?;
    Ok(path)
}

/// Loads a stored profile, or a fresh empty one if none exists.
pub fn load_profile(dir: &Path, user_id: &str) -> Result<UserProfile> {
    let path = profile_path(dir, user_id)?;
    if !path.exists() {
        return Ok(UserProfile::new(user_id));
    }
    let profile: UserProfile = serde_json::from_str(&fs::read_to_string(&path)?)?;
    profile.validate()?;
    Ok(profile)
}

/// Concept scores from a domain probability vector.
pub fn domain_scores(probabilities: &[f64]) -> ConceptScores {
    DomainLabel::ALL
        .iter()
        .zip(probabilities)
        .map(|(l, &p)| (l.name().to_string(), p))
        .collect()
}
