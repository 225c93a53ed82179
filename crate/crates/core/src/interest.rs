//! Phase two: predicting a user's center of interest from demographics and domain.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::DomainLabel;
use crate::error::{Error, Result};
use crate::nn::{self, fit, Activation, Dataset, LayerSpec, NetworkSpec, Parameters, Tensor, TrainConfig, TrainingCurve};

pub const N_INTERESTS: usize = 15;

const INTEREST_NAMES: [&str; N_INTERESTS] = [
    "Entrepreneur",
    "Investor",
    "Accountant",
    "Actor",
    "Musician",
    "Film Critic",
    "Diplomat",
    "Lawyer",
    "Journalist",
    "Arbitrator",
    "Footballer",
    "Fitness Coach",
    "Computer Scientist",
    "Engineer",
    "Gamer",
];

/// One of 15 interests, three per domain, indexed `domain * 3 + slot`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Interest(u8);

impl Interest {
    pub fn all() -> impl Iterator<Item = Interest> {
        (0..N_INTERESTS as u8).map(Interest)
    }

    pub fn from_index(index: usize) -> Option<Self> {
        (index < N_INTERESTS).then_some(Interest(index as u8))
    }

    pub fn new(domain: DomainLabel, slot: usize) -> Self {
        assert!(slot < 3, "slot {slot} out of range");
        Interest((domain.index() * 3 + slot) as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn domain(self) -> DomainLabel {
        DomainLabel::from_index(self.index() / 3).expect("index below 15")
    }

    pub fn slot(self) -> usize {
        self.index() % 3
    }

    pub fn name(self) -> &'static str {
        INTEREST_NAMES[self.index()]
    }
}

impl fmt::Display for Interest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Interest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        INTEREST_NAMES
            .iter()
            .position(|n| n.eq_ignore_ascii_case(s))
            .map(|i| Interest(i as u8))
            .ok_or_else(|| Error::Data(format!("unknown interest {s:?}")))
    }
}

impl TryFrom<String> for Interest {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Interest> for String {
    fn from(i: Interest) -> Self {
        i.name().to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub location: String,
    pub gender: String,
    pub age: u32,
    pub domain: DomainLabel,
    pub salary: Option<f64>,
    pub interest: Option<Interest>,
}

impl UserRecord {
    pub fn validate(&self) -> Result<()> {
        if !(10..=120).contains(&self.age) {
            return Err(Error::Data(format!("user {}: age {} outside [10, 120]", self.user_id, self.age)));
        }
        if let Some(s) = self.salary {
            if !s.is_finite() || s < 0.0 {
                return Err(Error::Data(format!("user {}: invalid salary {s}", self.user_id)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InterestVariant {
    #[serde(rename = "P2_M1_SMALL")]
    Small,
    #[serde(rename = "P2_M2_LARGE")]
    Large,
}

impl InterestVariant {
    pub const ALL: [InterestVariant; 2] = [InterestVariant::Small, InterestVariant::Large];

    pub fn tag(self) -> &'static str {
        match self {
            InterestVariant::Small => "P2_M1_SMALL",
            InterestVariant::Large => "P2_M2_LARGE",
        }
    }

    /// Default training setup: 100 epochs.
    pub fn default_train_config(self) -> TrainConfig {
        TrainConfig {
            epochs: 100,
            ..TrainConfig::default()
        }
    }
}

impl fmt::Display for InterestVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for InterestVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown interest model variant {s:?}")))
    }
}

/// Number of encoded features. The table-faithful small model takes a sixth
/// constant-zero input.
pub fn feature_dim(variant: InterestVariant, table_faithful: bool) -> usize {
    if table_faithful && variant == InterestVariant::Small {
        6
    } else {
        5
    }
}

pub fn build_interest_model(variant: InterestVariant, table_faithful: bool) -> Result<NetworkSpec> {
    let d = feature_dim(variant, table_faithful);
    let layers = match variant {
        InterestVariant::Small => vec![
            LayerSpec::dense(d, 6, Activation::ReLU),
            LayerSpec::dense(6, 6, Activation::ReLU),
            LayerSpec::dense(6, 6, Activation::ReLU),
            LayerSpec::dense(6, N_INTERESTS, Activation::Softmax),
        ],
        InterestVariant::Large => vec![
            LayerSpec::dense(d, 50, Activation::ReLU),
            LayerSpec::dense(50, 40, Activation::ReLU),
            LayerSpec::dense(40, 20, Activation::ReLU),
            LayerSpec::dense(20, N_INTERESTS, Activation::Softmax),
        ],
    };
    NetworkSpec::new(vec![d], N_INTERESTS, layers)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Categories(Vec<String>);

impl Categories {
    fn fit<'a>(values: impl Iterator<Item = &'a str>) -> Self {
        let mut v: Vec<String> = values.map(str::to_string).collect();
        v.sort();
        v.dedup();
        Categories(v)
    }

    /// Scaled code, or `None` for a category not seen during fitting.
    fn scaled(&self, value: &str) -> Option<f64> {
        let code = self.0.binary_search_by(|c| c.as_str().cmp(value)).ok()?;
        Some(if self.0.len() > 1 {
            code as f64 / (self.0.len() - 1) as f64
        } else {
            0.0
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct MinMax {
    min: f64,
    max: f64,
}

impl MinMax {
    fn scale(&self, x: f64) -> f64 {
        if self.max > self.min {
            ((x - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

/// Feature encoder fitted on training records.
///
/// Feature order: location, gender, age, domain, salary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserEncoder {
    locations: Categories,
    genders: Categories,
    domains: Categories,
    age: MinMax,
    salary: MinMax,
    salary_median: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedUser {
    pub features: Vec<f64>,
    /// Fields whose category was not seen during fitting (encoded as 1.0).
    pub unseen: Vec<&'static str>,
}

impl UserEncoder {
    pub fn fit(records: &[UserRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Data("cannot fit an encoder on zero records".into()));
        }
        let ages: Vec<f64> = records.iter().map(|r| r.age as f64).collect();
        let mut salaries: Vec<f64> = records.iter().filter_map(|r| r.salary).collect();
        if salaries.is_empty() {
            return Err(Error::Data("no record has a salary".into()));
        }
        salaries.sort_by(f64::total_cmp);
        let n = salaries.len();
        let salary_median = if n % 2 == 1 {
            salaries[n / 2]
        } else {
            0.5 * (salaries[n / 2 - 1] + salaries[n / 2])
        };
        let min_max = |v: &[f64]| MinMax {
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        Ok(Self {
            locations: Categories::fit(records.iter().map(|r| r.location.as_str())),
            genders: Categories::fit(records.iter().map(|r| r.gender.as_str())),
            domains: Categories::fit(records.iter().map(|r| r.domain.name())),
            age: min_max(&ages),
            salary: min_max(&salaries),
            salary_median,
        })
    }

    pub fn salary_median(&self) -> f64 {
        self.salary_median
    }

    /// Five features in [0, 1]; `dim` 6 appends a zero.
    pub fn encode(&self, record: &UserRecord, dim: usize) -> Result<EncodedUser> {
        if !(5..=6).contains(&dim) {
            return Err(Error::InvalidConfig(format!("feature dimension must be 5 or 6, got {dim}")));
        }
        let mut unseen = Vec::new();
        let mut cat = |cats: &Categories, value: &str, field: &'static str| {
            cats.scaled(value).unwrap_or_else(|| {
                unseen.push(field);
                1.0
            })
        };
        let location = cat(&self.locations, &record.location, "location");
        let gender = cat(&self.genders, &record.gender, "gender");
        let domain = cat(&self.domains, record.domain.name(), "domain");
        let mut features = vec![
            location,
            gender,
            self.age.scale(record.age as f64),
            domain,
            self.salary.scale(record.salary.unwrap_or(self.salary_median)),
        ];
        features.resize(dim, 0.0);
        Ok(EncodedUser { features, unseen })
    }

    /// Encodes labeled records into a training set.
    pub fn dataset(&self, records: &[UserRecord], dim: usize) -> Result<Dataset> {
        let mut rows = Vec::with_capacity(records.len());
        let mut targets = Vec::with_capacity(records.len());
        for r in records {
            let interest = r
                .interest
                .ok_or_else(|| Error::Data(format!("user {} has no interest label", r.user_id)))?;
            rows.push(self.encode(r, dim)?.features);
            targets.push(interest.index());
        }
        Dataset::from_rows(&rows, targets)
    }
}

pub fn train_interest(
    spec: &NetworkSpec,
    train: &Dataset,
    test: &Dataset,
    config: &TrainConfig,
    init: Option<Parameters>,
) -> Result<(Parameters, TrainingCurve)> {
    let params = init.unwrap_or_else(|| Parameters::init(spec, config.seed));
    fit(spec, params, train, test, config)
}

/// Top-`k` interests by probability, ties broken by index.
pub fn predict_interests(spec: &NetworkSpec, params: &Parameters, features: &[f64], k: usize) -> Result<Vec<(Interest, f64)>> {
    if !(1..=N_INTERESTS).contains(&k) {
        return Err(Error::InvalidConfig(format!("k must be in [1, {N_INTERESTS}], got {k}")));
    }
    let batch = Tensor::new(vec![1, features.len()], features.to_vec())?;
    let probs = nn::predict(spec, params, &batch)?.into_data();
    let mut ranked: Vec<(Interest, f64)> = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| (Interest::from_index(i).expect("15 outputs"), p))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}

pub const LOCATIONS: [&str; 4] = ["France", "Germany", "Spain", "United Kingdom"];
pub const GENDERS: [&str; 2] = ["Female", "Male"];
pub const NOISE_RATE: f64 = 0.05;

fn age_band(age: u32) -> usize {
    match age {
        0..=29 => 0,
        30..=44 => 1,
        _ => 2,
    }
}

fn salary_band(salary: f64) -> usize {
    if salary < 60_000.0 {
        0
    } else if salary < 100_000.0 {
        1
    } else {
        2
    }
}

/// The planted labeling rule of the synthetic collection.
///
/// Within a domain the slot follows the age band (Business, Politics,
/// Technology) or the salary band (Entertainment, Sport), shifted by one for
/// men; young Sport users are always Arbitrators.
pub fn noise_free_interest(domain: DomainLabel, age: u32, salary: f64, gender: &str) -> Interest {
    if domain == DomainLabel::Sport && age < 30 {
        return Interest::new(domain, 0);
    }
    let g = usize::from(gender == GENDERS[1]);
    let band = if domain.index() % 2 == 0 {
        age_band(age)
    } else {
        salary_band(salary)
    };
    Interest::new(domain, (band + g) % 3)
}

/// Seeded synthetic user collection with about 1% missing salaries and 5% label noise.
///
/// Records with a missing salary are labeled from the salary they were drawn with.
pub fn generate_synthetic_users(n: usize, seed: u64) -> Result<Vec<UserRecord>> {
    if n == 0 {
        return Err(Error::InvalidConfig("need at least one user".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n.to_string().len().max(5);
    let mut users = Vec::with_capacity(n);
    for i in 0..n {
        let location = *LOCATIONS.choose(&mut rng).unwrap();
        let gender = *GENDERS.choose(&mut rng).unwrap();
        let age = rng.gen_range(18..=65u32);
        let domain = DomainLabel::ALL[rng.gen_range(0..5)];
        let salary = (rng.gen_range(20_000.0..150_000.0f64) * 100.0).round() / 100.0;
        let mut interest = noise_free_interest(domain, age, salary, gender);
        if rng.gen_bool(NOISE_RATE) {
            let shift = rng.gen_range(1..3);
            interest = Interest::new(domain, (interest.slot() + shift) % 3);
        }
        let missing = rng.gen_bool(0.01);
        users.push(UserRecord {
            user_id: format!("u{:0width$}", i + 1),
            location: location.into(),
            gender: gender.into(),
            age,
            domain,
            salary: (!missing).then_some(salary),
            interest: Some(interest),
        });
    }
    Ok(users)
}

pub const USER_CSV_HEADER: [&str; 7] = ["user_id", "location", "gender", "age", "domain", "salary", "interest"];

pub fn write_users_csv<W: Write>(writer: W, users: &[UserRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(USER_CSV_HEADER)?;
    for u in users {
        let age = u.age.to_string();
        let salary = u.salary.map(|s| format!("{s:.2}")).unwrap_or_default();
        w.write_record([
            u.user_id.as_str(),
            &u.location,
            &u.gender,
            &age,
            u.domain.name(),
            &salary,
            u.interest.map(Interest::name).unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct CsvRow {
    user_id: String,
    location: String,
    gender: String,
    age: u32,
    domain: String,
    salary: Option<f64>,
    interest: Option<String>,
}

pub fn read_users_csv<R: Read>(reader: R) -> Result<Vec<UserRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().ne(USER_CSV_HEADER) {
        return Err(Error::Data(format!(
            "expected header {:?}, found {:?}",
            USER_CSV_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut users = Vec::new();
    for row in r.deserialize() {
        let row: CsvRow = row?;
        let interest = match row.interest.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(s) => Some(s.parse()?),
        };
        let user = UserRecord {
            user_id: row.user_id,
            location: row.location,
            gender: row.gender,
            age: row.age,
            domain: row.domain.parse()?,
            salary: row.salary,
            interest,
        };
        user.validate()?;
        users.push(user);
    }
    Ok(users)
}
