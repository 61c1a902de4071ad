//! Push-notification environment.
//!
//! Users are fully described by one of [`N_USER_TYPES`] types. Each interaction
//! draws a candidate set whose documents carry a latent open probability and a
//! noisy feature projection of it; a policy picks exactly one document, whose
//! label is sampled and logged. Latent CTRs are only used for exact regret.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::scorer::Scorer;
use crate::stats::{
    sample_bernoulli, sample_beta, sample_categorical, sample_gaussian, validate_simplex,
    BetaParams, SeededRng,
};
use crate::{Error, Result, INPUT_DIM, N_FEATURES, N_USER_TYPES};

pub type Features = [f64; N_FEATURES];

/// How a latent CTR is mapped to the feature vector (before noise).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Projection {
    /// Dimension d (1-based) is ctr^d.
    Monomial,
    /// Dimension d is coefficients[d] * ctr.
    Linear { coefficients: Vec<f64> },
}

fn default_n_candidates() -> usize {
    60
}
fn default_beta() -> BetaParams {
    BetaParams {
        alpha_shape: 2.0,
        beta_shape: 5.0,
    }
}
fn default_user_type_probs() -> Vec<f64> {
    vec![1.0 / N_USER_TYPES as f64; N_USER_TYPES]
}
fn default_noise_sigma() -> f64 {
    0.1
}
fn default_projection() -> Projection {
    Projection::Monomial
}
fn default_epsilon() -> f64 {
    0.14
}
fn default_n_interactions() -> usize {
    100_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_n_candidates")]
    pub n_candidates: usize,
    /// Shared latent-CTR distribution.
    #[serde(default = "default_beta")]
    pub beta: BetaParams,
    /// Optional per-user-type distributions; overrides `beta` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_type_beta: Option<Vec<BetaParams>>,
    #[serde(default = "default_user_type_probs")]
    pub user_type_probs: Vec<f64>,
    #[serde(default = "default_noise_sigma")]
    pub feature_noise_sigma: f64,
    #[serde(default = "default_projection")]
    pub projection: Projection,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Logged examples per generated training log.
    #[serde(default = "default_n_interactions")]
    pub n_interactions: usize,
    #[serde(default)]
    pub master_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_candidates: default_n_candidates(),
            beta: default_beta(),
            per_type_beta: None,
            user_type_probs: default_user_type_probs(),
            feature_noise_sigma: default_noise_sigma(),
            projection: default_projection(),
            epsilon: default_epsilon(),
            n_interactions: default_n_interactions(),
            master_seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.n_candidates == 0 {
            return cfg("n_candidates must be >= 1".into());
        }
        if self.n_interactions == 0 {
            return cfg("n_interactions must be >= 1".into());
        }
        self.beta.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let Some(per_type) = &self.per_type_beta {
            if per_type.len() != N_USER_TYPES {
                return cfg(format!(
                    "per_type_beta needs {N_USER_TYPES} entries, got {}",
                    per_type.len()
                ));
            }
            for p in per_type {
                p.validate().map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        if self.user_type_probs.len() != N_USER_TYPES {
            return cfg(format!(
                "user_type_probs needs {N_USER_TYPES} entries, got {}",
                self.user_type_probs.len()
            ));
        }
        validate_simplex(&self.user_type_probs).map_err(|e| Error::Config(e.to_string()))?;
        if !self.feature_noise_sigma.is_finite() || self.feature_noise_sigma < 0.0 {
            return cfg(format!("feature_noise_sigma {} must be >= 0", self.feature_noise_sigma));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return cfg(format!("epsilon {} outside [0, 1]", self.epsilon));
        }
        if let Projection::Linear { coefficients } = &self.projection {
            if coefficients.len() != N_FEATURES || coefficients.iter().any(|c| !c.is_finite()) {
                return cfg(format!("linear projection needs {N_FEATURES} finite coefficients"));
            }
        }
        Ok(())
    }

    pub fn beta_for(&self, user_type: usize) -> BetaParams {
        match &self.per_type_beta {
            Some(per_type) => per_type[user_type],
            None => self.beta,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct User {
    pub id: u64,
    pub user_type: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub id: u64,
    pub latent_ctr: f64,
    pub features: Features,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    pub id: u64,
    pub user: User,
    pub documents: Vec<Document>,
}

/// One sent notification. `latent_ctr` is for evaluation only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoggedExample {
    pub candidate_set_id: u64,
    pub user_type: usize,
    pub features: Features,
    pub label: u8,
    pub latent_ctr: f64,
    pub explored: bool,
}

/// Writes the scorer input for one (user, document): one-hot user type then features.
pub fn encode_input(user_type: usize, features: &Features, out: &mut [f64]) {
    debug_assert_eq!(out.len(), INPUT_DIM);
    out[..N_USER_TYPES].fill(0.0);
    out[user_type] = 1.0;
    out[N_USER_TYPES..].copy_from_slice(features);
}

/// Encoded inputs for every document of a candidate set, one row each.
pub fn encode_candidate_set(set: &CandidateSet) -> Array2<f64> {
    let mut inputs = Array2::zeros((set.documents.len(), INPUT_DIM));
    for (mut row, doc) in inputs.rows_mut().into_iter().zip(&set.documents) {
        encode_input(set.user.user_type, &doc.features, row.as_slice_mut().unwrap());
    }
    inputs
}

pub fn sample_user(config: &SimConfig, id: u64, rng: &mut SeededRng) -> Result<User> {
    let user_type = sample_categorical(&config.user_type_probs, rng)?;
    Ok(User { id, user_type })
}

/// Degree-1..5 projection of the latent CTR plus independent Gaussian noise.
pub fn featurize(latent_ctr: f64, config: &SimConfig, rng: &mut SeededRng) -> Result<Features> {
    if !(0.0..=1.0).contains(&latent_ctr) {
        return Err(Error::Contract(format!("latent CTR {latent_ctr} outside [0, 1]")));
    }
    let mut features = [0.0; N_FEATURES];
    for (d, f) in features.iter_mut().enumerate() {
        let clean = match &config.projection {
            Projection::Monomial => latent_ctr.powi(d as i32 + 1),
            Projection::Linear { coefficients } => coefficients[d] * latent_ctr,
        };
        *f = sample_gaussian(clean, config.feature_noise_sigma, rng)?;
    }
    Ok(features)
}

pub fn sample_candidate_set(config: &SimConfig, id: u64, user: User, rng: &mut SeededRng) -> Result<CandidateSet> {
    let beta = config.beta_for(user.user_type);
    let n = config.n_candidates as u64;
    let documents = (0..n)
        .map(|j| {
            let latent_ctr = sample_beta(beta, rng);
            Ok(Document {
                id: id * n + j,
                latent_ctr,
                features: featurize(latent_ctr, config, rng)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CandidateSet { id, user, documents })
}

/// Exact regret of sending `chosen`: best latent CTR in the set minus the chosen one.
pub fn regret(set: &CandidateSet, chosen: &Document) -> Result<f64> {
    if !set.documents.iter().any(|d| d.id == chosen.id) {
        return Err(Error::Contract(format!(
            "document {} is not in candidate set {}",
            chosen.id, set.id
        )));
    }
    let best = set
        .documents
        .iter()
        .map(|d| d.latent_ctr)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(best - chosen.latent_ctr)
}

/// Mean regret of sending a uniformly random document of `set`.
pub fn uniform_expected_regret(set: &CandidateSet) -> f64 {
    let n = set.documents.len() as f64;
    let best = set
        .documents
        .iter()
        .map(|d| d.latent_ctr)
        .fold(f64::NEG_INFINITY, f64::max);
    best - set.documents.iter().map(|d| d.latent_ctr).sum::<f64>() / n
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Choice {
    pub index: usize,
    /// Whether the document came from random exploration.
    pub explored: bool,
}

pub trait Policy {
    fn choose(&self, set: &CandidateSet, rng: &mut SeededRng) -> Result<Choice>;
}

fn check_nonempty(set: &CandidateSet) -> Result<()> {
    if set.documents.is_empty() {
        Err(Error::Contract(format!("candidate set {} is empty", set.id)))
    } else {
        Ok(())
    }
}

/// First index of the maximum.
fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub struct UniformRandom;

impl Policy for UniformRandom {
    fn choose(&self, set: &CandidateSet, rng: &mut SeededRng) -> Result<Choice> {
        check_nonempty(set)?;
        Ok(Choice {
            index: rng.index(set.documents.len()),
            explored: true,
        })
    }
}

/// Sends the highest-scoring document (ties: lowest index).
pub struct Greedy<'a, S: ?Sized>(pub &'a S);

impl<S: Scorer + ?Sized> Policy for Greedy<'_, S> {
    fn choose(&self, set: &CandidateSet, _rng: &mut SeededRng) -> Result<Choice> {
        check_nonempty(set)?;
        let scores = self.0.score_batch(encode_candidate_set(set).view())?;
        if let Some(s) = scores.iter().find(|s| s.is_nan()) {
            return Err(Error::Numeric(format!("scorer produced {s}")));
        }
        Ok(Choice {
            index: argmax(scores.iter().copied()),
            explored: false,
        })
    }
}

pub struct EpsilonGreedy<'a, S: ?Sized> {
    pub scorer: &'a S,
    pub epsilon: f64,
}

impl<S: Scorer + ?Sized> Policy for EpsilonGreedy<'_, S> {
    fn choose(&self, set: &CandidateSet, rng: &mut SeededRng) -> Result<Choice> {
        check_nonempty(set)?;
        if rng.uniform() < self.epsilon {
            UniformRandom.choose(set, rng)
        } else {
            Greedy(self.scorer).choose(set, rng)
        }
    }
}

/// Sends the document with the highest latent CTR. Simulation-only reference.
pub struct LatentOracle;

impl Policy for LatentOracle {
    fn choose(&self, set: &CandidateSet, _rng: &mut SeededRng) -> Result<Choice> {
        check_nonempty(set)?;
        Ok(Choice {
            index: argmax(set.documents.iter().map(|d| d.latent_ctr)),
            explored: false,
        })
    }
}

/// One pass: choose, send, sample the open label, log it.
pub fn interact<P: Policy + ?Sized>(
    policy: &P,
    set: &CandidateSet,
    rng: &mut SeededRng,
) -> Result<(LoggedExample, f64)> {
    let choice = policy.choose(set, rng)?;
    let doc = set
        .documents
        .get(choice.index)
        .ok_or_else(|| Error::Contract(format!("policy chose index {} of {}", choice.index, set.documents.len())))?;
    let label = sample_bernoulli(doc.latent_ctr, rng)?;
    let example = LoggedExample {
        candidate_set_id: set.id,
        user_type: set.user.user_type,
        features: doc.features,
        label,
        latent_ctr: doc.latent_ctr,
        explored: choice.explored,
    };
    Ok((example, regret(set, doc)?))
}

/// Which policy produced a training log.
#[derive(Clone, Copy)]
pub enum LoggingPolicy<'a> {
    UniformRandom,
    EpsilonGreedy(&'a dyn Scorer),
}

/// Generates `config.n_interactions` logged examples, one per candidate set.
pub fn generate_log(config: &SimConfig, policy: LoggingPolicy<'_>, rng: &mut SeededRng) -> Result<Vec<LoggedExample>> {
    config.validate()?;
    let mut log = Vec::with_capacity(config.n_interactions);
    for id in 0..config.n_interactions as u64 {
        let user = sample_user(config, id, rng)?;
        let set = sample_candidate_set(config, id, user, rng)?;
        let (example, _) = match policy {
            LoggingPolicy::UniformRandom => interact(&UniformRandom, &set, rng)?,
            LoggingPolicy::EpsilonGreedy(scorer) => interact(
                &EpsilonGreedy {
                    scorer,
                    epsilon: config.epsilon,
                },
                &set,
                rng,
            )?,
        };
        log.push(example);
    }
    Ok(log)
}

/// Mean exact regret of several policies on the same fresh candidate sets.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretEvaluation {
    pub mean_regret: Vec<f64>,
    /// Expected regret of the uniformly random policy on the same sets.
    pub uniform_random_regret: f64,
    pub n_sets: usize,
}

/// Evaluates `policies` on `n_sets` candidate sets drawn from `set_rng`.
/// Any randomness the policies use comes from `choice_rng`, so the sets are
/// identical for every call with the same `set_rng`.
pub fn evaluate_policies(
    config: &SimConfig,
    policies: &[&dyn Policy],
    n_sets: usize,
    set_rng: &mut SeededRng,
    choice_rng: &mut SeededRng,
) -> Result<RegretEvaluation> {
    config.validate()?;
    if n_sets == 0 {
        return Err(Error::Contract("evaluation needs at least one candidate set".into()));
    }
    let mut totals = vec![0.0; policies.len()];
    let mut random_total = 0.0;
    for id in 0..n_sets as u64 {
        let user = sample_user(config, id, set_rng)?;
        let set = sample_candidate_set(config, id, user, set_rng)?;
        random_total += uniform_expected_regret(&set);
        for (total, policy) in totals.iter_mut().zip(policies) {
            let choice = policy.choose(&set, choice_rng)?;
            *total += regret(&set, &set.documents[choice.index])?;
        }
    }
    let n = n_sets as f64;
    Ok(RegretEvaluation {
        mean_regret: totals.into_iter().map(|t| t / n).collect(),
        uniform_random_regret: random_total / n,
        n_sets,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetRow {
    candidate_set_id: u64,
    user_type: usize,
    f1: f64,
    f2: f64,
    f3: f64,
    f4: f64,
    f5: f64,
    label: u8,
    latent_ctr: f64,
    explored: bool,
}

pub fn write_dataset(path: &Path, examples: &[LoggedExample]) -> Result<()> {
    let io_err = |e: csv::Error| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut writer = csv::Writer::from_path(path).map_err(io_err)?;
    for e in examples {
        let [f1, f2, f3, f4, f5] = e.features;
        writer
            .serialize(DatasetRow {
                candidate_set_id: e.candidate_set_id,
                user_type: e.user_type,
                f1,
                f2,
                f3,
                f4,
                f5,
                label: e.label,
                latent_ctr: e.latent_ctr,
                explored: e.explored,
            })
            .map_err(io_err)?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_dataset(path: &Path) -> Result<Vec<LoggedExample>> {
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(e.to_string()))?;
    let mut out = Vec::new();
    for (line, row) in reader.deserialize::<DatasetRow>().enumerate() {
        let row = row.map_err(|e| parse_err(e.to_string()))?;
        let at = |m: String| parse_err(format!("record {}: {m}", line + 1));
        if row.user_type >= N_USER_TYPES {
            return Err(at(format!("user_type {} out of range", row.user_type)));
        }
        if row.label > 1 {
            return Err(at(format!("label {} not in {{0, 1}}", row.label)));
        }
        if !(0.0..=1.0).contains(&row.latent_ctr) {
            return Err(at(format!("latent_ctr {} outside [0, 1]", row.latent_ctr)));
        }
        out.push(LoggedExample {
            candidate_set_id: row.candidate_set_id,
            user_type: row.user_type,
            features: [row.f1, row.f2, row.f3, row.f4, row.f5],
            label: row.label,
            latent_ctr: row.latent_ctr,
            explored: row.explored,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn doc(id: u64, ctr: f64) -> Document {
        Document {
            id,
            latent_ctr: ctr,
            features: [ctr; N_FEATURES],
        }
    }

    fn set_of(ctrs: &[f64]) -> CandidateSet {
        CandidateSet {
            id: 0,
            user: User { id: 0, user_type: 0 },
            documents: ctrs.iter().enumerate().map(|(i, &c)| doc(i as u64, c)).collect(),
        }
    }

    #[test]
    fn default_config_is_valid() {
        let c = SimConfig::default();
        c.validate().unwrap();
        assert_eq!(c.n_candidates, 60);
        assert_eq!(c.epsilon, 0.14);
    }

    #[test]
    fn degenerate_user_types() {
        let mut c = SimConfig::default();
        c.user_type_probs = vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let mut rng = SeededRng::new(0);
        for i in 0..500 {
            assert_eq!(sample_user(&c, i, &mut rng).unwrap().user_type, 3);
        }
    }

    #[test]
    fn uniform_user_types_within_binomial_band() {
        let c = SimConfig::default();
        let mut rng = SeededRng::new(12);
        let mut counts = [0usize; N_USER_TYPES];
        for i in 0..70_000 {
            counts[sample_user(&c, i, &mut rng).unwrap().user_type] += 1;
        }
        let sd = (70_000.0f64 / 7.0 * 6.0 / 7.0).sqrt();
        assert!(counts.iter().all(|&k| (k as f64 - 10_000.0).abs() < 4.0 * sd), "{counts:?}");
    }

    #[test]
    fn user_sequence_is_reproducible() {
        let c = SimConfig::default();
        let draw = || {
            let mut rng = SeededRng::new(5);
            (0..50).map(|i| sample_user(&c, i, &mut rng).unwrap().user_type).collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn candidate_set_sizes() {
        let mut c = SimConfig::default();
        let mut rng = SeededRng::new(1);
        let user = User { id: 0, user_type: 2 };
        let set = sample_candidate_set(&c, 4, user, &mut rng).unwrap();
        assert_eq!(set.documents.len(), 60);
        let mut ids: Vec<u64> = set.documents.iter().map(|d| d.id).collect();
        ids.dedup();
        assert_eq!(ids.len(), 60);
        c.n_candidates = 1;
        assert_eq!(sample_candidate_set(&c, 0, user, &mut rng).unwrap().documents.len(), 1);
    }

    #[test]
    fn latent_ctr_mean_matches_beta() {
        let c = SimConfig::default();
        let mut rng = SeededRng::new(2);
        let mut total = 0.0;
        let sets = 10_000;
        for id in 0..sets {
            let user = sample_user(&c, id, &mut rng).unwrap();
            let set = sample_candidate_set(&c, id, user, &mut rng).unwrap();
            total += set.documents.iter().map(|d| d.latent_ctr).sum::<f64>();
        }
        let mean = total / (sets as f64 * 60.0);
        assert!((mean - 2.0 / 7.0).abs() < 0.005, "{mean}");
    }

    #[test]
    fn per_type_beta_is_used() {
        let mut c = SimConfig::default();
        let mut per_type = vec![BetaParams::new(1.0, 50.0).unwrap(); N_USER_TYPES];
        per_type[6] = BetaParams::new(50.0, 1.0).unwrap();
        c.per_type_beta = Some(per_type);
        c.validate().unwrap();
        let mut rng = SeededRng::new(3);
        let low = sample_candidate_set(&c, 0, User { id: 0, user_type: 0 }, &mut rng).unwrap();
        let high = sample_candidate_set(&c, 1, User { id: 1, user_type: 6 }, &mut rng).unwrap();
        let mean = |s: &CandidateSet| s.documents.iter().map(|d| d.latent_ctr).sum::<f64>() / 60.0;
        assert!(mean(&low) < 0.1 && mean(&high) > 0.9);
    }

    #[test]
    fn featurize_without_noise() {
        let mut c = SimConfig::default();
        c.feature_noise_sigma = 0.0;
        let mut rng = SeededRng::new(0);
        assert_eq!(featurize(0.5, &c, &mut rng).unwrap(), [0.5, 0.25, 0.125, 0.0625, 0.03125]);
        assert_eq!(featurize(0.0, &c, &mut rng).unwrap(), [0.0; 5]);
        assert_eq!(featurize(1.0, &c, &mut rng).unwrap(), [1.0; 5]);
        assert!(featurize(1.5, &c, &mut rng).is_err());
        c.projection = Projection::Linear {
            coefficients: vec![1.0, -1.0, 2.0, 0.0, 0.5],
        };
        assert_eq!(featurize(0.5, &c, &mut rng).unwrap(), [0.5, -0.5, 1.0, 0.0, 0.25]);
    }

    #[test]
    fn featurize_noise_scale() {
        let c = SimConfig::default();
        let mut rng = SeededRng::new(8);
        let n = 10_000;
        let mut sq = [0.0; N_FEATURES];
        for _ in 0..n {
            let ctr = rng.uniform();
            let f = featurize(ctr, &c, &mut rng).unwrap();
            for d in 0..N_FEATURES {
                sq[d] += (f[d] - ctr.powi(d as i32 + 1)).powi(2);
            }
        }
        for s in sq {
            let sd = (s / n as f64).sqrt();
            assert!((sd - 0.1).abs() < 0.005, "{sd}");
        }
    }

    #[test]
    fn regret_values() {
        let s = set_of(&[0.5, 0.2, 0.9]);
        assert_abs_diff_eq!(regret(&s, &s.documents[0]).unwrap(), 0.4, epsilon = 1e-15);
        assert_eq!(regret(&s, &s.documents[2]).unwrap(), 0.0);
        let single = set_of(&[0.3]);
        assert_eq!(regret(&single, &single.documents[0]).unwrap(), 0.0);
        assert!(regret(&s, &doc(99, 0.1)).is_err());
    }

    struct FixedChoice(usize);
    impl Policy for FixedChoice {
        fn choose(&self, _set: &CandidateSet, _rng: &mut SeededRng) -> Result<Choice> {
            Ok(Choice {
                index: self.0,
                explored: false,
            })
        }
    }

    #[test]
    fn interact_cases() {
        let mut rng = SeededRng::new(0);
        let s = set_of(&[0.3, 0.1]);
        let (_, r) = interact(&LatentOracle, &s, &mut rng).unwrap();
        assert_eq!(r, 0.0);
        let (ex, r) = interact(&FixedChoice(1), &s, &mut rng).unwrap();
        assert_abs_diff_eq!(r, 0.2, epsilon = 1e-15);
        assert_eq!(ex.latent_ctr, 0.1);
        let sure = set_of(&[1.0, 0.0]);
        for _ in 0..100 {
            assert_eq!(interact(&FixedChoice(0), &sure, &mut rng).unwrap().0.label, 1);
        }
        let empty = set_of(&[]);
        assert!(interact(&UniformRandom, &empty, &mut rng).is_err());
    }

    #[test]
    fn greedy_follows_scorer() {
        // scorer = first feature
        let mut p = crate::scorer::ScorerParams::zeros(&[INPUT_DIM, 1], crate::scorer::Activation::Sigmoid).unwrap();
        p.layers_mut()[0].weights[(0, N_USER_TYPES)] = 1.0;
        let s = set_of(&[0.2, 0.7, 0.7, 0.1]);
        let mut rng = SeededRng::new(0);
        let c = Greedy(&p).choose(&s, &mut rng).unwrap();
        assert_eq!(c, Choice { index: 1, explored: false });
    }

    #[test]
    fn epsilon_one_always_explores() {
        let mut c = SimConfig::default();
        c.n_interactions = 2_000;
        c.epsilon = 1.0;
        let p = crate::scorer::init_params(&[INPUT_DIM, 4, 1], crate::scorer::Activation::Sigmoid, 0).unwrap();
        let log = generate_log(&c, LoggingPolicy::EpsilonGreedy(&p), &mut SeededRng::new(1)).unwrap();
        assert_eq!(log.len(), 2_000);
        assert!(log.iter().all(|e| e.explored));
    }

    #[test]
    fn uniform_log_label_rate() {
        let mut c = SimConfig::default();
        c.n_interactions = 50_000;
        let log = generate_log(&c, LoggingPolicy::UniformRandom, &mut SeededRng::new(4)).unwrap();
        assert_eq!(log.len(), 50_000);
        let rate = log.iter().map(|e| f64::from(e.label)).sum::<f64>() / 50_000.0;
        assert!((rate - 2.0 / 7.0).abs() < 0.01, "{rate}");
        let ids: std::collections::BTreeSet<u64> = log.iter().map(|e| e.candidate_set_id).collect();
        assert_eq!(ids.len(), 50_000);
    }

    #[test]
    fn dataset_round_trip() {
        let mut c = SimConfig::default();
        c.n_interactions = 200;
        let log = generate_log(&c, LoggingPolicy::UniformRandom, &mut SeededRng::new(6)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        write_dataset(&path, &log).unwrap();
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("candidate_set_id,user_type,f1,f2,f3,f4,f5,label,latent_ctr,explored\n"));
        assert_eq!(read_dataset(&path).unwrap(), log);
    }

    #[test]
    fn config_validation() {
        let mut c = SimConfig::default();
        c.user_type_probs = vec![0.5; 7];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = SimConfig::default();
        c.epsilon = 1.5;
        assert!(c.validate().is_err());
        let mut c = SimConfig::default();
        c.feature_noise_sigma = -0.1;
        assert!(c.validate().is_err());
        let mut c = SimConfig::default();
        c.per_type_beta = Some(vec![BetaParams::new(1.0, 1.0).unwrap(); 3]);
        assert!(c.validate().is_err());
    }
}
