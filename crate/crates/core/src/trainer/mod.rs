//! Mini-batch training of a scorer under any [`LossSpec`], with early stopping.

mod objective;
mod optim;
mod pseudo;

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use objective::BatchObjective;
pub use optim::{adam_step, sgd_momentum_step, OptimizerConfig, OptimizerState};
pub use pseudo::build_pseudo_sets;

use crate::losses::{LossKind, LossSpec};
use crate::scorer::ScorerParams;
use crate::simulator::{encode_input, read_dataset, Features, LoggedExample};
use crate::stats::SeededRng;
use crate::{Error, Result, INPUT_DIM, N_USER_TYPES};

const SPLIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

/// What the trainer sees of a logged example: no latent CTR.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub user_type: usize,
    pub features: Features,
    pub label: u8,
}

impl From<&LoggedExample> for TrainingExample {
    fn from(e: &LoggedExample) -> Self {
        Self {
            user_type: e.user_type,
            features: e.features,
            label: e.label,
        }
    }
}

/// Reads a dataset file, dropping the evaluation-only latent CTR column.
pub fn load_training_set(path: &Path) -> Result<Vec<TrainingExample>> {
    Ok(read_dataset(path)?.iter().map(TrainingExample::from).collect())
}

fn default_learning_rate() -> f64 {
    0.001
}
fn default_batch_size() -> usize {
    512
}
fn default_patience() -> usize {
    5
}
fn default_max_epochs() -> usize {
    100
}
fn default_validation_fraction() -> f64 {
    0.1
}

/// Optimisation hyperparameters shared by every loss variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainHyperparams {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    /// Rescale gradients whose L2 norm exceeds this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_clip: Option<f64>,
}

impl Default for TrainHyperparams {
    fn default() -> Self {
        Self {
            learning_rate: default_learning_rate(),
            batch_size: default_batch_size(),
            patience: default_patience(),
            optimizer: OptimizerConfig::default(),
            max_epochs: default_max_epochs(),
            validation_fraction: default_validation_fraction(),
            grad_clip: None,
        }
    }
}

impl TrainHyperparams {
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return cfg(format!("learning_rate {} must be > 0", self.learning_rate));
        }
        if self.batch_size == 0 {
            return cfg("batch_size must be >= 1".into());
        }
        if self.patience == 0 {
            return cfg("patience must be >= 1".into());
        }
        if self.max_epochs == 0 {
            return cfg("max_epochs must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.validation_fraction) || self.validation_fraction == 0.0 {
            return cfg(format!("validation_fraction {} outside (0, 1)", self.validation_fraction));
        }
        if let Some(c) = self.grad_clip {
            if !(c.is_finite() && c > 0.0) {
                return cfg(format!("grad_clip {c} must be > 0"));
            }
        }
        self.optimizer.validate()
    }
}

/// Everything one training run needs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub hyper: TrainHyperparams,
    pub loss: LossSpec,
    /// Serving candidate-set size, used as n in the expected-regret weights.
    pub candidate_set_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.loss.validate()?;
        if self.candidate_set_size == 0 {
            return Err(Error::Config("candidate_set_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

/// Dense encoded inputs plus the per-row metadata losses need.
struct EncodedData {
    inputs: Array2<f64>,
    labels: Vec<u8>,
    user_types: Vec<usize>,
}

impl EncodedData {
    fn new(examples: &[&TrainingExample]) -> Result<Self> {
        let mut inputs = Array2::zeros((examples.len(), INPUT_DIM));
        for (mut row, e) in inputs.rows_mut().into_iter().zip(examples) {
            if e.user_type >= N_USER_TYPES || e.label > 1 {
                return Err(Error::Contract(format!("invalid training example {e:?}")));
            }
            encode_input(e.user_type, &e.features, row.as_slice_mut().unwrap());
        }
        Ok(Self {
            inputs,
            labels: examples.iter().map(|e| e.label).collect(),
            user_types: examples.iter().map(|e| e.user_type).collect(),
        })
    }

    fn gather(&self, rows: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select(ndarray::Axis(0), rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            user_types: rows.iter().map(|&i| self.user_types[i]).collect(),
        }
    }

    fn len(&self) -> usize {
        self.labels.len()
    }
}

fn shuffle(indices: &mut [usize], rng: &mut SeededRng) {
    for i in (1..indices.len()).rev() {
        let j = rng.index(i + 1);
        indices.swap(i, j);
    }
}

/// Seed-shuffled split; the last `validation_fraction` becomes validation.
pub fn split_train_validation(
    dataset: &[TrainingExample],
    validation_fraction: f64,
    seed: u64,
) -> Result<(Vec<&TrainingExample>, Vec<&TrainingExample>)> {
    if dataset.len() < 2 {
        return Err(Error::Contract("need at least two examples to split off validation".into()));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    shuffle(&mut order, &mut SeededRng::with_stream(seed, SPLIT_STREAM));
    let n_val = ((dataset.len() as f64 * validation_fraction).round() as usize).clamp(1, dataset.len() - 1);
    let cut = dataset.len() - n_val;
    let train = order[..cut].iter().map(|&i| &dataset[i]).collect();
    let val = order[cut..].iter().map(|&i| &dataset[i]).collect();
    Ok((train, val))
}

fn batch_metric(params: &ScorerParams, data: &EncodedData, config: &TrainConfig) -> Result<Option<f64>> {
    let scores = params.forward_batch(data.inputs.view())?;
    let scores = scores.as_slice().expect("contiguous scores");
    let objective = BatchObjective::new(config.loss, &data.labels, &data.user_types, scores, config.candidate_set_size)?;
    if !objective.has_terms() {
        return Ok(None);
    }
    Ok(Some(objective.evaluate(scores)?.0))
}

/// Matched-loss validation metric (lower is better).
///
/// The validation examples are chunked in order into batches of
/// `batch_size`, each scored with the training objective (weights and ranks
/// frozen from current scores); the result is the mean over chunks with terms.
pub fn validation_metric(params: &ScorerParams, validation: &[&TrainingExample], config: &TrainConfig) -> Result<f64> {
    if validation.is_empty() {
        return Err(Error::Contract("empty validation set".into()));
    }
    let encoded = EncodedData::new(validation)?;
    let rows: Vec<usize> = (0..encoded.len()).collect();
    let mut total = 0.0;
    let mut counted = 0usize;
    for chunk in rows.chunks(config.hyper.batch_size) {
        if let Some(v) = batch_metric(params, &encoded.gather(chunk), config)? {
            total += v;
            counted += 1;
        }
    }
    if counted == 0 {
        return Err(Error::EmptyPairs(format!(
            "validation split has no positive/negative pairs for {:?}",
            config.loss.kind
        )));
    }
    Ok(total / counted as f64)
}

/// Trains with the matched-loss validation metric.
pub fn train(
    dataset: &[TrainingExample],
    init: ScorerParams,
    config: &TrainConfig,
) -> Result<(ScorerParams, TrainHistory)> {
    config.validate()?;
    let (train_part, validation) = split_train_validation(dataset, config.hyper.validation_fraction, config.seed)?;
    let mut validator = |p: &ScorerParams| validation_metric(p, &validation, config);
    train_on(&train_part, init, config, &mut validator)
}

/// Training loop with a caller-supplied validation metric.
pub fn train_with_validator<V>(
    dataset: &[TrainingExample],
    init: ScorerParams,
    config: &TrainConfig,
    validator: &mut V,
) -> Result<(ScorerParams, TrainHistory)>
where
    V: FnMut(&ScorerParams) -> Result<f64>,
{
    config.validate()?;
    let refs: Vec<&TrainingExample> = dataset.iter().collect();
    train_on(&refs, init, config, validator)
}

fn train_on<V>(
    train_part: &[&TrainingExample],
    init: ScorerParams,
    config: &TrainConfig,
    validator: &mut V,
) -> Result<(ScorerParams, TrainHistory)>
where
    V: FnMut(&ScorerParams) -> Result<f64>,
{
    if train_part.is_empty() {
        return Err(Error::Contract("empty training set".into()));
    }
    if init.input_dim() != INPUT_DIM {
        return Err(Error::Shape(format!(
            "scorer takes {} inputs, training data encodes {INPUT_DIM}",
            init.input_dim()
        )));
    }
    let hyper = &config.hyper;
    let data = EncodedData::new(train_part)?;
    let mut rng = SeededRng::with_stream(config.seed, SHUFFLE_STREAM);
    let mut params = init;
    let mut state = OptimizerState::new(&params);
    let mut best = (f64::INFINITY, params.clone(), 0usize);
    let mut since_best = 0usize;
    let mut epochs = Vec::new();
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=hyper.max_epochs {
        shuffle(&mut order, &mut rng);
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        let mut paired_batches = 0usize;
        for rows in order.chunks(hyper.batch_size) {
            let batch = data.gather(rows);
            let mut had_terms = true;
            let (loss, mut grads) = params.forward_backward(batch.inputs.view(), |scores| {
                let objective = BatchObjective::new(
                    config.loss,
                    &batch.labels,
                    &batch.user_types,
                    scores,
                    config.candidate_set_size,
                )?;
                if objective.has_pairs() {
                    paired_batches += 1;
                }
                if let Some(weights) = objective.er_weights() {
                    debug_assert!(weights.iter().flatten().all(|&w| w >= config.loss.cap_k));
                    if weights.iter().flatten().any(|&w| w < config.loss.cap_k) {
                        return Err(Error::Numeric("expected-regret weight below floor".into()));
                    }
                }
                had_terms = objective.has_terms();
                if !had_terms {
                    return Ok((0.0, vec![0.0; scores.len()]));
                }
                objective.evaluate(scores)
            })?;
            if !had_terms {
                continue;
            }
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite training loss in epoch {epoch}")));
            }
            if let Some(clip) = hyper.grad_clip {
                let norm = grads.l2_norm();
                if norm > clip {
                    grads.scale(clip / norm);
                }
            }
            state.apply(&hyper.optimizer, &mut params, &grads, hyper.learning_rate)?;
            loss_sum += loss;
            steps += 1;
        }
        if config.loss.kind.needs_pairs() && paired_batches == 0 {
            return Err(Error::EmptyPairs(format!(
                "every training batch lacks a positive/negative pair within a user type; {:?} has nothing to learn from",
                config.loss.kind
            )));
        }
        let validation_metric = validator(&params)?;
        if !validation_metric.is_finite() {
            return Err(Error::Numeric(format!("validation metric {validation_metric} in epoch {epoch}")));
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss: if steps > 0 { loss_sum / steps as f64 } else { 0.0 },
            validation_metric,
        });
        log::debug!("epoch {epoch}: train {:.6} val {validation_metric:.6}", epochs.last().unwrap().train_loss);
        if validation_metric < best.0 {
            best = (validation_metric, params.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= hyper.patience {
                break;
            }
        }
    }
    let stopped_epoch = epochs.len();
    Ok((
        best.1,
        TrainHistory {
            epochs,
            best_epoch: best.2,
            stopped_epoch,
        },
    ))
}

/// Uses the loss kind to name training runs in logs.
pub fn describe(loss: &LossSpec) -> String {
    match loss.kind {
        LossKind::PointwiseCe => "pointwise cross-entropy".into(),
        LossKind::PointwiseL2 => "pointwise L2".into(),
        LossKind::PairwiseHinge => "pairwise hinge".into(),
        LossKind::KosAuc => format!("K-OS-AUC (cap {})", loss.cap_k),
        LossKind::ExpectedRegret => format!("expected regret (floor {}, alpha {})", loss.cap_k, loss.alpha),
    }
}
