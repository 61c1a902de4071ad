//! Multi-seed orchestration: generate a log, train every variant on it from
//! the same initialisation, and score all trained policies by exact latent
//! regret on a shared set of fresh candidate sets.

use rayon::prelude::*;

use crate::config::{DataBias, ExperimentConfig};
use crate::losses::{LossKind, LossSpec};
use crate::report::{EvalReport, RandomBaseline, VariantResult};
use crate::scorer::{init_params, Scorer, ScorerParams};
use crate::simulator::{evaluate_policies, generate_log, Greedy, LoggedExample, LoggingPolicy, Policy, RegretEvaluation};
use crate::stats::{fit_beta_mle, BetaParams, SeededRng, RNG_ALGORITHM};
use crate::trainer::{train, TrainHistory, TrainingExample};
use crate::{Error, Result};

const LOG_STREAM: u64 = 10;
const PRETRAIN_LOG_STREAM: u64 = 11;
const EVAL_SET_STREAM: u64 = 12;
const EVAL_CHOICE_STREAM: u64 = 13;
const PRETRAIN_SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

/// Percent improvement of `model_regret` over `baseline_regret`.
pub fn compute_gain(baseline_regret: f64, model_regret: f64) -> Result<f64> {
    if !baseline_regret.is_finite() || !model_regret.is_finite() {
        return Err(Error::Numeric("regrets must be finite".into()));
    }
    if baseline_regret == 0.0 {
        return Err(Error::UndefinedGain("baseline regret is zero".into()));
    }
    Ok((baseline_regret - model_regret) / baseline_regret * 100.0)
}

/// Standard error of the mean using the sample standard deviation.
pub fn compute_sem(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Contract("SEM needs at least two values".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("SEM of non-finite values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((var / n).sqrt())
}

/// A training log and, for biased logs, the history of the scorer that
/// produced it.
pub struct GeneratedLog {
    pub examples: Vec<LoggedExample>,
    pub pretrain_history: Option<TrainHistory>,
}

fn fresh_params(config: &ExperimentConfig, seed: u64) -> Result<ScorerParams> {
    init_params(&config.model.layer_dims(), config.model.activation, seed)
}

/// Trains a pointwise scorer on an independent uniformly-logged dataset.
pub fn pretrain_logging_scorer(config: &ExperimentConfig, seed: u64) -> Result<(ScorerParams, TrainHistory)> {
    let mixed = seed ^ PRETRAIN_SEED_MIX;
    let log = generate_log(
        &config.sim,
        LoggingPolicy::UniformRandom,
        &mut SeededRng::with_stream(seed, PRETRAIN_LOG_STREAM),
    )?;
    let data: Vec<TrainingExample> = log.iter().map(TrainingExample::from).collect();
    let tc = config.train_config(LossSpec::default_for(LossKind::PointwiseCe), mixed);
    train(&data, fresh_params(config, mixed)?, &tc)
}

/// The training log for `seed`, following `config.data_bias`.
pub fn generate_training_log(config: &ExperimentConfig, seed: u64) -> Result<GeneratedLog> {
    let mut rng = SeededRng::with_stream(seed, LOG_STREAM);
    match config.data_bias {
        DataBias::Unbiased => Ok(GeneratedLog {
            examples: generate_log(&config.sim, LoggingPolicy::UniformRandom, &mut rng)?,
            pretrain_history: None,
        }),
        DataBias::Biased => {
            let (scorer, history) = pretrain_logging_scorer(config, seed)?;
            let examples = generate_log(&config.sim, LoggingPolicy::EpsilonGreedy(&scorer), &mut rng)?;
            Ok(GeneratedLog {
                examples,
                pretrain_history: Some(history),
            })
        }
    }
}

/// Greedy regret of `scorers` on the evaluation sets for `seed`.
pub fn evaluate_scorers(config: &ExperimentConfig, seed: u64, scorers: &[&dyn Scorer]) -> Result<RegretEvaluation> {
    let greedy: Vec<Greedy<'_, dyn Scorer>> = scorers.iter().map(|&s| Greedy(s)).collect();
    let policies: Vec<&dyn Policy> = greedy.iter().map(|g| g as &dyn Policy).collect();
    evaluate_policies(
        &config.sim,
        &policies,
        config.eval_interactions,
        &mut SeededRng::with_stream(seed, EVAL_SET_STREAM),
        &mut SeededRng::with_stream(seed, EVAL_CHOICE_STREAM),
    )
}

struct SeedOutcome {
    regrets: Vec<f64>,
    random_regret: f64,
    histories: Vec<TrainHistory>,
    pretrain_history: Option<TrainHistory>,
    fitted_beta: BetaParams,
}

fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedOutcome> {
    let wrap = |variant: &str| {
        let variant = variant.to_string();
        move |e: Error| Error::Run {
            seed,
            variant,
            source: Box::new(e),
        }
    };
    let log = generate_training_log(config, seed).map_err(wrap("<data>"))?;
    let latent: Vec<f64> = log.examples.iter().map(|e| e.latent_ctr).collect();
    let fitted_beta = fit_beta_mle(&latent).map_err(wrap("<data>"))?;
    let data: Vec<TrainingExample> = log.examples.iter().map(TrainingExample::from).collect();
    drop(log.examples);

    let trained: Vec<(ScorerParams, TrainHistory)> = config
        .variants
        .par_iter()
        .map(|v| {
            log::info!("seed {seed}: training '{}'", v.name);
            let tc = config.train_config(v.loss, seed);
            fresh_params(config, seed)
                .and_then(|init| train(&data, init, &tc))
                .map_err(wrap(&v.name))
        })
        .collect::<Result<_>>()?;

    let scorers: Vec<&dyn Scorer> = trained.iter().map(|(p, _)| p as &dyn Scorer).collect();
    let eval = evaluate_scorers(config, seed, &scorers).map_err(wrap("<evaluation>"))?;
    Ok(SeedOutcome {
        regrets: eval.mean_regret,
        random_regret: eval.uniform_random_regret,
        histories: trained.into_iter().map(|(_, h)| h).collect(),
        pretrain_history: log.pretrain_history,
        fitted_beta,
    })
}

fn optional_sem(values: &[f64]) -> Result<Option<f64>> {
    if values.len() < 2 {
        Ok(None)
    } else {
        compute_sem(values).map(Some)
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Runs every seed and variant and assembles the report in (variant, seed)
/// order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<EvalReport> {
    config.validate()?;
    let seeds = config.seeds();
    let outcomes: Vec<SeedOutcome> = seeds
        .par_iter()
        .map(|&seed| run_seed(config, seed))
        .collect::<Result<_>>()?;

    let mut variants = Vec::with_capacity(config.variants.len());
    for (i, v) in config.variants.iter().enumerate() {
        let per_seed: Vec<f64> = outcomes.iter().map(|o| o.regrets[i]).collect();
        variants.push(VariantResult {
            name: v.name.clone(),
            loss: v.loss,
            mean_regret: mean(&per_seed),
            sem: optional_sem(&per_seed)?,
            gain_pct: 0.0,
            per_seed_regret: per_seed,
            histories: outcomes.iter().map(|o| o.histories[i].clone()).collect(),
        });
    }
    let baseline = variants
        .iter()
        .find(|v| v.name == config.baseline)
        .map(|v| v.mean_regret)
        .ok_or_else(|| Error::Config(format!("baseline '{}' missing", config.baseline)))?;
    for v in &mut variants {
        v.gain_pct = compute_gain(baseline, v.mean_regret)?;
    }
    let random: Vec<f64> = outcomes.iter().map(|o| o.random_regret).collect();

    Ok(EvalReport {
        config_hash: config.hash(),
        rng_algorithm: RNG_ALGORITHM.into(),
        seeds,
        data_bias: config.data_bias,
        baseline: config.baseline.clone(),
        configured_beta: config.sim.beta,
        configured_per_type_beta: config.sim.per_type_beta.clone(),
        fitted_beta: outcomes.iter().map(|o| o.fitted_beta).collect(),
        uniform_random: RandomBaseline {
            mean_regret: mean(&random),
            sem: optional_sem(&random)?,
            per_seed_regret: random,
        },
        variants,
        pretrain_histories: outcomes.iter().filter_map(|o| o.pretrain_history.clone()).collect(),
        effective_config: config.clone(),
    })
}
