use ndarray::Zip;
use serde::{Deserialize, Serialize};

use crate::scorer::{ParamGrads, ScorerParams};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_epsilon")]
        epsilon: f64,
    },
    SgdMomentum { momentum: f64 },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_epsilon() -> f64 {
    1e-8
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_adam_epsilon(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerConfig::Adam { beta1, beta2, epsilon } => {
                (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0
            }
            OptimizerConfig::SgdMomentum { momentum } => (0.0..1.0).contains(&momentum),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Moment accumulators (Adam) or velocity (momentum SGD) plus a step counter.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    /// Adam first moment, or momentum velocity.
    pub first: ParamGrads,
    /// Adam second moment; unused by momentum SGD.
    pub second: ParamGrads,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &ScorerParams) -> Self {
        Self {
            first: params.zero_grads(),
            second: params.zero_grads(),
            step: 0,
        }
    }

    pub fn apply(
        &mut self,
        config: &OptimizerConfig,
        params: &mut ScorerParams,
        grads: &ParamGrads,
        learning_rate: f64,
    ) -> Result<()> {
        match *config {
            OptimizerConfig::Adam { beta1, beta2, epsilon } => {
                adam_step(params, grads, self, learning_rate, beta1, beta2, epsilon)
            }
            OptimizerConfig::SgdMomentum { momentum } => {
                sgd_momentum_step(params, grads, self, learning_rate, momentum)
            }
        }
    }
}

fn check_grads(params: &ScorerParams, grads: &ParamGrads) -> Result<()> {
    let congruent = params.layers().len() == grads.layers.len()
        && params
            .layers()
            .iter()
            .zip(&grads.layers)
            .all(|(p, g)| p.weights.dim() == g.weights.dim() && p.biases.dim() == g.biases.dim());
    if !congruent {
        return Err(Error::Shape("gradient shapes do not match parameters".into()));
    }
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    Ok(())
}

/// Calls `f(param, grad, first, second)` for every parameter.
fn for_each_param<F>(params: &mut ScorerParams, grads: &ParamGrads, state: &mut OptimizerState, mut f: F)
where
    F: FnMut(&mut f64, f64, &mut f64, &mut f64),
{
    let layers = params
        .layers_mut()
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.first.layers.iter_mut().zip(state.second.layers.iter_mut()));
    for ((p, g), (m, v)) in layers {
        Zip::from(&mut p.weights)
            .and(&g.weights)
            .and(&mut m.weights)
            .and(&mut v.weights)
            .for_each(|p, &g, m, v| f(p, g, m, v));
        Zip::from(&mut p.biases)
            .and(&g.biases)
            .and(&mut m.biases)
            .and(&mut v.biases)
            .for_each(|p, &g, m, v| f(p, g, m, v));
    }
}

/// Bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut ScorerParams,
    grads: &ParamGrads,
    state: &mut OptimizerState,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) -> Result<()> {
    check_grads(params, grads)?;
    state.step += 1;
    let t = state.step as i32;
    let correction1 = 1.0 - beta1.powi(t);
    let correction2 = 1.0 - beta2.powi(t);
    for_each_param(params, grads, state, |p, g, m, v| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
    });
    Ok(())
}

/// `v <- momentum * v + g; param <- param - lr * v`, in place.
pub fn sgd_momentum_step(
    params: &mut ScorerParams,
    grads: &ParamGrads,
    state: &mut OptimizerState,
    learning_rate: f64,
    momentum: f64,
) -> Result<()> {
    check_grads(params, grads)?;
    state.step += 1;
    for_each_param(params, grads, state, |p, g, velocity, _| {
        *velocity = momentum * *velocity + g;
        *p -= learning_rate * *velocity;
    });
    Ok(())
}
