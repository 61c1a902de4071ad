use serde::{Deserialize, Serialize};

use super::special::{digamma, ln_gamma, trigamma};
use crate::{Error, Result};

const MIN_SAMPLES: usize = 10;
const CLAMP_EPS: f64 = 1e-6;
const GRAD_TOLERANCE: f64 = 1e-10;
const MAX_NEWTON_ITERS: usize = 100;

/// Shape parameters of a Beta distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaParams {
    #[serde(rename = "alpha")]
    pub alpha_shape: f64,
    #[serde(rename = "beta")]
    pub beta_shape: f64,
}

impl BetaParams {
    pub fn new(alpha_shape: f64, beta_shape: f64) -> Result<Self> {
        let params = Self {
            alpha_shape,
            beta_shape,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.alpha_shape) && ok(self.beta_shape) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "Beta shapes must be finite and positive, got ({}, {})",
                self.alpha_shape, self.beta_shape
            )))
        }
    }

    pub fn mean(&self) -> f64 {
        self.alpha_shape / (self.alpha_shape + self.beta_shape)
    }
}

/// Mean log-density sufficient statistics: E[ln x], E[ln(1 - x)].
#[derive(Clone, Copy, Debug)]
struct LogMoments {
    mean_ln_x: f64,
    mean_ln_1mx: f64,
}

impl LogMoments {
    fn of(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let (a, b) = samples
            .iter()
            .fold((0.0, 0.0), |(a, b), &x| (a + x.ln(), b + (1.0 - x).ln()));
        Self {
            mean_ln_x: a / n,
            mean_ln_1mx: b / n,
        }
    }

    fn mean_log_likelihood(&self, a: f64, b: f64) -> f64 {
        (a - 1.0) * self.mean_ln_x + (b - 1.0) * self.mean_ln_1mx
            - (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b))
    }

    fn gradient(&self, a: f64, b: f64) -> [f64; 2] {
        let common = digamma(a + b);
        [
            common - digamma(a) + self.mean_ln_x,
            common - digamma(b) + self.mean_ln_1mx,
        ]
    }
}

/// Validates the samples, clamping exact 0/1 values into the open interval.
fn prepare_samples(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::Contract(format!(
            "Beta fit needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let mut clamped = 0usize;
    let prepared = samples
        .iter()
        .map(|&x| {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Domain(format!("sample {x} outside [0, 1]")));
            }
            if x == 0.0 || x == 1.0 {
                clamped += 1;
                Ok(x.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS))
            } else {
                Ok(x)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    if clamped > 0 {
        log::warn!("clamped {clamped} boundary samples into [{CLAMP_EPS}, 1 - {CLAMP_EPS}]");
    }
    Ok(prepared)
}

/// Method-of-moments estimate, used to seed the MLE solver.
pub fn beta_method_of_moments(samples: &[f64]) -> Result<BetaParams> {
    let samples = prepare_samples(samples)?;
    moments_estimate(&samples)
}

fn moments_estimate(samples: &[f64]) -> Result<BetaParams> {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if var <= f64::EPSILON * mean * mean {
        return Err(Error::NonConvergence("samples have zero variance".into()));
    }
    let common = mean * (1.0 - mean) / var - 1.0;
    if common <= 0.0 {
        return Err(Error::NonConvergence(format!(
            "variance {var} too large for a Beta with mean {mean}"
        )));
    }
    BetaParams::new(mean * common, (1.0 - mean) * common)
}

/// Mean per-sample log-likelihood of `samples` under `params`.
pub fn beta_log_likelihood(params: BetaParams, samples: &[f64]) -> Result<f64> {
    let samples = prepare_samples(samples)?;
    Ok(LogMoments::of(&samples).mean_log_likelihood(params.alpha_shape, params.beta_shape))
}

/// Maximum-likelihood Beta fit.
///
/// Newton's method on the digamma stationarity conditions, started from the
/// method-of-moments estimate, with step halving to stay in the positive
/// quadrant and never decrease the likelihood. Falls back to the moments
/// estimate if the iteration fails to converge.
pub fn fit_beta_mle(samples: &[f64]) -> Result<BetaParams> {
    let samples = prepare_samples(samples)?;
    let init = moments_estimate(&samples)?;
    let stats = LogMoments::of(&samples);

    let (mut a, mut b) = (init.alpha_shape, init.beta_shape);
    let mut ll = stats.mean_log_likelihood(a, b);
    for _ in 0..MAX_NEWTON_ITERS {
        let g = stats.gradient(a, b);
        if g[0].hypot(g[1]) < GRAD_TOLERANCE {
            return BetaParams::new(a, b);
        }
        let tc = trigamma(a + b);
        let (h11, h12, h22) = (tc - trigamma(a), tc, tc - trigamma(b));
        let det = h11 * h22 - h12 * h12;
        if !det.is_finite() || det == 0.0 {
            break;
        }
        // Newton direction -H^{-1} g
        let da = -(h22 * g[0] - h12 * g[1]) / det;
        let db = -(-h12 * g[0] + h11 * g[1]) / det;

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let (na, nb) = (a + step * da, b + step * db);
            if na > 0.0 && nb > 0.0 {
                let nll = stats.mean_log_likelihood(na, nb);
                if nll.is_finite() && nll >= ll - 1e-15 * ll.abs().max(1.0) {
                    a = na;
                    b = nb;
                    ll = nll;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let g = stats.gradient(a, b);
    if g[0].hypot(g[1]) < GRAD_TOLERANCE {
        return BetaParams::new(a, b);
    }
    // Near-converged iterates are still better than the moments estimate.
    if a.is_finite() && b.is_finite() && ll >= stats.mean_log_likelihood(init.alpha_shape, init.beta_shape) {
        log::warn!(
            "Beta MLE stopped with gradient norm {:.3e}; returning best iterate",
            g[0].hypot(g[1])
        );
        return BetaParams::new(a, b);
    }
    log::warn!("Beta MLE diverged; falling back to method of moments");
    Ok(init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{sample_beta, SeededRng};

    fn draws(params: BetaParams, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = SeededRng::new(seed);
        (0..n).map(|_| sample_beta(params, &mut rng)).collect()
    }

    #[test]
    fn recovers_beta_2_5() {
        let data = draws(BetaParams::new(2.0, 5.0).unwrap(), 100_000, 1);
        let fit = fit_beta_mle(&data).unwrap();
        assert!((1.9..=2.1).contains(&fit.alpha_shape), "{fit:?}");
        assert!((4.75..=5.25).contains(&fit.beta_shape), "{fit:?}");
    }

    #[test]
    fn symmetric_data_gives_equal_shapes() {
        let mut data = draws(BetaParams::new(3.0, 3.0).unwrap(), 50_000, 2);
        let mirrored: Vec<f64> = data.iter().map(|x| 1.0 - x).collect();
        data.extend(mirrored);
        let fit = fit_beta_mle(&data).unwrap();
        let rel = (fit.alpha_shape - fit.beta_shape).abs() / fit.alpha_shape;
        assert!(rel < 0.02, "{fit:?}");
    }

    #[test]
    fn mle_likelihood_not_below_moments() {
        let data = draws(BetaParams::new(0.5, 2.0).unwrap(), 5_000, 3);
        let mom = beta_method_of_moments(&data).unwrap();
        let mle = fit_beta_mle(&data).unwrap();
        let ll_mom = beta_log_likelihood(mom, &data).unwrap();
        let ll_mle = beta_log_likelihood(mle, &data).unwrap();
        assert!(ll_mle >= ll_mom, "{ll_mle} < {ll_mom}");
    }

    #[test]
    fn stationarity_holds_at_the_fit() {
        let data = draws(BetaParams::new(5.0, 1.0).unwrap(), 20_000, 4);
        let fit = fit_beta_mle(&data).unwrap();
        let g = LogMoments::of(&data).gradient(fit.alpha_shape, fit.beta_shape);
        assert!(g[0].hypot(g[1]) < 1e-10);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(fit_beta_mle(&[0.5; 5]), Err(Error::Contract(_))));
        let mut bad = vec![0.3; 20];
        bad[3] = 1.2;
        assert!(matches!(fit_beta_mle(&bad), Err(Error::Domain(_))));
        assert!(matches!(fit_beta_mle(&[0.4; 20]), Err(Error::NonConvergence(_))));
    }

    #[test]
    fn boundary_samples_are_clamped() {
        let mut data = draws(BetaParams::new(2.0, 2.0).unwrap(), 1_000, 5);
        data[0] = 0.0;
        data[1] = 1.0;
        let fit = fit_beta_mle(&data).unwrap();
        assert!(fit.alpha_shape > 0.0 && fit.beta_shape > 0.0);
    }

    #[test]
    fn params_validation() {
        assert!(BetaParams::new(0.0, 1.0).is_err());
        assert!(BetaParams::new(1.0, f64::INFINITY).is_err());
        assert!((BetaParams::new(2.0, 5.0).unwrap().mean() - 2.0 / 7.0).abs() < 1e-15);
    }
}
