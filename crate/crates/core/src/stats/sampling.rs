use rand_distr::{Distribution, StandardNormal};

use super::{BetaParams, SeededRng};
use crate::{Error, Result};

const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Checks that `probabilities` is a valid probability vector.
pub fn validate_simplex(probabilities: &[f64]) -> Result<()> {
    if probabilities.is_empty() {
        return Err(Error::Contract("empty probability vector".into()));
    }
    if let Some(p) = probabilities.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::Contract(format!("invalid probability {p}")));
    }
    let total: f64 = probabilities.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::Contract(format!(
            "probabilities sum to {total}, expected 1"
        )));
    }
    Ok(())
}

pub fn sample_categorical(probabilities: &[f64], rng: &mut SeededRng) -> Result<usize> {
    validate_simplex(probabilities)?;
    let u = rng.uniform();
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probabilities.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            cumulative += p;
            if u < cumulative {
                return Ok(i);
            }
        }
    }
    // u landed in the rounding gap above the cumulative sum
    Ok(last_positive)
}

pub fn sample_bernoulli(p: f64, rng: &mut SeededRng) -> Result<u8> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Contract(format!("Bernoulli p={p} outside [0, 1]")));
    }
    Ok(u8::from(rng.uniform() < p))
}

pub fn sample_gaussian(mean: f64, sigma: f64, rng: &mut SeededRng) -> Result<f64> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Contract(format!("Gaussian sigma={sigma} must be >= 0")));
    }
    if sigma == 0.0 {
        return Ok(mean);
    }
    let z: f64 = StandardNormal.sample(rng);
    Ok(mean + sigma * z)
}

/// Gamma(shape, 1) draw, Marsaglia & Tsang squeeze method.
fn sample_gamma(shape: f64, rng: &mut SeededRng) -> f64 {
    if shape < 1.0 {
        // Gamma(a) = Gamma(a + 1) * U^(1/a)
        let boosted = sample_gamma(shape + 1.0, rng);
        let u = 1.0 - rng.uniform();
        return boosted * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z: f64 = StandardNormal.sample(rng);
        let t = 1.0 + c * z;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = 1.0 - rng.uniform();
        if u < 1.0 - 0.0331 * z.powi(4) || u.ln() < 0.5 * z * z + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Beta draw as X / (X + Y) with X ~ Gamma(alpha), Y ~ Gamma(beta).
///
/// Returns a value strictly inside (0, 1); the rare draw that rounds to a
/// boundary is redrawn.
pub fn sample_beta(params: BetaParams, rng: &mut SeededRng) -> f64 {
    loop {
        let x = sample_gamma(params.alpha_shape, rng);
        let y = sample_gamma(params.beta_shape, rng);
        let v = x / (x + y);
        if v > 0.0 && v < 1.0 {
            return v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categorical_degenerate() {
        let mut rng = SeededRng::new(0);
        let probs = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        for _ in 0..1000 {
            assert_eq!(sample_categorical(&probs, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn categorical_uniform_counts_within_binomial_band() {
        let mut rng = SeededRng::new(11);
        let probs = [1.0 / 7.0; 7];
        let mut counts = [0usize; 7];
        for _ in 0..70_000 {
            counts[sample_categorical(&probs, &mut rng).unwrap()] += 1;
        }
        // binomial(70000, 1/7): mean 10000, sd = sqrt(70000 * 1/7 * 6/7)
        let sd = (70_000.0_f64 * (1.0 / 7.0) * (6.0 / 7.0)).sqrt();
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 4.0 * sd, "count {c}");
        }
    }

    #[test]
    fn categorical_rejects_bad_simplex() {
        let mut rng = SeededRng::new(0);
        assert!(sample_categorical(&[0.5, -0.1, 0.6], &mut rng).is_err());
        assert!(sample_categorical(&[0.5, 0.4], &mut rng).is_err());
        assert!(sample_categorical(&[], &mut rng).is_err());
    }

    #[test]
    fn bernoulli_edges_and_rate() {
        let mut rng = SeededRng::new(3);
        for _ in 0..1000 {
            assert_eq!(sample_bernoulli(0.0, &mut rng).unwrap(), 0);
            assert_eq!(sample_bernoulli(1.0, &mut rng).unwrap(), 1);
        }
        let n = 100_000;
        let hits: u32 = (0..n)
            .map(|_| u32::from(sample_bernoulli(0.3, &mut rng).unwrap()))
            .sum();
        assert!((hits as f64 / n as f64 - 0.3).abs() < 0.006);
        assert!(sample_bernoulli(1.5, &mut rng).is_err());
        assert!(sample_bernoulli(-0.1, &mut rng).is_err());
    }

    #[test]
    fn gaussian_zero_sigma_is_mean() {
        let mut rng = SeededRng::new(3);
        assert_eq!(sample_gaussian(1.25, 0.0, &mut rng).unwrap(), 1.25);
        assert!(sample_gaussian(0.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn beta_moments() {
        let mut rng = SeededRng::new(5);
        let n = 100_000;
        let uniform = BetaParams::new(1.0, 1.0).unwrap();
        let mean: f64 = (0..n).map(|_| sample_beta(uniform, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005);

        let skewed = BetaParams::new(2.0, 5.0).unwrap();
        let draws: Vec<f64> = (0..n).map(|_| sample_beta(skewed, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!((mean - 2.0 / 7.0).abs() < 0.01);
        assert!(draws.iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn small_shape_beta_stays_inside_support() {
        let mut rng = SeededRng::new(9);
        let p = BetaParams::new(0.5, 0.5).unwrap();
        for _ in 0..50_000 {
            let x = sample_beta(p, &mut rng);
            assert!(x > 0.0 && x < 1.0);
        }
    }

    #[test]
    fn samplers_are_reproducible() {
        let p = BetaParams::new(2.0, 5.0).unwrap();
        let run = |seed| {
            let mut rng = SeededRng::new(seed);
            (0..100)
                .map(|_| sample_beta(p, &mut rng) + sample_gaussian(0.0, 1.0, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(17), run(17));
        assert_ne!(run(17), run(18));
    }
}
