use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Right-continuous empirical CDF over a finite sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    sorted_samples: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Contract("empirical CDF needs at least one sample".into()));
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(Error::Numeric("NaN sample in empirical CDF".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self {
            sorted_samples: samples,
        })
    }

    /// Fraction of samples less than or equal to `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let below = self.sorted_samples.partition_point(|&s| s <= x);
        below as f64 / self.sorted_samples.len() as f64
    }

    pub fn len(&self) -> usize {
        self.sorted_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted_samples
    }
}
