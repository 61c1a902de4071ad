//! Per-batch training objective for every [`LossKind`].
//!
//! Anything the losses derive from the current scores (K-OS positive order,
//! expected-regret pair weights and the batch CDF behind them) is computed once
//! in [`BatchObjective::new`] and then held fixed, so [`BatchObjective::evaluate`]
//! is a plain function of the scores whose gradient flows through the hinge
//! terms only.
//!
//! Each loss is divided by its number of contributing terms: examples for the
//! pointwise losses, pairs for pairwise / ER, negatives for K-OS (which makes
//! an uncapped single set a mean over pairs).

use crate::losses::{
    er_loss, er_pair_weights, kos_auc_loss_with_order, kos_rank_order, pairwise_hinge,
    pointwise_ce, pointwise_l2, score_to_ctr, ErContext, LossKind, LossSpec, PseudoCandidateSet,
};
use crate::stats::EmpiricalCdf;
use crate::{Error, Result};

use super::pseudo::pseudo_sets_from;

#[derive(Clone, Debug)]
enum Frozen {
    Nothing,
    KosOrders(Vec<Vec<usize>>),
    ErWeights(Vec<Vec<f64>>),
}

#[derive(Clone, Debug)]
pub struct BatchObjective<'a> {
    spec: LossSpec,
    labels: &'a [u8],
    /// Pseudo-sets that have at least one (positive, negative) pair.
    paired_sets: Vec<PseudoCandidateSet>,
    frozen: Frozen,
}

impl<'a> BatchObjective<'a> {
    pub fn new(
        spec: LossSpec,
        labels: &'a [u8],
        user_types: &[usize],
        scores: &[f64],
        candidate_set_size: usize,
    ) -> Result<Self> {
        if labels.len() != user_types.len() || labels.len() != scores.len() {
            return Err(Error::Shape(format!(
                "batch of {} labels, {} user types, {} scores",
                labels.len(),
                user_types.len(),
                scores.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let paired_sets: Vec<_> = if spec.kind.needs_pairs() {
            pseudo_sets_from(user_types, labels)
                .into_iter()
                .filter(PseudoCandidateSet::has_pairs)
                .collect()
        } else {
            Vec::new()
        };
        let frozen = match spec.kind {
            LossKind::KosAuc => Frozen::KosOrders(
                paired_sets.iter().map(|s| kos_rank_order(s, scores)).collect(),
            ),
            LossKind::ExpectedRegret if !paired_sets.is_empty() => {
                let cdf = EmpiricalCdf::new(scores.iter().map(|&s| score_to_ctr(s)).collect())?;
                let ctx = ErContext::new(cdf, candidate_set_size)?;
                Frozen::ErWeights(
                    paired_sets
                        .iter()
                        .map(|s| er_pair_weights(s, scores, &ctx, spec.cap_k))
                        .collect::<Result<_>>()?,
                )
            }
            _ => Frozen::Nothing,
        };
        Ok(Self {
            spec,
            labels,
            paired_sets,
            frozen,
        })
    }

    pub fn has_pairs(&self) -> bool {
        !self.paired_sets.is_empty()
    }

    /// Whether this batch contributes anything to the loss.
    pub fn has_terms(&self) -> bool {
        match self.spec.kind {
            LossKind::PointwiseCe | LossKind::PointwiseL2 | LossKind::ExpectedRegret => true,
            LossKind::PairwiseHinge | LossKind::KosAuc => self.has_pairs(),
        }
    }

    /// Frozen expected-regret weights, one vector per paired pseudo-set.
    pub fn er_weights(&self) -> Option<&[Vec<f64>]> {
        match &self.frozen {
            Frozen::ErWeights(w) => Some(w),
            _ => None,
        }
    }

    pub fn paired_sets(&self) -> &[PseudoCandidateSet] {
        &self.paired_sets
    }

    /// Normalised batch loss and its gradient w.r.t. every score.
    pub fn evaluate(&self, scores: &[f64]) -> Result<(f64, Vec<f64>)> {
        if scores.len() != self.labels.len() {
            return Err(Error::Shape(format!(
                "{} scores for a batch of {}",
                scores.len(),
                self.labels.len()
            )));
        }
        match self.spec.kind {
            LossKind::PointwiseCe => self.mean_pointwise(scores, pointwise_ce),
            LossKind::PointwiseL2 => self.mean_pointwise(scores, l2_on_label),
            LossKind::PairwiseHinge => self.pairwise(scores),
            LossKind::KosAuc => self.kos(scores),
            LossKind::ExpectedRegret => self.expected_regret(scores),
        }
    }

    fn mean_pointwise<F>(&self, scores: &[f64], f: F) -> Result<(f64, Vec<f64>)>
    where
        F: Fn(f64, u8) -> Result<(f64, f64)>,
    {
        let n = scores.len() as f64;
        let mut total = 0.0;
        let mut d = Vec::with_capacity(scores.len());
        for (&s, &y) in scores.iter().zip(self.labels) {
            let (l, g) = f(s, y)?;
            total += l;
            d.push(g / n);
        }
        Ok((total / n, d))
    }

    fn pairwise(&self, scores: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut d = vec![0.0; scores.len()];
        let mut total = 0.0;
        let mut pairs = 0usize;
        for set in &self.paired_sets {
            for &p in &set.positives {
                for &n in &set.negatives {
                    let (l, dp, dn) = pairwise_hinge(scores[p], scores[n])?;
                    total += l;
                    d[p] += dp;
                    d[n] += dn;
                }
            }
            pairs += set.pair_count();
        }
        Ok(normalise(total, d, pairs))
    }

    fn kos(&self, scores: &[f64]) -> Result<(f64, Vec<f64>)> {
        let Frozen::KosOrders(orders) = &self.frozen else {
            unreachable!("K-OS objective without frozen orders")
        };
        let mut d = vec![0.0; scores.len()];
        let mut total = 0.0;
        let mut negatives = 0usize;
        for (set, order) in self.paired_sets.iter().zip(orders) {
            let (l, g) = kos_auc_loss_with_order(set, order, scores, self.spec.cap_k)?;
            total += l;
            d.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            negatives += set.negatives.len();
        }
        Ok(normalise(total, d, negatives))
    }

    fn expected_regret(&self, scores: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (mut total, mut d) = match &self.frozen {
            Frozen::ErWeights(weights) => {
                let mut d = vec![0.0; scores.len()];
                let mut total = 0.0;
                let mut pairs = 0usize;
                for (set, w) in self.paired_sets.iter().zip(weights) {
                    let (l, g) = er_loss(set, scores, w)?;
                    total += l;
                    d.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                    pairs += set.pair_count();
                }
                normalise(total, d, pairs)
            }
            _ => (0.0, vec![0.0; scores.len()]),
        };
        let (l2, d_l2) = self.mean_pointwise(scores, l2_on_label)?;
        total += self.spec.alpha * l2;
        d.iter_mut()
            .zip(d_l2)
            .for_each(|(a, b)| *a += self.spec.alpha * b);
        Ok((total, d))
    }
}

fn l2_on_label(score: f64, label: u8) -> Result<(f64, f64)> {
    pointwise_l2(score, if label == 1 { 1.0 } else { -1.0 })
}

fn normalise(total: f64, mut d: Vec<f64>, count: usize) -> (f64, Vec<f64>) {
    if count == 0 {
        return (0.0, d);
    }
    let c = count as f64;
    d.iter_mut().for_each(|g| *g /= c);
    (total / c, d)
}
