//! Ranking losses and their gradients w.r.t. scores.
//!
//! Pairwise and listwise losses operate on a [`PseudoCandidateSet`]: index
//! lists into a batch-wide `scores` slice. Returned gradients have one entry
//! per batch slot (zero for slots outside the set).

use serde::{Deserialize, Serialize};

use crate::scorer::sigmoid;
use crate::stats::EmpiricalCdf;
use crate::{Error, Result};

/// Default floor for expected-regret pair weights.
pub const DEFAULT_ER_FLOOR: f64 = 0.001;
/// Default weight of the L2 pointwise term combined with the ER loss.
pub const DEFAULT_ER_ALPHA: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    PointwiseCe,
    PointwiseL2,
    PairwiseHinge,
    KosAuc,
    ExpectedRegret,
}

impl LossKind {
    pub fn needs_pairs(self) -> bool {
        matches!(
            self,
            LossKind::PairwiseHinge | LossKind::KosAuc | LossKind::ExpectedRegret
        )
    }
}

/// Loss selection plus its two knobs.
///
/// `cap_k` is the K-OS weight for positives below rank 1, or the floor of the
/// expected-regret pair weights. `alpha` scales the L2 term added to the
/// expected-regret loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLossSpec")]
pub struct LossSpec {
    pub kind: LossKind,
    pub cap_k: f64,
    pub alpha: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLossSpec {
    kind: LossKind,
    cap_k: Option<f64>,
    alpha: Option<f64>,
}

impl TryFrom<RawLossSpec> for LossSpec {
    type Error = Error;

    fn try_from(raw: RawLossSpec) -> Result<Self> {
        let default = LossSpec::default_for(raw.kind);
        let spec = LossSpec {
            kind: raw.kind,
            cap_k: raw.cap_k.unwrap_or(default.cap_k),
            alpha: raw.alpha.unwrap_or(default.alpha),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl LossSpec {
    pub fn default_for(kind: LossKind) -> Self {
        match kind {
            LossKind::ExpectedRegret => Self {
                kind,
                cap_k: DEFAULT_ER_FLOOR,
                alpha: DEFAULT_ER_ALPHA,
            },
            _ => Self {
                kind,
                cap_k: 0.0,
                alpha: 0.0,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.cap_k) {
            return Err(Error::Config(format!("cap_k {} outside [0, 1]", self.cap_k)));
        }
        if self.kind == LossKind::ExpectedRegret && self.cap_k <= 0.0 {
            return Err(Error::Config("expected-regret floor cap_k must be > 0".into()));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::Config(format!("alpha {} must be finite and >= 0", self.alpha)));
        }
        Ok(())
    }
}

/// Batch examples sharing a user type, split by label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PseudoCandidateSet {
    pub user_type: usize,
    /// Batch indices of opened (y = 1) examples.
    pub positives: Vec<usize>,
    /// Batch indices of dismissed (y = 0) examples.
    pub negatives: Vec<usize>,
}

impl PseudoCandidateSet {
    pub fn has_pairs(&self) -> bool {
        !self.positives.is_empty() && !self.negatives.is_empty()
    }

    pub fn pair_count(&self) -> usize {
        self.positives.len() * self.negatives.len()
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, scores: &[f64]) -> Result<()> {
        if !self.has_pairs() {
            return Err(Error::EmptyPairs(format!(
                "pseudo-set for user type {} has {} positives and {} negatives",
                self.user_type,
                self.positives.len(),
                self.negatives.len()
            )));
        }
        for &i in self.positives.iter().chain(&self.negatives) {
            match scores.get(i) {
                None => {
                    return Err(Error::Shape(format!(
                        "member index {i} outside {} scores",
                        scores.len()
                    )))
                }
                Some(s) if !s.is_finite() => {
                    return Err(Error::Numeric(format!("non-finite score at slot {i}")))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Inputs needed to turn CTR estimates into expected-regret weights.
#[derive(Clone, Debug)]
pub struct ErContext {
    pub cdf: EmpiricalCdf,
    pub n: usize,
}

impl ErContext {
    pub fn new(cdf: EmpiricalCdf, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Contract("candidate-set size must be >= 1".into()));
        }
        Ok(Self { cdf, n })
    }
}

fn check_finite(score: f64) -> Result<()> {
    if score.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite score {score}")))
    }
}

/// log(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Binary cross-entropy on a logit. Returns `(loss, d_loss/d_score)`.
pub fn pointwise_ce(score: f64, label: u8) -> Result<(f64, f64)> {
    check_finite(score)?;
    let loss = match label {
        1 => softplus(-score),
        0 => softplus(score),
        other => return Err(Error::Contract(format!("label {other} not in {{0, 1}}"))),
    };
    Ok((loss, sigmoid(score) - f64::from(label)))
}

/// Squared error against a +1 / -1 target.
pub fn pointwise_l2(score: f64, signed_label: f64) -> Result<(f64, f64)> {
    check_finite(score)?;
    if signed_label != 1.0 && signed_label != -1.0 {
        return Err(Error::Contract(format!("signed label {signed_label} not in {{-1, +1}}")));
    }
    let diff = score - signed_label;
    Ok((diff * diff, 2.0 * diff))
}

/// Margin-1 hinge on a (positive, negative) score pair: `(loss, d_pos, d_neg)`.
///
/// Zero slack counts as inactive, so the subgradient there is zero.
pub fn pairwise_hinge(score_pos: f64, score_neg: f64) -> Result<(f64, f64, f64)> {
    check_finite(score_pos)?;
    check_finite(score_neg)?;
    let slack = 1.0 - (score_pos - score_neg);
    if slack > 0.0 {
        Ok((slack, -1.0, 1.0))
    } else {
        Ok((0.0, 0.0, 0.0))
    }
}

/// K-OS rank weight: 1 for the top positive, `cap_k` below it.
pub fn kos_weight(rank: usize, cap_k: f64) -> Result<f64> {
    if rank < 1 {
        return Err(Error::Contract("K-OS ranks start at 1".into()));
    }
    if !(0.0..=1.0).contains(&cap_k) {
        return Err(Error::Contract(format!("cap_k {cap_k} outside [0, 1]")));
    }
    Ok(if rank == 1 { 1.0 } else { cap_k })
}

/// Positives ordered by current score, highest first; ties by batch index.
pub fn kos_rank_order(set: &PseudoCandidateSet, scores: &[f64]) -> Vec<usize> {
    let mut order = set.positives.clone();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// K-OS-AUC loss with a given (frozen) positive ordering.
pub fn kos_auc_loss_with_order(
    set: &PseudoCandidateSet,
    ranked_positives: &[usize],
    scores: &[f64],
    cap_k: f64,
) -> Result<(f64, Vec<f64>)> {
    set.check(scores)?;
    if ranked_positives.len() != set.positives.len() {
        return Err(Error::Contract("ranking does not cover the positives".into()));
    }
    let mut d_scores = vec![0.0; scores.len()];
    let mut total = 0.0;
    let mut z = 0.0;
    for (i, &p) in ranked_positives.iter().enumerate() {
        let w = kos_weight(i + 1, cap_k)?;
        z += w;
        if w == 0.0 {
            continue;
        }
        for &n in &set.negatives {
            let (l, dp, dn) = pairwise_hinge(scores[p], scores[n])?;
            total += w * l;
            d_scores[p] += w * dp;
            d_scores[n] += w * dn;
        }
    }
    d_scores.iter_mut().for_each(|d| *d /= z);
    Ok((total / z, d_scores))
}

/// K-OS-AUC loss; the rank assignment is treated as constant for gradients.
pub fn kos_auc_loss(set: &PseudoCandidateSet, scores: &[f64], cap_k: f64) -> Result<(f64, Vec<f64>)> {
    set.check(scores)?;
    let order = kos_rank_order(set, scores);
    kos_auc_loss_with_order(set, &order, scores, cap_k)
}

/// Probability that a candidate at CDF value `cdf_value` tops a set of `n`:
/// `(1 - F)^(n - 1)`.
pub fn p_top(cdf_value: f64, n: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&cdf_value) {
        return Err(Error::Contract(format!("CDF value {cdf_value} outside [0, 1]")));
    }
    if n == 0 {
        return Err(Error::Contract("candidate-set size must be >= 1".into()));
    }
    Ok((1.0 - cdf_value).powi((n - 1) as i32))
}

/// Expected regret of misordering a pair, floored at `floor_k`.
pub fn er_weight(ctr_pos: f64, ctr_neg: f64, cdf_value_of_pos: f64, n: usize, floor_k: f64) -> Result<f64> {
    for (name, v) in [("ctr_pos", ctr_pos), ("ctr_neg", ctr_neg)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Contract(format!("{name} {v} outside [0, 1]")));
        }
    }
    if !(floor_k.is_finite() && floor_k > 0.0) {
        return Err(Error::Contract(format!("floor_k {floor_k} must be > 0")));
    }
    let raw = p_top(cdf_value_of_pos, n)? * (ctr_pos - ctr_neg);
    Ok(raw.max(floor_k))
}

/// Maps a raw score to a CTR estimate: clamp to [-1, 1], then (s + 1) / 2.
pub fn score_to_ctr(score: f64) -> f64 {
    (score.clamp(-1.0, 1.0) + 1.0) / 2.0
}

/// Weights for every (positive, negative) pair of `set`, positive-major.
pub fn er_pair_weights(
    set: &PseudoCandidateSet,
    scores: &[f64],
    ctx: &ErContext,
    floor_k: f64,
) -> Result<Vec<f64>> {
    set.check(scores)?;
    let mut weights = Vec::with_capacity(set.pair_count());
    for &p in &set.positives {
        let ctr_pos = score_to_ctr(scores[p]);
        let f_pos = ctx.cdf.eval(ctr_pos);
        for &n in &set.negatives {
            weights.push(er_weight(ctr_pos, score_to_ctr(scores[n]), f_pos, ctx.n, floor_k)?);
        }
    }
    Ok(weights)
}

/// Weighted pairwise hinge; `weights` are positive-major and held constant.
pub fn er_loss(set: &PseudoCandidateSet, scores: &[f64], weights: &[f64]) -> Result<(f64, Vec<f64>)> {
    set.check(scores)?;
    if weights.len() != set.pair_count() {
        return Err(Error::Contract(format!(
            "{} weights for {} pairs",
            weights.len(),
            set.pair_count()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::Contract(format!("pair weight {w} must be finite and >= 0")));
    }
    let mut d_scores = vec![0.0; scores.len()];
    let mut total = 0.0;
    let mut w_iter = weights.iter();
    for &p in &set.positives {
        for &n in &set.negatives {
            let w = *w_iter.next().unwrap();
            let (l, dp, dn) = pairwise_hinge(scores[p], scores[n])?;
            total += w * l;
            d_scores[p] += w * dp;
            d_scores[n] += w * dn;
        }
    }
    Ok((total, d_scores))
}

pub fn combined_loss(er_value: f64, l2_value: f64, alpha: f64) -> f64 {
    er_value + alpha * l2_value
}
