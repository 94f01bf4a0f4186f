//! Scoring functions and the rank-equivalence test.
//!
//! A score maps each domain point to an extended real; higher means "more
//! in-distribution". Two scores are equivalent for OOD detection exactly when
//! one is a strictly increasing function of the other, which on a finite
//! domain means they induce the same weak order (including ties).

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dist::{same_domain, DiscreteDomain, FiniteDistribution};
use crate::error::{OodError, Result};
use crate::scalar::{log_sum_exp, Scalar};

/// One extended-real score per domain point. NaN is rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreVector<T> {
    domain: Arc<DiscreteDomain>,
    values: Vec<T>,
}

impl<T: Scalar> ScoreVector<T> {
    pub fn new(domain: Arc<DiscreteDomain>, values: Vec<T>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(OodError::shape(domain.len(), values.len()));
        }
        if let Some(point) = values.iter().position(|v| v.is_nan()) {
            return Err(OodError::NanScore { point });
        }
        Ok(Self { domain, values })
    }

    pub fn domain(&self) -> &Arc<DiscreteDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(self.domain.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Rounds finite values to `decimals` places (infinities pass through).
    pub fn rounded(&self, decimals: i32) -> Self {
        let scale = T::lit(10f64.powi(decimals));
        let values = self
            .values
            .iter()
            .map(|&v| if v.is_finite() { (v * scale).round() / scale } else { v })
            .collect();
        Self { domain: self.domain.clone(), values }
    }

    /// CSV with header `point_id,score`. Values use the shortest
    /// representation that parses back to the identical float.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("point_id,score\n");
        for (id, v) in self.domain.points().iter().zip(&self.values) {
            out.push_str(id);
            out.push(',');
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_csv(domain: Arc<DiscreteDomain>, text: &str) -> Result<Self> {
        let mut values = vec![None; domain.len()];
        for (lineno, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let (id, value) = line
                .rsplit_once(',')
                .ok_or_else(|| OodError::InvalidParameter(format!("line {}: expected `id,score`", lineno + 1)))?;
            let idx = domain
                .index_of(id)
                .ok_or_else(|| OodError::InvalidDomain(format!("unknown point id {id:?}")))?;
            let v = value
                .trim()
                .parse::<T>()
                .map_err(|_| OodError::InvalidParameter(format!("line {}: bad score {value:?}", lineno + 1)))?;
            values[idx] = Some(v);
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| OodError::InvalidDomain(format!("missing score for {}", domain.point(i)))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(domain, values)
    }
}

/// `s1(x) = p(i|x)`: the posterior table used directly as a score.
pub fn score_s1<T: Scalar>(posteriors: &ScoreVector<T>) -> ScoreVector<T> {
    posteriors.clone()
}

/// `s1` read off a background-class predictive `(p_1..p_K | p_{K+1})`.
pub fn score_s1_from_bgc<T: Scalar>(predictive: &[T]) -> T {
    T::one() - predictive[predictive.len() - 1]
}

/// `s2 = p(i|x) · max_k p(k|x,i)`.
pub fn score_s2<T: Scalar>(posterior: T, class_cond: &[T]) -> T {
    posterior * max_of(class_cond)
}

/// `s3 = p(i|x) · (max_k p(k|x,i) − 1/K) + 1/K`, the implicit score of a
/// confidence-loss classifier.
pub fn score_s3<T: Scalar>(posterior: T, class_cond: &[T]) -> T {
    let inv_k = T::one() / T::from_usize_lossy(class_cond.len());
    posterior * (max_of(class_cond) - inv_k) + inv_k
}

/// `s3` of a background-class predictive: `max_{k≤K} p_k + p_{K+1} / K`.
pub fn score_s3_from_bgc<T: Scalar>(predictive: &[T]) -> T {
    let k = predictive.len() - 1;
    max_of(&predictive[..k]) + predictive[k] / T::from_usize_lossy(k)
}

/// Negative energy `−E(x) = log Σ_k exp f_k(x)`.
pub fn score_energy<T: Scalar>(logits: &[T]) -> T {
    log_sum_exp(logits)
}

/// Maximum predicted probability.
pub fn score_msp<T: Scalar>(probabilities: &[T]) -> T {
    max_of(probabilities)
}

fn max_of<T: Scalar>(v: &[T]) -> T {
    v.iter().copied().fold(T::neg_infinity(), T::max)
}

/// Likelihood ratio `p(x|i) / p(x|o)`; requires a full-support denominator.
pub fn score_likelihood_ratio<T: Scalar>(p_in: &FiniteDistribution<T>, p_out: &FiniteDistribution<T>) -> Result<ScoreVector<T>> {
    if !same_domain(p_in.domain(), p_out.domain()) {
        return Err(OodError::InvalidDomain("likelihood ratio needs a shared domain".into()));
    }
    if let Some(point) = p_out.mass().iter().position(|&m| !(m > T::zero())) {
        return Err(OodError::OutSupportHole { point });
    }
    let values = p_in.mass().iter().zip(p_out.mass()).map(|(&a, &b)| a / b).collect();
    ScoreVector::new(p_in.domain().clone(), values)
}

/// Result of comparing two scores' induced orderings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankCheck {
    pub equivalent: bool,
    /// A pair `(x, y)` on which the two scores order differently.
    pub witness: Option<(usize, usize)>,
}

impl RankCheck {
    const EQUIVALENT: RankCheck = RankCheck { equivalent: true, witness: None };

    fn violated(x: usize, y: usize) -> Self {
        RankCheck { equivalent: false, witness: Some((x, y)) }
    }
}

#[inline]
fn cmp<T: Scalar>(a: T, b: T) -> Ordering {
    a.partial_cmp(&b).expect("NaN-free scores")
}

/// Whether `f` and `g` order every pair of points identically (ties
/// included), i.e. `f = φ ∘ g` for a strictly increasing `φ`.
///
/// Runs in `O(N log N)`: sort by `(g, f)`, then `f` must be constant inside
/// each `g`-tie group and strictly increase across consecutive groups.
pub fn check_rank_equivalence<T: Scalar>(f: &ScoreVector<T>, g: &ScoreVector<T>) -> Result<RankCheck> {
    if !same_domain(f.domain(), g.domain()) {
        return Err(OodError::InvalidDomain("rank comparison needs a shared domain".into()));
    }
    Ok(rank_equivalent(f.values(), g.values()))
}

/// Slice form of [`check_rank_equivalence`].
pub fn rank_equivalent<T: Scalar>(f: &[T], g: &[T]) -> RankCheck {
    assert_eq!(f.len(), g.len(), "score vectors of different length");
    let mut order: Vec<usize> = (0..f.len()).collect();
    order.sort_by(|&a, &b| cmp(g[a], g[b]).then(cmp(f[a], f[b])));

    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && g[order[end]] == g[order[start]] {
            end += 1;
        }
        let (first, last) = (order[start], order[end - 1]);
        if f[first] != f[last] {
            return RankCheck::violated(first, last);
        }
        if end < order.len() {
            let next = order[end];
            if !(f[last] < f[next]) {
                return RankCheck::violated(last, next);
            }
        }
        start = end;
    }
    RankCheck::EQUIVALENT
}

/// Strictly increasing maps used to produce equivalent scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MonotoneTransform {
    /// `scale · s + shift`, `scale > 0`.
    Affine { scale: f64, shift: f64 },
    /// Natural log on `(0, ∞]`.
    Log,
    Exp,
    Sigmoid,
    /// `s / (s + λ)` on `[0, ∞]`, with `+∞ ↦ 1`.
    RatioToPosterior { lambda: f64 },
    /// `s^p` on `[0, ∞]`, `p > 0`.
    Power { exponent: f64 },
}

impl MonotoneTransform {
    pub fn name(&self) -> String {
        match self {
            MonotoneTransform::Affine { scale, shift } => format!("affine({scale},{shift})"),
            MonotoneTransform::Log => "log".into(),
            MonotoneTransform::Exp => "exp".into(),
            MonotoneTransform::Sigmoid => "sigmoid".into(),
            MonotoneTransform::RatioToPosterior { lambda } => format!("ratio_to_posterior({lambda})"),
            MonotoneTransform::Power { exponent } => format!("power({exponent})"),
        }
    }

    fn check_params(&self) -> Result<()> {
        let ok = match *self {
            MonotoneTransform::Affine { scale, shift } => scale > 0.0 && scale.is_finite() && shift.is_finite(),
            MonotoneTransform::RatioToPosterior { lambda } => lambda > 0.0 && lambda.is_finite(),
            MonotoneTransform::Power { exponent } => exponent > 0.0 && exponent.is_finite(),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(OodError::InvalidParameter(format!("{} is not strictly increasing", self.name())))
        }
    }

    /// Applies the transform to one value.
    pub fn apply<T: Scalar>(&self, s: T) -> Result<T> {
        let violation = || OodError::DomainViolation { transform: self.name(), value: s.as_f64() };
        let out = match *self {
            MonotoneTransform::Affine { scale, shift } => T::lit(scale) * s + T::lit(shift),
            MonotoneTransform::Log => {
                if !(s > T::zero()) {
                    return Err(violation());
                }
                s.ln()
            }
            MonotoneTransform::Exp => s.exp(),
            MonotoneTransform::Sigmoid => crate::scalar::sigmoid(s),
            MonotoneTransform::RatioToPosterior { lambda } => {
                if s < T::zero() {
                    return Err(violation());
                }
                if s == T::infinity() {
                    T::one()
                } else {
                    s / (s + T::lit(lambda))
                }
            }
            MonotoneTransform::Power { exponent } => {
                if s < T::zero() {
                    return Err(violation());
                }
                s.powf(T::lit(exponent))
            }
        };
        Ok(out)
    }
}

/// Applies `transform` pointwise, failing if any value is outside its domain.
pub fn apply_monotone<T: Scalar>(s: &ScoreVector<T>, transform: &MonotoneTransform) -> Result<ScoreVector<T>> {
    transform.check_params()?;
    let values = s.values().iter().map(|&v| transform.apply(v)).collect::<Result<Vec<_>>>()?;
    ScoreVector::new(s.domain().clone(), values)
}
