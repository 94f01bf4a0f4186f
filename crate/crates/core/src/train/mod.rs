//! Training objectives, their exact expected losses and gradients, and the
//! two trainers: a tabular (one free logit vector per point) minimiser and a
//! shared-trunk MLP.

mod gradcheck;
mod mlp;
mod tabular;
mod terms;

pub use gradcheck::{grad_check, Differentiable, GradCheckConfig};
pub use mlp::{
    mlp_forward, mlp_train, Activation, Dense, LrSchedule, MlpArchitecture, MlpBatchObjective, MlpData, MlpOutput,
    MlpRun, MlpTrainConfig, SharedMlp,
};
pub use tabular::{
    bayes_logits, expected_loss, labeled_mask, loss_gradient, tabular_minimize, TabularObjective, TabularProbe,
    TabularRun,
};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dist::DiscreteDomain;
use crate::error::{OodError, Result};
use crate::oracle::{EnergyMargins, NamedScores};
use crate::scalar::{log_sum_exp, sigmoid, softmax, Scalar};
use crate::scores::{score_msp, score_s2, score_s3, score_s3_from_bgc, ScoreVector};

/// Training objective family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Cross-entropy on labeled in-distribution samples only.
    ClassifierCe,
    /// Logistic loss of in versus out, out-term weighted by `λ`.
    BinaryBalanced,
    /// Cross-entropy on in plus `λ` × cross-entropy to uniform on out.
    ConfidenceOe,
    /// `K+1`-way cross-entropy with out samples labeled `K+1`.
    BackgroundClass,
    /// Cross-entropy plus squared hinges on the energy `−log Σ exp f`.
    EnergyMargin,
    /// `K` classifier logits plus one discriminator logit on shared features.
    SharedCombo,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::ClassifierCe,
        LossKind::BinaryBalanced,
        LossKind::ConfidenceOe,
        LossKind::BackgroundClass,
        LossKind::EnergyMargin,
        LossKind::SharedCombo,
    ];

    /// Logit width per point for `classes` in-distribution labels.
    pub fn width(self, classes: usize) -> usize {
        match self {
            LossKind::BinaryBalanced => 1,
            LossKind::ClassifierCe | LossKind::ConfidenceOe | LossKind::EnergyMargin => classes,
            LossKind::BackgroundClass | LossKind::SharedCombo => classes + 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::ClassifierCe => "classifier_ce",
            LossKind::BinaryBalanced => "binary_balanced",
            LossKind::ConfidenceOe => "confidence_oe",
            LossKind::BackgroundClass => "background_class",
            LossKind::EnergyMargin => "energy_margin",
            LossKind::SharedCombo => "shared_combo",
        }
    }

    /// Whether the objective has a term on out-distribution samples.
    pub fn uses_out(self) -> bool {
        !matches!(self, LossKind::ClassifierCe)
    }
}

fn default_one<T: Scalar>() -> T {
    T::one()
}

/// A training objective with its hyper-parameters.
///
/// `lambda` weights every out-distribution term; with `λ = p(o)/p(i)` the
/// expected loss is the mixture expectation and its optimum is the Bayes
/// oracle of the scenario. `labeled_fraction` restricts the classifier term
/// of [`LossKind::SharedCombo`] to a subset of the in-distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LossSpec<T> {
    pub kind: LossKind,
    #[serde(default = "default_one")]
    pub lambda: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margins: Option<EnergyMargins<T>>,
    #[serde(default = "default_one")]
    pub labeled_fraction: T,
}

impl<T: Scalar> LossSpec<T> {
    /// `λ = 1`, default margins for the energy objective, fully labeled.
    pub fn new(kind: LossKind) -> Self {
        let margins = (kind == LossKind::EnergyMargin).then(EnergyMargins::default);
        Self { kind, lambda: T::one(), margins, labeled_fraction: T::one() }
    }

    pub fn with_lambda(mut self, lambda: T) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_margins(mut self, margins: EnergyMargins<T>) -> Self {
        self.margins = Some(margins);
        self
    }

    pub fn with_labeled_fraction(mut self, fraction: T) -> Self {
        self.labeled_fraction = fraction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > T::zero()) || !self.lambda.is_finite() {
            return Err(OodError::InvalidParameter(format!("lambda = {} must be positive", self.lambda)));
        }
        if !(self.labeled_fraction > T::zero() && self.labeled_fraction <= T::one()) {
            return Err(OodError::InvalidParameter(format!(
                "labeled fraction {} must lie in (0, 1]",
                self.labeled_fraction
            )));
        }
        if let Some(m) = &self.margins {
            EnergyMargins::new(m.m_in, m.m_out)?;
        }
        Ok(())
    }

    pub(crate) fn margins_or_default(&self) -> EnergyMargins<T> {
        self.margins.unwrap_or_default()
    }
}

/// One free logit vector per domain point, `N × width` row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularLogits<T> {
    pub width: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> TabularLogits<T> {
    pub fn new(width: usize, values: Vec<T>) -> Result<Self> {
        if width == 0 || values.len() % width != 0 {
            return Err(OodError::shape(format!("multiple of {width}"), values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(OodError::InvalidParameter("logits must be finite".into()));
        }
        Ok(Self { width, values })
    }

    pub fn zeros(points: usize, width: usize) -> Self {
        Self { width, values: vec![T::zero(); points * width] }
    }

    pub fn points(&self) -> usize {
        self.values.len() / self.width
    }

    pub fn row(&self, x: usize) -> &[T] {
        &self.values[x * self.width..(x + 1) * self.width]
    }

    pub fn row_mut(&mut self, x: usize) -> &mut [T] {
        let w = self.width;
        &mut self.values[x * w..(x + 1) * w]
    }

    /// Predicted distribution per point: softmax rows, sigmoid for a single
    /// logit, and for [`LossKind::SharedCombo`] the class softmax followed by
    /// the discriminator probability.
    pub fn predictive(&self, kind: LossKind) -> Vec<Vec<T>> {
        (0..self.points())
            .map(|x| {
                let z = self.row(x);
                match kind {
                    LossKind::BinaryBalanced => vec![sigmoid(z[0])],
                    LossKind::SharedCombo => {
                        let k = z.len() - 1;
                        let mut r = softmax(&z[..k]);
                        r.push(sigmoid(z[k]));
                        r
                    }
                    _ => softmax(z),
                }
            })
            .collect()
    }

    /// Score vectors exposed by a model trained with `kind`; the same names
    /// as [`crate::oracle::oracle_scores`] for the corresponding method.
    pub fn scores(&self, kind: LossKind, domain: &Arc<DiscreteDomain>) -> Result<NamedScores<T>> {
        if self.points() != domain.len() {
            return Err(OodError::shape(domain.len(), self.points()));
        }
        let rows = self.predictive(kind);
        let vector = |f: &dyn Fn(usize, &[T]) -> T| {
            ScoreVector::new(domain.clone(), rows.iter().enumerate().map(|(x, r)| f(x, r)).collect())
        };
        Ok(match kind {
            LossKind::BinaryBalanced => vec![("s1".into(), vector(&|_, r| r[0])?)],
            LossKind::ClassifierCe | LossKind::ConfidenceOe => vec![("msp".into(), vector(&|_, r| score_msp(r))?)],
            LossKind::BackgroundClass => {
                let k = self.width - 1;
                vec![
                    ("s1".into(), vector(&|_, r| T::one() - r[k])?),
                    ("s2".into(), vector(&|_, r| score_msp(&r[..k]))?),
                    ("s3".into(), vector(&|_, r| score_s3_from_bgc(r))?),
                ]
            }
            LossKind::EnergyMargin => vec![
                ("energy".into(), vector(&|x, _| log_sum_exp(self.row(x)))?),
                ("msp".into(), vector(&|_, r| score_msp(r))?),
            ],
            LossKind::SharedCombo => {
                let k = self.width - 1;
                let class_probs: Vec<Vec<T>> = rows.iter().map(|r| r[..k].to_vec()).collect();
                let p_in: Vec<T> = rows.iter().map(|r| r[k]).collect();
                combined_scores(domain, &class_probs, &p_in)?
            }
        })
    }
}

/// `s1`, `s2`, `s3` from class probabilities and a discriminator's `p(i|x)`.
pub fn combined_scores<T: Scalar>(
    domain: &Arc<DiscreteDomain>,
    class_probs: &[Vec<T>],
    p_in: &[T],
) -> Result<NamedScores<T>> {
    let n = domain.len();
    if class_probs.len() != n || p_in.len() != n {
        return Err(OodError::shape(n, class_probs.len().min(p_in.len())));
    }
    let s2 = class_probs.iter().zip(p_in).map(|(c, &p)| score_s2(p, c)).collect();
    let s3 = class_probs.iter().zip(p_in).map(|(c, &p)| score_s3(p, c)).collect();
    Ok(vec![
        ("s1".into(), ScoreVector::new(domain.clone(), p_in.to_vec())?),
        ("s2".into(), ScoreVector::new(domain.clone(), s2)?),
        ("s3".into(), ScoreVector::new(domain.clone(), s3)?),
    ])
}
