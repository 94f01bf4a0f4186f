use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dist::OodScenario;
use crate::error::{OodError, Result};
use crate::oracle::EnergyMargins;
use crate::scalar::Scalar;

use super::gradcheck::Differentiable;
use super::terms::{point_curvature, point_loss, PointWeights};
use super::{LossKind, LossSpec, TabularLogits};

/// Labeled subset of `n` points for fraction `f`: point `j` is labeled iff
/// `⌊(j+1)f⌋ > ⌊jf⌋`, which spreads `⌊nf⌋` labels evenly over the domain.
pub fn labeled_mask(n: usize, fraction: f64) -> Vec<bool> {
    (0..n)
        .map(|j| ((j + 1) as f64 * fraction).floor() > (j as f64 * fraction).floor())
        .collect()
}

fn uses_label_mask(kind: LossKind) -> bool {
    matches!(kind, LossKind::ClassifierCe | LossKind::SharedCombo)
}

/// The exact expected loss of `spec` on `scenario` as a function of a
/// tabular logit table.
#[derive(Clone, Debug)]
pub struct TabularObjective<T> {
    kind: LossKind,
    margins: EnergyMargins<T>,
    width: usize,
    weights: Vec<PointWeights<T>>,
}

impl<T: Scalar> TabularObjective<T> {
    pub fn new(scenario: &OodScenario<T>, spec: &LossSpec<T>) -> Result<Self> {
        spec.validate()?;
        let k = scenario.classes();
        let n = scenario.len();
        let in_dist = scenario.in_dist();
        let out = scenario.out_dist().mass();
        let mask = if spec.labeled_fraction < T::one() && uses_label_mask(spec.kind) {
            Some(labeled_mask(n, spec.labeled_fraction.as_f64()))
        } else {
            None
        };
        let labeled_mass = match &mask {
            Some(m) => {
                let mass: T = (0..n).filter(|&x| m[x]).map(|x| in_dist.marginal()[x]).sum();
                if !(mass > T::zero()) {
                    return Err(OodError::InvalidParameter("labeled subset has zero in-distribution mass".into()));
                }
                mass
            }
            None => T::one(),
        };
        let weights = (0..n)
            .map(|x| {
                let labeled = mask.as_ref().is_none_or(|m| m[x]);
                let class = (0..k)
                    .map(|c| if labeled { in_dist.joint_at(c, x) / labeled_mass } else { T::zero() })
                    .collect();
                PointWeights { class, in_w: in_dist.marginal()[x], out_w: spec.lambda * out[x] }
            })
            .collect();
        Ok(Self { kind: spec.kind, margins: spec.margins_or_default(), width: spec.kind.width(k), weights })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn points(&self) -> usize {
        self.weights.len()
    }

    fn check(&self, values: &[T]) -> Result<()> {
        if values.len() != self.points() * self.width {
            return Err(OodError::shape(self.points() * self.width, values.len()));
        }
        Ok(())
    }

    pub fn loss(&self, values: &[T]) -> Result<T> {
        self.check(values)?;
        Ok(self
            .weights
            .iter()
            .zip(values.chunks(self.width))
            .map(|(w, z)| point_loss(self.kind, &self.margins, z, w, None))
            .sum())
    }

    pub fn loss_and_gradient(&self, values: &[T]) -> Result<(T, Vec<T>)> {
        self.check(values)?;
        let mut grad = vec![T::zero(); values.len()];
        let mut loss = T::zero();
        for ((w, z), g) in self.weights.iter().zip(values.chunks(self.width)).zip(grad.chunks_mut(self.width)) {
            loss += point_loss(self.kind, &self.margins, z, w, Some(g));
        }
        Ok((loss, grad))
    }
}

/// A [`TabularObjective`] paired with the logits probes are drawn around.
#[derive(Clone, Debug)]
pub struct TabularProbe<T> {
    pub objective: TabularObjective<T>,
    pub base: Vec<T>,
}

impl<T: Scalar> Differentiable<T> for TabularProbe<T> {
    fn parameters(&self) -> Vec<T> {
        self.base.clone()
    }

    fn loss_at(&self, params: &[T]) -> T {
        self.objective.loss(params).unwrap_or(T::nan())
    }

    fn gradient_at(&self, params: &[T]) -> Vec<T> {
        self.objective.loss_and_gradient(params).map(|(_, g)| g).unwrap_or_default()
    }
}

fn check_width<T: Scalar>(scenario: &OodScenario<T>, logits: &TabularLogits<T>, spec: &LossSpec<T>) -> Result<()> {
    let width = spec.kind.width(scenario.classes());
    if logits.width != width || logits.points() != scenario.len() {
        return Err(OodError::shape(
            format!("{} x {width}", scenario.len()),
            format!("{} x {}", logits.points(), logits.width),
        ));
    }
    Ok(())
}

/// Exact population loss of a logit table: the per-point loss summed over
/// the domain, weighted by `p(y,x|i)`, `p(x|i)` and `λ p(x|o)`.
pub fn expected_loss<T: Scalar>(scenario: &OodScenario<T>, logits: &TabularLogits<T>, spec: &LossSpec<T>) -> Result<T> {
    check_width(scenario, logits, spec)?;
    TabularObjective::new(scenario, spec)?.loss(&logits.values)
}

/// Analytic gradient of [`expected_loss`] with respect to every logit.
pub fn loss_gradient<T: Scalar>(
    scenario: &OodScenario<T>,
    logits: &TabularLogits<T>,
    spec: &LossSpec<T>,
) -> Result<TabularLogits<T>> {
    check_width(scenario, logits, spec)?;
    let (_, grad) = TabularObjective::new(scenario, spec)?.loss_and_gradient(&logits.values)?;
    Ok(TabularLogits { width: logits.width, values: grad })
}

/// Logits realising the Bayes optimum of `spec`.
///
/// Requires every optimal probability to be positive so the logits are
/// finite. Points outside the support of the relevant terms get the
/// uniform class distribution.
pub fn bayes_logits<T: Scalar>(scenario: &OodScenario<T>, spec: &LossSpec<T>) -> Result<TabularLogits<T>> {
    spec.validate()?;
    let k = scenario.classes();
    let kt = T::from_usize_lossy(k);
    let n = scenario.len();
    let weighted = scenario.with_prior(T::one() / (T::one() + spec.lambda))?;
    let margins = spec.margins_or_default();
    let mask = (spec.labeled_fraction < T::one() && uses_label_mask(spec.kind))
        .then(|| labeled_mask(n, spec.labeled_fraction.as_f64()));
    let mut values = Vec::with_capacity(n * spec.kind.width(k));
    for x in 0..n {
        // points without mixture mass carry no loss; any finite logits do
        let p = weighted.posterior_in(x).unwrap_or(T::lit(0.5));
        let c = match &mask {
            Some(m) if !m[x] => vec![T::one() / kt; k],
            _ => scenario.class_conditional_or_uniform(x),
        };
        let logs = |v: &[T]| v.iter().map(|q| q.ln()).collect::<Vec<T>>();
        match spec.kind {
            LossKind::BinaryBalanced => values.push(p.ln() - (T::one() - p).ln()),
            LossKind::ClassifierCe => values.extend(logs(&c)),
            LossKind::ConfidenceOe => {
                let q: Vec<T> = c.iter().map(|&ck| p * ck + (T::one() - p) / kt).collect();
                values.extend(logs(&q));
            }
            LossKind::BackgroundClass => {
                let mut q: Vec<T> = c.iter().map(|&ck| p * ck).collect();
                q.push(T::one() - p);
                values.extend(logs(&q));
            }
            LossKind::EnergyMargin => {
                // shift log c so that lse equals the optimal −E
                let shift = margins.optimal_neg_energy(p);
                values.extend(logs(&c).into_iter().map(|l| l + shift));
            }
            LossKind::SharedCombo => {
                values.extend(logs(&c));
                values.push(p.ln() - (T::one() - p).ln());
            }
        }
    }
    TabularLogits::new(spec.kind.width(k), values)
}

/// Result of [`tabular_minimize`].
#[derive(Clone, Debug)]
pub struct TabularRun<T> {
    pub logits: TabularLogits<T>,
    /// Loss at initialisation followed by the loss after every step.
    pub trajectory: Vec<T>,
    /// Step size after the last backtracking adjustment.
    pub final_learning_rate: T,
}

/// Lower bound on the curvature, relative to the point's total weight.
const CURVATURE_FLOOR: f64 = 1e-12;
/// Largest change of a single logit per unit learning rate.
const MAX_STEP: f64 = 4.0;

/// Full-batch gradient descent on the exact expected loss.
///
/// Each gradient component is divided by the diagonal Gauss-Newton curvature
/// at the current logits (floored relative to the point's total weight) and
/// clipped to a bounded step. This makes the step independent of how much
/// mass a point carries, and logits heading to ±∞ move at a constant rate
/// instead of stalling. A step that raises the loss is undone and the
/// learning rate halved, which makes the recorded trajectory non-increasing.
/// Stops early once the scaled gradient vanishes.
pub fn tabular_minimize<T: Scalar>(
    scenario: &OodScenario<T>,
    spec: &LossSpec<T>,
    steps: usize,
    learning_rate: T,
    seed: u64,
) -> Result<TabularRun<T>> {
    if steps == 0 {
        return Err(OodError::InvalidParameter("steps must be at least 1".into()));
    }
    if !(learning_rate > T::zero()) {
        return Err(OodError::InvalidParameter(format!("learning rate {learning_rate} must be positive")));
    }
    let objective = TabularObjective::new(scenario, spec)?;
    let width = objective.width();
    let floors: Vec<T> = objective.weights.iter().map(|w| T::lit(CURVATURE_FLOOR) * w.total(spec.kind)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values: Vec<T> = (0..objective.points() * width).map(|_| T::lit(rng.gen_range(-0.01..0.01))).collect();
    let (mut loss, mut grad) = objective.loss_and_gradient(&values)?;
    if !loss.is_finite() {
        return Err(OodError::DivergenceDetected { step: 0 });
    }
    let mut trajectory = vec![loss];
    let mut lr = learning_rate;
    let mut candidate = values.clone();
    for step in 1..=steps {
        let mut largest = T::zero();
        for (x, (w, floor)) in objective.weights.iter().zip(&floors).enumerate() {
            if !(*floor > T::zero()) {
                continue;
            }
            let range = x * width..(x + 1) * width;
            let curv = point_curvature(spec.kind, &objective.margins, &values[range.clone()], w);
            for (j, c) in range.zip(curv) {
                let d = (grad[j] / c.max(*floor)).max(-T::lit(MAX_STEP)).min(T::lit(MAX_STEP));
                largest = largest.max(d.abs());
                candidate[j] = values[j] - lr * d;
            }
        }
        if largest < T::lit(1e-13) {
            break;
        }
        let (new_loss, new_grad) = objective.loss_and_gradient(&candidate)?;
        if !new_loss.is_finite() {
            return Err(OodError::DivergenceDetected { step });
        }
        let slack = T::lit(1e-12) * loss.abs().max(T::one());
        if new_loss > loss + slack {
            lr = lr * T::lit(0.5);
            if lr < T::lit(1e-30) {
                break;
            }
            trajectory.push(loss);
            continue;
        }
        std::mem::swap(&mut values, &mut candidate);
        loss = new_loss;
        grad = new_grad;
        trajectory.push(loss);
    }
    Ok(TabularRun { logits: TabularLogits::new(width, values)?, trajectory, final_learning_rate: lr })
}
