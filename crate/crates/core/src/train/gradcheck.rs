use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{OodError, Result};
use crate::scalar::Scalar;

/// A scalar loss over a flat parameter vector with an analytic gradient.
pub trait Differentiable<T> {
    /// Parameters around which probes are drawn.
    fn parameters(&self) -> Vec<T>;
    fn loss_at(&self, params: &[T]) -> T;
    fn gradient_at(&self, params: &[T]) -> Vec<T>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub probes: usize,
    pub epsilon: f64,
    /// Half-width of the uniform perturbation applied to each parameter.
    pub probe_scale: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { probes: 20, epsilon: 1e-5, probe_scale: 1.0, seed: 0 }
    }
}

/// Largest relative error `‖a − n‖ / max(‖a‖, ‖n‖)` between analytic and
/// central-difference gradients over random probes. Both gradients zero
/// counts as agreement.
pub fn grad_check<T: Scalar>(model: &impl Differentiable<T>, config: &GradCheckConfig) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&config.epsilon) {
        return Err(OodError::InvalidParameter(format!("epsilon {} outside [1e-7, 1e-3]", config.epsilon)));
    }
    let base = model.parameters();
    let eps = T::lit(config.epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut worst = 0.0f64;
    for _ in 0..config.probes {
        let mut point: Vec<T> = base
            .iter()
            .map(|&b| b + T::lit(rng.gen_range(-1.0..1.0) * config.probe_scale))
            .collect();
        let analytic = model.gradient_at(&point);
        if analytic.len() != point.len() {
            return Err(OodError::shape(point.len(), analytic.len()));
        }
        let mut diff = 0.0;
        let mut norm_a = 0.0;
        let mut norm_n = 0.0;
        for j in 0..point.len() {
            let orig = point[j];
            point[j] = orig + eps;
            let up = model.loss_at(&point);
            point[j] = orig - eps;
            let down = model.loss_at(&point);
            point[j] = orig;
            let numeric = ((up - down) / (eps + eps)).as_f64();
            let a = analytic[j].as_f64();
            diff += (a - numeric).powi(2);
            norm_a += a * a;
            norm_n += numeric * numeric;
        }
        let denom = norm_a.sqrt().max(norm_n.sqrt()).max(1e-10);
        let err = if diff == 0.0 { 0.0 } else { diff.sqrt() / denom };
        if !err.is_finite() {
            return Ok(f64::INFINITY);
        }
        worst = worst.max(err);
    }
    Ok(worst)
}
