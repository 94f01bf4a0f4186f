//! Loss and gradient of a single logit vector under per-point weights.
//!
//! The tabular expected loss sums these over domain points with population
//! masses as weights; the MLP sums them over samples with `1/n` weights.

use crate::oracle::EnergyMargins;
use crate::scalar::{log_sigmoid, log_sum_exp, sigmoid, softmax_into, Scalar};

use super::LossKind;

/// Weights of the terms at one input.
///
/// `class[k]` weights the cross-entropy toward class `k`, `in_w` the
/// in-distribution term of the binary/energy parts and `out_w` every
/// out-distribution term (`λ` already folded in).
#[derive(Clone, Debug)]
pub(crate) struct PointWeights<T> {
    pub class: Vec<T>,
    pub in_w: T,
    pub out_w: T,
}

impl<T: Scalar> PointWeights<T> {
    pub fn zeros(classes: usize) -> Self {
        Self { class: vec![T::zero(); classes], in_w: T::zero(), out_w: T::zero() }
    }

    /// Sum of all weights entering the loss of `kind`.
    pub fn total(&self, kind: LossKind) -> T {
        let class: T = self.class.iter().copied().sum();
        match kind {
            LossKind::ClassifierCe => class,
            LossKind::BinaryBalanced => self.in_w + self.out_w,
            LossKind::ConfidenceOe | LossKind::BackgroundClass => class + self.out_w,
            LossKind::EnergyMargin | LossKind::SharedCombo => class + self.in_w + self.out_w,
        }
    }
}

/// `Σ_k w_k (lse(z) − z_k)`; gradient `(Σ w) softmax(z) − w`.
fn weighted_ce<T: Scalar>(z: &[T], w: &[T], probs: &mut [T], grad: Option<&mut [T]>) -> T {
    let total: T = w.iter().copied().sum();
    if total == T::zero() {
        return T::zero();
    }
    let lse = log_sum_exp(z);
    let mut loss = T::zero();
    for (&zk, &wk) in z.iter().zip(w) {
        if wk != T::zero() {
            loss += wk * (lse - zk);
        }
    }
    if let Some(g) = grad {
        softmax_into(z, probs);
        for k in 0..z.len() {
            g[k] += total * probs[k] - w[k];
        }
    }
    loss
}

/// Loss at one logit vector; adds its gradient into `grad` when given.
pub(crate) fn point_loss<T: Scalar>(
    kind: LossKind,
    margins: &EnergyMargins<T>,
    z: &[T],
    w: &PointWeights<T>,
    mut grad: Option<&mut [T]>,
) -> T {
    let k = w.class.len();
    let mut probs = vec![T::zero(); z.len()];
    match kind {
        LossKind::ClassifierCe => weighted_ce(z, &w.class, &mut probs, grad),
        LossKind::BinaryBalanced => binary(z[0], w.in_w, w.out_w, grad.map(|g| &mut g[0])),
        LossKind::ConfidenceOe => {
            let mut loss = weighted_ce(z, &w.class, &mut probs, grad.as_deref_mut());
            if w.out_w != T::zero() {
                let uniform = vec![w.out_w / T::from_usize_lossy(k); k];
                loss += weighted_ce(z, &uniform, &mut probs, grad);
            }
            loss
        }
        LossKind::BackgroundClass => {
            let mut target = w.class.clone();
            target.push(w.out_w);
            weighted_ce(z, &target, &mut probs, grad)
        }
        LossKind::EnergyMargin => {
            let mut loss = weighted_ce(z, &w.class, &mut probs, grad.as_deref_mut());
            // E = −lse(z), dE/dz = −softmax(z)
            let energy = -log_sum_exp(z);
            let two = T::lit(2.0);
            let h_in = (energy - margins.m_in).max(T::zero());
            let h_out = (margins.m_out - energy).max(T::zero());
            loss += w.in_w * h_in * h_in + w.out_w * h_out * h_out;
            if let Some(g) = grad {
                let d_energy = two * (w.in_w * h_in - w.out_w * h_out);
                if d_energy != T::zero() {
                    softmax_into(z, &mut probs);
                    for (gk, &pk) in g.iter_mut().zip(&probs) {
                        *gk -= d_energy * pk;
                    }
                }
            }
            loss
        }
        LossKind::SharedCombo => {
            let (class_z, disc_z) = z.split_at(k);
            let (class_g, disc_g) = match grad {
                Some(g) => {
                    let (a, b) = g.split_at_mut(k);
                    (Some(a), Some(&mut b[0]))
                }
                None => (None, None),
            };
            weighted_ce(class_z, &w.class, &mut probs[..k], class_g) + binary(disc_z[0], w.in_w, w.out_w, disc_g)
        }
    }
}

/// Diagonal of the Gauss-Newton curvature of [`point_loss`] at `z`.
///
/// Softmax cross-entropy with total weight `W` contributes `W s_k (1 − s_k)`,
/// the sigmoid terms `(in_w + out_w) σ (1 − σ)` and an active energy hinge
/// with weight `w` adds `2 w s_k²`.
pub(crate) fn point_curvature<T: Scalar>(kind: LossKind, margins: &EnergyMargins<T>, z: &[T], w: &PointWeights<T>) -> Vec<T> {
    let k = w.class.len();
    let class: T = w.class.iter().copied().sum();
    let softmax_curv = |z: &[T], weight: T| -> Vec<T> {
        let mut s = vec![T::zero(); z.len()];
        softmax_into(z, &mut s);
        s.into_iter().map(|p| weight * p * (T::one() - p)).collect()
    };
    let sigmoid_curv = |z: T| {
        let p = sigmoid(z);
        (w.in_w + w.out_w) * p * (T::one() - p)
    };
    match kind {
        LossKind::ClassifierCe => softmax_curv(z, class),
        LossKind::BinaryBalanced => vec![sigmoid_curv(z[0])],
        LossKind::ConfidenceOe | LossKind::BackgroundClass => softmax_curv(z, class + w.out_w),
        LossKind::EnergyMargin => {
            let mut c = softmax_curv(z, class);
            let energy = -log_sum_exp(z);
            let mut active = T::zero();
            if energy > margins.m_in {
                active += w.in_w;
            }
            if energy < margins.m_out {
                active += w.out_w;
            }
            if active > T::zero() {
                let mut s = vec![T::zero(); z.len()];
                softmax_into(z, &mut s);
                for (ck, p) in c.iter_mut().zip(s) {
                    *ck += T::lit(2.0) * active * p * p;
                }
            }
            c
        }
        LossKind::SharedCombo => {
            let mut c = softmax_curv(&z[..k], class);
            c.push(sigmoid_curv(z[k]));
            c
        }
    }
}

/// `in_w·softplus(−z) + out_w·softplus(z)`.
fn binary<T: Scalar>(z: T, in_w: T, out_w: T, grad: Option<&mut T>) -> T {
    let mut loss = T::zero();
    if in_w != T::zero() {
        loss -= in_w * log_sigmoid(z);
    }
    if out_w != T::zero() {
        loss -= out_w * log_sigmoid(-z);
    }
    if let Some(g) = grad {
        let s = sigmoid(z);
        *g += out_w * s - in_w * (T::one() - s);
    }
    loss
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights(class: &[f64], in_w: f64, out_w: f64) -> PointWeights<f64> {
        PointWeights { class: class.to_vec(), in_w, out_w }
    }

    fn numeric(kind: LossKind, z: &[f64], w: &PointWeights<f64>) -> Vec<f64> {
        let m = EnergyMargins::default();
        (0..z.len())
            .map(|i| {
                let h = 1e-6;
                let mut a = z.to_vec();
                let mut b = z.to_vec();
                a[i] += h;
                b[i] -= h;
                (point_loss(kind, &m, &a, w, None) - point_loss(kind, &m, &b, w, None)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradients_match_central_differences() {
        let w = weights(&[0.2, 0.1, 0.05], 0.35, 0.4);
        let m = EnergyMargins::default();
        for kind in LossKind::ALL {
            let width = kind.width(3);
            let z: Vec<f64> = (0..width).map(|i| 0.3 * i as f64 - 0.7).collect();
            let mut g = vec![0.0; width];
            point_loss(kind, &m, &z, &w, Some(&mut g));
            for (a, n) in g.iter().zip(numeric(kind, &z, &w)) {
                assert!((a - n).abs() < 1e-7, "{kind:?}: {a} vs {n}");
            }
        }
    }

    #[test]
    fn curvature_is_positive_and_matches_ce_second_derivative() {
        let w = weights(&[0.2, 0.1, 0.05], 0.35, 0.4);
        let m = EnergyMargins::default();
        for kind in LossKind::ALL {
            let z: Vec<f64> = (0..kind.width(3)).map(|i| 0.4 * i as f64 - 0.5).collect();
            let c = point_curvature(kind, &m, &z, &w);
            assert_eq!(c.len(), z.len());
            assert!(c.iter().all(|&v| v > 0.0), "{kind:?}");
        }
        // plain cross-entropy: the Gauss-Newton diagonal is the exact one
        let z = [0.3, -0.2, 0.1];
        let c = point_curvature(LossKind::ClassifierCe, &m, &z, &w);
        for i in 0..3 {
            let h = 1e-4;
            let f = |d: f64| {
                let mut a = z.to_vec();
                a[i] += d;
                point_loss(LossKind::ClassifierCe, &m, &a, &w, None)
            };
            let numeric = (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
            assert!((numeric - c[i]).abs() < 1e-6, "{numeric} vs {}", c[i]);
        }
    }

    #[test]
    fn binary_optimum_is_weight_ratio() {
        let (a, b) = (0.3f64, 0.6);
        let z = (a / b).ln();
        let mut g = 0.0;
        binary(z, a, b, Some(&mut g));
        assert!(g.abs() < 1e-15);
    }

    #[test]
    fn zero_weights_give_zero_loss() {
        let m = EnergyMargins::default();
        for kind in LossKind::ALL {
            let z = vec![0.4; kind.width(2)];
            let mut g = vec![0.0; z.len()];
            assert_eq!(point_loss(kind, &m, &z, &PointWeights::zeros(2), Some(&mut g)), 0.0);
            assert!(g.iter().all(|&v| v == 0.0));
        }
    }
}
