//! Finite probability scenarios and the exact conditionals derived from them.

use std::collections::HashSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OodError, Result};
use crate::scalar::Scalar;

/// Ordered set of named points. Optional per-point coordinates are carried
/// along for scenarios that live on a grid (the MLP track feeds them as
/// inputs).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDomain {
    points: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coordinates: Option<Vec<Vec<f64>>>,
}

impl DiscreteDomain {
    pub fn new(points: Vec<String>, coordinates: Option<Vec<Vec<f64>>>) -> Result<Self> {
        if points.is_empty() {
            return Err(OodError::InvalidDomain("domain must contain at least one point".into()));
        }
        let mut seen = HashSet::with_capacity(points.len());
        for p in &points {
            if !seen.insert(p.as_str()) {
                return Err(OodError::InvalidDomain(format!("duplicate point id {p:?}")));
            }
        }
        if let Some(coords) = &coordinates {
            if coords.len() != points.len() {
                return Err(OodError::InvalidDomain(format!(
                    "{} coordinate rows for {} points",
                    coords.len(),
                    points.len()
                )));
            }
            let dim = coords[0].len();
            if coords.iter().any(|c| c.len() != dim || c.iter().any(|v| !v.is_finite())) {
                return Err(OodError::InvalidDomain("coordinates must be finite and of equal dimension".into()));
            }
        }
        Ok(Self { points, coordinates })
    }

    /// Domain with ids `x0, x1, ...`.
    pub fn indexed(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| format!("x{i}")).collect(), None)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[String] {
        &self.points
    }

    pub fn point(&self, idx: usize) -> &str {
        &self.points[idx]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.points.iter().position(|p| p == id)
    }

    pub fn coordinates(&self) -> Option<&[Vec<f64>]> {
        self.coordinates.as_deref()
    }

    pub fn coordinate_dim(&self) -> Option<usize> {
        self.coordinates.as_ref().map(|c| c[0].len())
    }
}

pub(crate) fn same_domain(a: &Arc<DiscreteDomain>, b: &Arc<DiscreteDomain>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

fn check_masses<T: Scalar>(mass: &[T], what: &str) -> Result<()> {
    let mut total = T::zero();
    for (i, &m) in mass.iter().enumerate() {
        if !m.is_finite() || m < T::zero() {
            return Err(OodError::InvalidMass(format!("{what}: mass {m} at index {i}")));
        }
        total += m;
    }
    if (total - T::one()).abs() > T::mass_tolerance() {
        return Err(OodError::InvalidMass(format!("{what}: masses sum to {total}")));
    }
    Ok(())
}

/// Probability mass function over a [`DiscreteDomain`].
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDistribution<T> {
    domain: Arc<DiscreteDomain>,
    mass: Vec<T>,
}

impl<T: Scalar> FiniteDistribution<T> {
    pub fn new(domain: Arc<DiscreteDomain>, mass: Vec<T>) -> Result<Self> {
        if mass.len() != domain.len() {
            return Err(OodError::shape(domain.len(), mass.len()));
        }
        check_masses(&mass, "distribution")?;
        Ok(Self { domain, mass })
    }

    /// Normalises non-negative weights.
    pub fn from_weights(domain: Arc<DiscreteDomain>, weights: Vec<T>) -> Result<Self> {
        let total: T = weights.iter().copied().sum();
        if !(total > T::zero()) || !total.is_finite() {
            return Err(OodError::InvalidMass(format!("weights sum to {total}")));
        }
        let mass = weights.into_iter().map(|w| w / total).collect();
        Self::new(domain, mass)
    }

    pub fn uniform(domain: Arc<DiscreteDomain>) -> Self {
        let n = T::from_usize_lossy(domain.len());
        let mass = vec![T::one() / n; domain.len()];
        Self { domain, mass }
    }

    /// All mass on one point.
    pub fn point_mass(domain: Arc<DiscreteDomain>, idx: usize) -> Result<Self> {
        if idx >= domain.len() {
            return Err(OodError::shape(format!("index < {}", domain.len()), idx));
        }
        let mut mass = vec![T::zero(); domain.len()];
        mass[idx] = T::one();
        Ok(Self { domain, mass })
    }

    pub fn domain(&self) -> &Arc<DiscreteDomain> {
        &self.domain
    }

    pub fn mass(&self) -> &[T] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// Mass restricted to `keep` and renormalised.
    pub fn restrict(&self, keep: impl Fn(usize) -> bool) -> Result<Self> {
        let w = self.mass.iter().enumerate().map(|(i, &m)| if keep(i) { m } else { T::zero() }).collect();
        Self::from_weights(self.domain.clone(), w)
    }
}

/// Joint in-distribution `p(y, x | i)` over `K` labels and the domain points.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledInDistribution<T> {
    domain: Arc<DiscreteDomain>,
    classes: usize,
    /// `classes × N`, row-major.
    joint: Vec<T>,
    marginal: Vec<T>,
}

impl<T: Scalar> LabeledInDistribution<T> {
    pub fn new(domain: Arc<DiscreteDomain>, classes: usize, joint: Vec<T>) -> Result<Self> {
        if classes < 2 {
            return Err(OodError::InvalidParameter(format!("need at least 2 classes, got {classes}")));
        }
        let n = domain.len();
        if joint.len() != classes * n {
            return Err(OodError::shape(format!("{classes}x{n} joint"), joint.len()));
        }
        check_masses(&joint, "joint in-distribution")?;
        let marginal = (0..n).map(|x| (0..classes).map(|k| joint[k * n + x]).sum()).collect();
        Ok(Self { domain, classes, joint, marginal })
    }

    /// Joint built from a marginal and a per-point class-conditional table
    /// (`cond[x]` has length `classes`).
    pub fn from_marginal_and_conditionals(
        marginal: &FiniteDistribution<T>,
        classes: usize,
        cond: &[Vec<T>],
    ) -> Result<Self> {
        let n = marginal.len();
        if cond.len() != n || cond.iter().any(|c| c.len() != classes) {
            return Err(OodError::shape(format!("{n} rows of width {classes}"), cond.len()));
        }
        let mut joint = vec![T::zero(); classes * n];
        for x in 0..n {
            for k in 0..classes {
                joint[k * n + x] = marginal.mass()[x] * cond[x][k];
            }
        }
        Self::new(marginal.domain().clone(), classes, joint)
    }

    pub fn domain(&self) -> &Arc<DiscreteDomain> {
        &self.domain
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn joint(&self) -> &[T] {
        &self.joint
    }

    #[inline]
    pub fn joint_at(&self, class: usize, x: usize) -> T {
        self.joint[class * self.domain.len() + x]
    }

    /// `p(x | i)` as column sums of the joint.
    pub fn marginal(&self) -> &[T] {
        &self.marginal
    }

    pub fn marginal_distribution(&self) -> FiniteDistribution<T> {
        FiniteDistribution { domain: self.domain.clone(), mass: self.marginal.clone() }
    }

    /// Restricts the in-distribution to the points selected by `keep`,
    /// renormalising the joint.
    pub fn restrict(&self, keep: impl Fn(usize) -> bool) -> Result<Self> {
        let n = self.domain.len();
        let mut joint = self.joint.clone();
        for k in 0..self.classes {
            for x in 0..n {
                if !keep(x) {
                    joint[k * n + x] = T::zero();
                }
            }
        }
        let total: T = joint.iter().copied().sum();
        if !(total > T::zero()) {
            return Err(OodError::InvalidMass("restriction removes all in-distribution mass".into()));
        }
        joint.iter_mut().for_each(|v| *v /= total);
        Self::new(self.domain.clone(), self.classes, joint)
    }
}

/// In-distribution, training out-distribution and the in-prior `p(i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OodScenario<T> {
    in_dist: LabeledInDistribution<T>,
    out_dist: FiniteDistribution<T>,
    prior_in: T,
}

impl<T: Scalar> OodScenario<T> {
    pub fn new(in_dist: LabeledInDistribution<T>, out_dist: FiniteDistribution<T>, prior_in: T) -> Result<Self> {
        if !same_domain(in_dist.domain(), out_dist.domain()) {
            return Err(OodError::InvalidDomain("in- and out-distribution live on different domains".into()));
        }
        if !(prior_in > T::zero() && prior_in < T::one()) {
            return Err(OodError::InvalidParameter(format!("prior p(i) = {prior_in} must lie in (0, 1)")));
        }
        Ok(Self { in_dist, out_dist, prior_in })
    }

    pub fn domain(&self) -> &Arc<DiscreteDomain> {
        self.in_dist.domain()
    }

    pub fn len(&self) -> usize {
        self.domain().len()
    }

    pub fn is_empty(&self) -> bool {
        self.domain().is_empty()
    }

    pub fn classes(&self) -> usize {
        self.in_dist.classes()
    }

    pub fn in_dist(&self) -> &LabeledInDistribution<T> {
        &self.in_dist
    }

    pub fn out_dist(&self) -> &FiniteDistribution<T> {
        &self.out_dist
    }

    pub fn prior_in(&self) -> T {
        self.prior_in
    }

    pub fn prior_out(&self) -> T {
        T::one() - self.prior_in
    }

    /// `λ = p(o) / p(i)`.
    pub fn lambda(&self) -> T {
        self.prior_out() / self.prior_in
    }

    /// Mixture mass `p(x) = p(x|i) p(i) + p(x|o) p(o)`.
    pub fn mixture(&self, x: usize) -> T {
        self.in_dist.marginal()[x] * self.prior_in + self.out_dist.mass()[x] * self.prior_out()
    }

    pub fn mixture_distribution(&self) -> FiniteDistribution<T> {
        let mass = (0..self.len()).map(|x| self.mixture(x)).collect();
        FiniteDistribution { domain: self.domain().clone(), mass }
    }

    pub fn in_support(&self, x: usize) -> bool {
        self.in_dist.marginal()[x] > T::zero()
    }

    pub fn mixture_support(&self, x: usize) -> bool {
        self.in_support(x) || self.out_dist.mass()[x] > T::zero()
    }

    /// `p(i | x)`; errors at points outside both supports.
    pub fn posterior_in(&self, x: usize) -> Result<T> {
        let a = self.in_dist.marginal()[x] * self.prior_in;
        let b = self.out_dist.mass()[x] * self.prior_out();
        let total = a + b;
        if !(total > T::zero()) {
            return Err(OodError::UndefinedPosterior { point: x });
        }
        Ok(a / total)
    }

    /// `p(i | x)` for every point, `None` where undefined.
    pub fn posteriors(&self) -> Vec<Option<T>> {
        (0..self.len()).map(|x| self.posterior_in(x).ok()).collect()
    }

    /// `p(· | x, i)`; errors where `p(x|i) = 0`.
    pub fn class_conditional(&self, x: usize) -> Result<Vec<T>> {
        let m = self.in_dist.marginal()[x];
        if !(m > T::zero()) {
            return Err(OodError::UndefinedConditional { point: x });
        }
        Ok((0..self.classes()).map(|k| self.in_dist.joint_at(k, x) / m).collect())
    }

    /// Class conditional with the uniform vector substituted where undefined.
    pub fn class_conditional_or_uniform(&self, x: usize) -> Vec<T> {
        self.class_conditional(x)
            .unwrap_or_else(|_| vec![T::one() / T::from_usize_lossy(self.classes()); self.classes()])
    }

    /// Same in-distribution and prior, different out-distribution.
    pub fn with_out(&self, out_dist: FiniteDistribution<T>) -> Result<Self> {
        Self::new(self.in_dist.clone(), out_dist, self.prior_in)
    }

    pub fn with_prior(&self, prior_in: T) -> Result<Self> {
        Self::new(self.in_dist.clone(), self.out_dist.clone(), prior_in)
    }

    pub fn with_in(&self, in_dist: LabeledInDistribution<T>) -> Result<Self> {
        Self::new(in_dist, self.out_dist.clone(), self.prior_in)
    }

    pub fn to_file(&self) -> ScenarioFile<T> {
        ScenarioFile {
            points: self.domain().points().to_vec(),
            coordinates: self.domain().coordinates().map(|c| c.to_vec()),
            classes: self.classes(),
            joint: self.in_dist.joint().to_vec(),
            out_mass: self.out_dist.mass().to_vec(),
            prior_in: self.prior_in,
        }
    }
}

/// Serialised scenario: `{points, coordinates?, K, joint, out_mass, prior_in}`
/// with `joint` stored `K × N` row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile<T> {
    pub points: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinates: Option<Vec<Vec<f64>>>,
    #[serde(rename = "K")]
    pub classes: usize,
    pub joint: Vec<T>,
    pub out_mass: Vec<T>,
    pub prior_in: T,
}

impl<T: Scalar> ScenarioFile<T> {
    pub fn into_scenario(self) -> Result<OodScenario<T>> {
        let domain = Arc::new(DiscreteDomain::new(self.points, self.coordinates)?);
        let in_dist = LabeledInDistribution::new(domain.clone(), self.classes, self.joint)?;
        let out_dist = FiniteDistribution::new(domain, self.out_mass)?;
        OodScenario::new(in_dist, out_dist, self.prior_in)
    }
}

/// Largest `α` for which [`complement_distribution`] stays non-negative:
/// `1 / (N · max_x p(x))`.
pub fn complement_alpha_max<T: Scalar>(in_marginal: &FiniteDistribution<T>) -> T {
    let max = in_marginal.mass().iter().copied().fold(T::zero(), T::max);
    T::one() / (T::from_usize_lossy(in_marginal.len()) * max)
}

/// Discrete complement `q(x) = (1/N − α p(x)) / (1 − α)`, which puts mass
/// where the in-distribution has little.
pub fn complement_distribution<T: Scalar>(in_marginal: &FiniteDistribution<T>, alpha: T) -> Result<FiniteDistribution<T>> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(OodError::InvalidParameter(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    let n = T::from_usize_lossy(in_marginal.len());
    let base = T::one() / n;
    let slack = T::epsilon() * T::lit(8.0) * base;
    let mut mass = Vec::with_capacity(in_marginal.len());
    for &p in in_marginal.mass() {
        let raw = base - alpha * p;
        if raw < -slack {
            return Err(OodError::AlphaTooLarge {
                alpha: alpha.as_f64(),
                max: complement_alpha_max(in_marginal).as_f64(),
            });
        }
        mass.push(raw.max(T::zero()) / (T::one() - alpha));
    }
    FiniteDistribution::new(in_marginal.domain().clone(), mass)
}

fn cumulative<T: Scalar>(mass: &[T]) -> Vec<f64> {
    let mut acc = 0.0;
    mass.iter()
        .map(|m| {
            acc += m.as_f64();
            acc
        })
        .collect()
}

fn draw(cdf: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total = *cdf.last().expect("non-empty cdf");
    let u = rng.gen::<f64>() * total;
    // first index with cdf > u; zero-mass points are never selected
    let idx = cdf.partition_point(|&c| c <= u);
    idx.min(cdf.len() - 1)
}

/// `n` i.i.d. point indices drawn from `dist`; deterministic per `seed`.
pub fn sample<T: Scalar>(dist: &FiniteDistribution<T>, n: usize, seed: u64) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let cdf = cumulative(dist.mass());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| draw(&cdf, &mut rng)).collect()
}

/// `n` labeled draws `(point, class)` from the joint in-distribution.
pub fn sample_labeled<T: Scalar>(in_dist: &LabeledInDistribution<T>, n: usize, seed: u64) -> Vec<(usize, usize)> {
    if n == 0 {
        return Vec::new();
    }
    let cdf = cumulative(in_dist.joint());
    let points = in_dist.domain().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let flat = draw(&cdf, &mut rng);
            (flat % points, flat / points)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn domain(n: usize) -> Arc<DiscreteDomain> {
        Arc::new(DiscreteDomain::indexed(n).unwrap())
    }

    /// Single-class-shaped scenario with the given marginals (labels split evenly).
    fn scenario(p_in: &[f64], p_out: &[f64], prior: f64) -> OodScenario<f64> {
        let d = domain(p_in.len());
        let marg = FiniteDistribution::new(d.clone(), p_in.to_vec()).unwrap();
        let cond = vec![vec![0.5, 0.5]; p_in.len()];
        let in_dist = LabeledInDistribution::from_marginal_and_conditionals(&marg, 2, &cond).unwrap();
        OodScenario::new(in_dist, FiniteDistribution::new(d, p_out.to_vec()).unwrap(), prior).unwrap()
    }

    #[test]
    fn domain_rejects_duplicates_and_empty() {
        assert!(DiscreteDomain::new(vec![], None).is_err());
        assert!(DiscreteDomain::new(vec!["a".into(), "a".into()], None).is_err());
        assert!(DiscreteDomain::new(vec!["a".into()], Some(vec![vec![0.0], vec![1.0]])).is_err());
    }

    #[test]
    fn distribution_validation() {
        let d = domain(2);
        assert!(FiniteDistribution::new(d.clone(), vec![0.5, 0.6]).is_err());
        assert!(FiniteDistribution::new(d.clone(), vec![-0.1, 1.1]).is_err());
        assert!(FiniteDistribution::new(d.clone(), vec![0.5]).is_err());
        assert!(FiniteDistribution::new(d, vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn posterior_examples() {
        let s = scenario(&[0.2, 0.8], &[0.2, 0.8], 0.5);
        assert_eq!(s.posterior_in(0).unwrap(), 0.5);

        let s = scenario(&[0.3, 0.7], &[0.0, 1.0], 0.4);
        assert_eq!(s.posterior_in(0).unwrap(), 1.0);

        let s = scenario(&[0.1, 0.9], &[0.3, 0.7], 0.25);
        let expected = 0.1 * 0.25 / (0.1 * 0.25 + 0.3 * 0.75);
        assert!((expected - 0.1_f64).abs() < 1e-15);
        assert!((s.posterior_in(0).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn posterior_undefined_outside_both_supports() {
        let s = scenario(&[0.0, 1.0], &[0.0, 1.0], 0.5);
        assert_eq!(s.posterior_in(0), Err(OodError::UndefinedPosterior { point: 0 }));
        assert_eq!(s.posteriors()[0], None);
    }

    #[test]
    fn class_conditional_examples() {
        let d = domain(2);
        let joint = vec![0.02, 0.5, 0.06, 0.42];
        let in_dist = LabeledInDistribution::new(d.clone(), 2, joint).unwrap();
        let s = OodScenario::new(in_dist, FiniteDistribution::uniform(d), 0.5).unwrap();
        let c = s.class_conditional(0).unwrap();
        assert!((c[0] - 0.25f64).abs() < 1e-15 && (c[1] - 0.75).abs() < 1e-15);

        let s = scenario(&[0.0, 1.0], &[0.5, 0.5], 0.5);
        assert_eq!(s.class_conditional(0), Err(OodError::UndefinedConditional { point: 0 }));
        assert_eq!(s.class_conditional_or_uniform(0), vec![0.5, 0.5]);
    }

    #[test]
    fn complement_examples() {
        let d = domain(2);
        let p = FiniteDistribution::new(d.clone(), vec![0.8, 0.2]).unwrap();
        let q = complement_distribution(&p, 0.25).unwrap();
        // (0.5 - 0.2) / 0.75 = 0.4, (0.5 - 0.05) / 0.75 = 0.6
        assert!((q.mass()[0] - 0.4f64).abs() < 1e-15 && (q.mass()[1] - 0.6).abs() < 1e-15);

        let u = FiniteDistribution::<f64>::uniform(domain(5));
        let q = complement_distribution(&u, 0.7).unwrap();
        assert!(q.mass().iter().all(|&m| (m - 0.2).abs() < 1e-15));

        let q = complement_distribution(&p, 1e-9).unwrap();
        assert!(q.mass().iter().all(|&m| (m - 0.5f64).abs() < 1e-9));

        // alpha_max = 1 / (2 * 0.8) = 0.625
        assert!((complement_alpha_max(&p) - 0.625f64).abs() < 1e-15);
        assert!(complement_distribution(&p, 0.625).is_ok());
        assert!(matches!(complement_distribution(&p, 0.7), Err(OodError::AlphaTooLarge { .. })));
        assert!(complement_distribution(&p, 0.0).is_err());
    }

    #[test]
    fn sampling_contract() {
        let d = domain(2);
        let p = FiniteDistribution::new(d.clone(), vec![0.5, 0.5]).unwrap();
        assert!(sample(&p, 0, 1).is_empty());
        assert_eq!(sample(&p, 100, 7), sample(&p, 100, 7));

        let point = FiniteDistribution::<f64>::point_mass(d, 1).unwrap();
        assert!(sample(&point, 50, 3).iter().all(|&x| x == 1));

        let draws = sample(&p, 100_000, 42);
        let ones = draws.iter().filter(|&&x| x == 1).count();
        assert!((49_000..=51_000).contains(&ones), "count {ones}");
    }

    #[test]
    fn labeled_sampling_respects_joint() {
        let d = domain(2);
        // class 0 only at x0, class 1 only at x1
        let in_dist = LabeledInDistribution::new(d, 2, vec![0.3, 0.0, 0.0, 0.7]).unwrap();
        let draws = sample_labeled(&in_dist, 10_000, 5);
        assert!(draws.iter().all(|&(x, y)| x == y));
        let ones = draws.iter().filter(|&&(x, _)| x == 1).count();
        assert!((6_700..=7_300).contains(&ones));
    }

    #[test]
    fn law_of_total_probability() {
        let s = scenario(&[0.1, 0.2, 0.3, 0.4, 0.0], &[0.3, 0.0, 0.2, 0.1, 0.4], 0.3);
        let total: f64 = (0..s.len()).map(|x| s.mixture(x) * s.posterior_in(x).unwrap()).sum();
        assert!((total - 0.3).abs() < 1e-10);
    }

    #[test]
    fn scenario_file_roundtrip() {
        let s = scenario(&[0.1, 0.9], &[0.3, 0.7], 0.25);
        let json = serde_json::to_string(&s.to_file()).unwrap();
        assert!(json.contains("\"K\":2"));
        let back: ScenarioFile<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_scenario().unwrap(), s);
    }

    #[test]
    fn works_in_single_precision() {
        let d = Arc::new(DiscreteDomain::indexed(3).unwrap());
        let marg = FiniteDistribution::<f32>::new(d.clone(), vec![0.2, 0.3, 0.5]).unwrap();
        let in_dist =
            LabeledInDistribution::from_marginal_and_conditionals(&marg, 2, &vec![vec![0.5f32, 0.5]; 3]).unwrap();
        let s = OodScenario::new(in_dist, FiniteDistribution::uniform(d), 0.5f32).unwrap();
        assert!((s.posterior_in(2).unwrap() - 0.5 / (0.5 + 1.0 / 3.0)).abs() < 1e-6);
    }
}
