//! Closed-form Bayes-optimal predictions of each training objective.
//!
//! Every oracle is a function of two scenario quantities only: the posterior
//! `p(i|x)` and the class conditional `p(y|x,i)`. Where the class conditional
//! is undefined (points outside the in-support) the uniform vector is used,
//! which is the limit of the confidence-loss optimum as `p(i|x) → 0`.
//!
//! Points outside both supports get no prediction (`None` rows) and a `-inf`
//! score; population metrics never weight them.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dist::{DiscreteDomain, FiniteDistribution, LabeledInDistribution, OodScenario};
use crate::error::{OodError, Result};
use crate::scalar::Scalar;
use crate::scores::{score_msp, score_s2, score_s3, score_s3_from_bgc, ScoreVector};

/// Named score vectors, in a fixed order.
pub type NamedScores<T> = Vec<(String, ScoreVector<T>)>;

/// Per-point predictive distribution (or scalar probability for a binary head).
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveTable<T> {
    domain: Arc<DiscreteDomain>,
    width: usize,
    rows: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> PredictiveTable<T> {
    pub fn new(domain: Arc<DiscreteDomain>, width: usize, rows: Vec<Option<Vec<T>>>) -> Result<Self> {
        if rows.len() != domain.len() {
            return Err(OodError::shape(domain.len(), rows.len()));
        }
        for (x, row) in rows.iter().enumerate() {
            let Some(row) = row else { continue };
            if row.len() != width {
                return Err(OodError::shape(format!("row width {width}"), row.len()));
            }
            if row.iter().any(|&v| !(v >= T::zero() && v <= T::one())) {
                return Err(OodError::InvalidMass(format!("row {x} has entries outside [0, 1]")));
            }
            if width > 1 {
                let total: T = row.iter().copied().sum();
                if (total - T::one()).abs() > T::mass_tolerance() {
                    return Err(OodError::InvalidMass(format!("row {x} sums to {total}")));
                }
            }
        }
        Ok(Self { domain, width, rows })
    }

    pub fn domain(&self) -> &Arc<DiscreteDomain> {
        &self.domain
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rows(&self) -> &[Option<Vec<T>>] {
        &self.rows
    }

    pub fn row(&self, x: usize) -> Option<&[T]> {
        self.rows[x].as_deref()
    }

    /// Maps each defined row to a score; undefined rows score `-inf`.
    pub fn score_by(&self, f: impl Fn(&[T]) -> T) -> ScoreVector<T> {
        let values = self.rows.iter().map(|r| r.as_deref().map(&f).unwrap_or(T::neg_infinity())).collect();
        ScoreVector::new(self.domain.clone(), values).expect("oracle scores are NaN-free")
    }

    /// CSV `point_id,p0,p1,...`; undefined rows have empty cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("point_id");
        for k in 0..self.width {
            out.push_str(&format!(",p{k}"));
        }
        out.push('\n');
        for (id, row) in self.domain.points().iter().zip(&self.rows) {
            out.push_str(id);
            match row {
                Some(r) => r.iter().for_each(|v| out.push_str(&format!(",{v}"))),
                None => (0..self.width).for_each(|_| out.push(',')),
            }
            out.push('\n');
        }
        out
    }
}

/// Energy margins `m_in < m_out`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyMargins<T> {
    pub m_in: T,
    pub m_out: T,
}

impl<T: Scalar> EnergyMargins<T> {
    pub fn new(m_in: T, m_out: T) -> Result<Self> {
        if !(m_in < m_out) || !m_in.is_finite() || !m_out.is_finite() {
            return Err(OodError::InvalidParameter(format!("margins need m_in < m_out, got {m_in}, {m_out}")));
        }
        Ok(Self { m_in, m_out })
    }

    /// Optimal negative energy `p(i|x) (m_out − m_in) − m_out`.
    pub fn optimal_neg_energy(&self, posterior: T) -> T {
        posterior * (self.m_out - self.m_in) - self.m_out
    }
}

impl<T: Scalar> Default for EnergyMargins<T> {
    fn default() -> Self {
        Self { m_in: T::zero(), m_out: T::one() }
    }
}

fn table<T: Scalar>(scenario: &OodScenario<T>, width: usize, row: impl Fn(usize, T) -> Vec<T>) -> PredictiveTable<T> {
    let rows = (0..scenario.len()).map(|x| scenario.posterior_in(x).ok().map(|p| row(x, p))).collect();
    PredictiveTable { domain: scenario.domain().clone(), width, rows }
}

/// Binary discriminator optimum: `p(i|x)`.
pub fn oracle_binary<T: Scalar>(scenario: &OodScenario<T>) -> PredictiveTable<T> {
    table(scenario, 1, |_, p| vec![p])
}

/// Confidence-loss (outlier exposure) optimum:
/// `p(y|x) = p(i|x) p(y|x,i) + (1 − p(i|x)) / K`.
pub fn oracle_oe<T: Scalar>(scenario: &OodScenario<T>) -> PredictiveTable<T> {
    let inv_k = T::one() / T::from_usize_lossy(scenario.classes());
    table(scenario, scenario.classes(), |x, p| {
        scenario
            .class_conditional_or_uniform(x)
            .into_iter()
            .map(|c| p * c + (T::one() - p) * inv_k)
            .collect()
    })
}

/// Background-class optimum: `(p(i|x) p(·|x,i), 1 − p(i|x))`.
pub fn oracle_bgc<T: Scalar>(scenario: &OodScenario<T>) -> PredictiveTable<T> {
    table(scenario, scenario.classes() + 1, |x, p| {
        let mut row: Vec<T> = scenario.class_conditional_or_uniform(x).into_iter().map(|c| p * c).collect();
        row.push(T::one() - p);
        row
    })
}

/// Energy-margin optimum: class probabilities `p(·|x,i)` and negative energy
/// `p(i|x)(m_out − m_in) − m_out`. At `p(i|x) ∈ {0, 1}` every energy beyond
/// the corresponding margin is optimal; the margin itself is reported.
pub fn oracle_energy<T: Scalar>(scenario: &OodScenario<T>, margins: &EnergyMargins<T>) -> (PredictiveTable<T>, ScoreVector<T>) {
    let probs = table(scenario, scenario.classes(), |x, _| scenario.class_conditional_or_uniform(x));
    let neg_energy = oracle_binary(scenario).score_by(|r| margins.optimal_neg_energy(r[0]));
    (probs, neg_energy)
}

/// The training objectives whose optima are analysed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    /// Plain classifier on the in-distribution (no OOD term).
    Classifier,
    Binary,
    Oe,
    Bgc,
    Energy,
    /// Classifier plus binary discriminator (shared or separate): the optimum
    /// of both heads is `p(y|x,i)` and `p(i|x)`.
    Shared,
}

/// The optimal predictive table of `method`.
///
/// Rows are `p(i|x)` for `Binary`, class probabilities for `Classifier`,
/// `Oe` and `Energy`, the `K+1` outputs for `Bgc`, and
/// `(p(·|x,i), p(i|x))` for `Shared`.
pub fn oracle_table<T: Scalar>(scenario: &OodScenario<T>, method: OracleMethod) -> PredictiveTable<T> {
    let k = scenario.classes();
    match method {
        OracleMethod::Binary => oracle_binary(scenario),
        OracleMethod::Oe => oracle_oe(scenario),
        OracleMethod::Bgc => oracle_bgc(scenario),
        OracleMethod::Classifier | OracleMethod::Energy => {
            table(scenario, k, |x, _| scenario.class_conditional_or_uniform(x))
        }
        OracleMethod::Shared => table(scenario, k + 1, |x, p| {
            let mut r = scenario.class_conditional_or_uniform(x);
            r.push(p);
            r
        }),
    }
}

/// Score vectors a method exposes at its Bayes optimum.
///
/// - `Binary`: `s1`
/// - `Oe`, `Classifier`: `msp` (for OE this is `s3`)
/// - `Bgc`, `Shared`: `s1`, `s2`, `s3`
/// - `Energy`: `energy` (the optimal `−E`) and `msp`
pub fn oracle_scores<T: Scalar>(scenario: &OodScenario<T>, method: OracleMethod, margins: Option<&EnergyMargins<T>>) -> NamedScores<T> {
    match method {
        OracleMethod::Binary => vec![("s1".into(), oracle_binary(scenario).score_by(|r| r[0]))],
        OracleMethod::Oe => vec![("msp".into(), oracle_oe(scenario).score_by(score_msp))],
        OracleMethod::Classifier => {
            let t = table(scenario, scenario.classes(), |x, _| scenario.class_conditional_or_uniform(x));
            vec![("msp".into(), t.score_by(score_msp))]
        }
        OracleMethod::Bgc => {
            let bgc = oracle_bgc(scenario);
            let k = scenario.classes();
            vec![
                ("s1".into(), bgc.score_by(|r| T::one() - r[k])),
                ("s2".into(), bgc.score_by(|r| score_msp(&r[..k]))),
                ("s3".into(), bgc.score_by(score_s3_from_bgc)),
            ]
        }
        OracleMethod::Shared => {
            let k = scenario.classes();
            // row = (p(·|x,i), p(i|x))
            let t = table(scenario, k + 1, |x, p| {
                let mut r = scenario.class_conditional_or_uniform(x);
                r.push(p);
                r
            });
            vec![
                ("s1".into(), t.score_by(|r| r[k])),
                ("s2".into(), t.score_by(|r| score_s2(r[k], &r[..k]))),
                ("s3".into(), t.score_by(|r| score_s3(r[k], &r[..k]))),
            ]
        }
        OracleMethod::Energy => {
            let default = EnergyMargins::default();
            let (probs, neg_energy) = oracle_energy(scenario, margins.unwrap_or(&default));
            vec![("energy".into(), neg_energy), ("msp".into(), probs.score_by(score_msp))]
        }
    }
}

/// The coin scenario: `K` national sides (in-only, one-hot labels), one
/// common side shared by all classes (in-only, uniform labels) and chip
/// points (out-only).
#[derive(Clone, Debug)]
pub struct CoinScenario<T> {
    pub scenario: OodScenario<T>,
    pub national: Vec<usize>,
    pub common: usize,
    pub chips: Vec<usize>,
}

impl<T: Scalar> CoinScenario<T> {
    /// In-distribution restricted to the common side; out-distribution
    /// unchanged. Its AUC is the common-side-versus-chips separation.
    pub fn common_vs_chips(&self) -> Result<OodScenario<T>> {
        let common = self.common;
        let in_dist = self.scenario.in_dist().restrict(|x| x == common)?;
        self.scenario.with_in(in_dist)
    }
}

/// Builds the coin scenario.
///
/// `common_fraction` is the share of in-distribution mass on the common side
/// (rounded to a dyadic grid of spacing `2^11 ε`).
/// Each chip point carries `chip_mass` of the out-distribution; the number of
/// chips is `⌈1 / chip_mass⌉`, the last one taking the remainder.
pub fn build_coin_scenario<T: Scalar>(classes: usize, common_fraction: T, chip_mass: T, prior_in: T) -> Result<CoinScenario<T>> {
    if classes < 2 {
        return Err(OodError::InvalidMass(format!("need at least 2 classes, got {classes}")));
    }
    if !(common_fraction > T::zero() && common_fraction < T::one()) {
        return Err(OodError::InvalidMass(format!("common fraction {common_fraction} must lie in (0, 1)")));
    }
    if !(chip_mass > T::zero() && chip_mass <= T::one()) {
        return Err(OodError::InvalidMass(format!("chip mass {chip_mass} must lie in (0, 1]")));
    }
    if !(prior_in > T::zero() && prior_in < T::one()) {
        return Err(OodError::InvalidMass(format!("prior {prior_in} must lie in (0, 1)")));
    }
    let chips = (T::one() / chip_mass - T::lit(1e-9)).ceil().to_usize().unwrap_or(1).max(1);
    let mut points: Vec<String> = (1..=classes).map(|k| format!("national_{k}")).collect();
    points.push("common".into());
    points.extend((1..=chips).map(|j| format!("chip_{j}")));
    let n = points.len();
    let domain = Arc::new(DiscreteDomain::new(points, None)?);

    let k_t = T::from_usize_lossy(classes);
    // Per-class common-side mass on a dyadic grid: summing K copies is then
    // exact, so p(y|common, i) is bit-exactly 1/K and the s3 ties are exact.
    let grid = T::epsilon() * T::lit(2048.0);
    let per_class_common = (common_fraction / k_t / grid).round() * grid;
    if !(per_class_common > T::zero()) {
        return Err(OodError::InvalidMass(format!("common fraction {common_fraction} too small")));
    }
    let national_mass = (T::one() - per_class_common * k_t) / k_t;
    let common = classes;
    let mut joint = vec![T::zero(); classes * n];
    for k in 0..classes {
        joint[k * n + k] = national_mass;
        joint[k * n + common] = per_class_common;
    }
    let in_dist = LabeledInDistribution::new(domain.clone(), classes, joint)?;

    let mut out_mass = vec![T::zero(); n];
    let mut left = T::one();
    for j in 0..chips {
        let m = if j + 1 == chips { left } else { chip_mass };
        out_mass[common + 1 + j] = m;
        left -= m;
    }
    let out_dist = FiniteDistribution::new(domain, out_mass)?;

    Ok(CoinScenario {
        scenario: OodScenario::new(in_dist, out_dist, prior_in)?,
        national: (0..classes).collect(),
        common,
        chips: (common + 1..n).collect(),
    })
}
