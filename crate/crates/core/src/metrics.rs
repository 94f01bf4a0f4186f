//! AUC and FPR at a fixed TPR, on samples and as exact population values.
//!
//! Convention: higher score means "in-distribution"; a point is predicted
//! in-distribution iff `score ≥ t`. Ties count one half in the AUC.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::dist::{same_domain, OodScenario};
use crate::error::{OodError, Result};
use crate::scalar::Scalar;
use crate::scores::ScoreVector;

/// Slack when comparing an accumulated TPR against the requested level.
const TPR_SLACK: f64 = 1e-12;

#[inline]
fn cmp<T: Scalar>(a: T, b: T) -> Ordering {
    a.partial_cmp(&b).expect("NaN-free scores")
}

fn check_nonempty<T: Scalar>(in_scores: &[T], out_scores: &[T]) -> Result<()> {
    if in_scores.is_empty() || out_scores.is_empty() {
        return Err(OodError::EmptySample);
    }
    if in_scores.iter().chain(out_scores).any(|v| v.is_nan()) {
        return Err(OodError::InvalidParameter("NaN score in sample".into()));
    }
    Ok(())
}

/// Sample AUC: the probability that a random in-score beats a random
/// out-score, ties counting one half.
///
/// Computed from midranks of the pooled sample (Mann-Whitney U). Ranks are
/// kept doubled so everything stays in exact integer arithmetic.
pub fn auc<T: Scalar>(in_scores: &[T], out_scores: &[T]) -> Result<T> {
    check_nonempty(in_scores, out_scores)?;
    let n = in_scores.len() as u128;
    let m = out_scores.len() as u128;
    let mut pooled: Vec<(T, bool)> = in_scores
        .iter()
        .map(|&s| (s, true))
        .chain(out_scores.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_by(|a, b| cmp(a.0, b.0));

    // twice the rank sum of the in-sample, ranks starting at 1
    let mut rank_sum2: u128 = 0;
    let mut start = 0usize;
    while start < pooled.len() {
        let mut end = start + 1;
        while end < pooled.len() && pooled[end].0 == pooled[start].0 {
            end += 1;
        }
        let midrank2 = (start + 1 + end) as u128;
        let in_group = pooled[start..end].iter().filter(|p| p.1).count() as u128;
        rank_sum2 += in_group * midrank2;
        start = end;
    }
    let u2 = rank_sum2 - n * (n + 1);
    Ok(T::lit(u2 as f64 / (2 * n * m) as f64))
}

/// Smallest `k` with `k / n ≥ q`.
fn required_count(q: f64, n: usize) -> usize {
    let k = (q * n as f64 - TPR_SLACK * n as f64).ceil();
    (k.max(1.0) as usize).min(n)
}

fn check_level(q: f64) -> Result<()> {
    if q > 0.0 && q <= 1.0 {
        Ok(())
    } else {
        Err(OodError::InvalidParameter(format!("TPR level {q} must lie in (0, 1]")))
    }
}

/// Sample FPR at TPR level `q`: the threshold is the `⌈q·n⌉`-th largest
/// in-score (the largest threshold reaching TPR ≥ q), and the result is the
/// fraction of out-scores at or above it.
pub fn fpr_at_tpr<T: Scalar>(in_scores: &[T], out_scores: &[T], q: f64) -> Result<T> {
    check_nonempty(in_scores, out_scores)?;
    check_level(q)?;
    let mut sorted = in_scores.to_vec();
    sorted.sort_by(|a, b| cmp(*b, *a));
    let threshold = sorted[required_count(q, sorted.len()) - 1];
    let above = out_scores.iter().filter(|&&s| s >= threshold).count();
    Ok(T::from_usize_lossy(above) / T::from_usize_lossy(out_scores.len()))
}

fn check_score<T: Scalar>(scenario: &OodScenario<T>, score: &ScoreVector<T>) -> Result<()> {
    if !same_domain(scenario.domain(), score.domain()) {
        return Err(OodError::InvalidDomain("score and scenario live on different domains".into()));
    }
    Ok(())
}

/// Support points sorted by ascending score, ties kept in index order.
fn support_order<T: Scalar>(scenario: &OodScenario<T>, values: &[T]) -> Vec<usize> {
    let in_mass = scenario.in_dist().marginal();
    let out_mass = scenario.out_dist().mass();
    let mut order: Vec<usize> = (0..values.len())
        .filter(|&x| in_mass[x] > T::zero() || out_mass[x] > T::zero())
        .collect();
    order.sort_by(|&a, &b| cmp(values[a], values[b]));
    order
}

/// Population AUC `Σ_{x,z} p(x|i) p(z|o) [1(s(x) > s(z)) + ½ 1(s(x) = s(z))]`
/// of the scenario's in- versus out-distribution.
pub fn auc_exact<T: Scalar>(scenario: &OodScenario<T>, score: &ScoreVector<T>) -> Result<T> {
    check_score(scenario, score)?;
    let values = score.values();
    let in_mass = scenario.in_dist().marginal();
    let out_mass = scenario.out_dist().mass();
    let order = support_order(scenario, values);
    let half = T::lit(0.5);

    let mut groups = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let (mut in_g, mut out_g) = (T::zero(), T::zero());
        for &x in &order[start..end] {
            in_g += in_mass[x];
            out_g += out_mass[x];
        }
        groups.push((in_g, out_g));
        start = end;
    }
    // normalising by sums taken in the same order makes a perfect
    // separation exactly 1 and a single tie group exactly 1/2
    let in_total: T = groups.iter().map(|g| g.0).fold(T::zero(), |a, b| a + b);
    let out_total: T = groups.iter().map(|g| g.1).fold(T::zero(), |a, b| a + b);
    let mut out_below = T::zero();
    let mut total = T::zero();
    for (in_g, out_g) in groups {
        total += in_g * ((out_below + half * out_g) / out_total);
        out_below += out_g;
    }
    Ok(total / in_total)
}

/// Population FPR at TPR level `q`: `t* = sup{t : P_in(s ≥ t) ≥ q}`,
/// returning `P_out(s ≥ t*)`.
pub fn fpr_at_tpr_exact<T: Scalar>(scenario: &OodScenario<T>, score: &ScoreVector<T>, q: f64) -> Result<T> {
    check_score(scenario, score)?;
    check_level(q)?;
    let values = score.values();
    let in_mass = scenario.in_dist().marginal();
    let out_mass = scenario.out_dist().mass();
    let mut order = support_order(scenario, values);
    order.reverse();
    // descending by score; within ties restore index order so the
    // accumulation order only depends on the induced ranking
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        order[start..end].reverse();
        start = end;
    }

    let level = T::lit(q - TPR_SLACK);
    let (mut tpr, mut fpr) = (T::zero(), T::zero());
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        for &x in &order[start..end] {
            tpr += in_mass[x];
            fpr += out_mass[x];
        }
        if tpr >= level {
            return Ok(fpr);
        }
        start = end;
    }
    Ok(fpr)
}

/// Population accuracy of a predictor: `Σ_{x,y} p(y,x|i) 1[argmax pred(x) = y]`.
/// Rows may be wider than `K` (a trailing background class is ignored by
/// taking the argmax over the first `K` entries only).
pub fn accuracy_exact<T: Scalar>(scenario: &OodScenario<T>, predictions: &[Option<Vec<T>>]) -> Result<T> {
    let k = scenario.classes();
    if predictions.len() != scenario.len() {
        return Err(OodError::shape(scenario.len(), predictions.len()));
    }
    let mut acc = T::zero();
    for (x, row) in predictions.iter().enumerate() {
        if !scenario.in_support(x) {
            continue;
        }
        let row = row.as_ref().ok_or(OodError::UndefinedPosterior { point: x })?;
        if row.len() < k {
            return Err(OodError::shape(format!("width >= {k}"), row.len()));
        }
        let mut best = 0;
        for c in 1..k {
            if row[c] > row[best] {
                best = c;
            }
        }
        acc += scenario.in_dist().joint_at(best, x);
    }
    Ok(acc)
}

/// Accuracy of the Bayes classifier `argmax_y p(y|x,i)`.
pub fn bayes_accuracy<T: Scalar>(scenario: &OodScenario<T>) -> T {
    (0..scenario.len())
        .map(|x| (0..scenario.classes()).map(|k| scenario.in_dist().joint_at(k, x)).fold(T::zero(), T::max))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricCell<T> {
    pub auc: T,
    pub fpr_at_tpr: T,
    pub tpr_level: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow<T> {
    pub method: String,
    pub score: String,
    pub accuracy: Option<T>,
    pub cells: Vec<MetricCell<T>>,
    pub mean_auc: Option<T>,
    pub mean_fpr: Option<T>,
}

impl<T> ReportRow<T> {
    pub fn label(&self) -> String {
        format!("{} ({})", self.method, self.score)
    }
}

/// Method × test-out-distribution table. Means skip the columns flagged as
/// training out-distributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport<T> {
    pub columns: Vec<String>,
    pub training_out: Vec<bool>,
    pub tpr_level: T,
    pub rows: Vec<ReportRow<T>>,
}

/// A test out-distribution column: the scenario carries the in-distribution
/// and the column's out-distribution.
pub struct OutColumn<'a, T> {
    pub name: String,
    pub scenario: &'a OodScenario<T>,
    pub training: bool,
}

/// Scores of one (method, score) row, one entry per column.
pub struct ScoredRow<T> {
    pub method: String,
    pub score: String,
    pub accuracy: Option<T>,
    pub scores: Vec<Option<ScoreVector<T>>>,
}

impl<T: Scalar> ScoredRow<T> {
    /// The same score vector for every column (scores depend on `x` only).
    pub fn shared(method: impl Into<String>, score: impl Into<String>, accuracy: Option<T>, values: ScoreVector<T>, columns: usize) -> Self {
        Self { method: method.into(), score: score.into(), accuracy, scores: vec![Some(values); columns] }
    }
}

fn mean_over<T: Scalar>(values: impl Iterator<Item = T>) -> Option<T> {
    let (sum, count) = values.fold((T::zero(), 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / T::from_usize_lossy(count))
}

impl<T: Scalar> MetricReport<T> {
    fn compute_means(&mut self) {
        let flags = self.training_out.clone();
        for row in &mut self.rows {
            let kept = || row.cells.iter().zip(&flags).filter(|(_, &t)| !t).map(|(c, _)| *c);
            row.mean_auc = mean_over(kept().map(|c| c.auc));
            row.mean_fpr = mean_over(kept().map(|c| c.fpr_at_tpr));
        }
    }

    pub fn has_accuracy(&self) -> bool {
        self.rows.iter().any(|r| r.accuracy.is_some())
    }

    /// The mean column is only emitted when some column is a training
    /// out-distribution that has to be excluded.
    pub fn has_mean(&self) -> bool {
        self.training_out.iter().any(|&t| t)
    }

    pub fn row(&self, method: &str, score: &str) -> Option<&ReportRow<T>> {
        self.rows.iter().find(|r| r.method == method && r.score == score)
    }

    pub fn cell(&self, method: &str, score: &str, column: &str) -> Option<&MetricCell<T>> {
        let c = self.columns.iter().position(|n| n == column)?;
        self.row(method, score).map(|r| &r.cells[c])
    }

    /// Fixed 6-decimal CSV of one metric: `model,acc?,mean_<metric>?,<columns>`.
    pub fn to_csv(&self, metric: ReportMetric) -> String {
        let acc = self.has_accuracy();
        let mean = self.has_mean();
        let mut out = String::from("model");
        if acc {
            out.push_str(",acc");
        }
        if mean {
            out.push_str(",mean_");
            out.push_str(metric.key());
        }
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        let fmt = |v: Option<T>| v.map(|v| format!("{:.6}", v.as_f64())).unwrap_or_default();
        for row in &self.rows {
            out.push_str(&row.label());
            if acc {
                out.push(',');
                out.push_str(&fmt(row.accuracy));
            }
            if mean {
                out.push(',');
                out.push_str(&fmt(match metric {
                    ReportMetric::Fpr => row.mean_fpr,
                    ReportMetric::Auc => row.mean_auc,
                }));
            }
            for cell in &row.cells {
                out.push(',');
                out.push_str(&fmt(Some(match metric {
                    ReportMetric::Fpr => cell.fpr_at_tpr,
                    ReportMetric::Auc => cell.auc,
                })));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportMetric {
    Fpr,
    Auc,
}

impl ReportMetric {
    fn key(self) -> &'static str {
        match self {
            ReportMetric::Fpr => "fpr",
            ReportMetric::Auc => "auc",
        }
    }
}

/// Assembles a [`MetricReport`] from exact population metrics.
pub fn build_report<T: Scalar>(columns: &[OutColumn<'_, T>], rows: Vec<ScoredRow<T>>, tpr_level: f64) -> Result<MetricReport<T>> {
    check_level(tpr_level)?;
    let mut report = MetricReport {
        columns: columns.iter().map(|c| c.name.clone()).collect(),
        training_out: columns.iter().map(|c| c.training).collect(),
        tpr_level: T::lit(tpr_level),
        rows: Vec::with_capacity(rows.len()),
    };
    for row in rows {
        let label = format!("{} ({})", row.method, row.score);
        let mut cells = Vec::with_capacity(columns.len());
        for (c, col) in columns.iter().enumerate() {
            let score = row
                .scores
                .get(c)
                .and_then(Option::as_ref)
                .ok_or_else(|| OodError::MissingCell { row: label.clone(), column: col.name.clone() })?;
            cells.push(MetricCell {
                auc: auc_exact(col.scenario, score)?,
                fpr_at_tpr: fpr_at_tpr_exact(col.scenario, score, tpr_level)?,
                tpr_level: T::lit(tpr_level),
            });
        }
        report.rows.push(ReportRow {
            method: row.method,
            score: row.score,
            accuracy: row.accuracy,
            cells,
            mean_auc: None,
            mean_fpr: None,
        });
    }
    report.compute_means();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::dist::{DiscreteDomain, FiniteDistribution, LabeledInDistribution};
    use proptest::prelude::*;

    fn pairwise_auc(a: &[f64], b: &[f64]) -> f64 {
        let mut twice = 0u64;
        for &x in a {
            for &z in b {
                twice += match cmp(x, z) {
                    Ordering::Greater => 2,
                    Ordering::Equal => 1,
                    Ordering::Less => 0,
                };
            }
        }
        twice as f64 / (2 * a.len() * b.len()) as f64
    }

    fn scenario(p_in: &[f64], p_out: &[f64]) -> OodScenario<f64> {
        let d = Arc::new(DiscreteDomain::indexed(p_in.len()).unwrap());
        let marg = FiniteDistribution::new(d.clone(), p_in.to_vec()).unwrap();
        let cond = vec![vec![0.5, 0.5]; p_in.len()];
        let in_dist = LabeledInDistribution::from_marginal_and_conditionals(&marg, 2, &cond).unwrap();
        OodScenario::new(in_dist, FiniteDistribution::new(d, p_out.to_vec()).unwrap(), 0.5).unwrap()
    }

    fn score(s: &OodScenario<f64>, v: &[f64]) -> ScoreVector<f64> {
        ScoreVector::new(s.domain().clone(), v.to_vec()).unwrap()
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[5.0, 4.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(auc(&[3.0, 3.0], &[3.0, 3.0]).unwrap(), 0.5);
        assert_eq!(pairwise_auc(&[0.9, 0.8], &[0.7, 0.9]), 0.625);
        assert_eq!(auc(&[0.9, 0.8], &[0.7, 0.9]).unwrap(), 0.625);
        assert_eq!(auc::<f64>(&[], &[1.0]), Err(OodError::EmptySample));
    }

    #[test]
    fn fpr_examples() {
        assert_eq!(fpr_at_tpr(&[4.0, 3.0, 2.0], &[1.0, 0.0], 0.95).unwrap(), 0.0);
        assert_eq!(fpr_at_tpr(&[1.0, 1.0], &[1.0, 1.0], 0.95).unwrap(), 1.0);
        assert_eq!(fpr_at_tpr(&[0.9, 0.8, 0.7, 0.6], &[0.75, 0.5], 0.75).unwrap(), 0.5);
        assert_eq!(fpr_at_tpr::<f64>(&[1.0], &[], 0.95), Err(OodError::EmptySample));
        assert!(fpr_at_tpr(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn required_count_is_robust_to_rounding() {
        // 0.95 * 20 = 19.000000000000004 in binary floating point
        assert_eq!(required_count(0.95, 20), 19);
        assert_eq!(required_count(0.95, 100), 95);
        assert_eq!(required_count(1.0, 7), 7);
        assert_eq!(required_count(1e-9, 7), 1);
    }

    #[test]
    fn auc_exact_examples() {
        let s = scenario(&[0.5, 0.5, 0.0], &[0.0, 0.5, 0.5]);
        assert_eq!(auc_exact(&s, &score(&s, &[1.0, 1.0, 1.0])).unwrap(), 0.5);
        // double sum: 0.25·1 + 0.25·1 + 0.25·0.5 + 0.25·1 = 0.875
        assert_eq!(auc_exact(&s, &score(&s, &[3.0, 2.0, 1.0])).unwrap(), 0.875);

        let s = scenario(&[0.6, 0.4, 0.0], &[0.0, 0.0, 1.0]);
        let post: Vec<f64> = s.posteriors().into_iter().map(|p| p.unwrap()).collect();
        assert_eq!(auc_exact(&s, &score(&s, &post)).unwrap(), 1.0);
    }

    #[test]
    fn fpr_exact_examples() {
        let s = scenario(&[0.6, 0.4, 0.0], &[0.0, 0.0, 1.0]);
        assert_eq!(fpr_at_tpr_exact(&s, &score(&s, &[1.0, 1.0, 0.0]), 0.95).unwrap(), 0.0);

        let s = scenario(&[0.9, 0.1], &[0.5, 0.5]);
        assert_eq!(fpr_at_tpr_exact(&s, &score(&s, &[1.0, 0.0]), 0.95).unwrap(), 1.0);

        let p = vec![0.05; 20];
        let s = scenario(&p, &p);
        let injective: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let fpr = fpr_at_tpr_exact(&s, &score(&s, &injective), 0.95).unwrap();
        assert!((fpr - 0.95).abs() < 1e-12, "{fpr}");
    }

    #[test]
    fn report_means_skip_training_columns() {
        let a = scenario(&[0.5, 0.5, 0.0], &[0.0, 0.5, 0.5]);
        let b = scenario(&[0.5, 0.5, 0.0], &[0.0, 0.0, 1.0]);
        let cols = [
            OutColumn { name: "near".into(), scenario: &a, training: true },
            OutColumn { name: "far".into(), scenario: &b, training: false },
        ];
        let rows = vec![ScoredRow::shared("m", "s1", Some(0.9), score(&a, &[3.0, 2.0, 1.0]), 2)];
        let report = build_report(&cols, rows, 0.95).unwrap();
        let row = &report.rows[0];
        assert_eq!(row.cells[0].auc, 0.875);
        assert_eq!(row.cells[1].auc, 1.0);
        assert_eq!(row.mean_auc, Some(1.0));
        assert_eq!(row.mean_fpr, Some(0.0));
        let csv = report.to_csv(ReportMetric::Fpr);
        assert!(csv.starts_with("model,acc,mean_fpr,near,far\n"));
        assert!(csv.contains("m (s1),0.900000,0.000000,0.500000,0.000000"));
    }

    #[test]
    fn single_cell_report_without_mean() {
        let a = scenario(&[0.5, 0.5, 0.0], &[0.0, 0.5, 0.5]);
        let cols = [OutColumn { name: "only".into(), scenario: &a, training: false }];
        let report =
            build_report(&cols, vec![ScoredRow::shared("m", "s", None, score(&a, &[1.0, 0.0, 0.0]), 1)], 0.95).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].cells.len(), 1);
        assert_eq!(report.to_csv(ReportMetric::Auc).lines().next(), Some("model,only"));
    }

    #[test]
    fn missing_cell_is_an_error() {
        let a = scenario(&[0.5, 0.5, 0.0], &[0.0, 0.5, 0.5]);
        let cols = [
            OutColumn { name: "a".into(), scenario: &a, training: false },
            OutColumn { name: "b".into(), scenario: &a, training: false },
        ];
        let row = ScoredRow { method: "m".into(), score: "s".into(), accuracy: None, scores: vec![Some(score(&a, &[0.0; 3]))] };
        assert!(matches!(build_report(&cols, vec![row], 0.95), Err(OodError::MissingCell { .. })));
    }

    #[test]
    fn accuracy_examples() {
        let d = Arc::new(DiscreteDomain::indexed(2).unwrap());
        let in_dist = LabeledInDistribution::new(d.clone(), 2, vec![0.3, 0.1, 0.2, 0.4]).unwrap();
        let s = OodScenario::new(in_dist, FiniteDistribution::uniform(d), 0.5).unwrap();
        assert!((bayes_accuracy(&s) - 0.7f64).abs() < 1e-15);
        let preds = vec![Some(vec![0.9, 0.1]), Some(vec![0.9, 0.1])];
        assert!((accuracy_exact(&s, &preds).unwrap() - 0.4f64).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn fast_auc_equals_pairwise(
            a in prop::collection::vec(-3i8..4, 1..30),
            b in prop::collection::vec(-3i8..4, 1..30),
        ) {
            let map = |v: i8| match v { -3 => f64::NEG_INFINITY, 3 => f64::INFINITY, v => v as f64 * 0.5 };
            let a: Vec<f64> = a.into_iter().map(map).collect();
            let b: Vec<f64> = b.into_iter().map(map).collect();
            let fast = auc(&a, &b).unwrap();
            prop_assert_eq!(fast, pairwise_auc(&a, &b));
            prop_assert!((fast + auc(&b, &a).unwrap() - 1.0).abs() < 1e-15);
        }
    }
}
