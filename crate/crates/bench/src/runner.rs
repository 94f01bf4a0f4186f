//! Experiment execution: one job per (method, λ, seed), run on a bounded
//! worker pool and reduced into metric reports in a fixed order.

use std::fs;
use std::path::{Path, PathBuf};

use ood_core::metrics::{
    accuracy_exact, bayes_accuracy, build_report, MetricCell, MetricReport, OutColumn, ReportMetric, ReportRow, ScoredRow,
};
use ood_core::oracle::{oracle_scores, oracle_table, NamedScores, OracleMethod};
use ood_core::scores::ScoreVector;
use ood_core::train::{combined_scores, mlp_train, tabular_minimize, LossKind, LossSpec, MlpArchitecture, MlpData, MlpTrainConfig, SharedMlp, TabularLogits};
use ood_core::{MetricReport64, PredictiveTable64, Scenario64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, MethodSpec, RunSpec, Trainer};
use crate::emit::{emit_report, write_text, ReportFormat};
use crate::error::{io, BenchError, Result};
use crate::scenarios::{build_out, generate_scenario, restrict_in};

/// One training or oracle evaluation.
#[derive(Clone, Debug)]
pub struct Job {
    /// Method name with λ / seed suffixes when those vary.
    pub label: String,
    /// File-system safe identifier.
    pub run_id: String,
    pub loss: LossSpec<f64>,
    pub trainer: Trainer,
    pub seed: u64,
}

/// Saved model state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case")]
pub enum Checkpoint {
    Tabular { loss: LossSpec<f64>, logits: TabularLogits<f64> },
    Mlp { loss: LossSpec<f64>, model: SharedMlp<f64> },
}

/// A trained (or oracle) model reduced to what the report needs.
#[derive(Clone, Debug)]
pub struct JobOutput {
    pub job: Job,
    pub scores: NamedScores<f64>,
    /// Per-point class probabilities, when the method has a classifier.
    pub class_probs: Option<Vec<Vec<f64>>>,
    /// Per-point discriminator output, when the method has one.
    pub p_in: Option<Vec<f64>>,
    pub checkpoint: Option<Checkpoint>,
    pub trajectory: Option<Vec<f64>>,
    /// Optimal predictive table, for oracle jobs.
    pub table: Option<PredictiveTable64>,
}

/// Output of [`run_experiment`].
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    /// One report per TPR level, in config order.
    pub reports: Vec<MetricReport64>,
    pub dir: PathBuf,
}

/// A training scenario with the report columns derived from it.
pub struct Prepared {
    pub scenario: Scenario64,
    /// Evaluation in-distribution (optionally restricted) with the default
    /// out-distribution.
    pub eval: Scenario64,
    pub columns: Vec<(String, Scenario64, bool)>,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let scenario = generate_scenario(&config.scenario, config.run.seeds[0])?;
    let eval = match &config.eval_in_prefix {
        Some(prefix) => restrict_in(&scenario, prefix)?,
        None => scenario.clone(),
    };
    let columns = config
        .test_out
        .iter()
        .map(|t| Ok((t.name.clone(), eval.with_out(build_out(&eval, &t.out)?)?, t.training)))
        .collect::<Result<_>>()?;
    Ok(Prepared { scenario, eval, columns })
}

fn fmt_lambda(l: f64) -> String {
    format!("{l}")
}

/// Expands methods × λ sweep × seeds into jobs, in that nesting order.
pub fn expand_jobs(config: &ExperimentConfig) -> Vec<Job> {
    let run = &config.run;
    let sweep = run.lambdas.as_ref();
    let multi_seed = run.seeds.len() > 1;
    let mut jobs = Vec::new();
    for m in &config.methods {
        let lambdas: Vec<Option<f64>> = match sweep {
            Some(ls) if m.loss.kind.uses_out() => ls.iter().copied().map(Some).collect(),
            _ => vec![None],
        };
        for lambda in &lambdas {
            let seeds: &[u64] = if m.trainer == Trainer::Oracle { &run.seeds[..1] } else { &run.seeds };
            for &seed in seeds {
                let mut loss = m.loss.clone();
                if let Some(l) = lambda {
                    loss.lambda = *l;
                }
                if let Some(f) = run.labeled_fraction {
                    loss.labeled_fraction = f;
                }
                let mut label = m.name.clone();
                let mut run_id = sanitize(&m.name);
                if let Some(l) = lambda {
                    label.push_str(&format!(" lambda={}", fmt_lambda(*l)));
                    run_id.push_str(&format!("__lambda{}", fmt_lambda(*l)));
                }
                if multi_seed && m.trainer != Trainer::Oracle {
                    label.push_str(&format!(" seed={seed}"));
                }
                run_id.push_str(&format!("__seed{seed}"));
                jobs.push(Job { label, run_id, loss, trainer: m.trainer, seed });
            }
        }
    }
    jobs
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn oracle_method(kind: LossKind) -> OracleMethod {
    match kind {
        LossKind::ClassifierCe => OracleMethod::Classifier,
        LossKind::BinaryBalanced => OracleMethod::Binary,
        LossKind::ConfidenceOe => OracleMethod::Oe,
        LossKind::BackgroundClass => OracleMethod::Bgc,
        LossKind::EnergyMargin => OracleMethod::Energy,
        LossKind::SharedCombo => OracleMethod::Shared,
    }
}

/// The class and discriminator parts of a predictive table.
fn split_predictive(kind: LossKind, rows: Vec<Vec<f64>>, classes: usize) -> (Option<Vec<Vec<f64>>>, Option<Vec<f64>>) {
    match kind {
        LossKind::BinaryBalanced => (None, Some(rows.into_iter().map(|r| r[0]).collect())),
        LossKind::SharedCombo => {
            let p = rows.iter().map(|r| r[classes]).collect();
            (Some(rows.into_iter().map(|mut r| {
                r.truncate(classes);
                r
            }).collect()), Some(p))
        }
        LossKind::BackgroundClass => {
            let p = rows.iter().map(|r| 1.0 - r[classes]).collect();
            (Some(rows), Some(p))
        }
        _ => (Some(rows), None),
    }
}

/// Runs a single job against the training scenario.
pub fn execute(job: &Job, scenario: &Scenario64, run: &RunSpec) -> Result<JobOutput> {
    let kind = job.loss.kind;
    let k = scenario.classes();
    let domain = scenario.domain();
    match job.trainer {
        Trainer::Oracle => {
            // the optimum of a λ-weighted objective is the oracle at p(i) = 1/(1+λ)
            let weighted = scenario.with_prior(1.0 / (1.0 + job.loss.lambda))?;
            let scores = oracle_scores(&weighted, oracle_method(kind), job.loss.margins.as_ref());
            let class_probs = (kind != LossKind::BinaryBalanced)
                .then(|| (0..scenario.len()).map(|x| scenario.class_conditional_or_uniform(x)).collect());
            let p_in = matches!(kind, LossKind::BinaryBalanced | LossKind::SharedCombo | LossKind::BackgroundClass)
                .then(|| weighted.posteriors().into_iter().map(|p| p.unwrap_or(f64::NEG_INFINITY)).collect());
            let table = Some(oracle_table(&weighted, oracle_method(kind)));
            Ok(JobOutput { job: job.clone(), scores, class_probs, p_in, checkpoint: None, trajectory: None, table })
        }
        Trainer::Tabular => {
            let r = tabular_minimize(scenario, &job.loss, run.steps, run.learning_rate, job.seed)?;
            let scores = round_all(r.logits.scores(kind, domain)?, run.score_decimals);
            let (class_probs, p_in) = split_predictive(kind, r.logits.predictive(kind), k);
            Ok(JobOutput {
                job: job.clone(),
                scores,
                class_probs,
                p_in,
                checkpoint: Some(Checkpoint::Tabular { loss: job.loss.clone(), logits: r.logits }),
                trajectory: Some(r.trajectory),
                table: None,
            })
        }
        Trainer::Mlp => {
            let m = &run.mlp;
            let dim = domain
                .coordinate_dim()
                .ok_or_else(|| BenchError::InvalidParams("mlp training needs point coordinates".into()))?;
            let n_out = m.n_out.unwrap_or(2 * m.n_in);
            let data = MlpData::sample(scenario, m.n_in, n_out, job.loss.labeled_fraction, job.seed)?;
            let arch = MlpArchitecture::for_kind(kind, k, dim).with_hidden(m.hidden.clone()).with_activation(m.activation);
            let cfg = MlpTrainConfig {
                epochs: m.epochs,
                batch_in: m.batch_in,
                batch_out: m.batch_out.unwrap_or(2 * m.batch_in),
                learning_rate: m.learning_rate,
                momentum: m.momentum,
                schedule: m.schedule,
                seed: job.seed,
            };
            let trained = mlp_train(&data, &job.loss, &arch, &cfg)?;
            let logits = trained.model.tabular_logits(kind, domain)?;
            let scores = round_all(logits.scores(kind, domain)?, run.score_decimals);
            let (class_probs, p_in) = split_predictive(kind, logits.predictive(kind), k);
            Ok(JobOutput {
                job: job.clone(),
                scores,
                class_probs,
                p_in,
                checkpoint: Some(Checkpoint::Mlp { loss: job.loss.clone(), model: trained.model }),
                trajectory: Some(trained.trajectory),
                table: None,
            })
        }
    }
}

fn round_all(scores: NamedScores<f64>, decimals: Option<i32>) -> NamedScores<f64> {
    match decimals {
        Some(d) => scores.into_iter().map(|(n, s)| (n, s.rounded(d))).collect(),
        None => scores,
    }
}

fn accuracy(out: &JobOutput, eval: &Scenario64) -> Result<Option<f64>> {
    Ok(match (&out.class_probs, out.job.trainer) {
        (None, _) => None,
        (Some(_), Trainer::Oracle) => Some(bayes_accuracy(eval)),
        (Some(rows), _) => {
            let preds: Vec<Option<Vec<f64>>> = rows.iter().cloned().map(Some).collect();
            Some(accuracy_exact(eval, &preds)?)
        }
    })
}

/// Report rows of one job: the requested scores it exposes, in config order.
fn rows_for(out: &JobOutput, wanted: &[String], eval: &Scenario64, columns: usize) -> Result<Vec<ScoredRow<f64>>> {
    let acc = accuracy(out, eval)?;
    Ok(wanted
        .iter()
        .filter_map(|name| out.scores.iter().find(|(n, _)| n == name))
        .map(|(name, s)| ScoredRow::shared(out.job.label.clone(), name.clone(), acc, s.clone(), columns))
        .collect())
}

fn run_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| BenchError::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Per-job failure recorded in the manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JobFailure {
    pub run_id: String,
    pub error: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FailureManifest {
    pub error: String,
    pub failed_jobs: Vec<JobFailure>,
    pub completed_jobs: Vec<String>,
    pub partial_outputs: Vec<String>,
}

pub const MANIFEST_NAME: &str = "failure_manifest.json";

pub fn write_manifest(dir: &Path, manifest: &FailureManifest) -> PathBuf {
    let path = dir.join(MANIFEST_NAME);
    let _ = fs::create_dir_all(dir);
    let _ = fs::write(&path, serde_json::to_string_pretty(manifest).unwrap_or_default());
    path
}

/// Writes a failure manifest under `dir` and wraps `error` with its path.
pub fn fail(dir: &Path, error: BenchError, failed: Vec<JobFailure>, completed: Vec<String>, partial: Vec<String>) -> BenchError {
    let manifest = FailureManifest { error: error.to_string(), failed_jobs: failed, completed_jobs: completed, partial_outputs: partial };
    BenchError::RunFailed { manifest: write_manifest(dir, &manifest), message: error.to_string() }
}

fn file_tag(q: f64) -> String {
    format!("{q}")
}

fn write_scenario(path: &Path, s: &Scenario64) -> Result<()> {
    write_text(path, &serde_json::to_string(&s.to_file()).unwrap_or_default())
}

fn write_job_artifacts(dir: &Path, out: &JobOutput) -> Result<()> {
    let run_dir = dir.join("runs").join(&out.job.run_id);
    fs::create_dir_all(&run_dir).map_err(io(&run_dir))?;
    for (name, s) in &out.scores {
        write_text(&run_dir.join(format!("scores_{name}.csv")), &s.to_csv())?;
    }
    if let Some(c) = &out.checkpoint {
        write_text(&run_dir.join("checkpoint.json"), &serde_json::to_string(c).unwrap_or_default())?;
    }
    if let Some(t) = &out.table {
        write_text(&run_dir.join("oracle_table.csv"), &t.to_csv())?;
    }
    if let Some(t) = &out.trajectory {
        let mut csv = String::from("step,loss\n");
        for (i, l) in t.iter().enumerate() {
            csv.push_str(&format!("{i},{l}\n"));
        }
        write_text(&run_dir.join("loss.csv"), &csv)?;
    }
    Ok(())
}

/// Writes scenario, column scenarios and the config next to the reports.
fn write_inputs(dir: &Path, config: &ExperimentConfig, prepared: &Prepared) -> Result<()> {
    fs::create_dir_all(dir.join("columns")).map_err(io(dir))?;
    write_text(&dir.join("config.json"), &config.to_json())?;
    write_scenario(&dir.join("scenario.json"), &prepared.scenario)?;
    for (name, s, _) in &prepared.columns {
        write_scenario(&dir.join("columns").join(format!("{}.json", sanitize(name))), s)?;
    }
    Ok(())
}

/// Writes `report.json`, `report_auc.csv` and one `report_fpr*.csv` per
/// TPR level (the first level without suffix).
pub fn write_reports(dir: &Path, reports: &[MetricReport64], prefix: &str) -> Result<Vec<String>> {
    let mut written = Vec::new();
    let json = dir.join(format!("{prefix}.json"));
    write_text(&json, &serde_json::to_string_pretty(reports).unwrap_or_default())?;
    written.push(json.display().to_string());
    if let Some(first) = reports.first() {
        let p = dir.join(format!("{prefix}_auc.csv"));
        emit_report(first, ReportFormat::Csv(ReportMetric::Auc), &p)?;
        written.push(p.display().to_string());
    }
    for (i, r) in reports.iter().enumerate() {
        let name = if i == 0 { format!("{prefix}_fpr.csv") } else { format!("{prefix}_fpr_q{}.csv", file_tag(r.tpr_level)) };
        let p = dir.join(name);
        emit_report(r, ReportFormat::Csv(ReportMetric::Fpr), &p)?;
        written.push(p.display().to_string());
    }
    Ok(written)
}

fn build_reports(config: &ExperimentConfig, prepared: &Prepared, outputs: &[JobOutput]) -> Result<Vec<MetricReport64>> {
    let columns: Vec<OutColumn<'_, f64>> = prepared
        .columns
        .iter()
        .map(|(name, s, t)| OutColumn { name: name.clone(), scenario: s, training: *t })
        .collect();
    config
        .metrics
        .tpr_levels
        .iter()
        .map(|&q| {
            let mut rows = Vec::new();
            for out in outputs {
                rows.extend(rows_for(out, &config.scores, &prepared.eval, columns.len())?);
            }
            Ok(build_report(&columns, rows, q)?)
        })
        .collect()
}

/// Runs every job of `config`, writing artifacts and reports under `dir`.
///
/// On failure the completed jobs are still written, and a
/// `failure_manifest.json` lists what failed; the returned
/// [`BenchError::RunFailed`] carries its path.
pub fn run_experiment(config: &ExperimentConfig, dir: &Path, jobs: usize) -> Result<ExperimentResult> {
    let prepared = match config.validate().and_then(|_| prepare(config)) {
        Ok(p) => p,
        Err(e) => return Err(fail(dir, e, vec![], vec![], vec![])),
    };
    if let Err(e) = write_inputs(dir, config, &prepared) {
        return Err(fail(dir, e, vec![], vec![], vec![]));
    }
    let all = expand_jobs(config);
    let results: Vec<Result<JobOutput>> =
        run_pool(jobs, || all.par_iter().map(|j| execute(j, &prepared.scenario, &config.run)).collect())?;

    let mut outputs = Vec::new();
    let mut failed = Vec::new();
    for (job, r) in all.iter().zip(results) {
        match r {
            Ok(o) => outputs.push(o),
            Err(e) => failed.push(JobFailure { run_id: job.run_id.clone(), error: e.to_string() }),
        }
    }
    let completed: Vec<String> = outputs.iter().map(|o| o.job.run_id.clone()).collect();
    let mut partial = Vec::new();
    for o in &outputs {
        if let Err(e) = write_job_artifacts(dir, o) {
            return Err(fail(dir, e, failed, completed, partial));
        }
        partial.push(format!("runs/{}", o.job.run_id));
    }
    let reports = match build_reports(config, &prepared, &outputs).and_then(|r| {
        partial.extend(write_reports(dir, &r, "report")?);
        Ok(r)
    }) {
        Ok(r) => r,
        Err(e) => return Err(fail(dir, e, failed, completed, partial)),
    };
    if !failed.is_empty() {
        let e = BenchError::Config(format!("{} of {} jobs failed", failed.len(), all.len()));
        return Err(fail(dir, e, failed, completed, partial));
    }
    let _ = fs::remove_file(dir.join(MANIFEST_NAME));
    Ok(ExperimentResult { reports, dir: dir.to_path_buf() })
}

/// Reports of a shared versus separate comparison.
#[derive(Clone, Debug)]
pub struct PairedReport {
    /// Shared-trunk rows followed by the separate-classifier ×
    /// shared-discriminator composition rows.
    pub shared: MetricReport64,
    pub separate: MetricReport64,
    /// Shared minus separate, cell by cell.
    pub delta: MetricReport64,
}

pub const COMPOSITION: &str = "plain x shared disc";

/// Trains a shared model and a separate classifier/discriminator pair per
/// seed and reports `s1`, `s2`, `s3` for both, their difference, and the
/// composition of the separate classifier with the shared discriminator.
pub fn compare_shared_vs_separate(config: &ExperimentConfig, dir: &Path, jobs: usize) -> Result<PairedReport> {
    let inner = || -> Result<PairedReport> {
        config.validate()?;
        let spec = config
            .compare
            .as_ref()
            .ok_or_else(|| BenchError::Config("missing `compare` section".into()))?;
        let prepared = prepare(config)?;
        write_inputs(dir, config, &prepared)?;
        let multi = config.run.seeds.len() > 1;
        let mut all = Vec::new();
        for &seed in &config.run.seeds {
            let suffix = if multi { format!(" seed={seed}") } else { String::new() };
            let shared = LossSpec::new(LossKind::SharedCombo)
                .with_lambda(spec.lambda)
                .with_labeled_fraction(spec.labeled_fraction);
            let classifier = LossSpec::new(LossKind::ClassifierCe).with_labeled_fraction(spec.labeled_fraction);
            let disc = LossSpec::new(LossKind::BinaryBalanced).with_lambda(spec.lambda);
            for (name, loss) in [("shared", shared), ("separate classifier", classifier), ("separate disc", disc)] {
                all.push(Job {
                    label: format!("{name}{suffix}"),
                    run_id: format!("{}__seed{seed}", sanitize(name)),
                    loss,
                    trainer: spec.trainer,
                    seed,
                });
            }
        }
        let results: Vec<Result<JobOutput>> =
            run_pool(jobs, || all.par_iter().map(|j| execute(j, &prepared.scenario, &config.run)).collect())?;
        let outputs = results.into_iter().collect::<Result<Vec<_>>>()?;
        for o in &outputs {
            write_job_artifacts(dir, o)?;
        }

        let domain = prepared.scenario.domain();
        let wanted: Vec<String> = ["s1", "s2", "s3"].iter().map(|s| s.to_string()).collect();
        let (mut shared_rows, mut sep_rows, mut comp_rows) = (Vec::new(), Vec::new(), Vec::new());
        for (i, &seed) in config.run.seeds.iter().enumerate() {
            let suffix = if multi { format!(" seed={seed}") } else { String::new() };
            let [sh, cl, di] = [&outputs[3 * i], &outputs[3 * i + 1], &outputs[3 * i + 2]];
            let class_probs = cl.class_probs.clone().unwrap_or_default();
            let disc = di.p_in.clone().unwrap_or_default();
            let shared_p = sh.p_in.clone().unwrap_or_default();
            let decimals = config.run.score_decimals;
            let separate = JobOutput {
                job: Job { label: format!("separate{suffix}"), ..cl.job.clone() },
                scores: round_all(combined_scores(domain, &class_probs, &disc)?, decimals),
                class_probs: cl.class_probs.clone(),
                p_in: Some(disc),
                checkpoint: None,
                trajectory: None,
                table: None,
            };
            let composed = JobOutput {
                job: Job { label: format!("{COMPOSITION}{suffix}"), ..cl.job.clone() },
                scores: round_all(combined_scores(domain, &class_probs, &shared_p)?, decimals),
                class_probs: cl.class_probs.clone(),
                p_in: Some(shared_p),
                checkpoint: None,
                trajectory: None,
                table: None,
            };
            shared_rows.push(sh.clone());
            sep_rows.push(separate);
            comp_rows.push(composed);
        }
        let q = config.metrics.tpr_levels[0];
        let cols: Vec<OutColumn<'_, f64>> = prepared
            .columns
            .iter()
            .map(|(name, s, t)| OutColumn { name: name.clone(), scenario: s, training: *t })
            .collect();
        let rows = |outs: &[JobOutput]| -> Result<Vec<ScoredRow<f64>>> {
            let mut r = Vec::new();
            for o in outs {
                r.extend(rows_for(o, &wanted, &prepared.eval, cols.len())?);
            }
            Ok(r)
        };
        let mut shared_all = rows(&shared_rows)?;
        shared_all.extend(rows(&comp_rows)?);
        let shared = build_report(&cols, shared_all, q)?;
        let separate = build_report(&cols, rows(&sep_rows)?, q)?;
        let n_shared = separate.rows.len();
        let delta = delta_report(&shared, &separate, n_shared);
        write_reports(dir, std::slice::from_ref(&shared), "compare_shared")?;
        write_reports(dir, std::slice::from_ref(&separate), "compare_separate")?;
        write_reports(dir, std::slice::from_ref(&delta), "compare_delta")?;
        Ok(PairedReport { shared, separate, delta })
    };
    inner().map_err(|e| match e {
        BenchError::RunFailed { .. } => e,
        other => fail(dir, other, vec![], vec![], vec![]),
    })
}

/// Cell-wise `a − b` over the first `rows` rows, which pair up by position.
fn delta_report(a: &MetricReport64, b: &MetricReport64, rows: usize) -> MetricReport64 {
    let diff = |x: Option<f64>, y: Option<f64>| x.zip(y).map(|(x, y)| x - y);
    MetricReport {
        columns: a.columns.clone(),
        training_out: a.training_out.clone(),
        tpr_level: a.tpr_level,
        rows: a.rows[..rows]
            .iter()
            .zip(&b.rows)
            .map(|(ra, rb)| ReportRow {
                method: format!("{} - {}", ra.method, rb.method),
                score: ra.score.clone(),
                accuracy: diff(ra.accuracy, rb.accuracy),
                cells: ra
                    .cells
                    .iter()
                    .zip(&rb.cells)
                    .map(|(ca, cb)| MetricCell {
                        auc: ca.auc - cb.auc,
                        fpr_at_tpr: ca.fpr_at_tpr - cb.fpr_at_tpr,
                        tpr_level: ca.tpr_level,
                    })
                    .collect(),
                mean_auc: diff(ra.mean_auc, rb.mean_auc),
                mean_fpr: diff(ra.mean_fpr, rb.mean_fpr),
            })
            .collect(),
    }
}

/// A config with every method evaluated at its Bayes optimum.
pub fn as_oracle(config: &ExperimentConfig) -> ExperimentConfig {
    let mut c = config.clone();
    for m in &mut c.methods {
        m.trainer = Trainer::Oracle;
    }
    c
}

/// Recomputes a report's cells from the artifacts in `dir`: column
/// scenarios and per-run score files.
pub fn recompute_report(dir: &Path, report: &MetricReport64, run_ids: &[(String, String)]) -> Result<MetricReport64> {
    let mut cols = Vec::new();
    for name in &report.columns {
        let s = crate::scenarios::load_scenario(&dir.join("columns").join(format!("{}.json", sanitize(name))))?;
        cols.push(s);
    }
    let columns: Vec<OutColumn<'_, f64>> = report
        .columns
        .iter()
        .zip(&cols)
        .zip(&report.training_out)
        .map(|((n, s), t)| OutColumn { name: n.clone(), scenario: s, training: *t })
        .collect();
    let mut rows = Vec::new();
    for row in &report.rows {
        let run_id = run_ids
            .iter()
            .find(|(label, _)| *label == row.method)
            .map(|(_, id)| id.clone())
            .ok_or_else(|| BenchError::Config(format!("no run for `{}`", row.method)))?;
        let path = dir.join("runs").join(run_id).join(format!("scores_{}.csv", row.score));
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        let scores = ScoreVector::from_csv(cols[0].domain().clone(), &text)?;
        rows.push(ScoredRow::shared(row.method.clone(), row.score.clone(), row.accuracy, scores, cols.len()));
    }
    Ok(build_report(&columns, rows, report.tpr_level)?)
}

/// Method spec helper used by configs built in code.
pub fn method(name: &str, kind: LossKind, trainer: Trainer) -> MethodSpec {
    MethodSpec::new(name, kind, trainer)
}
