//! Regularization path: `λ_max`, then fits at `λ_max · 2^{-i}` for
//! `i = 1..=steps`, each warm-started from the previous solution.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{nnz, FeatureShard, LabelVector};
use crate::driver::{fit, run_local, SolverConfig, Termination};
use crate::error::{Error, Result};
use crate::ingest::ExampleSet;
use crate::metrics::{evaluate, EvaluationResult};
use crate::reduction::ReductionGroup;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub steps: usize,
    /// Explicit λ values, replacing the geometric schedule.
    pub lambdas: Option<Vec<f64>>,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            steps: 20,
            lambdas: None,
        }
    }
}

impl PathConfig {
    /// The λ sequence to fit, strictly decreasing.
    pub fn schedule(&self, lambda_max: f64) -> Result<Vec<f64>> {
        let lambdas = match &self.lambdas {
            Some(l) => l.clone(),
            None => (1..=self.steps)
                .map(|i| lambda_max * 2f64.powi(-(i as i32)))
                .collect(),
        };
        if lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lambdas must be finite and non-negative: {lambdas:?}"
            )));
        }
        if lambdas.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidInput(format!(
                "lambda sequence must be strictly decreasing: {lambdas:?}"
            )));
        }
        Ok(lambdas)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub beta: Vec<f64>,
    pub nnz: usize,
    pub train_objective: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub seconds: f64,
    pub evaluation: Option<EvaluationResult>,
}

/// Path results up to the first failing step.
#[derive(Debug)]
pub struct PathOutcome {
    pub lambda_max: f64,
    pub points: Vec<PathPoint>,
    pub failure: Option<Error>,
}

/// `max_j |∇_j L(0)| = max_j |½ Σ_i y_i x_ij|`. Each worker fills in its own
/// features; one all-reduce assembles the full gradient.
pub fn lambda_max<G: ReductionGroup>(
    shard: &FeatureShard,
    labels: &LabelVector,
    group: &mut G,
) -> Result<f64> {
    if labels.len() != shard.n() || shard.n() == 0 {
        return Err(Error::InvalidInput(format!(
            "{} labels for {} examples",
            labels.len(),
            shard.n()
        )));
    }
    let mut grad = vec![0.0; shard.p()];
    for (j, column) in shard.columns() {
        // Same products and order as the first coordinate step from β = 0,
        // so the solver's numerator at λ = λ_max lands exactly on the bound.
        let mut acc = 0.0;
        for e in column {
            acc += (0.25 * e.value) * (2.0 * labels[e.example]);
        }
        grad[j] = acc;
    }
    let grad = group.allreduce_sum(&grad)?;
    let max = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
    if max == 0.0 {
        return Err(Error::Degenerate(
            "gradient at the origin is zero: no feature correlates with the labels".into(),
        ));
    }
    Ok(max)
}

/// Fits the whole path on one worker. Collective, like [`fit`].
pub fn regularization_path<G: ReductionGroup>(
    shard: &FeatureShard,
    labels: &LabelVector,
    group: &mut G,
    solver: &SolverConfig,
    path: &PathConfig,
    eval: Option<&ExampleSet>,
) -> Result<PathOutcome> {
    let lmax = lambda_max(shard, labels, group)?;
    let schedule = path.schedule(lmax)?;
    let mut points = Vec::with_capacity(schedule.len());
    let mut warm: Option<Vec<f64>> = None;
    for lambda in schedule {
        let start = Instant::now();
        let config = SolverConfig {
            lambda,
            ..solver.clone()
        };
        let outcome = match fit(shard, labels, &config, group, warm.as_deref()) {
            Ok(o) => o,
            Err(e) => {
                return Ok(PathOutcome {
                    lambda_max: lmax,
                    points,
                    failure: Some(e),
                })
            }
        };
        let evaluation = match eval {
            Some(set) => match evaluate(&set.margins(&outcome.beta), set.labels()) {
                Ok(r) => Some(r),
                Err(e) => {
                    return Ok(PathOutcome {
                        lambda_max: lmax,
                        points,
                        failure: Some(e),
                    })
                }
            },
            None => None,
        };
        points.push(PathPoint {
            lambda,
            nnz: nnz(&outcome.beta),
            beta: outcome.beta.clone(),
            train_objective: outcome.report.final_objective,
            iterations: outcome.report.iterations.len(),
            termination: outcome.report.termination,
            seconds: start.elapsed().as_secs_f64(),
            evaluation,
        });
        warm = Some(outcome.beta);
    }
    Ok(PathOutcome {
        lambda_max: lmax,
        points,
        failure: None,
    })
}

/// [`regularization_path`] with one in-process worker per shard.
pub fn regularization_path_local(
    shards: &[FeatureShard],
    labels: &LabelVector,
    solver: &SolverConfig,
    path: &PathConfig,
    eval: Option<&ExampleSet>,
) -> Result<PathOutcome> {
    let mut outcomes = run_local(shards, |shard, group| {
        regularization_path(shard, labels, group, solver, path, eval)
    })?;
    Ok(outcomes.swap_remove(0))
}

/// Writes the path as CSV:
/// `lambda,nnz,train_objective,test_auprc,test_logloss,iterations,seconds`.
pub fn write_path_csv<W: std::io::Write>(points: &[PathPoint], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "lambda,nnz,train_objective,test_auprc,test_logloss,iterations,seconds"
    )?;
    for pt in points {
        let (auprc, logloss) = match &pt.evaluation {
            Some(e) => (format!("{:?}", e.auprc), format!("{:?}", e.log_loss)),
            None => (String::new(), String::new()),
        };
        writeln!(
            w,
            "{:?},{},{:?},{},{},{},{:.6}",
            pt.lambda, pt.nnz, pt.train_objective, auprc, logloss, pt.iterations, pt.seconds
        )?;
    }
    Ok(())
}
