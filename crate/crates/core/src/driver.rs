//! Outer iterations of the distributed solver.
//!
//! Every worker runs [`fit`] on its own shard. Per iteration a worker
//! freezes the quadratic model at the shared margins, solves its block
//! subproblem, and contributes `(Δβ^m, Δmargins^m)` to one all-reduce.
//! Line search and the stopping rule then run redundantly on every worker
//! from the identical reduced data, so all workers take the same step
//! without a designated master.

use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{nnz, FeatureShard, LabelVector, ModelState};
use crate::error::{Error, Result};
use crate::glm::{build_workspace, loss_unchecked, objective};
use crate::line_search::{candidate_objective, line_search, LineSearchConfig};
use crate::reduction::{LocalGroup, LocalMember, ReductionGroup};
use crate::subproblem::solve_subproblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda: f64,
    /// Diagonal damping added to the block Hessian.
    pub nu: f64,
    pub line_search: LineSearchConfig,
    pub max_outer_iterations: usize,
    /// Stop once `(f_prev − f_cur) / max(|f_prev|, 1)` falls below this.
    pub rel_objective_tol: f64,
    /// Largest relative objective increase accepted when replacing the last
    /// damped step by the full step at termination.
    pub final_full_step_tol: f64,
}

impl SolverConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            nu: 1e-6,
            line_search: LineSearchConfig::default(),
            max_outer_iterations: 100,
            rel_objective_tol: 1e-6,
            final_full_step_tol: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidInput(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        if !(self.nu > 0.0) || !(self.rel_objective_tol > 0.0) || !(self.final_full_step_tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "nu and tolerances must be positive: nu = {}, rel_objective_tol = {}, final_full_step_tol = {}",
                self.nu, self.rel_objective_tol, self.final_full_step_tol
            )));
        }
        if self.max_outer_iterations == 0 {
            return Err(Error::InvalidInput("max_outer_iterations must be at least 1".into()));
        }
        self.line_search.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Objective after the accepted step.
    pub objective: f64,
    pub alpha: f64,
    pub nnz: usize,
    /// Objective evaluations spent by the line search.
    pub evaluations: usize,
    /// Wall time since the start of the fit.
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Termination {
    /// Every block returned a zero direction: β is a fixed point.
    DirectionVanished,
    RelativeDecrease,
    MaxIterations,
    /// The direction no longer yields a representable decrease.
    NumericalFloor,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub lambda: f64,
    pub initial_objective: f64,
    /// One record per accepted line-search step.
    pub iterations: Vec<IterationRecord>,
    pub termination: Termination,
    /// The last damped step was replaced by the full step at termination.
    pub full_step_restored: bool,
    /// Objective of the returned coefficients.
    pub final_objective: f64,
    pub seconds: f64,
}

impl FitReport {
    fn new(lambda: f64, initial_objective: f64) -> Self {
        Self {
            lambda,
            initial_objective,
            iterations: Vec::new(),
            termination: Termination::MaxIterations,
            full_step_restored: false,
            final_objective: initial_objective,
            seconds: 0.0,
        }
    }

    /// The initial objective followed by the objective after every accepted
    /// step.
    pub fn objective_trace(&self) -> Vec<f64> {
        std::iter::once(self.initial_objective)
            .chain(self.iterations.iter().map(|r| r.objective))
            .collect()
    }

    /// Number of places where the objective trace fails to strictly decrease.
    pub fn monotonicity_violations(&self) -> usize {
        self.objective_trace()
            .windows(2)
            .filter(|w| !(w[1] < w[0]))
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Finish(Termination),
}

/// Stopping rule applied after each accepted step.
pub fn check_convergence(report: &FitReport, config: &SolverConfig) -> Decision {
    let Some(last) = report.iterations.last() else {
        return Decision::Continue;
    };
    let prev = report
        .iterations
        .iter()
        .rev()
        .nth(1)
        .map_or(report.initial_objective, |r| r.objective);
    let rel = (prev - last.objective) / prev.abs().max(1.0);
    if rel < config.rel_objective_tol {
        Decision::Finish(Termination::RelativeDecrease)
    } else if report.iterations.len() >= config.max_outer_iterations {
        Decision::Finish(Termination::MaxIterations)
    } else {
        Decision::Continue
    }
}

/// Result of one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IterationOutcome {
    Accepted {
        alpha: f64,
        objective: f64,
        evaluations: usize,
    },
    Converged(Termination),
}

/// One outer iteration: block solve, all-reduce of the merged direction,
/// line search, and the state update. On return `state.delta_*` hold the
/// reduced direction.
pub fn outer_iterate<G: ReductionGroup>(
    state: &mut ModelState,
    current_objective: f64,
    shard: &FeatureShard,
    labels: &LabelVector,
    config: &SolverConfig,
    group: &mut G,
) -> Result<IterationOutcome> {
    let p = shard.p();
    let workspace = build_workspace(labels, &state.margins)?;
    let block = solve_subproblem(shard, &workspace, &state.beta, config.lambda, config.nu)?;

    let mut payload = vec![0.0; p + shard.n()];
    block.scatter_delta_beta(shard, &mut payload[..p]);
    payload[p..].copy_from_slice(&block.delta_margins);
    let reduced = group.allreduce_sum(&payload)?;
    if reduced.len() != payload.len() {
        return Err(Error::Protocol(format!(
            "all-reduce returned {} values, expected {}",
            reduced.len(),
            payload.len()
        )));
    }
    state.delta_beta.copy_from_slice(&reduced[..p]);
    state.delta_margins.copy_from_slice(&reduced[p..]);

    if state.delta_beta.iter().all(|&d| d == 0.0) {
        return Ok(IterationOutcome::Converged(Termination::DirectionVanished));
    }
    let step = match line_search(state, labels, config.lambda, &config.line_search) {
        Ok(step) => step,
        // A nonzero block solution is a descent direction in exact
        // arithmetic; D >= 0 only happens once rounding dominates.
        Err(Error::NotDescent(_)) => return Ok(IterationOutcome::Converged(Termination::NumericalFloor)),
        Err(e) => return Err(e),
    };
    if !(step.objective < current_objective) {
        return Ok(IterationOutcome::Converged(Termination::NumericalFloor));
    }
    state.apply_step(step.alpha);
    Ok(IterationOutcome::Accepted {
        alpha: step.alpha,
        objective: step.objective,
        evaluations: step.evaluations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub beta: Vec<f64>,
    /// Margin cache `βᵀx_i` matching `beta`.
    pub margins: Vec<f64>,
    pub report: FitReport,
}

/// Rebuilds `βᵀx_i` for a warm start: each worker contributes the margins
/// of its own features, one all-reduce sums them.
pub fn rebuild_margins<G: ReductionGroup>(
    shard: &FeatureShard,
    beta: &[f64],
    group: &mut G,
) -> Result<Vec<f64>> {
    let mut partial = vec![0.0; shard.n()];
    shard.accumulate_margins(beta, &mut partial);
    group.allreduce_sum(&partial)
}

/// Runs outer iterations from `warmstart` (or β = 0) until the stopping
/// rule fires. Collective: every worker of `group` must call it with the
/// same labels, config and warm start.
pub fn fit<G: ReductionGroup>(
    shard: &FeatureShard,
    labels: &LabelVector,
    config: &SolverConfig,
    group: &mut G,
    warmstart: Option<&[f64]>,
) -> Result<FitOutcome> {
    config.validate()?;
    let (n, p) = (shard.n(), shard.p());
    if labels.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} labels for {n} examples",
            labels.len()
        )));
    }
    let start = Instant::now();
    let mut state = ModelState::zeros(n, p);
    if let Some(warm) = warmstart {
        if warm.len() != p {
            return Err(Error::InvalidInput(format!(
                "warm start has length {}, expected {p}",
                warm.len()
            )));
        }
        state.beta.copy_from_slice(warm);
        state.margins = rebuild_margins(shard, warm, group)?;
    }

    let mut current = objective(loss_unchecked(labels.as_slice(), &state.margins), &state.beta, config.lambda)?;
    let mut report = FitReport::new(config.lambda, current);
    let mut prev_beta = vec![0.0; p];
    let mut prev_margins = vec![0.0; n];

    loop {
        prev_beta.copy_from_slice(&state.beta);
        prev_margins.copy_from_slice(&state.margins);
        let outcome = outer_iterate(&mut state, current, shard, labels, config, group)?;
        let (alpha, evaluations) = match outcome {
            IterationOutcome::Converged(reason) => {
                report.termination = reason;
                break;
            }
            IterationOutcome::Accepted {
                alpha,
                objective,
                evaluations,
            } => {
                current = objective;
                (alpha, evaluations)
            }
        };
        report.iterations.push(IterationRecord {
            iteration: report.iterations.len() + 1,
            objective: current,
            alpha,
            nnz: nnz(&state.beta),
            evaluations,
            seconds: start.elapsed().as_secs_f64(),
        });

        if let Decision::Finish(reason) = check_convergence(&report, config) {
            report.termination = reason;
            if alpha < 1.0 {
                // Full step of the last direction from the pre-step point.
                // Coordinates the block solve sent to exactly −β_j land on
                // exact zeros here.
                let full = candidate_objective(
                    1.0,
                    labels,
                    &prev_margins,
                    &state.delta_margins,
                    &prev_beta,
                    &state.delta_beta,
                    config.lambda,
                );
                if full <= current * (1.0 + config.final_full_step_tol) {
                    state.beta.copy_from_slice(&prev_beta);
                    state.margins.copy_from_slice(&prev_margins);
                    state.apply_step(1.0);
                    current = full;
                    report.full_step_restored = true;
                }
            }
            break;
        }
    }

    report.final_objective = current;
    report.seconds = start.elapsed().as_secs_f64();
    Ok(FitOutcome {
        beta: state.beta,
        margins: state.margins,
        report,
    })
}

/// Runs `job` once per shard, each on its own thread with an in-process
/// reduction group, and returns the per-rank results in rank order.
pub fn run_local<T, F>(shards: &[FeatureShard], job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&FeatureShard, &mut LocalMember) -> Result<T> + Sync,
{
    if shards.is_empty() {
        return Err(Error::InvalidInput("no shards".into()));
    }
    let members = LocalGroup::new(shards.len());
    let results: Vec<Result<T>> = thread::scope(|s| {
        let job = &job;
        let handles: Vec<_> = shards
            .iter()
            .zip(members)
            .map(|(shard, mut member)| s.spawn(move || job(shard, &mut member)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    });
    results.into_iter().collect()
}

/// [`fit`] with one in-process worker per shard. Returns rank 0's result;
/// every rank ends with the same coefficients.
pub fn fit_local(
    shards: &[FeatureShard],
    labels: &LabelVector,
    config: &SolverConfig,
    warmstart: Option<&[f64]>,
) -> Result<FitOutcome> {
    let mut outcomes = run_local(shards, |shard, group| fit(shard, labels, config, group, warmstart))?;
    debug_assert!(outcomes.windows(2).all(|w| w[0].beta == w[1].beta));
    Ok(outcomes.swap_remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(iteration: usize, objective: f64) -> IterationRecord {
        IterationRecord {
            iteration,
            objective,
            alpha: 1.0,
            nnz: 0,
            evaluations: 1,
            seconds: 0.0,
        }
    }

    #[test]
    fn convergence_rule() {
        let cfg = SolverConfig::new(0.1);
        let mut report = FitReport::new(0.1, 100.0);
        assert_eq!(check_convergence(&report, &cfg), Decision::Continue);
        report.iterations.push(record(1, 50.0));
        assert_eq!(check_convergence(&report, &cfg), Decision::Continue);
        report.iterations.push(record(2, 50.0 - 1e-5));
        assert_eq!(
            check_convergence(&report, &cfg),
            Decision::Finish(Termination::RelativeDecrease)
        );

        let capped = SolverConfig {
            max_outer_iterations: 1,
            ..cfg
        };
        let mut report = FitReport::new(0.1, 100.0);
        report.iterations.push(record(1, 50.0));
        assert_eq!(
            check_convergence(&report, &capped),
            Decision::Finish(Termination::MaxIterations)
        );
    }

    #[test]
    fn small_objectives_use_absolute_decrease() {
        let cfg = SolverConfig::new(0.0);
        let mut report = FitReport::new(0.0, 1e-3);
        report.iterations.push(record(1, 1e-3 - 2e-6));
        assert_eq!(check_convergence(&report, &cfg), Decision::Continue);
    }

    #[test]
    fn config_validation() {
        SolverConfig::new(0.5).validate().unwrap();
        assert!(SolverConfig::new(-1.0).validate().is_err());
        let mut cfg = SolverConfig::new(0.5);
        cfg.nu = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn monotonicity_counter() {
        let mut report = FitReport::new(0.0, 3.0);
        report.iterations.push(record(1, 2.0));
        report.iterations.push(record(2, 2.0));
        report.iterations.push(record(3, 1.0));
        assert_eq!(report.monotonicity_violations(), 1);
    }
}
