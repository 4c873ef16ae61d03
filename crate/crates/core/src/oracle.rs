//! Dense reference computations used to check the solver.
//!
//! Nothing here shares code with the solver path: the loss, gradient and
//! coordinate steps are written out again on a dense matrix.

use crate::error::{Error, Result};
use crate::ingest::ParsedDataset;

/// Dense copy of a small dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseProblem {
    pub n: usize,
    pub p: usize,
    /// Row-major `n × p`.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

fn log1pexp(t: f64) -> f64 {
    // log(1 + e^t) = max(t, 0) + log(1 + e^{-|t|})
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl DenseProblem {
    pub fn new(n: usize, p: usize, x: Vec<f64>, y: Vec<f64>) -> Self {
        assert_eq!(x.len(), n * p);
        assert_eq!(y.len(), n);
        Self { n, p, x, y }
    }

    pub fn from_parsed(data: &ParsedDataset) -> Self {
        let mut x = vec![0.0; data.n * data.p];
        for (i, j, v) in data.triples() {
            x[i * data.p + j] = v;
        }
        let y = data.records.iter().map(|r| r.label).collect();
        Self::new(data.n, data.p, x, y)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn margins(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn loss(&self, beta: &[f64]) -> f64 {
        self.margins(beta)
            .iter()
            .zip(&self.y)
            .map(|(m, y)| log1pexp(-y * m))
            .sum()
    }

    pub fn objective(&self, beta: &[f64], lambda: f64) -> f64 {
        self.loss(beta) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// `∇L(β)_j = Σ_i (p_i − (y_i+1)/2) x_ij`.
    pub fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.p];
        for (i, m) in self.margins(beta).into_iter().enumerate() {
            let r = logistic(m) - (self.y[i] + 1.0) / 2.0;
            for (gj, xij) in g.iter_mut().zip(self.row(i)) {
                *gj += r * xij;
            }
        }
        g
    }

    /// `λ_max = max_j |∇_j L(0)|`.
    pub fn lambda_max(&self) -> f64 {
        self.gradient(&vec![0.0; self.p])
            .iter()
            .fold(0.0, |a, g| a.max(g.abs()))
    }
}

/// Largest violation of the L1 optimality conditions given `∇L(β)`.
pub fn kkt_residual(gradient: &[f64], beta: &[f64], lambda: f64) -> f64 {
    gradient
        .iter()
        .zip(beta)
        .map(|(&g, &b)| {
            if b != 0.0 {
                (g + lambda * b.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProximalResult {
    pub beta: Vec<f64>,
    pub objective: f64,
    pub kkt: f64,
    pub iterations: usize,
}

pub const PROXIMAL_MAX_ITER: usize = 1_000_000;

fn shrink(x: f64, a: f64) -> f64 {
    x.signum() * (x.abs() - a).max(0.0)
}

/// ISTA with backtracking on `L(β) + λ‖β‖₁`, run until the KKT residual is at
/// most `tol`.
pub fn proximal_gradient(problem: &DenseProblem, lambda: f64, tol: f64) -> Result<ProximalResult> {
    let p = problem.p;
    let mut beta = vec![0.0; p];
    let mut loss = problem.loss(&beta);
    let mut step = 1.0;
    for iteration in 0..PROXIMAL_MAX_ITER {
        let g = problem.gradient(&beta);
        let kkt = kkt_residual(&g, &beta, lambda);
        if kkt <= tol {
            return Ok(ProximalResult {
                objective: problem.objective(&beta, lambda),
                beta,
                kkt,
                iterations: iteration,
            });
        }
        step *= 1.5;
        loop {
            let candidate: Vec<f64> = beta
                .iter()
                .zip(&g)
                .map(|(b, gj)| shrink(b - step * gj, step * lambda))
                .collect();
            let cand_loss = problem.loss(&candidate);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for j in 0..p {
                let d = candidate[j] - beta[j];
                lin += g[j] * d;
                sq += d * d;
            }
            if cand_loss <= loss + lin + sq / (2.0 * step) || sq == 0.0 {
                if sq == 0.0 {
                    // No representable progress; the residual is at the
                    // floating-point floor.
                    return Ok(ProximalResult {
                        objective: problem.objective(&beta, lambda),
                        beta,
                        kkt,
                        iterations: iteration,
                    });
                }
                beta = candidate;
                loss = cand_loss;
                break;
            }
            step *= 0.5;
        }
    }
    Err(Error::NoConvergence(PROXIMAL_MAX_ITER))
}

/// Central differences `(f(β + h e_j) − f(β − h e_j)) / 2h`.
pub fn finite_difference_gradient(f: impl Fn(&[f64]) -> f64, beta: &[f64], h: f64) -> Vec<f64> {
    let mut point = beta.to_vec();
    (0..beta.len())
        .map(|j| {
            point[j] = beta[j] + h;
            let up = f(&point);
            point[j] = beta[j] - h;
            let down = f(&point);
            point[j] = beta[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Merged direction of one outer iteration computed densely: for each block,
/// one ascending cycle of exact coordinate minimization of the damped
/// quadratic model, using only that block's own running direction.
pub fn dense_block_direction(
    problem: &DenseProblem,
    beta: &[f64],
    lambda: f64,
    nu: f64,
    blocks: &[Vec<usize>],
) -> Vec<f64> {
    let margins = problem.margins(beta);
    let (w, z): (Vec<f64>, Vec<f64>) = margins
        .iter()
        .zip(&problem.y)
        .map(|(&m, &y)| {
            let pr = logistic(m).clamp(1e-15, 1.0 - 1e-15);
            let w = (pr * (1.0 - pr)).max(1e-12);
            (w, ((y + 1.0) / 2.0 - pr) / w)
        })
        .unzip();
    let mut delta = vec![0.0; problem.p];
    for block in blocks {
        let mut block_margins = vec![0.0; problem.n];
        let mut sorted = block.clone();
        sorted.sort_unstable();
        for j in sorted {
            let mut num = nu * beta[j];
            let mut den = nu;
            for i in 0..problem.n {
                let xij = problem.x[i * problem.p + j];
                if xij == 0.0 {
                    continue;
                }
                let q = z[i] - block_margins[i] + (beta[j] + delta[j]) * xij;
                num += w[i] * xij * q;
                den += w[i] * xij * xij;
            }
            let updated = shrink(num, lambda) / den;
            let change = updated - beta[j] - delta[j];
            delta[j] = updated - beta[j];
            for i in 0..problem.n {
                block_margins[i] += change * problem.x[i * problem.p + j];
            }
        }
    }
    delta
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> DenseProblem {
        DenseProblem::new(
            4,
            2,
            vec![1.0, 0.5, -1.0, 2.0, 0.5, -1.0, 2.0, 1.0],
            vec![1.0, -1.0, 1.0, -1.0],
        )
    }

    #[test]
    fn finite_difference_of_quadratic_is_exact() {
        let f = |b: &[f64]| 3.0 * b[0] * b[0] - 2.0 * b[0] * b[1] + b[1];
        let g = finite_difference_gradient(f, &[0.5, -1.0], 1e-5);
        assert!((g[0] - (6.0 * 0.5 + 2.0)).abs() < 1e-8);
        assert!((g[1] - (-1.0 + 1.0)).abs() < 1e-8);
    }

    #[test]
    fn gradient_at_origin_is_half_label_sum() {
        let prob = tiny();
        let g = prob.gradient(&[0.0, 0.0]);
        for j in 0..2 {
            let expected: f64 = -0.5 * (0..4).map(|i| prob.y[i] * prob.x[i * 2 + j]).sum::<f64>();
            assert!((g[j] - expected).abs() < 1e-15);
        }
        let fd = finite_difference_gradient(|b| prob.loss(b), &[0.0, 0.0], 1e-5);
        for j in 0..2 {
            assert!((g[j] - fd[j]).abs() <= 1e-6 * g[j].abs().max(1e-3));
        }
    }

    #[test]
    fn dead_zone_gives_zero() {
        let prob = tiny();
        let r = proximal_gradient(&prob, prob.lambda_max(), 1e-10).unwrap();
        assert!(r.beta.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn one_dimensional_solution_matches_bisection() {
        // x = [1, 1], y = [+1, +1], λ = 0.1: optimality 2(p(β) − 1) + 0.1 = 0.
        let prob = DenseProblem::new(2, 1, vec![1.0, 1.0], vec![1.0, 1.0]);
        let r = proximal_gradient(&prob, 0.1, 1e-12).unwrap();
        let h = |b: f64| 2.0 * (1.0 / (1.0 + (-b).exp()) - 1.0) + 0.1;
        let (mut lo, mut hi) = (0.0f64, 20.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((r.beta[0] - 0.5 * (lo + hi)).abs() < 1e-8);
        assert!((r.beta[0] - 19f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn kkt_residual_cases() {
        assert_eq!(kkt_residual(&[0.5], &[0.0], 1.0), 0.0);
        assert_eq!(kkt_residual(&[1.5], &[0.0], 1.0), 0.5);
        assert_eq!(kkt_residual(&[-1.0], &[2.0], 1.0), 0.0);
        assert_eq!(kkt_residual(&[-0.5], &[2.0], 1.0), 0.5);
    }
}
