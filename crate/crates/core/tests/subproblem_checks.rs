mod common;

use common::{random_problem, shards, to_parsed};
use dglmnet::data::{LabelVector, ModelState};
use dglmnet::driver::{outer_iterate, run_local, SolverConfig};
use dglmnet::glm::{build_workspace, l1_norm, QuadraticWorkspace};
use dglmnet::oracle::{dense_block_direction, DenseProblem};
use dglmnet::subproblem::{coordinate_update, solve_subproblem};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const NU: f64 = 1e-6;

/// Damped penalized model value `½Σw(z − XΔ)² + ν/2‖Δ‖² + λ‖β + Δ‖₁`.
fn penalized_model(ws: &QuadraticWorkspace, problem: &DenseProblem, beta: &[f64], delta: &[f64], lambda: f64) -> f64 {
    let moved: Vec<f64> = beta.iter().zip(delta).map(|(b, d)| b + d).collect();
    ws.model_value(&problem.margins(delta))
        + 0.5 * NU * delta.iter().map(|d| d * d).sum::<f64>()
        + lambda * l1_norm(&moved)
}

fn start_point(seed: u64, n: usize, p: usize) -> (DenseProblem, LabelVector, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problem = random_problem(&mut rng, n, p);
    let labels = LabelVector::new(problem.y.clone()).unwrap();
    let beta = (0..p)
        .map(|j| if j % 3 == 0 { 0.0 } else { 0.7 * common::normal(&mut rng) })
        .collect();
    (problem, labels, beta)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn one_cycle_does_not_increase_the_model(
        seed in any::<u64>(),
        n in 1usize..=20,
        p in 1usize..=20,
        lambda in 0.0f64..3.0,
    ) {
        let (problem, labels, beta) = start_point(seed, n, p);
        let data = to_parsed(&problem);
        let shard = &shards(&data, 1)[0];
        let ws = build_workspace(&labels, &problem.margins(&beta)).unwrap();
        let result = solve_subproblem(shard, &ws, &beta, lambda, NU).unwrap();
        let mut delta = vec![0.0; p];
        result.scatter_delta_beta(shard, &mut delta);
        let before = penalized_model(&ws, &problem, &beta, &vec![0.0; p], lambda);
        let after = penalized_model(&ws, &problem, &beta, &delta, lambda);
        prop_assert!(after <= before + 1e-12 * before.abs().max(1.0), "before {before} after {after}");
    }

    #[test]
    fn merged_direction_is_the_concatenation_of_blocks(
        seed in any::<u64>(),
        m in 1usize..=6,
        lambda in 0.0f64..1.0,
    ) {
        let (problem, labels, beta) = start_point(seed, 25, 11);
        let data = to_parsed(&problem);
        let parts = shards(&data, m);
        let margins = problem.margins(&beta);
        let ws = build_workspace(&labels, &margins).unwrap();
        let mut independent = vec![0.0; problem.p];
        for shard in &parts {
            solve_subproblem(shard, &ws, &beta, lambda, NU)
                .unwrap()
                .scatter_delta_beta(shard, &mut independent);
        }

        let config = SolverConfig::new(lambda);
        let merged = run_local(&parts, |shard, group| {
            let mut state = ModelState::zeros(problem.n, problem.p);
            state.beta.copy_from_slice(&beta);
            state.margins.copy_from_slice(&margins);
            outer_iterate(&mut state, f64::INFINITY, shard, &labels, &config, group)?;
            Ok(state.delta_beta)
        })
        .unwrap();
        for reduced in &merged {
            prop_assert_eq!(reduced, &independent);
        }

        let blocks: Vec<Vec<usize>> = parts.iter().map(|s| s.features().to_vec()).collect();
        let dense = dense_block_direction(&problem, &beta, lambda, NU, &blocks);
        for (a, b) in dense.iter().zip(&independent) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "dense {a} sparse {b}");
        }
    }
}

/// Proximal gradient on the damped quadratic model with a step below the
/// inverse Lipschitz constant.
fn brute_force_model_minimizer(ws: &QuadraticWorkspace, problem: &DenseProblem, beta: &[f64], lambda: f64) -> Vec<f64> {
    let (n, p) = (problem.n, problem.p);
    let frob: f64 = (0..n)
        .map(|i| ws.w[i] * problem.row(i).iter().map(|x| x * x).sum::<f64>())
        .sum();
    let step = 1.0 / (frob + NU);
    let mut delta = vec![0.0; p];
    for _ in 0..2_000_000 {
        let resid: Vec<f64> = problem
            .margins(&delta)
            .iter()
            .zip(&ws.z)
            .zip(&ws.w)
            .map(|((d, z), w)| w * (d - z))
            .collect();
        let mut moved = 0.0f64;
        for j in 0..p {
            let g: f64 = (0..n).map(|i| resid[i] * problem.x[i * p + j]).sum::<f64>() + NU * delta[j];
            let target = beta[j] + delta[j] - step * g;
            let shrunk = target.signum() * (target.abs() - step * lambda).max(0.0);
            let next = shrunk - beta[j];
            moved = moved.max((next - delta[j]).abs());
            delta[j] = next;
        }
        if moved < 1e-15 {
            break;
        }
    }
    delta
}

#[test]
fn repeated_cycles_reach_the_model_minimizer() {
    for seed in 0..6 {
        let (problem, labels, beta) = start_point(100 + seed, 12, 4);
        let data = to_parsed(&problem);
        let shard = &shards(&data, 1)[0];
        let ws = build_workspace(&labels, &problem.margins(&beta)).unwrap();
        let lambda = 0.05 * (seed as f64 + 1.0);

        let mut delta = vec![0.0; shard.features().len()];
        let mut delta_margins = vec![0.0; problem.n];
        for _ in 0..100_000 {
            let mut moved = 0.0f64;
            for (k, &j) in shard.features().iter().enumerate() {
                let next = coordinate_update(shard.postings(k), &ws, beta[j], delta[k], &mut delta_margins, lambda, NU);
                moved = moved.max((next - delta[k]).abs());
                delta[k] = next;
            }
            if moved == 0.0 {
                break;
            }
        }
        let mut full = vec![0.0; problem.p];
        for (k, &j) in shard.features().iter().enumerate() {
            full[j] = delta[k];
        }
        let reference = brute_force_model_minimizer(&ws, &problem, &beta, lambda);
        for (a, b) in full.iter().zip(&reference) {
            assert!((a - b).abs() <= 1e-8, "seed {seed}: cd {full:?} vs brute force {reference:?}");
        }
    }
}
