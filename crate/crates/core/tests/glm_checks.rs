mod common;

use common::{column, random_problem};
use dglmnet::data::LabelVector;
use dglmnet::glm::{build_workspace, gradient_direction_product, negated_log_likelihood};
use dglmnet::oracle::finite_difference_gradient;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn gradient_matches_central_differences(
        seed in any::<u64>(),
        n in 2usize..=50,
        p in 1usize..=20,
        scale in 0.05f64..1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = random_problem(&mut rng, n, p);
        let labels = LabelVector::new(problem.y.clone()).unwrap();
        let beta: Vec<f64> = (0..p).map(|_| scale * common::normal(&mut rng)).collect();
        let margins = problem.margins(&beta);
        let analytic: Vec<f64> = (0..p)
            .map(|j| gradient_direction_product(&labels, &margins, &column(&problem, j)).unwrap())
            .collect();
        let fd = finite_difference_gradient(
            |b| negated_log_likelihood(&labels, &problem.margins(b)).unwrap(),
            &beta,
            1e-5,
        );
        let norm = analytic.iter().map(|g| g * g).sum::<f64>().sqrt();
        let err = analytic.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        // An all-zero column set gives a zero gradient; compare absolutely there.
        prop_assert!(err <= 1e-6 * norm.max(1e-3), "err {err} norm {norm}");
    }

    #[test]
    fn quadratic_model_differences_match_taylor(seed in any::<u64>(), n in 3usize..=12, p in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = random_problem(&mut rng, n, p);
        let labels = LabelVector::new(problem.y.clone()).unwrap();
        let beta: Vec<f64> = (0..p).map(|_| 0.5 * common::normal(&mut rng)).collect();
        let ws = build_workspace(&labels, &problem.margins(&beta)).unwrap();
        let grad = problem.gradient(&beta);
        let h = 1e-5;
        let hessian: Vec<Vec<f64>> = (0..p)
            .map(|j| {
                let (mut up, mut down) = (beta.clone(), beta.clone());
                up[j] += h;
                down[j] -= h;
                let (gu, gd) = (problem.gradient(&up), problem.gradient(&down));
                gu.iter().zip(&gd).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            })
            .collect();
        let taylor = |d: &[f64]| {
            let lin: f64 = grad.iter().zip(d).map(|(g, v)| g * v).sum();
            let quad: f64 = (0..p)
                .flat_map(|j| (0..p).map(move |k| (j, k)))
                .map(|(j, k)| d[j] * hessian[j][k] * d[k])
                .sum();
            lin + 0.5 * quad
        };
        let d1: Vec<f64> = (0..p).map(|_| common::normal(&mut rng)).collect();
        let d2: Vec<f64> = (0..p).map(|_| common::normal(&mut rng)).collect();
        let model = ws.model_value(&problem.margins(&d1)) - ws.model_value(&problem.margins(&d2));
        let expected = taylor(&d1) - taylor(&d2);
        prop_assert!((model - expected).abs() <= 1e-6 * expected.abs().max(1e-2),
            "model {model} taylor {expected}");
    }
}

#[test]
fn workspace_snapshot_is_the_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let problem = random_problem(&mut rng, 20, 4);
    let labels = LabelVector::new(problem.y.clone()).unwrap();
    let beta = [0.3, -0.2, 0.0, 1.1];
    let ws = build_workspace(&labels, &problem.margins(&beta)).unwrap();
    assert!((ws.snapshot_loss - problem.loss(&beta)).abs() <= 1e-12 * problem.loss(&beta));
}
